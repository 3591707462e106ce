import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from stimqkd.errors import GridMismatchError, InsufficientSamplesError, InvalidParameterError
from stimqkd.field import Grid
from stimqkd.turbulence import (
    TurbulenceSpec, fried_parameter, noll_covariance, noll_indices, rytov_variance, sample_screen,
    segment_path, structure_function_estimate, theoretical_structure, zernike,
)


# -- independent oracle: Zernike covariance by direct spectral integration ------

def _kolmogorov_psd_constant():
    # fix the phase PSD amplitude so its structure function is 6.88 (r/r0)^(5/3);
    # D(r) = 4 pi A (2 pi r)^(5/3) r0^(-5/3) * int x^(-8/3) (1 - J0(x)) dx
    head, _ = integrate.quad(lambda x: x ** (-8 / 3) * (1 - special.j0(x)), 0, 1)
    body = sum(integrate.quad(lambda x: x ** (-8 / 3) * (1 - special.j0(x)), a, a + 1)[0]
               for a in range(1, 400))
    tail = 3 / 5 * 400 ** (-5 / 3)  # the Bessel term averages out this far
    mellin = head + body + tail
    return 6.8839 / (4 * math.pi * (2 * math.pi) ** (5 / 3) * mellin)


def _oracle_covariance(j1, j2, psd):
    n1, m1, k1 = noll_indices(j1)
    n2, m2, k2 = noll_indices(j2)
    if m1 != m2 or k1 != k2:
        return 0.0
    # unit-diameter pupil, r0 = 1; substitute t = pi f
    def f(t):
        return t ** (-14 / 3) * special.jv(n1 + 1, t) * special.jv(n2 + 1, t)
    edges = np.concatenate([[0.0], np.arange(1, 300) * 1.0])
    total = sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    sign = (-1) ** ((n1 + n2 - 2 * m1) // 2)
    return 2 * math.pi * psd * math.sqrt((n1 + 1) * (n2 + 1)) * sign * 4 * math.pi ** (5 / 3) * total


@pytest.fixture(scope="module")
def psd():
    return _kolmogorov_psd_constant()


@pytest.mark.parametrize("pair", [(2, 2), (4, 4), (2, 8), (3, 7), (4, 11), (11, 11), (7, 17), (22, 22)])
def test_covariance_matches_spectral_oracle(pair, psd):
    cov = noll_covariance(22)
    j1, j2 = pair
    expected = _oracle_covariance(j1, j2, psd)
    assert cov[j1 - 2, j2 - 2] == pytest.approx(expected, rel=1e-3)


def test_covariance_reproduces_published_residuals():
    # Kolmogorov residual variances after piston (1.0299) and tilt (0.134) removal, D/r0 = 1
    cov = noll_covariance(172)
    tilt = cov[0, 0] + cov[1, 1]
    assert tilt == pytest.approx(1.0299 - 0.134, rel=0.01)


def test_covariance_structure():
    cov = noll_covariance(50, 2.0)
    assert np.allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > -1e-12
    assert np.allclose(cov, noll_covariance(50) * 2 ** (5 / 3))
    # cosine and sine terms never correlate
    assert cov[0, 1] == 0.0


def test_noll_indices():
    assert [noll_indices(j)[:2] for j in range(1, 12)] == [
        (0, 0), (1, 1), (1, 1), (2, 0), (2, 2), (2, 2), (3, 1), (3, 1), (3, 3), (3, 3), (4, 0)]
    assert noll_indices(2)[2] == 1 and noll_indices(3)[2] == -1


def test_zernike_orthonormal_on_disc():
    n = 400
    x = (np.arange(n) + 0.5) / n * 2 - 1
    xx, yy = np.meshgrid(x, x)
    rho, th = np.hypot(xx, yy), np.arctan2(yy, xx)
    inside = rho <= 1
    zs = np.stack([zernike(j, rho[inside], th[inside]) for j in range(2, 12)])
    gram = zs @ zs.T / inside.sum()
    assert np.allclose(gram, np.eye(10), atol=2e-2)


def test_rytov_and_fried():
    assert rytov_variance(4.2e-14, 810e-9, 1000) == pytest.approx(1.78, rel=0.02)
    assert fried_parameter(0.0, 810e-9, 1000) == math.inf
    with pytest.raises(InvalidParameterError):
        fried_parameter(-1e-15, 810e-9, 1000)


def test_spec_parameterizations():
    by_ratio = TurbulenceSpec(810e-9, 1000, d_over_r0=4.0, aperture_diameter=0.06)
    assert by_ratio.r0 == pytest.approx(0.015)
    by_cn2 = TurbulenceSpec(810e-9, 1000, cn2=by_ratio.resolved_cn2)
    assert by_cn2.r0 == pytest.approx(0.015, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        TurbulenceSpec(810e-9, 1000)
    with pytest.raises(InvalidParameterError):
        TurbulenceSpec(810e-9, 1000, cn2=1e-14, d_over_r0=1, aperture_diameter=0.06)
    assert TurbulenceSpec(810e-9, 1000, d_over_r0=0, aperture_diameter=0.06).r0 == math.inf


def test_segment_path():
    spec = TurbulenceSpec(810e-9, 1000, cn2=4.2e-14)
    m = segment_path(spec)
    assert rytov_variance(spec.cn2, spec.wavelength, 1000 / m) < 1
    assert rytov_variance(spec.cn2, spec.wavelength, 1000 / (m - 1)) >= 1
    assert segment_path(TurbulenceSpec(810e-9, 1000, cn2=0.0)) == 1


@given(st.floats(0.1, 10), st.floats(1e-3, 1))
def test_theoretical_structure(ratio, r0):
    assert theoretical_structure(r0 * ratio, r0) == pytest.approx(6.88 * ratio ** (5 / 3), rel=1e-3)


def test_screens_deterministic(grid):
    a = sample_screen(np.random.default_rng(7), 0.03, 0.06, grid)
    b = sample_screen(np.random.default_rng(7), 0.03, 0.06, grid)
    assert np.array_equal(a.phase, b.phase)
    assert a.seed is not None and a.seed == b.seed


def test_zero_turbulence_screen_is_flat(grid):
    s = sample_screen(np.random.default_rng(0), math.inf, 0.06, grid)
    assert not s.phase.any()


def test_screen_zero_mean_over_aperture(grid):
    s = sample_screen(np.random.default_rng(3), 0.01, 0.06, grid)
    inside = s.phase[s.aperture_mask()]
    assert abs(inside.mean()) < 0.05 * inside.std()


def test_edge_continuation_is_radially_constant(grid):
    s = sample_screen(np.random.default_rng(3), 0.02, 0.06, grid, outside="edge")
    z = sample_screen(np.random.default_rng(3), 0.02, 0.06, grid, outside="zero")
    r, _ = grid.polar
    assert not z.phase[r > 0.03].any()
    row = grid.n // 2
    outside = s.phase[row, grid.n // 2 + 70:]
    assert np.ptp(outside) < 1e-12


def test_coefficient_variance_scaling():
    # draws of the coefficients alone, mirroring the screen sampler
    from stimqkd.turbulence import _covariance_factor
    factor = _covariance_factor(172)
    rng = np.random.default_rng(11)
    a1 = factor @ rng.standard_normal((factor.shape[1], 500))
    a2 = factor @ rng.standard_normal((factor.shape[1], 500)) * 2 ** (5 / 6)
    ratio = a2[:2].var(axis=1).sum() / a1[:2].var(axis=1).sum()
    assert ratio == pytest.approx(2 ** (5 / 3), rel=0.15)


def test_structure_function_errors(grid):
    s = sample_screen(np.random.default_rng(0), 0.03, 0.06, grid)
    with pytest.raises(InsufficientSamplesError):
        structure_function_estimate([s], [0.01])
    other = sample_screen(np.random.default_rng(0), 0.03, 0.06, Grid.from_extent(128, 0.24))
    with pytest.raises(GridMismatchError):
        structure_function_estimate([s, other], [0.01])
    curve = structure_function_estimate([s, s], [0.0, 0.012])
    assert curve.estimate[0] == 0.0
    assert curve.to_csv().startswith("r_m,D_est,D_theory")


def test_structure_function_expectation_within_window(fine_grid):
    # exact ensemble expectation from the covariance, free of sampling noise
    from stimqkd.turbulence import _basis
    D = 0.06
    basis = _basis(fine_grid, D, 172, "edge")
    cov = noll_covariance(172, 1.0)
    mask = np.zeros(fine_grid.n ** 2, bool)
    mask[basis.inside] = True
    mask = mask.reshape(fine_grid.n, fine_grid.n)
    full = np.zeros((171, fine_grid.n ** 2))
    full[:, basis.inside] = basis.inner
    full = full.reshape(171, fine_grid.n, fine_grid.n)
    for frac in (0.1, 0.3, 0.5):
        s = int(round(frac * D / fine_grid.dx))
        ok = mask[:, s:] & mask[:, :-s]
        dz = (full[:, :, s:] - full[:, :, :-s])[:, ok]
        expected = np.einsum("jp,jk,kp->p", dz, cov, dz).mean()
        assert expected == pytest.approx(theoretical_structure(s * fine_grid.dx, D), rel=0.10)
