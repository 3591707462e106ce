import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stimqkd.errors import AliasingWarning, GridMismatchError, InvalidParameterError
from stimqkd.field import (
    Grid, ModeSpec, analytic_diameter, apply_phase, conjugate, inner_product, lg_mode,
    rayleigh_range, second_moment_diameter, superpose,
)
from stimqkd.propagation import (
    ChannelRealization, angular_spectrum_propagate, free_channel, make_channel, transmit, transmit_many,
)
from stimqkd.turbulence import TurbulenceSpec, sample_screen

LAMBDA = 810e-9


@pytest.fixture(scope="module")
def channel(fine_grid):
    spec = TurbulenceSpec(LAMBDA, 1000, d_over_r0=3, aperture_diameter=0.06)
    return make_channel(np.random.default_rng(5), spec, 0.06, fine_grid, 4)


def test_zero_distance_is_identity(grid):
    f = lg_mode(ModeSpec(0.01, 1, LAMBDA), grid)
    assert angular_spectrum_propagate(f, 0.0) is f


@pytest.mark.parametrize("factor", [0.5, 1, 2, 3])
def test_gaussian_diameter_law(fine_grid, factor):
    w0 = 0.01
    z = factor * rayleigh_range(w0, LAMBDA)
    out = angular_spectrum_propagate(lg_mode(ModeSpec(w0, 0, LAMBDA), fine_grid), z)
    assert second_moment_diameter(out) == pytest.approx(analytic_diameter(w0, 0, z, LAMBDA), rel=5e-3)
    assert out.norm2 == pytest.approx(1.0, abs=1e-10)


def test_forward_backward_identity(fine_grid):
    f = lg_mode(ModeSpec(0.01, 2, LAMBDA), fine_grid)
    back = angular_spectrum_propagate(angular_spectrum_propagate(f, 700.0), -700.0)
    assert np.max(np.abs(back.samples - f.samples)) * fine_grid.dx < 1e-8


def test_aliasing_warning():
    g = Grid.from_extent(128, 0.05)
    f = lg_mode(ModeSpec(0.002, 0, LAMBDA), g)
    with pytest.warns(AliasingWarning):
        angular_spectrum_propagate(f, 200.0)


def test_non_finite_distance(grid):
    with pytest.raises(InvalidParameterError):
        angular_spectrum_propagate(lg_mode(ModeSpec(0.01, 0, LAMBDA), grid), math.nan)


def test_zero_screens_equal_free_space(fine_grid):
    spec = TurbulenceSpec(LAMBDA, 1000, d_over_r0=0, aperture_diameter=0.06)
    ch = make_channel(np.random.default_rng(0), spec, 0.06, fine_grid, 4)
    f = lg_mode(ModeSpec(0.015, 1, LAMBDA), fine_grid)
    direct = angular_spectrum_propagate(f, 1000.0)
    for direction in ("forward", "reverse"):
        out = transmit(f, ch, direction)
        assert np.max(np.abs(out.samples - direct.samples)) * fine_grid.dx < 1e-10


def test_free_channel(fine_grid):
    f = lg_mode(ModeSpec(0.015, 0, LAMBDA), fine_grid)
    out = transmit(f, free_channel(fine_grid, 500.0))
    assert np.allclose(out.samples, angular_spectrum_propagate(f, 500.0).samples, atol=1e-10)


def test_channel_structure(channel):
    assert len(channel.segments) == 4
    assert sum(dz for dz, _ in channel.segments) == pytest.approx(1000.0)
    # per-segment r0 = total r0 * m^(3/5)
    assert channel.screens[0].r0 == pytest.approx(0.02 * 4 ** 0.6)
    assert channel.spec.rytov / 4 ** (11 / 6) < 1


def test_channel_determinism(fine_grid):
    spec = TurbulenceSpec(LAMBDA, 1000, d_over_r0=2, aperture_diameter=0.06)
    a = make_channel(np.random.default_rng(9), spec, 0.06, fine_grid, 4)
    b = make_channel(np.random.default_rng(9), spec, 0.06, fine_grid, 4)
    assert all(np.array_equal(x.phase, y.phase) for x, y in zip(a.screens, b.screens))
    # segment screens come from independent streams
    assert not np.allclose(a.screens[0].phase, a.screens[1].phase)


def test_explicit_segments_must_respect_rytov(fine_grid):
    spec = TurbulenceSpec(LAMBDA, 1000, cn2=4.2e-14)
    with pytest.raises(InvalidParameterError):
        make_channel(np.random.default_rng(0), spec, 0.06, fine_grid, 1)
    auto = make_channel(np.random.default_rng(0), spec, 0.06, fine_grid, "auto")
    assert len(auto.segments) == 2


def test_segments_must_sum(fine_grid):
    s = sample_screen(np.random.default_rng(0), 0.03, 0.06, fine_grid)
    with pytest.raises(InvalidParameterError):
        ChannelRealization(((400.0, s),), 1000.0)


def test_norm_preserved(channel, fine_grid):
    f = lg_mode(ModeSpec(0.015, 2, LAMBDA), fine_grid)
    assert transmit(f, channel).norm2 == pytest.approx(1.0, abs=1e-8)


@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_linearity(channel, fine_grid, alpha, beta):
    u = lg_mode(ModeSpec(0.015, 1, LAMBDA), fine_grid)
    v = lg_mode(ModeSpec(0.015, -2, LAMBDA), fine_grid)
    mix = u.replace(alpha * u.samples + beta * v.samples)
    tu, tv, tm = transmit_many([u, v, mix], channel)
    assert np.max(np.abs(tm.samples - alpha * tu.samples - beta * tv.samples)) * fine_grid.dx < 1e-10


def test_reciprocity(channel, fine_grid):
    # the reverse pass is the transpose of the forward pass
    a = lg_mode(ModeSpec(0.015, 1, LAMBDA), fine_grid)
    b = lg_mode(ModeSpec(0.015, -2, LAMBDA), fine_grid)
    lhs = inner_product(b, transmit(a, channel, "forward"))
    rhs = inner_product(conjugate(a), transmit(conjugate(b), channel, "reverse"))
    assert abs(lhs - rhs) < 1e-10


def test_single_segment_fidelity_reciprocal(fine_grid):
    s = sample_screen(np.random.default_rng(2), 0.02, 0.06, fine_grid)
    ch = ChannelRealization(((1000.0, s),), 1000.0)
    u = lg_mode(ModeSpec(0.015, 0, LAMBDA), fine_grid)
    ref = angular_spectrum_propagate(u, 1000.0)
    fwd = abs(inner_product(ref, transmit(u, ch, "forward"))) ** 2
    rev = abs(inner_product(ref, transmit(u, ch, "reverse"))) ** 2
    assert fwd == pytest.approx(rev, abs=1e-6)


def test_thin_screen_conjugation(grid):
    s = sample_screen(np.random.default_rng(1), 0.005, 0.06, grid)
    u = lg_mode(ModeSpec(0.015, 2, LAMBDA), grid)
    out = conjugate(apply_phase(conjugate(apply_phase(u, s)), s))
    assert np.max(np.abs(out.samples - u.samples)) < 1e-12


def test_grid_mismatch(channel):
    f = lg_mode(ModeSpec(0.01, 0, LAMBDA), Grid.from_extent(256, 0.24))
    with pytest.raises(GridMismatchError):
        transmit(f, channel)


def test_strong_turbulence_degrades_gaussian(fine_grid):
    spec = TurbulenceSpec(LAMBDA, 1000, d_over_r0=5, aperture_diameter=0.06)
    u = lg_mode(ModeSpec(0.03, 0, LAMBDA), fine_grid)
    ref = angular_spectrum_propagate(u, 1000.0)
    fids = []
    for i in range(50):
        ch = make_channel(np.random.default_rng(100 + i), spec, 0.06, fine_grid, 4)
        fids.append(abs(inner_product(ref, transmit(u, ch))) ** 2)
    assert np.mean(fids) < 0.5
