import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stimqkd.errors import GridMismatchError, InvalidParameterError, NoBracketError, ZeroFieldError
from stimqkd.field import Grid, ModeSpec, apply_phase, inner_product, lg_mode, second_moment_diameter
from stimqkd.mub import build_mub_pair, synthesize_states
from stimqkd.stimpdc import (
    StimConfig, idler_diameter_curve, optimize_probe_waist, stimulate_idler, transfer_fidelity,
)
from stimqkd.turbulence import sample_screen

LAMBDA = 810e-9


def _seed(w_b, grid):
    return lg_mode(ModeSpec(w_b, 0, LAMBDA), grid, check_extent=False)


def test_config():
    c = StimConfig.from_probe(0.03, 2.0)
    assert c.w_A == pytest.approx(0.015) and c.wavelength_idler == c.wavelength_probe
    with pytest.raises(InvalidParameterError):
        StimConfig(0.0, 0.01)
    with pytest.raises(InvalidParameterError):
        StimConfig(2.0, 0.01, wavelength_idler=840e-9)


def test_gaussian_product_rule(fine_grid):
    w_a = 0.01
    idler = stimulate_idler(lg_mode(ModeSpec(w_a, 0, LAMBDA), fine_grid), _seed(2 * w_a, fine_grid))
    expected = 2 * (2 * w_a / math.sqrt(5))  # 1/w_i^2 = 1/w_A^2 + 1/w_B^2
    assert second_moment_diameter(idler) == pytest.approx(expected, rel=1e-3)


def test_broad_seed_copies_pump(grid):
    pump = lg_mode(ModeSpec(0.01, 2, LAMBDA), grid)
    idler = stimulate_idler(pump, _seed(10.0, grid))
    assert abs(inner_product(pump, idler)) ** 2 > 0.999


def test_seed_phase_is_conjugated(grid):
    pump = lg_mode(ModeSpec(0.01, 1, LAMBDA), grid)
    seed = _seed(0.02, grid)
    screen = sample_screen(np.random.default_rng(0), 0.02, 0.06, grid)
    got = stimulate_idler(pump, apply_phase(seed, screen))
    want = apply_phase(stimulate_idler(pump, seed), screen.negated())
    assert np.max(np.abs(got.samples - want.samples)) < 1e-9


def test_errors(grid):
    pump = lg_mode(ModeSpec(0.01, 0, LAMBDA), grid)
    with pytest.raises(ZeroFieldError):
        stimulate_idler(pump, pump.replace(np.zeros((grid.n, grid.n))))
    with pytest.raises(GridMismatchError):
        stimulate_idler(pump, lg_mode(ModeSpec(0.01, 0, LAMBDA), Grid.from_extent(128, 0.24)))


@pytest.mark.parametrize("d,gamma,expected,tol", [(2, 1, 0.79, 0.02), (5, 1, 0.73, 0.02),
                                                  (2, 2, 0.97, 0.01), (5, 2, 0.97, 0.01)])
def test_transfer_fidelity_values(fine_grid, d, gamma, expected, tol):
    w_a = 0.01
    states = synthesize_states(build_mub_pair(d), w_a, fine_grid)
    seed = _seed(gamma * w_a, fine_grid)
    fids = [transfer_fidelity(s, seed) for basis in states for s in basis]
    assert np.mean(fids) == pytest.approx(expected, abs=tol)
    assert np.ptp(fids) < 0.01


def test_fidelity_equals_idler_overlap(grid):
    pump = synthesize_states(build_mub_pair(5), 0.01, grid)[1][2]
    seed = _seed(0.015, grid)
    direct = abs(inner_product(pump, stimulate_idler(pump, seed))) ** 2
    assert transfer_fidelity(pump, seed) == pytest.approx(direct, abs=1e-9)


@given(st.floats(0.6, 1.6))
def test_fidelity_depends_only_on_gamma(scale):
    g1 = Grid.from_extent(256, 0.24)
    g2 = Grid(256, g1.dx * scale)
    f = []
    for g, s in ((g1, 1.0), (g2, scale)):
        pump = synthesize_states(build_mub_pair(2), 0.01 * s, g)[1][0]
        f.append(transfer_fidelity(pump, _seed(0.02 * s, g)))
    assert f[0] == pytest.approx(f[1], abs=1e-6)


def test_fidelity_monotone_in_gamma(grid):
    states = synthesize_states(build_mub_pair(5), 0.008, grid)
    gammas = np.linspace(0.5, 4, 12)
    for state in (states[0][0], states[1][3]):
        f = [transfer_fidelity(state, _seed(g * 0.008, grid)) for g in gammas]
        assert np.all(np.diff(f) >= -1e-12)


def test_optimized_waist():
    w = optimize_probe_waist(1000.0, 2.0, LAMBDA, 2)
    assert w == pytest.approx(0.03, rel=0.10)
    curve = idler_diameter_curve(StimConfig.from_probe(w, 2.0), 2, [0.0, 500.0, 1000.0])
    assert abs(curve.probe[-1] - curve.idler[-1]) / curve.probe[-1] < 1e-3
    assert curve.idler[0] < curve.probe[0]


def test_small_probe_leaves_idler_wider():
    curve = idler_diameter_curve(StimConfig.from_probe(0.02, 2.0), 2, [0.0, 1000.0])
    assert curve.idler[-1] > curve.probe[-1]
    assert curve.to_csv().splitlines()[0] == "z_m,D_probe,D_idler"


def test_short_path_has_no_bracket():
    with pytest.raises(NoBracketError):
        optimize_probe_waist(1e-3, 2.0)
    with pytest.raises(InvalidParameterError):
        optimize_probe_waist(0.0, 2.0)
