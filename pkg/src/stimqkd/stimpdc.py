"""Classical model of stimulated down-conversion: the idler copies the pump mode
times the conjugate of the seed, in the thin-crystal, low-gain limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import GridMismatchError, InvalidParameterError, NoBracketError, ZeroFieldError
from .field import (
    ComplexField,
    Grid,
    ModeSpec,
    analytic_diameter,
    lg_mode,
    propagated_diameter,
    second_moment_diameter,
    superpose,
)
from .propagation import angular_spectrum_propagate

__all__ = [
    "StimConfig",
    "DiameterCurve",
    "stimulate_idler",
    "transfer_fidelity",
    "representative_state",
    "idler_diameter_curve",
    "optimize_probe_waist",
    "WAIST_SCAN",
]

WAIST_SCAN = (1e-3, 0.5)


@dataclass(frozen=True)
class StimConfig:
    """Beam parameters of the stimulated scheme; ``gamma`` is w_B / w_A."""

    gamma: float
    w_A: float
    wavelength_probe: float = 810e-9
    wavelength_pump: float = 405e-9
    wavelength_idler: float | None = None

    def __post_init__(self):
        if not self.gamma > 0 or not self.w_A > 0:
            raise InvalidParameterError("gamma and w_A must be positive")
        if not self.wavelength_probe > 0 or not self.wavelength_pump > 0:
            raise InvalidParameterError("wavelengths must be positive")
        if self.wavelength_idler is None:
            object.__setattr__(self, "wavelength_idler", self.wavelength_probe)
        elif not math.isclose(self.wavelength_idler, self.wavelength_probe, rel_tol=1e-12):
            raise InvalidParameterError("only the degenerate case (idler = probe wavelength) is modelled")

    @classmethod
    def from_probe(cls, w_B: float, gamma: float, wavelength: float = 810e-9) -> "StimConfig":
        if not w_B > 0 or not gamma > 0:
            raise InvalidParameterError("w_B and gamma must be positive")
        return cls(gamma, w_B / gamma, wavelength_probe=wavelength)

    @property
    def w_B(self) -> float:
        return self.gamma * self.w_A


def stimulate_idler(pump: ComplexField, seed: ComplexField,
                    wavelength: float | None = None) -> ComplexField:
    """Normalized idler ``pump * conj(seed)`` carried at the idler wavelength.

    The wavelength defaults to the seed's (degenerate operation).
    """
    if pump.grid != seed.grid:
        raise GridMismatchError("pump and seed must share a grid")
    p_norm = math.sqrt(pump.norm2)
    s_peak = float(np.abs(seed.samples).max())
    if p_norm == 0 or s_peak == 0:
        raise ZeroFieldError("pump and seed must be non-zero")
    product = pump.samples * np.conj(seed.samples)
    out = ComplexField(pump.grid, product, wavelength or seed.wavelength)
    # ||pump * seed|| <= ||pump|| max|seed|, so this ratio is dimensionless
    if math.sqrt(out.norm2) < 1e-12 * p_norm * s_peak:
        raise ZeroFieldError("pump and seed have no spatial overlap")
    return out.normalize()


def transfer_fidelity(pump_mode: ComplexField, seed_envelope: ComplexField) -> float:
    """Fidelity between the pump mode and the idler it stimulates.

    F = |sum A* B* A|^2 / (sum |A|^2 * sum |B* A|^2), by grid quadrature.
    """
    if pump_mode.grid != seed_envelope.grid:
        raise GridMismatchError("pump and seed must share a grid")
    a = pump_mode.samples
    b = seed_envelope.samples
    ba = np.conj(b) * a
    den = np.sum(np.abs(a) ** 2) * np.sum(np.abs(ba) ** 2)
    if not den > 0:
        raise ZeroFieldError("fidelity undefined for a zero field")
    return float(abs(np.vdot(a, ba)) ** 2 / den)


def representative_state(w0: float, l_max: int, grid: Grid, wavelength: float,
                         check_extent: bool = True) -> ComplexField:
    """Equal-weight superposition of l = -l_max..l_max at its waist.

    Every vector of a Weyl-eigenbasis MUB over this range has equal weights
    |c_l|^2 = 1/d, and the beam's second moments depend only on those
    weights, so this field has the diameter of each basis state.
    """
    if int(l_max) != l_max or l_max < 0:
        raise InvalidParameterError("l_max must be a non-negative integer")
    modes = [lg_mode(ModeSpec(w0, l, wavelength), grid, check_extent) for l in range(-l_max, l_max + 1)]
    return superpose(np.ones(len(modes)), modes)


@dataclass(frozen=True, eq=False)
class DiameterCurve:
    z: np.ndarray
    probe: np.ndarray
    idler: np.ndarray

    def to_csv(self) -> str:
        rows = ["z_m,D_probe,D_idler"]
        rows += [f"{a:.6g},{b:.6g},{c:.6g}" for a, b, c in zip(self.z, self.probe, self.idler)]
        return "\n".join(rows) + "\n"


def _crystal_idler(config: StimConfig, l_max: int, path_length: float, grid: Grid) -> ComplexField:
    # the seed reaching the crystal is Bob's Gaussian after the full path
    lam = config.wavelength_probe
    pump = representative_state(config.w_A, l_max, grid, lam)
    seed = lg_mode(ModeSpec(config.w_B, 0, lam, z=path_length), grid, check_extent=False)
    return stimulate_idler(pump, seed)


def _idler_grid(config: StimConfig, l_max: int, n: int = 256) -> Grid:
    extent = 8 * analytic_diameter(config.w_A, l_max, 0.0, config.wavelength_probe)
    return Grid.from_extent(n, extent)


def idler_diameter_curve(config: StimConfig, l_max: int, z_samples, path_length: float | None = None,
                         n: int = 512) -> DiameterCurve:
    """Probe and idler diameters versus distance travelled by each beam.

    The probe curve is the analytic Gaussian law for Bob's beam leaving his
    plane; the idler, stimulated by that beam after ``path_length`` (default:
    the largest sample), is propagated numerically from the crystal and
    measured. The waist criterion asks the two to agree at ``path_length``.
    """
    z = np.asarray(z_samples, dtype=float)
    if z.ndim != 1 or z.size == 0 or np.any(z < 0):
        raise InvalidParameterError("z_samples must be a non-empty list of distances >= 0")
    zt = float(z.max()) if path_length is None else float(path_length)
    if not zt > 0:
        raise InvalidParameterError("path length must be positive")
    lam = config.wavelength_probe
    # size the window from the exact moment law before propagating
    small = _crystal_idler(config, l_max, zt, _idler_grid(config, l_max))
    widest = max(float(np.max(propagated_diameter(small, z))), second_moment_diameter(small))
    grid = Grid.from_extent(n, max(5 * widest, 8 * analytic_diameter(config.w_A, l_max, 0.0, lam)))
    idler = _crystal_idler(config, l_max, zt, grid)
    probe = np.array([analytic_diameter(config.w_B, 0, zi, lam) for zi in z])
    measured = np.array([second_moment_diameter(angular_spectrum_propagate(idler, zi)) for zi in z])
    return DiameterCurve(z, probe, measured)


def _mismatch(w_b: float, path_length: float, gamma: float, wavelength: float, l_max: int) -> float:
    config = StimConfig.from_probe(w_b, gamma, wavelength)
    idler = _crystal_idler(config, l_max, path_length, _idler_grid(config, l_max))
    d_probe = analytic_diameter(w_b, 0, path_length, wavelength)
    return (d_probe - propagated_diameter(idler, path_length)) / d_probe


def optimize_probe_waist(path_length: float, gamma: float, wavelength: float = 810e-9,
                         l_max: int = 2, scan: tuple[float, float] = WAIST_SCAN,
                         points: int = 48) -> float:
    """Probe waist w_B for which Bob's beam and the returning idler have equal
    diameters at the end of the path.

    Scans ``scan`` on a log grid for a sign change of the relative diameter
    mismatch, then refines with Brent's method.
    """
    if not path_length > 0:
        raise InvalidParameterError("path length must be positive")
    if not gamma > 0 or not wavelength > 0:
        raise InvalidParameterError("gamma and wavelength must be positive")
    waists = np.geomspace(scan[0], scan[1], points)
    values = [_mismatch(w, path_length, gamma, wavelength, l_max) for w in waists]
    for i in range(points - 1):
        if values[i] == 0:
            return float(waists[i])
        if np.sign(values[i]) != np.sign(values[i + 1]):
            return float(brentq(_mismatch, waists[i], waists[i + 1],
                                args=(path_length, gamma, wavelength, l_max), rtol=1e-10, xtol=1e-12))
    raise NoBracketError(
        f"probe and idler diameters never match for w_B in [{scan[0]}, {scan[1]}] m "
        f"(mismatch {values[0]:+.3g} .. {values[-1]:+.3g}); at short paths the idler "
        "stays narrower than the probe"
    )
