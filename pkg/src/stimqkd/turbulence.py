"""Kolmogorov phase screens from Zernike expansions, and channel-strength parameters.

Zernike terms use Noll ordering and normalization (unit mean square over the
unit disc); piston (j=1) is always excluded, tip and tilt are kept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gamma as _gamma

from .errors import CovarianceError, GridMismatchError, InsufficientSamplesError, InvalidParameterError
from .field import Grid

__all__ = [
    "TurbulenceSpec",
    "PhaseScreen",
    "StructureCurve",
    "fried_parameter",
    "rytov_variance",
    "segment_path",
    "noll_indices",
    "zernike",
    "noll_covariance",
    "sample_screen",
    "zero_screen",
    "structure_function_estimate",
    "theoretical_structure",
    "STRUCTURE_COEFF",
]

RYTOV_COEFF = 1.23
FRIED_COEFF = 0.423
# 2 [(24/5) Gamma(6/5)]^(5/6), the Kolmogorov phase structure-function constant (~6.88)
STRUCTURE_COEFF = 2 * ((24 / 5) * _gamma(6 / 5)) ** (5 / 6)


def _wavenumber(wavelength: float) -> float:
    return 2 * math.pi / wavelength


def fried_parameter(cn2: float, wavelength: float, path_length: float) -> float:
    """Plane-wave Fried parameter (0.423 Cn^2 k^2 Z)^(-3/5); infinite for Cn^2 = 0."""
    if cn2 < 0 or not wavelength > 0 or not path_length > 0:
        raise InvalidParameterError("need cn2 >= 0 and positive wavelength and path length")
    if cn2 == 0:
        return math.inf
    return (FRIED_COEFF * cn2 * _wavenumber(wavelength) ** 2 * path_length) ** (-3 / 5)


def cn2_from_r0(r0: float, wavelength: float, path_length: float) -> float:
    if not r0 > 0:
        raise InvalidParameterError("r0 must be positive")
    if math.isinf(r0):
        return 0.0
    return r0 ** (-5 / 3) / (FRIED_COEFF * _wavenumber(wavelength) ** 2 * path_length)


def rytov_variance(cn2: float, wavelength: float, path_length: float) -> float:
    """Plane-wave Rytov variance 1.23 Cn^2 k^(7/6) Z^(11/6)."""
    if cn2 < 0 or not wavelength > 0 or not path_length > 0:
        raise InvalidParameterError("need cn2 >= 0 and positive wavelength and path length")
    return RYTOV_COEFF * cn2 * _wavenumber(wavelength) ** (7 / 6) * path_length ** (11 / 6)


@dataclass(frozen=True)
class TurbulenceSpec:
    """Channel strength, given either as Cn^2 or as D/r0 over an aperture D.

    ``d_over_r0`` refers to the Fried parameter of the whole path.
    """

    wavelength: float
    path_length: float
    cn2: float | None = None
    d_over_r0: float | None = None
    aperture_diameter: float | None = None

    def __post_init__(self):
        if not self.wavelength > 0 or not self.path_length > 0:
            raise InvalidParameterError("wavelength and path length must be positive")
        by_cn2 = self.cn2 is not None
        by_ratio = self.d_over_r0 is not None or self.aperture_diameter is not None
        if by_cn2 == by_ratio:
            raise InvalidParameterError("give exactly one of cn2 or (d_over_r0, aperture_diameter)")
        if by_cn2 and self.cn2 < 0:
            raise InvalidParameterError("cn2 must be non-negative")
        if by_ratio:
            if self.d_over_r0 is None or self.aperture_diameter is None:
                raise InvalidParameterError("d_over_r0 needs an aperture_diameter")
            if self.d_over_r0 < 0 or not self.aperture_diameter > 0:
                raise InvalidParameterError("need d_over_r0 >= 0 and a positive aperture")

    @property
    def r0(self) -> float:
        if self.cn2 is not None:
            return fried_parameter(self.cn2, self.wavelength, self.path_length)
        if self.d_over_r0 == 0:
            return math.inf
        return self.aperture_diameter / self.d_over_r0

    @property
    def resolved_cn2(self) -> float:
        if self.cn2 is not None:
            return self.cn2
        return cn2_from_r0(self.r0, self.wavelength, self.path_length)

    @property
    def rytov(self) -> float:
        return rytov_variance(self.resolved_cn2, self.wavelength, self.path_length)

    def segment_r0(self, segments: int) -> float:
        """Fried parameter of one of ``segments`` equal slices of the path."""
        return self.r0 * segments ** (3 / 5)


def segment_path(spec: TurbulenceSpec, threshold: float = 1.0) -> int:
    """Smallest number of equal segments whose partial Rytov variance is below ``threshold``."""
    if not threshold > 0:
        raise InvalidParameterError("threshold must be positive")
    total = spec.rytov
    if total < threshold:
        return 1
    # partial variance scales as m^(-11/6)
    m = max(1, int(math.floor((total / threshold) ** (6 / 11))))
    while rytov_variance(spec.resolved_cn2, spec.wavelength, spec.path_length / m) >= threshold:
        m += 1
    return m


# -- Zernike polynomials --------------------------------------------------------

@lru_cache(maxsize=None)
def noll_indices(j: int) -> tuple[int, int, int]:
    """(n, m, kind) for Noll index j >= 1; kind is +1 cos, -1 sin, 0 for m = 0."""
    if j < 1:
        raise InvalidParameterError("Noll indices start at 1")
    n = 0
    while j > (n + 1) * (n + 2) // 2:
        n += 1
    p = j - n * (n + 1) // 2 - 1
    ms = [m for m in range(n % 2, n + 1, 2) for _ in ((0,) if m == 0 else (0, 1))]
    m = ms[p]
    kind = 0 if m == 0 else (1 if j % 2 == 0 else -1)
    return n, m, kind


def _radial(n: int, m: int, rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    for s in range((n - m) // 2 + 1):
        c = (-1) ** s * math.factorial(n - s) / (
            math.factorial(s) * math.factorial((n + m) // 2 - s) * math.factorial((n - m) // 2 - s)
        )
        out += c * rho ** (n - 2 * s)
    return out


def _angular(m: int, kind: int, theta: np.ndarray) -> np.ndarray:
    if kind == 0:
        return np.ones_like(theta)
    trig = np.cos if kind > 0 else np.sin
    return math.sqrt(2) * trig(m * theta)


def zernike(j: int, rho: np.ndarray, theta: np.ndarray) -> np.ndarray:
    n, m, kind = noll_indices(j)
    return math.sqrt(n + 1) * _radial(n, m, np.asarray(rho, float)) * _angular(m, kind, np.asarray(theta, float))


def _noll_prefactor() -> float:
    # Weber-Schafheitlin evaluation of the Kolmogorov spectrum against the
    # Zernike spectral weights, normalized to the STRUCTURE_COEFF structure function.
    mellin = -(2 ** (-8 / 3)) * _gamma(-5 / 6) / _gamma(11 / 6)
    psd = STRUCTURE_COEFF / (4 * math.pi * (2 * math.pi) ** (5 / 3) * mellin)
    return 8 * math.pi ** (8 / 3) * psd * _gamma(14 / 3) / 2 ** (14 / 3)


NOLL_PREFACTOR = _noll_prefactor()


def _covariance_entry(j1: int, j2: int) -> float:
    n1, m1, k1 = noll_indices(j1)
    n2, m2, k2 = noll_indices(j2)
    if m1 != m2 or k1 != k2:
        return 0.0
    sign = (-1) ** ((n1 + n2 - 2 * m1) // 2)
    return (NOLL_PREFACTOR * sign * math.sqrt((n1 + 1) * (n2 + 1)) * _gamma((n1 + n2 - 5 / 3) / 2)
            / (_gamma((n1 - n2 + 17 / 3) / 2) * _gamma((n2 - n1 + 17 / 3) / 2)
               * _gamma((n1 + n2 + 23 / 3) / 2)))


def noll_covariance(terms: int, d_over_r0: float = 1.0) -> np.ndarray:
    """Covariance of Zernike coefficients j = 2..terms for Kolmogorov turbulence.

    Returns a (terms-1) x (terms-1) matrix in rad^2, scaled by (D/r0)^(5/3).
    """
    if int(terms) != terms or terms < 3:
        raise InvalidParameterError("need at least 3 Zernike terms (piston is excluded)")
    return _unit_covariance(int(terms)) * d_over_r0 ** (5 / 3)


@lru_cache(maxsize=8)
def _unit_covariance(terms: int) -> np.ndarray:
    js = range(2, terms + 1)
    cov = np.array([[_covariance_entry(a, b) for b in js] for a in js])
    cov.setflags(write=False)
    return cov


@lru_cache(maxsize=8)
def _covariance_factor(terms: int) -> np.ndarray:
    cov = _unit_covariance(terms)
    vals, vecs = np.linalg.eigh(cov)
    floor = -1e-10 * np.trace(cov)
    if vals.min() < floor:
        raise CovarianceError(f"covariance eigenvalue {vals.min():.3e} below repair tolerance")
    factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
    factor.setflags(write=False)
    return factor


class _ZernikeBasis:
    """Zernike terms sampled on a grid for one aperture.

    Inside the aperture the polynomials are stored per pixel. Outside,
    ``edge`` mode continues each term with its rim value along the same
    azimuth (a Fourier series in angle); ``zero`` mode leaves the phase flat.
    """

    def __init__(self, grid: Grid, diameter: float, terms: int, outside: str):
        r, theta = grid.polar
        rho = (r / (diameter / 2)).ravel()
        theta = theta.ravel()
        self.size = grid.n * grid.n
        self.inside = np.flatnonzero(rho <= 1.0)
        self.outside = np.flatnonzero(rho > 1.0) if outside == "edge" else None
        js = range(2, terms + 1)
        self.inner = np.stack([zernike(j, rho[self.inside], theta[self.inside]) for j in js])
        if self.outside is not None:
            # rim value of term j is sqrt(n+1) * angular_j(theta) since R_n^m(1) = 1
            keys = sorted({(noll_indices(j)[1], noll_indices(j)[2]) for j in js})
            th = theta[self.outside]
            self.rim_table = np.stack([_angular(m, kind, th) for m, kind in keys])
            self.rim_map = np.zeros((len(keys), terms - 1))
            for col, j in enumerate(js):
                n, m, kind = noll_indices(j)
                self.rim_map[keys.index((m, kind)), col] = math.sqrt(n + 1)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.inside] = coeffs @ self.inner
        if self.outside is not None:
            out[self.outside] = (self.rim_map @ coeffs) @ self.rim_table
        return out


@lru_cache(maxsize=4)
def _basis(grid: Grid, diameter: float, terms: int, outside: str) -> _ZernikeBasis:
    return _ZernikeBasis(grid, diameter, terms, outside)


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    grid: Grid
    phase: np.ndarray
    r0: float
    aperture_diameter: float
    zernike_terms: int = 0
    seed: tuple | None = None

    def __post_init__(self):
        arr = np.array(self.phase, dtype=np.float64)
        if arr.shape != (self.grid.n, self.grid.n):
            raise GridMismatchError("phase array does not match grid")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("phase screen contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "phase", arr)

    @property
    def d_over_r0(self) -> float:
        return self.aperture_diameter / self.r0

    def aperture_mask(self) -> np.ndarray:
        r, _ = self.grid.polar
        return r <= self.aperture_diameter / 2

    def negated(self) -> "PhaseScreen":
        return PhaseScreen(self.grid, -self.phase, self.r0, self.aperture_diameter,
                           self.zernike_terms, self.seed)


def zero_screen(grid: Grid, aperture_diameter: float = 1.0) -> PhaseScreen:
    return PhaseScreen(grid, np.zeros((grid.n, grid.n)), math.inf, aperture_diameter)


def _seed_record(rng: np.random.Generator) -> tuple | None:
    seq = getattr(rng.bit_generator, "seed_seq", None)
    if seq is None:
        return None
    return (seq.entropy, tuple(seq.spawn_key))


def sample_screen(rng: np.random.Generator, turbulence, aperture_diameter: float, grid: Grid,
                  terms: int = 172, outside: str = "edge") -> PhaseScreen:
    """Draw a Kolmogorov phase screen as a sum of Zernike terms 2..``terms``.

    ``turbulence`` is a TurbulenceSpec or a Fried parameter in metres. The
    coefficients are zero-mean Gaussian with the Noll covariance for
    ``aperture_diameter / r0``, drawn through a symmetric factorization.
    """
    if outside not in ("edge", "zero"):
        raise InvalidParameterError("outside must be 'edge' or 'zero'")
    if not aperture_diameter > 0:
        raise InvalidParameterError("aperture diameter must be positive")
    if aperture_diameter > grid.extent:
        raise InvalidParameterError("aperture does not fit on the grid")
    r0 = turbulence.r0 if isinstance(turbulence, TurbulenceSpec) else float(turbulence)
    if not r0 > 0:
        raise InvalidParameterError("r0 must be positive")
    factor = _covariance_factor(int(terms))
    normals = rng.standard_normal(factor.shape[1])
    seed = _seed_record(rng)
    if math.isinf(r0):
        return PhaseScreen(grid, np.zeros((grid.n, grid.n)), r0, aperture_diameter, terms, seed)
    coeffs = factor @ normals * (aperture_diameter / r0) ** (5 / 6)
    phase = _basis(grid, float(aperture_diameter), int(terms), outside).synthesize(coeffs)
    return PhaseScreen(grid, phase.reshape(grid.n, grid.n), r0, aperture_diameter, terms, seed)


def theoretical_structure(r, r0: float):
    """Kolmogorov phase structure function 6.88 (r/r0)^(5/3)."""
    if not r0 > 0:
        raise InvalidParameterError("r0 must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InvalidParameterError("separations must be non-negative")
    out = STRUCTURE_COEFF * (r / r0) ** (5 / 3)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class StructureCurve:
    r: np.ndarray
    estimate: np.ndarray
    theory: np.ndarray

    def relative_error(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.theory > 0, self.estimate / self.theory - 1, 0.0)

    def to_csv(self) -> str:
        rows = ["r_m,D_est,D_theory"]
        rows += [f"{a:.6g},{b:.6g},{c:.6g}" for a, b, c in zip(self.r, self.estimate, self.theory)]
        return "\n".join(rows) + "\n"


def structure_function_estimate(screens: Sequence[PhaseScreen],
                                separations: Sequence[float]) -> StructureCurve:
    """Mean squared phase difference versus separation, over an ensemble of screens.

    Separations are snapped to whole samples; the reported ``r`` is the
    snapped value. Pairs are taken along both grid axes with both points
    inside the screen aperture.
    """
    if len(screens) < 2:
        raise InsufficientSamplesError("need at least two screens")
    first = screens[0]
    for s in screens[1:]:
        if s.grid != first.grid or s.aperture_diameter != first.aperture_diameter or s.r0 != first.r0:
            raise GridMismatchError("screens must share grid, aperture and r0")
    dx = first.grid.dx
    mask = first.aperture_mask()
    stack = np.stack([s.phase for s in screens])
    rs, est = [], []
    for sep in separations:
        shift = int(round(sep / dx))
        if shift > first.aperture_diameter / dx:
            raise InvalidParameterError(f"separation {sep} exceeds the aperture")
        rs.append(shift * dx)
        if shift == 0:
            est.append(0.0)
            continue
        total, count = 0.0, 0
        for axis in (1, 2):
            a = [slice(None)] * 3
            b = [slice(None)] * 3
            a[axis] = slice(shift, None)
            b[axis] = slice(None, -shift)
            ma = mask[tuple(a[1:])] & mask[tuple(b[1:])]
            diff = (stack[tuple(a)] - stack[tuple(b)])[:, ma]
            total += float(np.sum(diff**2))
            count += diff.size
        est.append(total / count)
    rs = np.array(rs)
    return StructureCurve(rs, np.array(est), theoretical_structure(rs, first.r0))
