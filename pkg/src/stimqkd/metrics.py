"""Fidelity and crosstalk matrices, error rates, key rates and Monte Carlo aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .errors import GridMismatchError, InsufficientSamplesError, InvalidParameterError, ZeroFieldError
from .field import ComplexField, second_moment_diameter

__all__ = [
    "CrosstalkMatrix",
    "RealizationOutcome",
    "ScenarioResult",
    "fidelity_matrix",
    "normalize_crosstalk",
    "qer",
    "secure_key_rate",
    "q_max",
    "total_qer",
    "on_axis_overlap",
    "rayleigh_disc_radius",
    "outcome_from_matrices",
    "aggregate",
]


@dataclass(frozen=True, eq=False)
class CrosstalkMatrix:
    """Row-normalized detection probabilities: row j is the sent state, column j' the outcome."""

    d: int
    entries: np.ndarray
    basis_label: str = ""

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.shape != (self.d, self.d):
            raise InvalidParameterError(f"crosstalk matrix must be {self.d}x{self.d}")
        if np.any(m < 0):
            raise InvalidParameterError("crosstalk entries must be non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def to_csv(self) -> str:
        return "\n".join(",".join(f"{v:.8g}" for v in row) for row in self.entries) + "\n"


def _overlap(a: ComplexField, b: ComplexField) -> complex:
    return complex(np.vdot(a.samples, b.samples) * a.grid.area_element)


def fidelity_matrix(received: Sequence[ComplexField], reference: Sequence[ComplexField],
                    disc_radius: float | None = None) -> np.ndarray:
    """F[j, j'] = |<reference_j'|received_j>|^2 with each received state normalized.

    Row j belongs to transmitted state j. With ``disc_radius`` the overlap is
    measured through :func:`on_axis_overlap` instead of the exact inner product.
    """
    if len(received) != len(reference) or not received:
        raise InvalidParameterError("received and reference sets must have equal, non-zero length")
    grid = reference[0].grid
    if any(f.grid != grid for f in (*received, *reference)):
        raise GridMismatchError("all states must share one grid")
    d = len(received)
    rec = [f if f.normalized else f.normalize() for f in received]
    if disc_radius is None:
        refs = np.stack([f.samples.ravel() for f in reference])
        outs = np.stack([f.samples.ravel() for f in rec])
        amps = outs.conj() @ refs.T * grid.area_element  # <received_j|reference_j'>
        return np.abs(amps) ** 2
    out = np.empty((d, d))
    for j, r in enumerate(rec):
        for jp, p in enumerate(reference):
            out[j, jp] = on_axis_overlap(r, p, disc_radius)
    return out


def normalize_crosstalk(fidelities, basis_label: str = "") -> CrosstalkMatrix:
    f = np.asarray(fidelities, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise InvalidParameterError("fidelity matrix must be square")
    rows = f.sum(axis=1)
    if np.any(rows <= 0):
        raise ZeroFieldError("a transmitted state was lost entirely (zero row)")
    return CrosstalkMatrix(f.shape[0], f / rows[:, None], basis_label)


def qer(m: CrosstalkMatrix) -> float:
    """Error fraction 1 - mean(diag M)."""
    return float(1.0 - np.trace(m.entries) / m.d)


def _xlog2(x: float) -> float:
    return 0.0 if x == 0 else x * math.log2(x)


def secure_key_rate(d: int, q: float) -> float:
    """Secret bits per sifted symbol for a d-dimensional two-basis protocol at error rate q."""
    if int(d) != d or d < 2:
        raise InvalidParameterError("dimension must be an integer >= 2")
    if not 0 <= q < 1:
        raise InvalidParameterError(f"error rate must lie in [0, 1), got {q}")
    off = 0.0 if q == 0 else q * math.log2(q / (d - 1))
    return math.log2(d) + 2 * _xlog2(1 - q) + 2 * off


def q_max(d: int) -> float:
    """Largest tolerable error rate: the root of the key rate on (0, (d-1)/d)."""
    if int(d) != d or d < 2:
        raise InvalidParameterError("dimension must be an integer >= 2")
    return float(bisect(lambda q: secure_key_rate(d, q), 1e-15, (d - 1) / d, xtol=1e-14))


def total_qer(per_basis: Sequence[float]) -> float:
    if len(per_basis) == 0:
        raise InvalidParameterError("need at least one basis")
    return float(np.mean(per_basis))


def rayleigh_disc_radius(projection: ComplexField, focal_length: float = 0.5) -> float:
    """Airy radius 0.61 lambda f / D of the projection beam in the lens focal plane."""
    return 0.61 * projection.wavelength * focal_length / second_moment_diameter(projection)


def on_axis_overlap(received: ComplexField, projection: ComplexField, disc_radius: float,
                    focal_length: float = 0.5, pad: int = 8) -> float:
    """Overlap as measured by a small detector on the axis of a Fourier lens.

    The product ``received * conj(projection)`` is Fourier transformed onto
    a focal-plane lattice of pitch lambda f / (pad L); the mean intensity
    over the lattice points inside the disc is returned. The centre point
    equals |<projection|received>|^2 exactly.
    """
    if received.grid != projection.grid:
        raise GridMismatchError("received and projection must share a grid")
    grid = received.grid
    pitch = received.wavelength * focal_length / (pad * grid.extent)
    if disc_radius < pitch / 2:
        raise InvalidParameterError(
            f"disc radius {disc_radius:.3g} m is below half a focal-plane sample ({pitch / 2:.3g} m)"
        )
    u = received.samples / math.sqrt(received.norm2) if not received.normalized else received.samples
    g = u * np.conj(projection.samples)
    m = int(disc_radius // pitch)
    freq = np.arange(-m, m + 1) * pitch
    kernel = np.exp(-2j * np.pi * np.outer(freq, grid.coords) / (received.wavelength * focal_length))
    spectrum = kernel @ g @ kernel.T * grid.area_element
    fu, fv = np.meshgrid(freq, freq)
    inside = np.hypot(fu, fv) <= disc_radius
    return float(np.mean(np.abs(spectrum[inside]) ** 2))


@dataclass(frozen=True)
class RealizationOutcome:
    """Scores of one channel realization."""

    per_basis_qer: tuple[float, ...]
    qer: float
    key_rate: float
    fidelity_loss: float


def outcome_from_matrices(fidelities: Sequence[np.ndarray], d: int) -> RealizationOutcome:
    """Per-basis QER, total QER, key rate and fidelity loss from raw fidelity matrices."""
    per_basis = tuple(qer(normalize_crosstalk(f)) for f in fidelities)
    q = total_qer(per_basis)
    mean_diag = float(np.mean([np.mean(np.diag(f)) for f in fidelities]))
    loss = min(max(1.0 - mean_diag, 0.0), 1.0)
    return RealizationOutcome(per_basis, q, secure_key_rate(d, q), loss)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(len(values)))


@dataclass(frozen=True)
class ScenarioResult:
    n: int
    per_basis_qer: tuple[float, ...]
    per_basis_qer_se: tuple[float, ...]
    qer: float
    qer_se: float
    key_rate: float
    key_rate_se: float
    fidelity_loss: float
    fidelity_loss_se: float


def aggregate(outcomes: Sequence[RealizationOutcome]) -> ScenarioResult:
    """Means and standard errors (sample std / sqrt(N)) over realizations."""
    if len(outcomes) < 2:
        raise InsufficientSamplesError("aggregation needs at least two realizations")
    per_basis = np.array([o.per_basis_qer for o in outcomes])
    pb = [_mean_se(per_basis[:, b]) for b in range(per_basis.shape[1])]
    q, q_se = _mean_se(np.array([o.qer for o in outcomes]))
    r, r_se = _mean_se(np.array([o.key_rate for o in outcomes]))
    f, f_se = _mean_se(np.array([o.fidelity_loss for o in outcomes]))
    return ScenarioResult(len(outcomes), tuple(m for m, _ in pb), tuple(s for _, s in pb),
                          q, q_se, r, r_se, f, f_se)
