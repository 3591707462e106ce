"""Mutually unbiased bases from eigenbases of Weyl (clock and shift) operators.

Basis vectors are the columns of each coefficient matrix; entry ``i`` of a
vector weights the LG mode with azimuthal index ``oam_range[i]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateEigenvalueWarning,
    InvalidParameterError,
    NonUnitaryError,
    NoUnbiasedPairError,
)
from .field import ComplexField, Grid, ModeSpec, inner_product, lg_mode, superpose

__all__ = [
    "CoefficientBasis",
    "MubSet",
    "MubReport",
    "weyl_operators",
    "eigenbasis",
    "oam_range",
    "build_mub_pair",
    "verify_mub",
    "verify_states",
    "synthesize_states",
    "format_matrix",
]

_PHASE_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class CoefficientBasis:
    d: int
    matrix: np.ndarray
    generator_label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (self.d, self.d):
            raise InvalidParameterError(f"basis matrix must be {self.d}x{self.d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def vector(self, j: int) -> np.ndarray:
        return self.matrix[:, j]


@dataclass(frozen=True, eq=False)
class MubSet:
    d: int
    bases: tuple[CoefficientBasis, ...]
    oam_range: tuple[int, ...]

    def __post_init__(self):
        if len(self.bases) < 2:
            raise InvalidParameterError("a MUB set needs at least two bases")
        if len(self.oam_range) != self.d or sorted(self.oam_range) != sorted(-l for l in self.oam_range):
            raise InvalidParameterError("oam_range must have length d and be symmetric about 0")
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "oam_range", tuple(int(l) for l in self.oam_range))


@dataclass(frozen=True)
class MubReport:
    d: int
    orthonormality_deviation: float
    unbiasedness_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.orthonormality_deviation < self.tol and self.unbiasedness_deviation < self.tol

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"d={self.d} orthonormality_dev={self.orthonormality_deviation:.3e} "
                f"unbiasedness_dev={self.unbiasedness_deviation:.3e} tol={self.tol:.1e} {verdict}")


def weyl_operators(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Clock ``Z = diag(w^i)`` and cyclic shift ``X|i> = |i+1 mod d>``, w = exp(2 pi i / d)."""
    if int(d) != d or d < 2:
        raise InvalidParameterError(f"dimension must be an integer >= 2, got {d}")
    omega = np.exp(2j * np.pi / d)
    z = np.diag(omega ** np.arange(d))
    x = np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)
    return z, x


def _fix_phase(v: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(v) > 1e-8))
    return v * np.exp(-1j * np.angle(v[idx]))


def eigenbasis(op: np.ndarray, label: str = "") -> CoefficientBasis:
    """Unit eigenvectors of a unitary operator as matrix columns.

    Columns are ordered by eigenvalue phase in [0, 2 pi); each column's first
    entry with magnitude above 1e-8 is made real-positive. Degenerate
    eigenspaces are orthonormalized and ordered lexicographically.
    """
    op = np.asarray(op, dtype=np.complex128)
    d = op.shape[0]
    if op.shape != (d, d) or np.abs(op.conj().T @ op - np.eye(d)).max() > 1e-10:
        raise NonUnitaryError("eigenbasis requires a unitary operator")
    vals, vecs = np.linalg.eig(op)
    phases = np.round(np.mod(np.angle(vals), 2 * np.pi), _PHASE_DECIMALS)
    phases[phases >= np.round(2 * np.pi, _PHASE_DECIMALS)] = 0.0
    groups: dict[float, list[int]] = {}
    for i, ph in enumerate(phases):
        groups.setdefault(float(ph), []).append(i)
    columns = []
    for ph in sorted(groups):
        idx = groups[ph]
        block = vecs[:, idx]
        if len(idx) > 1:
            warnings.warn(f"degenerate eigenvalue (phase {ph:.6f}, multiplicity {len(idx)})",
                          DegenerateEigenvalueWarning, stacklevel=2)
            block, _ = np.linalg.qr(block)
        cols = [_fix_phase(block[:, i] / np.linalg.norm(block[:, i])) for i in range(block.shape[1])]
        cols.sort(key=lambda v: tuple(np.round(np.concatenate([v.real, v.imag]), 8)))
        columns.extend(cols)
    return CoefficientBasis(d, np.column_stack(columns), label)


def oam_range(d: int) -> tuple[int, ...]:
    """Azimuthal indices for vector entries: centred for odd d, skipping 0 for even d."""
    if d % 2:
        return tuple(i - (d - 1) // 2 for i in range(d))
    half = d // 2
    return tuple(i - half if i < half else i - half + 1 for i in range(d))


def _xz_power(d: int, a: int) -> tuple[np.ndarray, str]:
    z, x = weyl_operators(d)
    label = "X" if a % d == 0 else ("XZ" if a == 1 else f"XZ^{a}")
    return x @ np.linalg.matrix_power(z, a), label


def _coefficient_deviations(bases: Sequence[CoefficientBasis], d: int) -> tuple[float, float]:
    ortho = max(float(np.abs(b.matrix.conj().T @ b.matrix - np.eye(d)).max()) for b in bases)
    unbiased = 0.0
    for i in range(len(bases)):
        for j in range(i + 1, len(bases)):
            ov = np.abs(bases[i].matrix.conj().T @ bases[j].matrix) ** 2
            unbiased = max(unbiased, float(np.abs(ov - 1.0 / d).max()))
    return ortho, unbiased


def build_mub_pair(d: int) -> MubSet:
    """Two certified mutually unbiased bases of dimension ``d`` (2 <= d <= 10).

    d=2 uses the eigenbases of X and XZ, d=5 those of XZ^4 and XZ (the pair
    whose vectors reproduce the published d=5 tables). Other dimensions take
    the first pair (XZ^a, XZ^b), a < b, that certifies at 1e-10.
    """
    if int(d) != d or not 2 <= d <= 10:
        raise InvalidParameterError(f"dimension must be in 2..10, got {d}")
    d = int(d)
    if d == 2:
        candidates = [(0, 1)]
    elif d == 5:
        candidates = [(4, 1)]
    else:
        candidates = [(a, b) for a in range(d + 1) for b in range(a + 1, d + 1)]
    for a, b in candidates:
        ops = [_xz_power(d, a), _xz_power(d, b)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
            bases = tuple(eigenbasis(op, label) for op, label in ops)
        ortho, unbiased = _coefficient_deviations(bases, d)
        if ortho < 1e-10 and unbiased < 1e-10:
            return MubSet(d, bases, oam_range(d))
    raise NoUnbiasedPairError(f"no certified pair of XZ^a eigenbases found for d={d}")


def verify_mub(mubs: MubSet, tol: float = 1e-10) -> MubReport:
    ortho, unbiased = _coefficient_deviations(mubs.bases, mubs.d)
    return MubReport(mubs.d, ortho, unbiased, tol)


def verify_states(states: Sequence[Sequence[ComplexField]], tol: float = 1e-3) -> MubReport:
    """Orthonormality and unbiasedness of grid-sampled basis states."""
    d = len(states[0])
    grams = []
    for i, basis_i in enumerate(states):
        for j, basis_j in enumerate(states):
            if j < i:
                continue
            g = np.array([[inner_product(a, b) for b in basis_j] for a in basis_i])
            grams.append((i == j, g))
    ortho = max(float(np.abs(g - np.eye(d)).max()) for same, g in grams if same)
    cross = [float(np.abs(np.abs(g) ** 2 - 1.0 / d).max()) for same, g in grams if not same]
    return MubReport(d, ortho, max(cross, default=0.0), tol)


def synthesize_states(mubs: MubSet, w0: float, grid: Grid,
                      wavelength: float = 810e-9) -> list[list[ComplexField]]:
    """One normalized LG superposition per basis vector, at the beam waist."""
    modes = [lg_mode(ModeSpec(w0, l, wavelength), grid) for l in mubs.oam_range]
    return [[superpose(basis.vector(j), modes) for j in range(mubs.d)] for basis in mubs.bases]


def format_matrix(basis: CoefficientBasis) -> str:
    """Rows of comma-separated ``re,im`` pairs, one matrix row per line."""
    lines = []
    for row in basis.matrix:
        lines.append(",".join(f"{v.real + 0.0:.15g},{v.imag + 0.0:.15g}" for v in row))
    return "\n".join(lines)
