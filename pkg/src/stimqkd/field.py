"""Sampled scalar optical fields, Laguerre-Gaussian synthesis and beam-size measures.

Fields live on a square grid centred on the optical axis, with sample
coordinates ``x_k = (k - n/2) * dx``. Every operation returns a new field;
sample arrays are stored read-only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import (
    GridMismatchError,
    InvalidParameterError,
    UndersampledGridError,
    ZeroFieldError,
)

__all__ = [
    "Grid",
    "ComplexField",
    "ModeSpec",
    "lg_mode",
    "superpose",
    "inner_product",
    "second_moment_diameter",
    "analytic_diameter",
    "propagated_diameter",
    "rayleigh_range",
    "apply_phase",
    "conjugate",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid:
    """Square sampling grid: ``n`` samples per side at spacing ``dx`` metres."""

    n: int
    dx: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 64:
            raise InvalidParameterError(f"grid needs n >= 64 samples per side, got {self.n}")
        if not self.dx > 0:
            raise InvalidParameterError(f"grid spacing must be positive, got {self.dx}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "dx", float(self.dx))

    @classmethod
    def from_extent(cls, n: int, extent: float) -> "Grid":
        return cls(n, extent / n)

    @property
    def extent(self) -> float:
        return self.n * self.dx

    @property
    def area_element(self) -> float:
        return self.dx * self.dx

    @cached_property
    def coords(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) coordinate arrays, indexed ``[row=y, col=x]``."""
        return np.meshgrid(self.coords, self.coords)

    @cached_property
    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.mesh
        return np.hypot(x, y), np.arctan2(y, x)

    @cached_property
    def angular_frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """(QX, QY) in rad/m, in unshifted FFT order."""
        q = 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)
        return np.meshgrid(q, q)


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    samples: np.ndarray
    wavelength: float
    normalized: bool = dc_field(default=False)

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128)
        if arr.shape != (self.grid.n, self.grid.n):
            raise GridMismatchError(
                f"samples shape {arr.shape} does not match grid {self.grid.n}x{self.grid.n}"
            )
        if not self.wavelength > 0:
            raise InvalidParameterError("wavelength must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def norm2(self) -> float:
        return float(np.sum(self.intensity) * self.grid.area_element)

    def spectral_norm2(self) -> float:
        spec = sfft.fft2(self.samples)
        return float(np.sum(np.abs(spec) ** 2) * self.grid.area_element / self.grid.n**2)

    def replace(self, samples: np.ndarray, *, normalized: bool = False,
                wavelength: float | None = None) -> "ComplexField":
        return ComplexField(self.grid, samples, wavelength or self.wavelength, normalized)

    def normalize(self) -> "ComplexField":
        n2 = self.norm2
        if not n2 > 0 or not np.isfinite(n2):
            raise ZeroFieldError("cannot normalize a field with zero norm")
        return self.replace(self.samples / math.sqrt(n2), normalized=True)

    def scaled(self, factor: complex) -> "ComplexField":
        return self.replace(self.samples * factor)


@dataclass(frozen=True)
class ModeSpec:
    w0: float
    l: int
    wavelength: float
    z: float = 0.0
    p: int = 0

    def __post_init__(self):
        if not self.w0 > 0:
            raise InvalidParameterError(f"beam waist must be positive, got {self.w0}")
        if not self.wavelength > 0:
            raise InvalidParameterError("wavelength must be positive")
        if self.p != 0:
            raise InvalidParameterError("only radial index p=0 is supported")


def rayleigh_range(w0: float, wavelength: float) -> float:
    return math.pi * w0**2 / wavelength


def analytic_diameter(w0: float, l: int, z: float, wavelength: float) -> float:
    """Second-moment diameter of LG_0^l at distance ``z`` from its waist."""
    if not w0 > 0 or not wavelength > 0:
        raise InvalidParameterError("w0 and wavelength must be positive")
    zr = rayleigh_range(w0, wavelength)
    return 2 * w0 * math.sqrt((abs(l) + 1) * (1 + (z / zr) ** 2))


def _check_same_grid(*fields: ComplexField) -> None:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grids differ: {g} vs {f.grid}")


def lg_mode(spec: ModeSpec, grid: Grid, check_extent: bool = True) -> ComplexField:
    """Normalized Laguerre-Gaussian mode LG_0^l sampled at plane ``spec.z``.

    Includes the Gouy phase ``-(|l|+1) atan(z/z_R)`` and the wavefront
    curvature for z != 0; the common carrier ``exp(ikz)`` is omitted.
    ``check_extent=False`` allows sampling only the core of a broad beam,
    e.g. a seed that is multiplied by a much narrower mode.
    """
    need = 4 * analytic_diameter(spec.w0, spec.l, spec.z, spec.wavelength)
    if check_extent and grid.extent < need:
        raise UndersampledGridError(
            f"grid extent {grid.extent:.4g} m is below 4x the mode diameter ({need:.4g} m)"
        )
    al = abs(spec.l)
    zr = rayleigh_range(spec.w0, spec.wavelength)
    k = 2 * np.pi / spec.wavelength
    w = spec.w0 * math.sqrt(1 + (spec.z / zr) ** 2)
    r, phi = grid.polar
    rho = np.sqrt(2.0) * r / w
    amp = rho**al * np.exp(-(r / w) ** 2)
    phase = spec.l * phi
    if spec.z != 0:
        curvature = spec.z / (spec.z**2 + zr**2)  # 1/R(z)
        phase = phase + 0.5 * k * r**2 * curvature - (al + 1) * math.atan(spec.z / zr)
    u = amp * np.exp(1j * phase)
    return ComplexField(grid, u, spec.wavelength).normalize()


def superpose(coeffs: Sequence[complex], modes: Sequence[ComplexField]) -> ComplexField:
    """Normalized coefficient-weighted sum of fields sharing one grid."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim != 1 or len(coeffs) != len(modes) or len(modes) == 0:
        raise InvalidParameterError("need one coefficient per mode")
    _check_same_grid(*modes)
    total = np.tensordot(coeffs, np.stack([m.samples for m in modes]), axes=1)
    out = ComplexField(modes[0].grid, total, modes[0].wavelength)
    if out.norm2 <= 1e-300:
        raise ZeroFieldError("superposition vanishes identically")
    return out.normalize()


def inner_product(a: ComplexField, b: ComplexField) -> complex:
    """<a|b> = sum(conj(a) * b) dx^2."""
    _check_same_grid(a, b)
    return complex(np.vdot(a.samples, b.samples) * a.grid.area_element)


def _centroid_variance(field: ComplexField) -> tuple[float, float, float, float]:
    intensity = field.intensity
    total = intensity.sum()
    if not total > 0:
        raise ZeroFieldError("second moment of a zero field is undefined")
    x = field.grid.coords
    px = intensity.sum(axis=0) / total  # marginal along x (columns)
    py = intensity.sum(axis=1) / total
    cx = float(px @ x)
    cy = float(py @ x)
    vx = float(px @ (x - cx) ** 2)
    vy = float(py @ (x - cy) ** 2)
    return cx, cy, vx, vy


def second_moment_diameter(field: ComplexField) -> float:
    """Beam diameter 2*sqrt(2*(var_x + var_y)) about the intensity centroid.

    Equivalent to the per-axis D4sigma width combined radially; reduces to
    ``2 w0 sqrt(|l|+1)`` for LG_0^l at its waist.
    """
    _, _, vx, vy = _centroid_variance(field)
    return 2 * math.sqrt(2 * (vx + vy))


def _moment_law(field: ComplexField) -> tuple[float, float, float]:
    """Coefficients of the centroid-variance law var(z) = a + b z + c z^2.

    Exact for paraxial free-space propagation, from position, momentum and
    mixed moments of the field.
    """
    g = field.grid
    u = field.samples
    qx, qy = g.angular_frequencies
    spec = sfft.fft2(u)
    p_spec = np.abs(spec) ** 2
    p_tot = p_spec.sum()
    intensity = np.abs(u) ** 2
    total = intensity.sum()
    if not total > 0:
        raise ZeroFieldError("moment law of a zero field is undefined")
    x, y = g.mesh
    dux = sfft.ifft2(1j * qx * spec)
    duy = sfft.ifft2(1j * qy * spec)
    jx = np.imag(np.conj(u) * dux)
    jy = np.imag(np.conj(u) * duy)
    mx, my = (x * intensity).sum() / total, (y * intensity).sum() / total
    mpx, mpy = jx.sum() / total, jy.sum() / total
    vx = ((x - mx) ** 2 * intensity).sum() / total
    vy = ((y - my) ** 2 * intensity).sum() / total
    cx = (x * jx).sum() / total - mx * mpx
    cy = (y * jy).sum() / total - my * mpy
    vpx = (qx**2 * p_spec).sum() / p_tot - mpx**2
    vpy = (qy**2 * p_spec).sum() / p_tot - mpy**2
    k = field.k
    return float(vx + vy), float(2 * (cx + cy) / k), float((vpx + vpy) / k**2)


def propagated_diameter(field: ComplexField, z) -> np.ndarray | float:
    """Second-moment diameter after free propagation by ``z``, without propagating.

    Uses the exact quadratic evolution of the second moment for paraxial
    fields; ``z`` may be a scalar or an array.
    """
    a, b, c = _moment_law(field)
    z_arr = np.asarray(z, dtype=float)
    var = np.maximum(a + b * z_arr + c * z_arr**2, 0.0)
    d = 2 * np.sqrt(2 * var)
    return float(d) if d.ndim == 0 else d


def apply_phase(field: ComplexField, screen) -> ComplexField:
    """Multiply by exp(i*phase). ``screen`` is a PhaseScreen or anything with ``grid``/``phase``."""
    if screen.grid != field.grid:
        raise GridMismatchError("phase screen grid does not match field grid")
    return field.replace(field.samples * np.exp(1j * screen.phase), normalized=field.normalized)


def conjugate(field: ComplexField) -> ComplexField:
    return field.replace(np.conj(field.samples), normalized=field.normalized)


def save_field(path, field: ComplexField) -> Path:
    """Write amplitude and phase planes plus (n, dx, wavelength).

    ``.npz`` gives a portable binary file; any other suffix writes
    whitespace-delimited text: a header line, then n amplitude rows, then
    n phase rows.
    """
    path = Path(path)
    amp = np.abs(field.samples)
    phase = np.angle(field.samples)
    if path.suffix == ".npz":
        np.savez(path, amplitude=amp, phase=phase, n=field.grid.n,
                 dx=field.grid.dx, wavelength=field.wavelength)
    else:
        header = f"n={field.grid.n} dx={field.grid.dx!r} wavelength={field.wavelength!r}"
        np.savetxt(path, np.vstack([amp, phase]), header=header)
    return path


def load_field(path) -> ComplexField:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            grid = Grid(int(data["n"]), float(data["dx"]))
            u = data["amplitude"] * np.exp(1j * data["phase"])
            return ComplexField(grid, u, float(data["wavelength"]))
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    meta = dict(item.split("=") for item in header)
    n = int(meta["n"])
    planes = np.loadtxt(path)
    grid = Grid(n, float(meta["dx"]))
    return ComplexField(grid, planes[:n] * np.exp(1j * planes[n:]), float(meta["wavelength"]))
