"""Angular-spectrum diffraction and the split-step turbulent channel."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import AliasingWarning, GridMismatchError, InvalidParameterError, ZeroFieldError
from .field import ComplexField, Grid, second_moment_diameter
from .turbulence import PhaseScreen, TurbulenceSpec, rytov_variance, sample_screen, segment_path

__all__ = [
    "ChannelRealization",
    "angular_spectrum_propagate",
    "propagate_samples",
    "make_channel",
    "free_channel",
    "transmit",
    "transmit_many",
    "WINDOW_FRACTION",
]

Direction = Literal["forward", "reverse"]

# beams wider than this fraction of the window are at risk of wrap-around
WINDOW_FRACTION = 0.8


@lru_cache(maxsize=32)
def _transfer(grid: Grid, wavelength: float, dz: float) -> np.ndarray:
    """exp(i dz (k_z - k)) with evanescent components set to zero.

    The common carrier exp(i k dz) is dropped; k_z - k is evaluated as
    -q^2 / (k + k_z) to avoid cancellation at paraxial frequencies.
    """
    k = 2 * math.pi / wavelength
    qx, qy = grid.angular_frequencies
    q2 = qx**2 + qy**2
    propagating = q2 < k * k
    kz = np.sqrt(np.where(propagating, k * k - q2, 0.0))
    h = np.where(propagating, np.exp(-1j * dz * q2 / (k + kz)), 0.0)
    h.setflags(write=False)
    return h


def propagate_samples(samples: np.ndarray, grid: Grid, wavelength: float, dz: float) -> np.ndarray:
    """Propagate raw sample arrays of shape (..., n, n) by ``dz``."""
    if dz == 0:
        return np.array(samples, dtype=np.complex128)
    h = _transfer(grid, float(wavelength), float(dz))
    return sfft.ifft2(sfft.fft2(samples, axes=(-2, -1)) * h, axes=(-2, -1))


def _check_window(field: ComplexField) -> None:
    try:
        diameter = second_moment_diameter(field)
    except ZeroFieldError:
        return
    if diameter > WINDOW_FRACTION * field.grid.extent:
        warnings.warn(
            f"beam diameter {diameter:.4g} m exceeds {WINDOW_FRACTION:.0%} of the "
            f"{field.grid.extent:.4g} m window; enlarge the grid",
            AliasingWarning,
            stacklevel=3,
        )


def angular_spectrum_propagate(field: ComplexField, dz: float) -> ComplexField:
    """Free-space propagation by ``dz`` metres (negative values back-propagate)."""
    if not math.isfinite(dz):
        raise InvalidParameterError("propagation distance must be finite")
    if dz == 0:
        return field
    out = field.replace(propagate_samples(field.samples, field.grid, field.wavelength, dz),
                        normalized=field.normalized)
    _check_window(out)
    return out


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One frozen draw of the turbulent path: ordered (length, screen) segments.

    Each screen sits at the middle of its segment.
    """

    segments: tuple[tuple[float, PhaseScreen], ...]
    total_length: float
    spec: TurbulenceSpec | None = None
    seed: tuple | None = None

    def __post_init__(self):
        segs = tuple((float(dz), screen) for dz, screen in self.segments)
        if not segs:
            raise InvalidParameterError("a channel needs at least one segment")
        if any(dz < 0 for dz, _ in segs):
            raise InvalidParameterError("segment lengths must be non-negative")
        if not math.isclose(sum(dz for dz, _ in segs), self.total_length, rel_tol=1e-12, abs_tol=1e-12):
            raise InvalidParameterError("segment lengths do not add up to the total length")
        grids = {screen.grid for _, screen in segs}
        if len(grids) != 1:
            raise GridMismatchError("all screens of a channel must share one grid")
        object.__setattr__(self, "segments", segs)

    @property
    def grid(self) -> Grid:
        return self.segments[0][1].grid

    @property
    def screens(self) -> list[PhaseScreen]:
        return [s for _, s in self.segments]

    def steps(self, direction: Direction = "forward") -> list[tuple[float, np.ndarray | None]]:
        """Merged (drift, phase) sequence: half drifts of neighbouring segments are combined."""
        if direction not in ("forward", "reverse"):
            raise InvalidParameterError("direction must be 'forward' or 'reverse'")
        segs = self.segments if direction == "forward" else self.segments[::-1]
        steps = []
        carry = 0.0
        for dz, screen in segs:
            steps.append((carry + dz / 2, screen.phase))
            carry = dz / 2
        steps.append((carry, None))
        return steps


def free_channel(grid: Grid, length: float) -> ChannelRealization:
    """Turbulence-free channel of the given length (one flat screen)."""
    flat = PhaseScreen(grid, np.zeros((grid.n, grid.n)), math.inf, grid.extent / 2)
    return ChannelRealization(((float(length), flat),), float(length))


def make_channel(rng: np.random.Generator, spec: TurbulenceSpec, aperture_diameter: float, grid: Grid,
                 segments: int | str = "auto", terms: int = 172, outside: str = "edge") -> ChannelRealization:
    """Draw one screen per equal-length segment, each from its own spawned stream.

    Screens carry the per-segment Fried parameter, so C_n^2 is spread
    uniformly along the path and the screens together reproduce the total r0.
    """
    if segments == "auto":
        m = segment_path(spec)
    else:
        if int(segments) != segments or segments < 1:
            raise InvalidParameterError("segments must be a positive integer or 'auto'")
        m = int(segments)
        partial = rytov_variance(spec.resolved_cn2, spec.wavelength, spec.path_length / m)
        if partial >= 1:
            raise InvalidParameterError(
                f"segment Rytov variance {partial:.3g} >= 1 with {m} segments; use more segments"
            )
    r0 = spec.segment_r0(m)
    dz = spec.path_length / m
    seq = getattr(rng.bit_generator, "seed_seq", None)
    record = None if seq is None else (seq.entropy, tuple(seq.spawn_key))
    streams = rng.spawn(m)
    segs = tuple((dz, sample_screen(s, r0, aperture_diameter, grid, terms, outside)) for s in streams)
    return ChannelRealization(segs, float(spec.path_length), spec, record)


def _run(samples: np.ndarray, channel: ChannelRealization, wavelength: float,
         direction: Direction) -> np.ndarray:
    u = samples
    for drift, phase in channel.steps(direction):
        if drift:
            u = propagate_samples(u, channel.grid, wavelength, drift)
        if phase is not None and phase.any():
            u = u * np.exp(1j * phase)
    return u


def transmit(field: ComplexField, channel: ChannelRealization,
             direction: Direction = "forward") -> ComplexField:
    """Symmetric split-step transmission: half drift, screen, half drift per segment.

    ``reverse`` walks the same screens in the opposite order, modelling a
    frozen channel traversed back towards the sender.
    """
    return transmit_many([field], channel, direction)[0]


def transmit_many(fields: Sequence[ComplexField], channel: ChannelRealization,
                  direction: Direction = "forward") -> list[ComplexField]:
    """Transmit several fields through one realization in a single batch."""
    if not fields:
        return []
    wavelength = fields[0].wavelength
    for f in fields:
        if f.grid != channel.grid:
            raise GridMismatchError("field grid does not match the channel grid")
        if f.wavelength != wavelength:
            raise InvalidParameterError("batched fields must share one wavelength")
    out = _run(np.stack([f.samples for f in fields]), channel, wavelength, direction)
    result = [f.replace(u, normalized=f.normalized) for f, u in zip(fields, out)]
    for f in result:
        _check_window(f)
    return result
