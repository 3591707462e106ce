"""End-to-end pipelines for both schemes and seeded Monte Carlo sweeps."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .config import ScenarioConfig
from .errors import StimQKDError
from .field import ComplexField, Grid, ModeSpec, analytic_diameter, lg_mode, superpose
from .metrics import (
    RealizationOutcome,
    ScenarioResult,
    aggregate,
    fidelity_matrix,
    outcome_from_matrices,
    q_max,
    rayleigh_disc_radius,
)
from .mub import MubSet, build_mub_pair
from .propagation import ChannelRealization, angular_spectrum_propagate, make_channel, transmit, transmit_many
from .stimpdc import optimize_probe_waist, stimulate_idler
from .turbulence import TurbulenceSpec

__all__ = [
    "Setup",
    "PointResult",
    "SweepResult",
    "prepare",
    "realization_rng",
    "channel_for",
    "run_pm",
    "run_stimpdc",
    "run_realization",
    "sweep",
    "results_csv",
    "write_outputs",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["scheme", "d", "D_over_r0", "Q_mean", "Q_se", "dF_mean", "dF_se", "r_mean", "q_max"]
MIN_EXTENT = 0.24


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything one dimension needs: geometry, Alice's states and Bob's references.

    ``states[b][j]`` is state j of basis b at Alice's plane; ``references``
    are the same states diffracted over the path without turbulence.
    """

    config: ScenarioConfig
    d: int
    grid: Grid
    w_B: float
    w_A: float
    aperture: float
    mubs: MubSet
    states: tuple[tuple[ComplexField, ...], ...]
    references: tuple[tuple[ComplexField, ...], ...]
    probe: ComplexField

    @property
    def disc_radius(self) -> float | None:
        if self.config.projection != "on_axis":
            return None
        if self.config.disc_radius is not None:
            return self.config.disc_radius
        return 0.1 * rayleigh_disc_radius(self.references[0][0])


def _auto_extent(config: ScenarioConfig, w_A: float, w_B: float, l_max: int) -> float:
    z, lam = config.path_length, config.wavelength
    widest = max(analytic_diameter(w_A, l_max, z, lam), analytic_diameter(w_A, l_max, 0.0, lam),
                 analytic_diameter(w_B, 0, z, lam))
    return max(MIN_EXTENT, 4 * widest)


def prepare(config: ScenarioConfig, d: int) -> Setup:
    mubs = build_mub_pair(d)
    l_max = max(abs(l) for l in mubs.oam_range)
    lam = config.wavelength
    if config.probe_waist == "auto":
        w_B = optimize_probe_waist(config.path_length, config.gamma, lam, l_max)
    else:
        w_B = float(config.probe_waist)
    w_A = w_B / config.gamma
    extent = config.grid.extent
    if extent == "auto":
        extent = _auto_extent(config, w_A, w_B, l_max)
    grid = Grid.from_extent(config.grid.n, float(extent))
    modes = [lg_mode(ModeSpec(w_A, l, lam), grid) for l in mubs.oam_range]
    states = tuple(tuple(superpose(b.vector(j), modes) for j in range(d)) for b in mubs.bases)
    references = tuple(
        tuple(angular_spectrum_propagate(s, config.path_length) for s in basis) for basis in states
    )
    probe = lg_mode(ModeSpec(w_B, 0, lam), grid)
    aperture = config.aperture if config.aperture is not None else 2 * w_B
    return Setup(config, d, grid, w_B, w_A, aperture, mubs, states, references, probe)


def realization_rng(master: int, scheme: str, d: int, d_over_r0: float, index: int) -> np.random.Generator:
    """Generator seeded from sha256 of "master:scheme:d:D/r0:index"."""
    key = f"{master}:{scheme}:{d}:{float(d_over_r0)!r}:{index}"
    digest = hashlib.sha256(key.encode()).digest()
    return np.random.default_rng(np.random.SeedSequence(int.from_bytes(digest[:16], "little")))


def channel_for(setup: Setup, d_over_r0: float, rng: np.random.Generator) -> ChannelRealization:
    c = setup.config
    spec = TurbulenceSpec(c.wavelength, c.path_length, d_over_r0=d_over_r0, aperture_diameter=setup.aperture)
    return make_channel(rng, spec, setup.aperture, setup.grid, c.segments, c.zernike_terms, c.screen_outside)


def _score(setup: Setup, received: Sequence[ComplexField]) -> list[np.ndarray]:
    d = setup.d
    return [fidelity_matrix(received[b * d:(b + 1) * d], setup.references[b], setup.disc_radius)
            for b in range(len(setup.states))]


def run_pm(setup: Setup, channel: ChannelRealization) -> list[np.ndarray]:
    """Alice's states cross the channel once towards Bob; one fidelity matrix per basis."""
    sent = [s for basis in setup.states for s in basis]
    return _score(setup, transmit_many(sent, channel, "reverse"))


def run_stimpdc(setup: Setup, channel: ChannelRealization) -> list[np.ndarray]:
    """Bob's probe crosses to Alice, seeds the idler, and the idler returns on the same screens."""
    seed = transmit(setup.probe, channel, "forward")
    idlers = [stimulate_idler(s, seed) for basis in setup.states for s in basis]
    return _score(setup, transmit_many(idlers, channel, "reverse"))


_PIPELINES: dict[str, Callable[[Setup, ChannelRealization], list[np.ndarray]]] = {
    "PM": run_pm,
    "StimPDC": run_stimpdc,
}


def run_realization(setup: Setup, scheme: str, d_over_r0: float, index: int) -> RealizationOutcome:
    rng = realization_rng(setup.config.seed, scheme, setup.d, d_over_r0, index)
    channel = channel_for(setup, d_over_r0, rng)
    return outcome_from_matrices(_PIPELINES[scheme](setup, channel), setup.d)


@dataclass(frozen=True)
class PointResult:
    scheme: str
    d: int
    d_over_r0: float
    result: ScenarioResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


@dataclass
class SweepResult:
    points: list[PointResult]
    wall_time: float = 0.0
    setups: dict[int, dict] = dc_field(default_factory=dict)

    @property
    def failed(self) -> list[PointResult]:
        return [p for p in self.points if not p.ok]

    def point(self, scheme: str, d: int, d_over_r0: float) -> PointResult:
        for p in self.points:
            if p.scheme == scheme and p.d == d and p.d_over_r0 == d_over_r0:
                return p
        raise KeyError((scheme, d, d_over_r0))


def _summarize(outcomes: list[RealizationOutcome]) -> ScenarioResult:
    if len(outcomes) >= 2:
        return aggregate(outcomes)
    o = outcomes[0]
    nan = math.nan
    return ScenarioResult(1, o.per_basis_qer, tuple(nan for _ in o.per_basis_qer),
                          o.qer, nan, o.key_rate, nan, o.fidelity_loss, nan)


def sweep(config: ScenarioConfig, threads: int = 1,
          progress: Callable[[str], None] | None = None) -> SweepResult:
    """Run every (scheme, d, D/r0) point with N seeded realizations each.

    Realizations are independent tasks and are reduced in index order, so
    the output does not depend on ``threads``. A failing point is recorded
    with its diagnostic and the sweep continues.
    """
    start = time.perf_counter()
    setups: dict[int, Setup | str] = {}
    for d in config.dimensions:
        try:
            setups[d] = prepare(config, d)
        except (StimQKDError, ValueError, ArithmeticError) as exc:
            setups[d] = f"{type(exc).__name__}: {exc}"
    points = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for scheme in config.schemes:
            for d in config.dimensions:
                for ratio in config.d_over_r0:
                    setup = setups[d]
                    if isinstance(setup, str):
                        points.append(PointResult(scheme, d, ratio, error=setup))
                        continue
                    try:
                        outcomes = list(pool.map(lambda i: run_realization(setup, scheme, ratio, i),
                                                 range(config.realizations)))
                        points.append(PointResult(scheme, d, ratio, _summarize(outcomes)))
                    except (StimQKDError, ValueError, ArithmeticError) as exc:
                        points.append(PointResult(scheme, d, ratio, error=f"{type(exc).__name__}: {exc}"))
                    if progress:
                        progress(f"{scheme} d={d} D/r0={ratio}: "
                                 + ("ok" if points[-1].ok else points[-1].error))
    info = {d: ({"error": s} if isinstance(s, str) else
                {"w_B": s.w_B, "w_A": s.w_A, "aperture": s.aperture, "grid_n": s.grid.n,
                 "grid_extent": s.grid.extent}) for d, s in setups.items()}
    return SweepResult(points, time.perf_counter() - start, info)


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.10g}"


def results_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for p in result.points:
        if not p.ok:
            continue
        r = p.result
        writer.writerow([p.scheme, p.d, _fmt(p.d_over_r0), _fmt(r.qer), _fmt(r.qer_se),
                         _fmt(r.fidelity_loss), _fmt(r.fidelity_loss_se), _fmt(r.key_rate),
                         _fmt(q_max(p.d))])
    return buf.getvalue()


def _versions() -> dict[str, str]:
    import pydantic
    import scipy

    return {"stimqkd": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pydantic": pydantic.__version__, "pyyaml": yaml.__version__}


def write_outputs(result: SweepResult, config: ScenarioConfig, out_dir) -> tuple[Path, Path]:
    """Write ``results.csv`` and ``manifest.yaml`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    csv_path.write_text(results_csv(result))
    manifest = {
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "versions": _versions(),
        "wall_time_s": round(result.wall_time, 3),
        "geometry": {int(d): v for d, v in result.setups.items()},
        "failed_points": [{"scheme": p.scheme, "d": p.d, "D_over_r0": p.d_over_r0, "error": p.error}
                          for p in result.failed],
    }
    manifest_path = out / "manifest.yaml"
    manifest_path.write_text(yaml.safe_dump(manifest, sort_keys=False))
    return csv_path, manifest_path
