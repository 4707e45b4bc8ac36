"""Parameter sweeps over received SNR, UE count, fiber length and drops."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ifofsim import __version__
from ifofsim.bbu import CellReport
from ifofsim.errors import SimulationError

from ifofsim.harness.config import RunConfig
from ifofsim.harness.pipeline import Point, run_point


@dataclass
class PointFailure:
    """Marker for a point whose simulation raised; the sweep carries on."""

    point: Point
    seed: int
    error: str


@dataclass
class SweepResult:
    entries: list  # CellReport or PointFailure, in grid order
    provenance: dict = field(default_factory=dict)

    @property
    def reports(self) -> list[CellReport]:
        return [e for e in self.entries if isinstance(e, CellReport)]

    @property
    def failures(self) -> list[PointFailure]:
        return [e for e in self.entries if isinstance(e, PointFailure)]


def grid_points(cfg: RunConfig) -> list[Point]:
    """Cartesian product of the sweep axes in a fixed order (UEs, drop, L, ideal, SNR)."""
    ax = cfg.sweep
    pts = []
    for n_ues, drop, length, ideal, snr in itertools.product(
            ax.n_ues, range(ax.n_drops), ax.length_km, ax.ideal_fh, ax.snr_db):
        pts.append(Point(snr, n_ues, length, drop, ideal))
    return pts


def _run_one(args):
    cfg, point, seed = args
    try:
        return run_point(cfg, point, seed)
    except (SimulationError, ValueError, ArithmeticError, MemoryError) as exc:
        return PointFailure(point, seed, f"{type(exc).__name__}: {exc}")


def run_sweep(cfg: RunConfig, workers: int | None = None, seed: int | None = None,
              points: list[Point] | None = None) -> SweepResult:
    """Run every grid point; results come back in grid order whatever ``workers`` is."""
    seed = cfg.seed if seed is None else seed
    workers = cfg.workers if workers is None else workers
    pts = grid_points(cfg) if points is None else list(points)
    jobs = [(cfg, p, seed) for p in pts]
    if workers <= 1 or len(jobs) <= 1:
        entries = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_run_one, jobs))
    prov = {"config_hash": cfg.digest(), "seed": seed, "code_version": __version__,
            "profile": cfg.profile, "n_points": len(pts)}
    return SweepResult(entries, prov)
