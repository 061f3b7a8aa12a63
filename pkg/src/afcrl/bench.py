"""Scaling benchmark harness: sweeps, speedup/efficiency tables.

A sweep point is (plan, strategy) run for a fixed total number of
environment-episodes. Virtual points evaluate the cost model exactly
and are bitwise reproducible; real points measure wall clock over a
small episode budget (min of N repetitions) so a desk run finishes in
minutes while hours-per-episode comparisons stay valid.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import orchestrator as orch
from .coupling import BASELINE, DISABLED, OPTIMIZED, IoStrategy
from .env import EnvConfig
from .errors import ConfigError
from .ppo import PpoHyper


@dataclass(frozen=True)
class TimingRecord:
    """One benchmark configuration's measured or modeled cost."""

    n_episodes: int
    n_envs: int
    n_ranks: int
    hours: float
    solver_hours: float = 0.0
    io_hours: float = 0.0
    update_hours: float = 0.0
    strategy: str = BASELINE
    failed: bool = False
    error: str = ""

    @property
    def n_total(self) -> int:
        return self.n_envs * self.n_ranks

    def __post_init__(self):
        if not self.failed and self.hours <= 0:
            raise ConfigError("duration must be > 0")


def speedup(ref: TimingRecord, x: TimingRecord) -> float:
    """Wall-time ratio against the reference configuration."""
    if not (ref.hours > 0 and x.hours > 0):
        raise ConfigError("durations must be > 0")
    return ref.hours / x.hours


def efficiency(ref: TimingRecord, x: TimingRecord) -> float:
    """CPU-normalized speedup as a percentage; 100 means linear scaling."""
    if not (ref.hours > 0 and x.hours > 0):
        raise ConfigError("durations must be > 0")
    return 100.0 * (ref.hours * ref.n_total) / (x.hours * x.n_total)


def _ulp_fan(x: float, width: int) -> list[float]:
    """x and its float neighbors, ordered by distance from x."""
    out = [x]
    up = down = x
    for _ in range(width):
        up = float(np.nextafter(up, np.inf))
        down = float(np.nextafter(down, -np.inf))
        out.extend((up, down))
    return out


def _consistent_pair(t_ref: float, c_ref: int, t_x: float, c_x: int) -> tuple[float, float]:
    """Speedup and efficiency fraction with eff * c_x == speedup * c_ref bitwise.

    The plain divisions can land an ulp off the product identity, and for
    some CPU counts no efficiency float alone can reach the exact product,
    so both members of the pair are searched over a few-ulp neighborhood
    for the closest bitwise-consistent combination.
    """
    s0 = t_ref / t_x
    e0 = (s0 * c_ref) / c_x
    if e0 * c_x == s0 * c_ref:
        return s0, e0
    for s in _ulp_fan(s0, 4):
        target = s * c_ref
        for e in _ulp_fan(e0, 4):
            if e * c_x == target:
                return s, e
    return s0, e0


@dataclass(frozen=True)
class DerivedRow:
    """A record with its speedup and efficiency against the table reference."""

    record: TimingRecord
    speedup: float
    efficiency: float  # fraction of linear scaling; 1.0 == 100%

    @property
    def efficiency_pct(self) -> float:
        return 100.0 * self.efficiency


@dataclass
class ScalingTable:
    """Derived speedup/efficiency rows against a declared reference record."""

    reference: TimingRecord
    rows: list[DerivedRow]

    @classmethod
    def from_records(cls, records: list[TimingRecord],
                     reference: TimingRecord | None = None) -> "ScalingTable":
        ok = [r for r in records if not r.failed]
        if not ok:
            raise ConfigError("no successful records to tabulate")
        ref = reference if reference is not None else ok[0]
        rows = []
        for rec in ok:
            s, eff = _consistent_pair(ref.hours, ref.n_total, rec.hours, rec.n_total)
            rows.append(DerivedRow(record=rec, speedup=s, efficiency=eff))
        return cls(reference=ref, rows=rows)


def group_by_ranks(records: list[TimingRecord]) -> list[tuple[str, ScalingTable]]:
    """One table per rank count, each normalized to its own 1-env row.

    Groups whose every record failed are dropped; the failures stay
    visible in the raw record list.
    """
    groups: dict[int, list[TimingRecord]] = {}
    for rec in records:
        groups.setdefault(rec.n_ranks, []).append(rec)
    out = []
    for ranks in sorted(groups, reverse=True):
        recs = sorted(groups[ranks], key=lambda r: r.n_envs)
        if any(not r.failed for r in recs):
            out.append((f"ranks={ranks}", ScalingTable.from_records(recs)))
    return out


def group_by_strategy(records: list[TimingRecord]) -> list[tuple[str, ScalingTable]]:
    """One table per I/O strategy, each normalized to its own 1-env row."""
    order = {BASELINE: 0, DISABLED: 1, OPTIMIZED: 2}
    groups: dict[str, list[TimingRecord]] = {}
    for rec in records:
        groups.setdefault(rec.strategy, []).append(rec)
    out = []
    for strategy in sorted(groups, key=lambda s: order.get(s, 99)):
        recs = sorted(groups[strategy], key=lambda r: r.n_envs)
        if any(not r.failed for r in recs):
            out.append((strategy, ScalingTable.from_records(recs)))
    return out


def evaluate_virtual_point(
    plan: orch.ParallelPlan,
    strategy: IoStrategy,
    n_episodes: int,
    actuations: int = 100,
) -> TimingRecord:
    """Exact cost-model evaluation of one configuration."""
    vplan = replace(plan, mode=orch.VIRTUAL)
    cycles = math.ceil(n_episodes / vplan.n_envs)
    t = orch.virtual_episode_time(vplan, strategy.bytes_per_actuation, actuations)
    solver_h = cycles * t.solver_seconds / 3600.0
    io_h = cycles * t.io_seconds / 3600.0
    update_h = cycles * t.update_seconds / 3600.0
    return TimingRecord(
        n_episodes=n_episodes,
        n_envs=vplan.n_envs,
        n_ranks=vplan.n_ranks,
        hours=solver_h + io_h + update_h,
        solver_hours=solver_h,
        io_hours=io_h,
        update_hours=update_h,
        strategy=strategy.mode,
    )


def measure_real_point(
    plan: orch.ParallelPlan,
    strategy: IoStrategy,
    n_episodes: int,
    config: EnvConfig,
    hyper: PpoHyper,
    seed: int,
    repetitions: int = 3,
    out_dir=None,
) -> TimingRecord:
    """Wall-clock measurement of one configuration (min of N repetitions)."""
    rplan = replace(plan, mode=orch.REAL)
    cycles = math.ceil(n_episodes / rplan.n_envs)
    point_dir = None
    if strategy.mode != DISABLED:
        root = Path(out_dir) if out_dir is not None else Path(tempfile.mkdtemp())
        point_dir = root / f"{strategy.mode}_r{rplan.n_ranks}_e{rplan.n_envs}"
    best = None
    for rep in range(repetitions):
        t0 = time.perf_counter()
        result = orch.run_training(
            rplan, config, hyper, cycles, strategy, seed + rep, out_dir=point_dir
        )
        wall = time.perf_counter() - t0
        solver = sum(r.critical_solver_seconds for r in result.history)
        io = sum(r.critical_io_seconds for r in result.history)
        update = sum(r.update_seconds for r in result.history)
        if best is None or wall < best[0]:
            best = (wall, solver, io, update)
    wall, solver, io, update = best
    return TimingRecord(
        n_episodes=n_episodes,
        n_envs=rplan.n_envs,
        n_ranks=rplan.n_ranks,
        hours=wall / 3600.0,
        solver_hours=solver / 3600.0,
        io_hours=io / 3600.0,
        update_hours=update / 3600.0,
        strategy=strategy.mode,
    )


def run_sweep(
    plans: list[orch.ParallelPlan],
    strategies: list[IoStrategy],
    mode: str = orch.VIRTUAL,
    n_episodes: int = 3000,
    actuations: int = 100,
    config: EnvConfig | None = None,
    hyper: PpoHyper | None = None,
    seed: int = 0,
    repetitions: int = 3,
    out_dir=None,
) -> list[TimingRecord]:
    """Evaluate every (plan, strategy) point sequentially.

    A failing point is recorded as failed and the sweep continues.
    Virtual sweeps are pure functions of the plans and repeat bitwise.
    """
    records = []
    for plan in plans:
        for strategy in strategies:
            try:
                if mode == orch.VIRTUAL:
                    rec = evaluate_virtual_point(plan, strategy, n_episodes, actuations)
                else:
                    rec = measure_real_point(
                        plan, strategy, n_episodes,
                        config if config is not None else EnvConfig(),
                        hyper if hyper is not None else PpoHyper(),
                        seed, repetitions, out_dir=out_dir,
                    )
            except Exception as exc:
                rec = TimingRecord(
                    n_episodes=n_episodes, n_envs=plan.n_envs, n_ranks=plan.n_ranks,
                    hours=float("nan"), strategy=strategy.mode,
                    failed=True, error=str(exc),
                )
            records.append(rec)
    return records


_TABLE1_ENVS = {
    5: [1, 2, 4, 6, 8, 10, 12],
    2: [1, 2, 4, 6, 8, 10, 20, 30],
    1: [1, 2, 4, 6, 8, 10, 20, 30, 40, 50, 60],
}
_TABLE2_ENVS = [1, 2, 4, 6, 8, 10, 20, 30, 40, 50, 60]


def table1_plans(base: orch.ParallelPlan | None = None) -> list[orch.ParallelPlan]:
    """The 26 multi-environment configurations of the rank-group study."""
    base = base if base is not None else orch.ParallelPlan(mode=orch.VIRTUAL)
    plans = []
    for ranks in sorted(_TABLE1_ENVS, reverse=True):
        for envs in _TABLE1_ENVS[ranks]:
            plans.append(replace(base, n_envs=envs, n_ranks=ranks))
    return plans


def table2_plans(base: orch.ParallelPlan | None = None) -> list[orch.ParallelPlan]:
    """The 11 single-rank configurations of the I/O strategy study."""
    base = base if base is not None else orch.ParallelPlan(mode=orch.VIRTUAL)
    return [replace(base, n_envs=envs, n_ranks=1) for envs in _TABLE2_ENVS]


def table2_strategies(payloads: IoStrategy | None = None) -> list[IoStrategy]:
    base = payloads if payloads is not None else IoStrategy()
    return [
        replace(base, mode=BASELINE),
        replace(base, mode=DISABLED),
        replace(base, mode=OPTIMIZED),
    ]


GRIDS = ("table1", "table2")


def grid_points(
    name: str,
    base_plan: orch.ParallelPlan | None = None,
    payloads: IoStrategy | None = None,
) -> tuple[list[orch.ParallelPlan], list[IoStrategy]]:
    """Named experiment grids available to the CLI."""
    if name == "table1":
        strategy = (replace(payloads, mode=BASELINE) if payloads is not None
                    else IoStrategy(mode=BASELINE))
        return table1_plans(base_plan), [strategy]
    if name == "table2":
        return table2_plans(base_plan), table2_strategies(payloads)
    raise ConfigError(f"unknown grid {name!r}; available grids: {', '.join(GRIDS)}")
