"""Training driver: N environments times N solver ranks per environment.

Every episode, all environments roll out concurrently against a frozen
parameter snapshot, a barrier waits for the last one, and a single
learner updates the policy on the pooled trajectories. Trajectories
depend only on (snapshot, environment seed), never on worker
interleaving, so runs are reproducible bit for bit.

Two execution modes share this loop. ``real`` measures wall-clock cost;
``virtual`` attributes deterministic model costs instead, so scaling
behavior can be tested exactly on any machine:

* solver seconds per actuation follow a serial-fraction law,
  ``T_s = c * (f + (1 - f) / n_ranks)``;
* I/O seconds per actuation charge each bundle's own transfer plus a
  penalized replay of whatever the concurrently writing environments
  push beyond the drain credit,
  ``T_io = bytes/B + penalty * max(0, k*bytes - free_bytes)/B``;
* one flat update cost is added per episode barrier.

With ``penalty = 0`` (or unlimited credit) the I/O term collapses to a
pure bandwidth share; the defaults make baseline-sized bundles start to
hurt beyond roughly 30 concurrent environments.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env as env_mod
from .coupling import DISABLED, IoStrategy, read_bundle, write_bundle, ActuationBundle
from .errors import ConfigError, TrainingAborted
from .networks import PolicyParams, init_params, policy_forward, sample_action, save_checkpoint, value_forward_batch
from .ppo import Adam, PpoHyper, RunningObsNormalizer, Trajectory, Transition, ppo_update
from .rng import derive_env_seed

REAL = "real"
VIRTUAL = "virtual"

# Salt separating the learner's shuffle stream from the environment streams.
_UPDATER_SALT = 0xA5B35705987C5621
_HISTORY_HEADER = ["episode", "mean_reward", "wall_seconds",
                   "solver_seconds", "io_seconds", "update_seconds"]


@dataclass
class ParallelPlan:
    """Resource layout and cost model of one training or benchmark run."""

    n_envs: int = 1
    n_ranks: int = 1
    mode: str = REAL
    serial_fraction: float = 0.30
    solver_unit_cost: float = 2.7
    update_cost: float = 1.0
    disk_bandwidth: float = 200e6
    io_free_bytes: int = 157_286_400
    io_penalty: float = 3.0
    available_cores: int | None = None

    def __post_init__(self):
        if self.n_envs < 1 or self.n_ranks < 1:
            raise ConfigError("n_envs and n_ranks must be >= 1")
        if self.mode not in (REAL, VIRTUAL):
            raise ConfigError(f"mode must be '{REAL}' or '{VIRTUAL}', got {self.mode!r}")
        if not 0.0 <= self.serial_fraction <= 1.0:
            raise ConfigError("serial_fraction must be in [0, 1]")
        if self.solver_unit_cost < 0 or self.update_cost < 0:
            raise ConfigError("cost parameters must be >= 0")
        if self.io_free_bytes < 0 or self.io_penalty < 0:
            raise ConfigError("io_free_bytes and io_penalty must be >= 0")
        if (
            self.mode == REAL
            and self.available_cores is not None
            and self.n_total > self.available_cores
        ):
            raise ConfigError(
                f"plan needs {self.n_total} CPUs but only {self.available_cores} available"
            )

    @property
    def n_total(self) -> int:
        return self.n_envs * self.n_ranks


def amdahl_seconds(plan: ParallelPlan) -> float:
    """Solver seconds per actuation at this rank count."""
    f = plan.serial_fraction
    return plan.solver_unit_cost * (f + (1.0 - f) / plan.n_ranks)


def solver_efficiency(plan: ParallelPlan) -> float:
    """Parallel efficiency of the solver alone: speedup / n_ranks."""
    return plan.solver_unit_cost / (plan.n_ranks * amdahl_seconds(plan))


def io_seconds(plan: ParallelPlan, bytes_per_actuation: int) -> float:
    """I/O seconds per actuation when all n_envs write concurrently."""
    if bytes_per_actuation == 0:
        return 0.0
    if plan.disk_bandwidth <= 0:
        raise ConfigError("disk_bandwidth must be > 0 when bytes are exchanged")
    own = bytes_per_actuation / plan.disk_bandwidth
    aggregate = plan.n_envs * bytes_per_actuation
    excess = max(0, aggregate - plan.io_free_bytes)
    return own + plan.io_penalty * excess / plan.disk_bandwidth


@dataclass
class VirtualEpisodeTiming:
    """Deterministic per-episode cost under the virtual clock."""

    solver_seconds: float
    io_seconds: float
    update_seconds: float
    env_seconds: float
    wall_seconds: float


def virtual_episode_time(
    plan: ParallelPlan, bytes_per_actuation: int, actuations: int
) -> VirtualEpisodeTiming:
    """Evaluate the cost model for one episode barrier; no sleeping involved."""
    if plan.mode != VIRTUAL:
        raise ConfigError("virtual_episode_time requires a virtual-mode plan")
    t_s = amdahl_seconds(plan)
    t_io = io_seconds(plan, bytes_per_actuation)
    solver = actuations * t_s
    io = actuations * t_io
    env_seconds = solver + io
    return VirtualEpisodeTiming(
        solver_seconds=solver,
        io_seconds=io,
        update_seconds=plan.update_cost,
        env_seconds=env_seconds,
        wall_seconds=env_seconds + plan.update_cost,
    )


@dataclass
class EnvEpisodeResult:
    """One environment's rollout plus its measured cost."""

    trajectory: Trajectory
    mean_cd: float
    mean_cl: float
    nonfinite_actions: int
    solver_seconds: float
    io_seconds: float
    finish_time: float


@dataclass
class EpisodeReport:
    """Bookkeeping of one episode barrier across all environments."""

    episode_index: int
    n_envs: int
    n_ranks: int
    trajectories: list[Trajectory]
    env_solver_seconds: list[float]
    env_io_seconds: list[float]
    env_idle_seconds: list[float]
    env_finish_times: list[float]
    update_start_time: float
    update_seconds: float
    wall_seconds: float
    mean_reward: float
    mean_cd: float
    mean_cl: float
    nonfinite_actions: int = 0

    @property
    def n_total(self) -> int:
        return self.n_envs * self.n_ranks

    @property
    def critical_solver_seconds(self) -> float:
        """Solver seconds of the environment on the critical path."""
        busy = [s + i for s, i in zip(self.env_solver_seconds, self.env_io_seconds)]
        k = max(range(len(busy)), key=busy.__getitem__)
        return self.env_solver_seconds[k]

    @property
    def critical_io_seconds(self) -> float:
        busy = [s + i for s, i in zip(self.env_solver_seconds, self.env_io_seconds)]
        k = max(range(len(busy)), key=busy.__getitem__)
        return self.env_io_seconds[k]


@dataclass
class TrainingResult:
    history: list[EpisodeReport]
    params: PolicyParams


def _rollout_episode(
    config: env_mod.EnvConfig,
    params: PolicyParams,
    env_id: int,
    episode_index: int,
    episode_seed: int,
    strategy: IoStrategy,
    io_dir: Path | None,
    normalizer: RunningObsNormalizer | None,
) -> EnvEpisodeResult:
    """Roll one environment for a full episode against a frozen snapshot."""
    solver_t = 0.0
    io_t = 0.0
    t0 = time.perf_counter()
    state, obs = env_mod.reset(config, episode_seed)
    rng = state.rng
    traj = Trajectory(env_id=env_id, episode_index=episode_index)
    cd_sum = 0.0
    cl_sum = 0.0
    n_records = 0
    horizon = config.actuations_per_episode
    for k in range(horizon):
        net_obs = normalizer.normalize(obs) if normalizer is not None else obs
        mean, log_std = policy_forward(params, net_obs)
        a, logp = sample_action(mean, log_std, rng)
        s0 = time.perf_counter()
        state, next_obs, reward, records = env_mod.actuate(state, a, config)
        solver_t += time.perf_counter() - s0
        if strategy.mode != DISABLED and io_dir is not None:
            act_dir = io_dir / f"act_{k:03d}"
            act_dir.mkdir(parents=True, exist_ok=True)
            bundle = ActuationBundle(
                episode_index=episode_index,
                actuation_index=k,
                probes=next_obs,
                rows=np.array([[r.t, r.cd, r.cl] for r in records]),
                jet_velocity=state.v_jet,
            )
            i0 = time.perf_counter()
            write_bundle(act_dir, bundle, strategy)
            read_bundle(act_dir, strategy)
            io_t += time.perf_counter() - i0
        traj.transitions.append(Transition(
            observation=np.asarray(net_obs, dtype=np.float64),
            action=a,
            log_prob=logp,
            reward=reward,
            value=0.0,
            terminal=(k == horizon - 1),
        ))
        cd_sum += sum(r.cd for r in records)
        cl_sum += sum(r.cl for r in records)
        n_records += len(records)
        obs = next_obs
    values = value_forward_batch(params, traj.observations())
    for tr, v in zip(traj.transitions, values):
        tr.value = float(v)
    return EnvEpisodeResult(
        trajectory=traj,
        mean_cd=cd_sum / n_records,
        mean_cl=cl_sum / n_records,
        nonfinite_actions=state.nonfinite_actions,
        solver_seconds=solver_t,
        io_seconds=io_t,
        finish_time=time.perf_counter() - t0,
    )


def run_training(
    plan: ParallelPlan,
    config: env_mod.EnvConfig,
    hyper: PpoHyper,
    episodes: int,
    strategy: IoStrategy,
    seed: int,
    out_dir=None,
    checkpoint_every: int = 50,
) -> TrainingResult:
    """Synchronous multi-environment training for a number of episode barriers.

    Per-environment seeds derive from the master seed through SplitMix64,
    so environment m sees the same stream no matter how many peers run
    beside it. Parameters are published as whole snapshots between
    episodes; an environment failure aborts the run but keeps the
    partial history attached to the raised error.

    The learner fires once at least ``hyper.episodes_per_update``
    trajectories have accumulated across barriers (leftovers are flushed
    at the end of the run), so the update batch is a fixed number of
    episodes however many environments collected them.
    """
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    if strategy.mode != DISABLED and out_dir is None and plan.mode == REAL:
        raise ConfigError("file-coupled training needs an output directory")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    params = init_params(seed, obs_dim=config.obs_dim)
    env_seeds = [derive_env_seed(seed, m) for m in range(plan.n_envs)]
    update_master = derive_env_seed(seed ^ _UPDATER_SALT, 0)
    normalizer = RunningObsNormalizer(config.obs_dim) if hyper.normalize_obs else None
    optimizer = Adam(params)
    history: list[EpisodeReport] = []
    pending: list[Trajectory] = []
    updates_done = 0

    for episode in range(episodes):
        episode_start = time.perf_counter()
        snapshot = params  # frozen: ppo_update returns a fresh copy

        def one_env(m: int) -> EnvEpisodeResult:
            episode_seed = derive_env_seed(env_seeds[m], episode)
            io_dir = (
                out_path / "run" / f"ep_{episode:04d}" / f"env_{m:02d}"
                if (out_path is not None and strategy.mode != DISABLED
                    and plan.mode == REAL)
                else None
            )
            return _rollout_episode(
                config, snapshot, m, episode, episode_seed,
                strategy, io_dir, normalizer,
            )

        try:
            if plan.mode == REAL and plan.n_envs > 1:
                with ThreadPoolExecutor(max_workers=plan.n_envs) as pool:
                    results = list(pool.map(one_env, range(plan.n_envs)))
            else:
                results = [one_env(m) for m in range(plan.n_envs)]
        except Exception as exc:
            raise TrainingAborted(
                f"episode {episode} aborted: {exc}", history=history
            ) from exc

        barrier_time = time.perf_counter()
        trajectories = [r.trajectory for r in results]
        if normalizer is not None:
            for traj in trajectories:
                normalizer.update(traj.observations())
        pending.extend(trajectories)
        flush = episode == episodes - 1
        if len(pending) >= hyper.episodes_per_update or (flush and pending):
            update_rng = np.random.default_rng(
                derive_env_seed(update_master, updates_done))
            params, _ = ppo_update(pending, params, hyper, update_rng, optimizer)
            updates_done += 1
            pending = []
        update_seconds = time.perf_counter() - barrier_time
        wall = time.perf_counter() - episode_start

        mean_reward = float(np.mean([
            t.rewards().mean() for t in trajectories
        ]))
        if plan.mode == VIRTUAL:
            timing = virtual_episode_time(
                plan, strategy.bytes_per_actuation, config.actuations_per_episode
            )
            env_solver = [timing.solver_seconds] * plan.n_envs
            env_io = [timing.io_seconds] * plan.n_envs
            env_idle = [0.0] * plan.n_envs
            finish_times = [timing.env_seconds] * plan.n_envs
            update_start = timing.env_seconds
            update_seconds = timing.update_seconds
            wall = timing.wall_seconds
        else:
            env_solver = [r.solver_seconds for r in results]
            env_io = [r.io_seconds for r in results]
            phase_wall = barrier_time - episode_start
            env_idle = [max(0.0, phase_wall - r.solver_seconds - r.io_seconds)
                        for r in results]
            finish_times = [r.finish_time for r in results]
            update_start = phase_wall

        report = EpisodeReport(
            episode_index=episode,
            n_envs=plan.n_envs,
            n_ranks=plan.n_ranks,
            trajectories=trajectories,
            env_solver_seconds=env_solver,
            env_io_seconds=env_io,
            env_idle_seconds=env_idle,
            env_finish_times=finish_times,
            update_start_time=update_start,
            update_seconds=update_seconds,
            wall_seconds=wall,
            mean_reward=mean_reward,
            mean_cd=float(np.mean([r.mean_cd for r in results])),
            mean_cl=float(np.mean([r.mean_cl for r in results])),
            nonfinite_actions=sum(r.nonfinite_actions for r in results),
        )
        history.append(report)

        if out_path is not None:
            if checkpoint_every > 0 and (episode + 1) % checkpoint_every == 0:
                save_checkpoint(out_path / f"ckpt_ep{episode + 1:06d}.afcp", params)

    if out_path is not None:
        save_checkpoint(out_path / "ckpt_final.afcp", params)
        write_history_csv(out_path / "history.csv", history)
        write_metrics_csv(out_path / "metrics.csv", history)
    return TrainingResult(history=history, params=params)


def write_history_csv(path, history: list[EpisodeReport]) -> None:
    """Per-episode wall/solver/io/update seconds; solver and io are the
    critical environment's share."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_HEADER)
        for rep in history:
            writer.writerow([
                rep.episode_index,
                repr(rep.mean_reward),
                repr(rep.wall_seconds),
                repr(rep.critical_solver_seconds),
                repr(rep.critical_io_seconds),
                repr(rep.update_seconds),
            ])


def write_metrics_csv(path, history: list[EpisodeReport]) -> None:
    """Per-episode control metrics used by the training summary."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_reward", "mean_cd", "mean_cl",
                         "nonfinite_actions"])
        for rep in history:
            writer.writerow([
                rep.episode_index,
                repr(rep.mean_reward),
                repr(rep.mean_cd),
                repr(rep.mean_cl),
                rep.nonfinite_actions,
            ])
