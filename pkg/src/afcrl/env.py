"""Desk-scale jet flow-control environment.

A Stuart-Landau oscillator stands in for the cylinder wake: its limit
cycle plays the role of vortex shedding, the squared amplitude maps to
drag excess, and the x coordinate to lift. A pair of opposed blowing/
suction jets (equal and opposite, so net mass flux is exactly zero)
forces the oscillator; the agent's scalar action sets the jet velocity
once per actuation period through an exponential smoother with a hard
magnitude cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError, SimulationDiverged
from .rng import splitmix64, unit_interval

SENSOR_SEED = 42
STATE_FEATURES = 4  # x, y, jet velocity, drag deviation


@dataclass
class EnvConfig:
    """Surrogate and protocol parameters.

    The calibration identity cd_base + kappa * (sigma / lambda_sl) = cd_ref
    ties the uncontrolled limit-cycle mean drag to the reference value; a
    ``cd_base`` of None derives it from the other fields.
    """

    sigma: float = 2.0              # linear growth rate of the oscillator
    omega_s: float = 4.0 * math.pi  # shedding angular frequency
    lambda_sl: float = 2.0          # cubic saturation
    gain: float = 5.0               # jet forcing gain on dx/dt
    kappa: float = 0.3              # drag sensitivity to squared amplitude
    cd_ref: float = 3.205           # uncontrolled mean drag reference
    cd_base: float | None = 2.905   # drag at zero amplitude
    c_l: float = 1.0                # lift readout gain
    beta: float = 0.4               # action smoothing factor
    lift_weight: float = 0.1        # lift penalty weight in the reward
    u_max: float = 1.5              # jet velocity cap
    dt: float = 0.0005
    steps_per_actuation: int = 50
    actuations_per_episode: int = 100
    obs_dim: int = 149

    def __post_init__(self):
        if self.cd_base is None:
            self.cd_base = self.cd_ref - self.kappa * (self.sigma / self.lambda_sl)
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must be in (0, 1], got {self.beta}")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.steps_per_actuation < 1 or self.actuations_per_episode < 1:
            raise ConfigError("steps_per_actuation and actuations_per_episode must be >= 1")
        if self.obs_dim < 1:
            raise ConfigError(f"obs_dim must be >= 1, got {self.obs_dim}")
        if self.lambda_sl <= 0.0 or self.u_max <= 0.0:
            raise ConfigError("lambda_sl and u_max must be > 0")
        residual = self.cd_base + self.kappa * (self.sigma / self.lambda_sl) - self.cd_ref
        if abs(residual) > 1e-9:
            raise ConfigError(
                "calibration identity violated: cd_base + kappa*(sigma/lambda_sl) "
                f"= {self.cd_base + self.kappa * (self.sigma / self.lambda_sl)} != cd_ref "
                f"= {self.cd_ref}"
            )

    @property
    def limit_cycle_radius(self) -> float:
        return math.sqrt(self.sigma / self.lambda_sl)

    @property
    def actuation_period(self) -> float:
        return self.steps_per_actuation * self.dt

    @property
    def episode_duration(self) -> float:
        return self.actuations_per_episode * self.actuation_period


@dataclass
class SurrogateState:
    """Oscillator coordinates plus jet and bookkeeping state.

    Time is tracked as an integer step count so t = steps * dt holds
    exactly; ``t`` is the derived float value.
    """

    x: float
    y: float
    v_jet: float
    t: float
    actuation_index: int
    steps: int = 0
    rng: np.random.Generator = field(repr=False, default=None)
    nonfinite_actions: int = 0


@dataclass
class StepRecord:
    """One integration step's aerodynamic readout."""

    t: float
    cd: float
    cl: float


def reset(config: EnvConfig, seed: int) -> tuple[SurrogateState, np.ndarray]:
    """Place the oscillator on the uncontrolled limit cycle at a random phase."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    r = config.limit_cycle_radius
    state = SurrogateState(
        x=r * math.cos(phase), y=r * math.sin(phase),
        v_jet=0.0, t=0.0, actuation_index=0, steps=0, rng=rng,
    )
    return state, observe(state, config)


def smooth_action(v_prev: float, a: float, beta: float, u_max: float) -> float:
    """Exponential smoothing toward the commanded value, clamped to the cap."""
    v_new = v_prev + beta * (a - v_prev)
    return min(max(v_new, -u_max), u_max)


def jet_velocities(v_jet: float) -> tuple[float, float]:
    """The two jet velocities; equal and opposite so mass is conserved."""
    return v_jet, -v_jet


def _derivatives(x: float, y: float, forcing: float, cfg: EnvConfig) -> tuple[float, float]:
    r2 = x * x + y * y
    dx = cfg.sigma * x - cfg.omega_s * y - cfg.lambda_sl * r2 * x + forcing
    dy = cfg.omega_s * x + cfg.sigma * y - cfg.lambda_sl * r2 * y
    return dx, dy


def _rk4_xy(x: float, y: float, v_jet: float, cfg: EnvConfig) -> tuple[float, float]:
    """One classical Runge-Kutta step of the forced oscillator coordinates."""
    h = cfg.dt
    forcing = cfg.gain * v_jet
    k1x, k1y = _derivatives(x, y, forcing, cfg)
    k2x, k2y = _derivatives(x + 0.5 * h * k1x, y + 0.5 * h * k1y, forcing, cfg)
    k3x, k3y = _derivatives(x + 0.5 * h * k2x, y + 0.5 * h * k2y, forcing, cfg)
    k4x, k4y = _derivatives(x + h * k3x, y + h * k3y, forcing, cfg)
    nx = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    ny = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return nx, ny


def rk4_step(state: SurrogateState, config: EnvConfig) -> SurrogateState:
    """Advance the oscillator by one time step; jet velocity is held."""
    nx, ny = _rk4_xy(state.x, state.y, state.v_jet, config)
    steps = state.steps + 1
    if not (math.isfinite(nx) and math.isfinite(ny)):
        raise SimulationDiverged(
            f"state non-finite at t={steps * config.dt}: x={nx}, y={ny}"
        )
    return SurrogateState(
        x=nx, y=ny, v_jet=state.v_jet, t=steps * config.dt,
        actuation_index=state.actuation_index, steps=steps, rng=state.rng,
        nonfinite_actions=state.nonfinite_actions,
    )


def coefficients(state: SurrogateState, config: EnvConfig) -> tuple[float, float]:
    """Drag and lift: C_D = cd_base + kappa*r^2, C_L = c_l * x."""
    r2 = state.x * state.x + state.y * state.y
    return config.cd_base + config.kappa * r2, config.c_l * state.x


def compute_reward(records: list[StepRecord], config: EnvConfig) -> float:
    """cd_ref minus period-mean drag, minus the weighted |period-mean lift|."""
    if not records:
        raise ConfigError("compute_reward needs at least one record")
    mean_cd = math.fsum(r.cd for r in records) / len(records)
    mean_cl = math.fsum(r.cl for r in records) / len(records)
    return config.cd_ref - mean_cd - config.lift_weight * abs(mean_cl)


@lru_cache(maxsize=8)
def sensor_matrix(obs_dim: int) -> np.ndarray:
    """The fixed obs_dim x 4 projection from state features to probe values.

    Entries are drawn uniformly in [-1, 1) from SplitMix64 with a fixed
    seed, filled row-major, then each row is scaled to unit Euclidean
    norm. Fully specified integer arithmetic keeps the matrix bit-exact
    across platforms without shipping a data file.
    """
    stream = splitmix64(SENSOR_SEED)
    flat = np.array(
        [unit_interval(next(stream)) for _ in range(obs_dim * STATE_FEATURES)]
    )
    m = flat.reshape(obs_dim, STATE_FEATURES)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    m = m / norms
    m.setflags(write=False)
    return m


def observe(state: SurrogateState, config: EnvConfig) -> np.ndarray:
    """Project (x, y, jet velocity, drag deviation) onto the probe vector."""
    cd, _ = coefficients(state, config)
    features = np.array([state.x, state.y, state.v_jet, cd - config.cd_ref])
    return sensor_matrix(config.obs_dim) @ features


def actuate(
    state: SurrogateState, a: float, config: EnvConfig
) -> tuple[SurrogateState, np.ndarray, float, list[StepRecord]]:
    """Apply one action and integrate a full actuation period.

    The raw action is clamped to +-3*u_max (non-finite actions count as
    zero and are tallied, not fatal), smoothed once, and the resulting
    jet velocity held for all steps of the period. Returns the new
    state, its observation, the period reward, and per-step records.
    """
    nonfinite = state.nonfinite_actions
    if not math.isfinite(a):
        a = 0.0
        nonfinite += 1
    else:
        a = min(max(a, -3.0 * config.u_max), 3.0 * config.u_max)
    v_jet = smooth_action(state.v_jet, a, config.beta, config.u_max)

    x, y = state.x, state.y
    steps = state.steps
    records = []
    for _ in range(config.steps_per_actuation):
        x, y = _rk4_xy(x, y, v_jet, config)
        steps += 1
        t = steps * config.dt
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SimulationDiverged(f"state non-finite at t={t}: x={x}, y={y}")
        r2 = x * x + y * y
        records.append(StepRecord(t=t, cd=config.cd_base + config.kappa * r2,
                                  cl=config.c_l * x))
    new_state = SurrogateState(
        x=x, y=y, v_jet=v_jet, t=steps * config.dt,
        actuation_index=state.actuation_index + 1, steps=steps,
        rng=state.rng, nonfinite_actions=nonfinite,
    )
    reward = compute_reward(records, config)
    return new_state, observe(new_state, config), reward, records
