"""Clipped-surrogate policy optimization on the numpy networks.

Gradients are computed analytically by backpropagation and are verified
against central finite differences in the test suite, so any change to
the forward pass must be mirrored in :func:`loss_and_grad`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NonFiniteGradient
from .networks import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    PolicyParams,
    gaussian_logp,
)

_HALF_LOG_2PI_E = 0.5 * np.log(2.0 * np.pi * np.e)


@dataclass
class PpoHyper:
    """Hyperparameters of the update; defaults are standard settings.

    ``episodes_per_update`` fixes the update batch in episodes regardless
    of how many environments collect them, so learning dynamics do not
    depend on the degree of rollout parallelism.
    """

    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 100
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    episodes_per_update: int = 8
    max_grad_norm: float = 0.5
    normalize_obs: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ContractViolation(f"lam must be in [0, 1], got {self.lam}")
        if self.clip_eps <= 0.0:
            raise ContractViolation(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.learning_rate < 0.0:
            raise ContractViolation("learning_rate must be >= 0")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ContractViolation("epochs and minibatch_size must be >= 1")
        if self.entropy_coef < 0.0 or self.value_coef < 0.0:
            raise ContractViolation("entropy_coef and value_coef must be >= 0")
        if self.episodes_per_update < 1:
            raise ContractViolation("episodes_per_update must be >= 1")
        if self.max_grad_norm < 0.0:
            raise ContractViolation("max_grad_norm must be >= 0 (0 disables clipping)")


@dataclass
class Transition:
    """One agent-environment interaction."""

    observation: np.ndarray
    action: float
    log_prob: float
    reward: float
    value: float
    terminal: bool = False


@dataclass
class Trajectory:
    """One environment's episode: an ordered sequence of transitions."""

    env_id: int
    episode_index: int
    transitions: list[Transition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def observations(self) -> np.ndarray:
        return np.stack([t.observation for t in self.transitions])

    def actions(self) -> np.ndarray:
        return np.array([t.action for t in self.transitions])

    def log_probs(self) -> np.ndarray:
        return np.array([t.log_prob for t in self.transitions])

    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions])

    def values(self) -> np.ndarray:
        return np.array([t.value for t in self.transitions])


def compute_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Finite-horizon discounted return at every step: G_t = sum_k gamma^k r_{t+k}."""
    if not 0.0 <= gamma <= 1.0:
        raise ContractViolation(f"gamma must be in [0, 1], got {gamma}")
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or len(rewards) < 1:
        raise ContractViolation("rewards must be a non-empty 1-d vector")
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Advantages via the exponentially weighted TD-error recursion.

    delta_t = r_t + gamma*v_{t+1} - v_t with v_T = bootstrap;
    A_t = delta_t + gamma*lam*A_{t+1}; targets = A + values.
    Advantages are returned raw; per-batch normalization happens in
    :func:`ppo_update` just before the gradient steps.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ContractViolation("rewards and values lengths differ")
    n = len(rewards)
    vnext = np.append(values[1:], bootstrap)
    deltas = rewards + gamma * vnext - values
    adv = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per batch, guarded against zero variance."""
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


@dataclass
class LossBatch:
    """Inputs of one loss evaluation (advantages already normalized)."""

    observations: np.ndarray  # (n, obs_dim)
    actions: np.ndarray       # (n,)
    advantages: np.ndarray    # (n,)
    value_targets: np.ndarray # (n,)


@dataclass
class LossStats:
    surrogate: float
    value_mse: float
    entropy: float
    clip_fraction: float
    approx_kl: float


def clipped_surrogate(
    new_logp: np.ndarray,
    old_logp: np.ndarray,
    advantages: np.ndarray,
    clip_eps: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample min(r*A, clip(r)*A) terms with r = exp(new - old).

    Returns (terms, unclipped, ratio); only the log-prob difference
    matters, so shifting both log-probs by a constant changes nothing.
    """
    ratio = np.exp(np.asarray(new_logp) - np.asarray(old_logp))
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    return np.minimum(unclipped, clipped), unclipped, ratio


def ppo_loss(
    batch: LossBatch,
    params: PolicyParams,
    old_logp: np.ndarray,
    hyper: PpoHyper,
) -> tuple[float, LossStats]:
    """Total loss = -surrogate + c_v * value MSE - c_e * entropy."""
    loss, stats, _ = loss_and_grad(batch, params, old_logp, hyper, want_grad=False)
    return loss, stats


def loss_and_grad(
    batch: LossBatch,
    params: PolicyParams,
    old_logp: np.ndarray,
    hyper: PpoHyper,
    want_grad: bool = True,
) -> tuple[float, LossStats, dict[str, np.ndarray] | None]:
    """Loss, diagnostics, and (optionally) analytic gradients for one batch."""
    x = np.asarray(batch.observations, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractViolation("batch must be non-empty with 2-d observations")
    if x.shape[1] != params.obs_dim:
        raise ContractViolation(
            f"observation dimension {x.shape[1]} != network input {params.obs_dim}"
        )
    a = np.asarray(batch.actions, dtype=np.float64)
    adv = np.asarray(batch.advantages, dtype=np.float64)
    tgt = np.asarray(batch.value_targets, dtype=np.float64)
    old_logp = np.asarray(old_logp, dtype=np.float64)
    n = x.shape[0]

    # Policy forward.
    z1 = x @ params.w1.T + params.b1
    h1 = np.tanh(z1)
    z2 = h1 @ params.w2.T + params.b2
    h2 = np.tanh(z2)
    mean = (h2 @ params.w3.T + params.b3)[:, 0]
    log_std = params.log_std
    logp = gaussian_logp(a, mean, log_std)

    lo, hi = 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps
    surr_terms, unclipped, ratio = clipped_surrogate(logp, old_logp, adv, hyper.clip_eps)
    clipped = np.clip(ratio, lo, hi) * adv
    surrogate = surr_terms.mean()

    # Value forward.
    vz1 = x @ params.vw1.T + params.vb1
    vh1 = np.tanh(vz1)
    vz2 = vh1 @ params.vw2.T + params.vb2
    vh2 = np.tanh(vz2)
    v = (vh2 @ params.vw3.T + params.vb3)[:, 0]
    verr = v - tgt
    value_mse = float(np.mean(verr * verr))

    entropy = float(log_std + _HALF_LOG_2PI_E)
    loss = float(-surrogate + hyper.value_coef * value_mse - hyper.entropy_coef * entropy)

    stats = LossStats(
        surrogate=float(surrogate),
        value_mse=value_mse,
        entropy=entropy,
        clip_fraction=float(np.mean((ratio < lo) | (ratio > hi))),
        approx_kl=float(np.mean(old_logp - logp)),
    )
    if not want_grad:
        return loss, stats, None

    # Backward. The min() gradient follows the branch that attains the
    # minimum; when the clipped branch wins the ratio sits outside the
    # clip range, so its derivative is zero.
    dsurr_dratio = np.where(unclipped <= clipped, adv, 0.0)
    dloss_dlogp = -(1.0 / n) * dsurr_dratio * ratio
    inv_var = np.exp(-2.0 * log_std)
    resid = a - mean
    dlogp_dmean = resid * inv_var
    dloss_dmean = dloss_dlogp * dlogp_dmean
    dlogp_dls = resid * resid * inv_var - 1.0
    g_log_std = float(np.dot(dloss_dlogp, dlogp_dls) - hyper.entropy_coef)

    dm = dloss_dmean[:, None]                      # (n, 1)
    g_w3 = dm.T @ h2
    g_b3 = dm.sum(axis=0)
    dh2 = dm @ params.w3
    dz2 = dh2 * (1.0 - h2 * h2)
    g_w2 = dz2.T @ h1
    g_b2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.w2
    dz1 = dh1 * (1.0 - h1 * h1)
    g_w1 = dz1.T @ x
    g_b1 = dz1.sum(axis=0)

    dv = (hyper.value_coef * 2.0 / n) * verr
    dvm = dv[:, None]
    g_vw3 = dvm.T @ vh2
    g_vb3 = dvm.sum(axis=0)
    dvh2 = dvm @ params.vw3
    dvz2 = dvh2 * (1.0 - vh2 * vh2)
    g_vw2 = dvz2.T @ vh1
    g_vb2 = dvz2.sum(axis=0)
    dvh1 = dvz2 @ params.vw2
    dvz1 = dvh1 * (1.0 - vh1 * vh1)
    g_vw1 = dvz1.T @ x
    g_vb1 = dvz1.sum(axis=0)

    grads = {
        "w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2, "w3": g_w3, "b3": g_b3,
        "log_std": np.asarray(g_log_std),
        "vw1": g_vw1, "vb1": g_vb1, "vw2": g_vw2, "vb2": g_vb2,
        "vw3": g_vw3, "vb3": g_vb3,
    }
    return loss, stats, grads


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global norm is <= max_norm.

    Returns the pre-clip global norm; max_norm = 0 disables clipping.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    norm = math.sqrt(total)
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for name, g in grads.items():
            grads[name] = g * scale
    return norm


class Adam:
    """Adaptive-moment estimation over the named parameter tensors."""

    def __init__(self, params: PolicyParams, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.tensors().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors().items()}

    def step(self, params: PolicyParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        scale = lr / c1
        inv_sqrt_c2 = 1.0 / math.sqrt(c2)
        for name, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            m = self.m[name]
            v = self.v[name]
            # in-place moment updates; this loop runs hot during training
            np.multiply(m, self.beta1, out=m)
            m += (1.0 - self.beta1) * g
            np.multiply(v, self.beta2, out=v)
            gg = g * g
            gg *= 1.0 - self.beta2
            v += gg
            denom = np.sqrt(v)
            denom *= inv_sqrt_c2
            denom += self.eps
            delta = m / denom
            delta *= scale
            cur = getattr(params, name)
            if isinstance(cur, np.ndarray):
                cur -= delta
            else:
                setattr(params, name, float(cur - delta))


@dataclass
class UpdateStats:
    """Aggregated diagnostics of one policy update."""

    steps: int
    mean_loss: float
    clip_fraction: float
    approx_kl: float


def ppo_update(
    trajectories: list[Trajectory],
    params: PolicyParams,
    hyper: PpoHyper,
    rng: np.random.Generator,
    optimizer: Adam | None = None,
) -> tuple[PolicyParams, UpdateStats]:
    """Minibatched clipped-objective update over pooled trajectories.

    Returns fresh parameters; the input snapshot is never modified.
    Deterministic for a given ``rng`` state. A non-finite gradient aborts
    the update with diagnostics instead of corrupting the parameters.
    """
    if not trajectories:
        raise ContractViolation("need at least one trajectory")
    obs = np.concatenate([t.observations() for t in trajectories])
    acts = np.concatenate([t.actions() for t in trajectories])
    old_logp = np.concatenate([t.log_probs() for t in trajectories])
    adv_parts, tgt_parts = [], []
    for traj in trajectories:
        adv, tgt = compute_gae(traj.rewards(), traj.values(), 0.0, hyper.gamma, hyper.lam)
        adv_parts.append(adv)
        tgt_parts.append(tgt)
    advantages = normalize_advantages(np.concatenate(adv_parts))
    targets = np.concatenate(tgt_parts)

    new = params.copy()
    opt = optimizer if optimizer is not None else Adam(new)
    n = len(acts)
    losses, clip_fracs, kls = [], [], []
    steps = 0
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.minibatch_size):
            idx = order[start:start + hyper.minibatch_size]
            batch = LossBatch(
                observations=obs[idx],
                actions=acts[idx],
                advantages=advantages[idx],
                value_targets=targets[idx],
            )
            loss, stats, grads = loss_and_grad(batch, new, old_logp[idx], hyper)
            for name, g in grads.items():
                if not np.all(np.isfinite(g)):
                    raise NonFiniteGradient(
                        f"non-finite gradient in {name} at epoch {epoch}",
                        diagnostics={
                            "tensor": name, "epoch": epoch, "step": steps,
                            "loss": loss, "batch_size": len(idx),
                        },
                    )
            clip_gradients(grads, hyper.max_grad_norm)
            opt.step(new, grads, hyper.learning_rate)
            new.log_std = float(np.clip(new.log_std, LOG_STD_MIN, LOG_STD_MAX))
            losses.append(loss)
            clip_fracs.append(stats.clip_fraction)
            kls.append(stats.approx_kl)
            steps += 1
    if not new.all_finite():
        raise NonFiniteGradient("parameters became non-finite after update",
                                diagnostics={"steps": steps})
    return new, UpdateStats(
        steps=steps,
        mean_loss=float(np.mean(losses)),
        clip_fraction=float(np.mean(clip_fracs)),
        approx_kl=float(np.mean(kls)),
    )


class RunningObsNormalizer:
    """Optional running mean/variance observation scaler (off by default).

    Kept out of the hot path unless enabled; uses Welford-style batch
    merges so results do not depend on chunking within one batch.
    """

    def __init__(self, dim: int):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, obs: np.ndarray) -> None:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        n = obs.shape[0]
        if n == 0:
            return
        batch_mean = obs.mean(axis=0)
        batch_m2 = ((obs - batch_mean) ** 2).sum(axis=0)
        if self.count == 0:
            self.count = float(n)
            self.mean = batch_mean
            self.m2 = batch_m2
            return
        total = self.count + n
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + batch_m2 + delta * delta * (self.count * n / total)
        self.count = total

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        if self.count < 2:
            return np.asarray(obs, dtype=np.float64)
        var = self.m2 / (self.count - 1)
        return (np.asarray(obs, dtype=np.float64) - self.mean) / np.sqrt(var + 1e-8)
