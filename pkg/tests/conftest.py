import numpy as np
import pytest

from afcrl import networks as nets
from afcrl import ppo

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_small_params(rng: np.random.Generator, obs_dim: int | None = None,
                      hidden: int | None = None) -> nets.PolicyParams:
    """A perturbed small network so gradients are non-trivial."""
    obs_dim = obs_dim if obs_dim is not None else int(rng.integers(3, 9))
    hidden = hidden if hidden is not None else int(rng.integers(4, 9))
    params = nets.init_params(int(rng.integers(0, 2**31)), obs_dim=obs_dim, hidden=hidden)
    vec = nets.params_to_vector(params)
    vec = vec + 0.05 * rng.standard_normal(vec.shape)
    params = nets.vector_to_params(vec, params)
    params.log_std = float(rng.uniform(-1.0, 0.5))
    return params


def make_batch(rng: np.random.Generator, params: nets.PolicyParams,
               n: int = 8, logp_noise: float = 0.3) -> tuple[ppo.LossBatch, np.ndarray]:
    obs = rng.standard_normal((n, params.obs_dim))
    actions = rng.standard_normal(n)
    batch = ppo.LossBatch(
        observations=obs,
        actions=actions,
        advantages=rng.standard_normal(n),
        value_targets=rng.standard_normal(n),
    )
    means = nets.policy_forward_batch(params, obs)
    old_logp = nets.gaussian_logp(actions, means, params.log_std)
    if logp_noise:
        old_logp = old_logp + logp_noise * rng.standard_normal(n)
    return batch, old_logp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
