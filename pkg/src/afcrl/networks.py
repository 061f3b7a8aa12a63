"""Gaussian policy and value networks as plain float64 arrays.

Both networks are two tanh hidden layers with a linear scalar head. The
policy additionally carries a single state-independent action log-std.
Everything is numpy; gradients live in :mod:`afcrl.ppo`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields

import numpy as np

from .errors import ContractViolation, FormatError

OBS_DIM = 149
HIDDEN = 512

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

# Serialization order of the tensors in a checkpoint. log_std travels as a
# rank-0 tensor between the two networks.
TENSOR_ORDER = (
    "w1", "b1", "w2", "b2", "w3", "b3",
    "log_std",
    "vw1", "vb1", "vw2", "vb2", "vw3", "vb3",
)

CHECKPOINT_MAGIC = b"AFCP"
CHECKPOINT_VERSION = 1


@dataclass
class PolicyParams:
    """Weights/biases of the policy and value networks plus the action log-std.

    Shapes for the default configuration: w1 (512, 149), b1 (512,),
    w2 (512, 512), b2 (512,), w3 (1, 512), b3 (1,); the value network
    (``v`` prefix) mirrors them. All float64.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    log_std: float
    vw1: np.ndarray
    vb1: np.ndarray
    vw2: np.ndarray
    vb2: np.ndarray
    vw3: np.ndarray
    vb3: np.ndarray

    @property
    def obs_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "PolicyParams":
        vals = {}
        for f in fields(self):
            v = getattr(self, f.name)
            vals[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return PolicyParams(**vals)

    def all_finite(self) -> bool:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                if not np.all(np.isfinite(v)):
                    return False
            elif not np.isfinite(v):
                return False
        return True

    def tensors(self) -> dict[str, np.ndarray]:
        """All parameters in serialization order; log_std as a rank-0 array."""
        out = {}
        for name in TENSOR_ORDER:
            v = getattr(self, name)
            out[name] = np.asarray(v, dtype=np.float64)
        return out


def _truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], scale: float) -> np.ndarray:
    """Zero-mean normal scaled by ``scale``, re-drawn beyond 3 sigma."""
    z = rng.standard_normal(shape)
    bad = np.abs(z) > 3.0
    while np.any(bad):
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 3.0
    return z * scale


def init_params(seed: int, obs_dim: int = OBS_DIM, hidden: int = HIDDEN) -> PolicyParams:
    """Fresh parameters: truncated-normal weights at 1/sqrt(fan-in), zero biases.

    Deterministic for a given seed. log-std starts at ``LOG_STD_INIT``.
    """
    rng = np.random.default_rng(seed)

    def layer(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray]:
        w = _truncated_normal(rng, (n_out, n_in), 1.0 / np.sqrt(n_in))
        return w, np.zeros(n_out)

    w1, b1 = layer(hidden, obs_dim)
    w2, b2 = layer(hidden, hidden)
    w3, b3 = layer(1, hidden)
    vw1, vb1 = layer(hidden, obs_dim)
    vw2, vb2 = layer(hidden, hidden)
    vw3, vb3 = layer(1, hidden)
    return PolicyParams(
        w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3,
        log_std=LOG_STD_INIT,
        vw1=vw1, vb1=vb1, vw2=vw2, vb2=vb2, vw3=vw3, vb3=vb3,
    )


def _check_obs(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != params.obs_dim:
        raise ContractViolation(
            f"observation dimension {obs.shape[-1]} != network input {params.obs_dim}"
        )
    return obs


def policy_forward(params: PolicyParams, obs: np.ndarray) -> tuple[float, float]:
    """Action-distribution parameters for one observation: (mean, log_std)."""
    obs = _check_obs(params, obs)
    h1 = np.tanh(params.w1 @ obs + params.b1)
    h2 = np.tanh(params.w2 @ h1 + params.b2)
    mean = float((params.w3 @ h2 + params.b3)[0])
    return mean, float(params.log_std)


def policy_forward_batch(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Policy means for a batch of observations, shape (n,)."""
    obs = _check_obs(params, obs)
    h1 = np.tanh(obs @ params.w1.T + params.b1)
    h2 = np.tanh(h1 @ params.w2.T + params.b2)
    return (h2 @ params.w3.T + params.b3)[:, 0]


def value_forward(params: PolicyParams, obs: np.ndarray) -> float:
    """State-value estimate for one observation."""
    obs = _check_obs(params, obs)
    h1 = np.tanh(params.vw1 @ obs + params.vb1)
    h2 = np.tanh(params.vw2 @ h1 + params.vb2)
    return float((params.vw3 @ h2 + params.vb3)[0])


def value_forward_batch(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """State-value estimates for a batch of observations, shape (n,)."""
    obs = _check_obs(params, obs)
    h1 = np.tanh(obs @ params.vw1.T + params.vb1)
    h2 = np.tanh(h1 @ params.vw2.T + params.vb2)
    return (h2 @ params.vw3.T + params.vb3)[:, 0]


def sample_action(mean: float, log_std: float, rng: np.random.Generator) -> tuple[float, float]:
    """Draw a ~ Normal(mean, exp(log_std)); returns (a, log-density at a)."""
    std = np.exp(log_std)
    a = mean + std * rng.standard_normal()
    logp = gaussian_logp(a, mean, log_std)
    return float(a), float(logp)


def gaussian_logp(a, mean, log_std):
    """Log-density of a Gaussian with the given mean and log standard deviation."""
    z = (a - mean) * np.exp(-log_std)
    return -0.5 * z * z - log_std - _HALF_LOG_2PI


def params_to_vector(params: PolicyParams) -> np.ndarray:
    """Flatten every parameter (serialization order) into one float64 vector."""
    return np.concatenate([t.ravel() for t in params.tensors().values()])


def vector_to_params(vec: np.ndarray, template: PolicyParams) -> PolicyParams:
    """Inverse of :func:`params_to_vector` using ``template`` for shapes."""
    vals = {}
    i = 0
    for name in TENSOR_ORDER:
        t = np.asarray(getattr(template, name), dtype=np.float64)
        n = t.size
        chunk = np.asarray(vec[i:i + n], dtype=np.float64).reshape(t.shape)
        vals[name] = float(chunk) if t.ndim == 0 else chunk
        i += n
    if i != len(vec):
        raise ContractViolation(f"vector length {len(vec)} != parameter count {i}")
    return PolicyParams(**vals)


def save_checkpoint(path, params: PolicyParams) -> None:
    """Write parameters to ``path``.

    Layout: magic ``AFCP``, u16 version, then each tensor in
    ``TENSOR_ORDER`` as (u32 rank, u32 dims..., little-endian f64 payload).
    Loading reproduces network outputs bitwise.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        for tensor in params.tensors().values():
            fh.write(struct.pack("<I", tensor.ndim))
            for d in tensor.shape:
                fh.write(struct.pack("<I", d))
            fh.write(tensor.astype("<f8", copy=False).tobytes())


def load_checkpoint(path) -> PolicyParams:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    off = 6
    vals = {}
    for name in TENSOR_ORDER:
        if off + 4 > len(data):
            raise FormatError("truncated checkpoint (rank)", offset=off)
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = []
        for _ in range(rank):
            if off + 4 > len(data):
                raise FormatError("truncated checkpoint (dims)", offset=off)
            (d,) = struct.unpack_from("<I", data, off)
            shape.append(d)
            off += 4
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if off + nbytes > len(data):
            raise FormatError(f"truncated checkpoint (payload of {name})", offset=off)
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += nbytes
        vals[name] = float(arr) if rank == 0 else arr.astype(np.float64)
    return PolicyParams(**vals)
