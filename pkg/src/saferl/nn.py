"""Explicit tanh MLPs for the actor-critic, with hand-written backprop.

Parameters live in a flat dict of float64 arrays keyed "pi.W0", "pi.b0", ...,
"vf.W0", ... plus an optional state-independent "log_std" for Gaussian heads.
Keeping the forward/backward passes explicit makes the gradients directly
checkable against finite differences and the whole update bit-deterministic.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np

Params = Dict[str, np.ndarray]

CHECKPOINT_VERSION = 1


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    """Orthogonal weight matrix, sign-fixed so the draw is deterministic."""
    a = rng.standard_normal((n_in, n_out))
    transpose = n_in < n_out
    if transpose:
        a = a.T
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if transpose:
        q = q.T
    return gain * q[:n_in, :n_out]


def _init_mlp(params, prefix, sizes, rng, out_gain):
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        params[f"{prefix}.W{i}"] = orthogonal(rng, n_in, n_out, gain)
        params[f"{prefix}.b{i}"] = np.zeros(n_out)


def init_actor_critic(
    obs_dim: int,
    n_actions: Optional[int] = None,
    action_dim: Optional[int] = None,
    hidden: Tuple[int, ...] = (64, 64),
    seed: int = 0,
    init_log_std: float = np.log(0.5),
) -> Params:
    """Fresh actor-critic parameters for a discrete or Gaussian action head."""
    if (n_actions is None) == (action_dim is None):
        raise ValueError("specify exactly one of n_actions / action_dim")
    rng = np.random.default_rng(seed)
    head = n_actions if n_actions is not None else action_dim
    params: Params = {}
    _init_mlp(params, "pi", (obs_dim, *hidden, head), rng, out_gain=0.01)
    _init_mlp(params, "vf", (obs_dim, *hidden, 1), rng, out_gain=1.0)
    if action_dim is not None:
        params["log_std"] = np.full(action_dim, init_log_std)
    return params


def num_layers(params: Params, prefix: str) -> int:
    n = 0
    while f"{prefix}.W{n}" in params:
        n += 1
    return n


def mlp_forward(params: Params, prefix: str, x: np.ndarray):
    """Forward pass; returns (output, caches) with x of shape (batch, obs_dim).

    Hidden layers apply tanh; the last layer is linear. Caches hold each
    layer's input and post-activation output for the backward pass.
    """
    n = num_layers(params, prefix)
    h = x
    caches: List[Tuple[np.ndarray, Optional[np.ndarray]]] = []
    for i in range(n):
        z = h @ params[f"{prefix}.W{i}"] + params[f"{prefix}.b{i}"]
        if i == n - 1:
            caches.append((h, None))
            h = z
        else:
            a = np.tanh(z)
            caches.append((h, a))
            h = a
    return h, caches


def mlp_backward(params: Params, prefix: str, caches, dout: np.ndarray) -> Params:
    """Gradients of a scalar loss wrt one MLP's weights, given dLoss/dOutput."""
    grads: Params = {}
    dz = dout
    for i in reversed(range(len(caches))):
        h_in, _ = caches[i]
        grads[f"{prefix}.W{i}"] = h_in.T @ dz
        grads[f"{prefix}.b{i}"] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ params[f"{prefix}.W{i}"].T
            act = caches[i - 1][1]
            dz = dh * (1.0 - act * act)
    return grads


class Adam:
    """Plain Adam on a parameter dict (gradient-descent convention)."""

    def __init__(self, params: Params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for k, g in grads.items():
            m = self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            params[k] -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def flatten_params(params: Params) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def set_flat_params(params: Params, flat: np.ndarray) -> None:
    i = 0
    for k in sorted(params):
        n = params[k].size
        params[k] = flat[i : i + n].reshape(params[k].shape).copy()
        i += n
    if i != flat.size:
        raise ValueError("flat vector size does not match parameter count")


def save_params(params: Params, path) -> None:
    arrays = dict(params)
    arrays["__format_version__"] = np.array([CHECKPOINT_VERSION])
    np.savez(path, **arrays)


def load_params(path) -> Params:
    with np.load(path) as data:
        version = int(data["__format_version__"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return {k: data[k].copy() for k in data.files if k != "__format_version__"}
