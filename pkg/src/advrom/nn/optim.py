"""Nadam (Adam with Nesterov momentum, constant-momentum form)."""
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError, NumericError


@dataclass
class NadamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size, **hyper):
        return cls(m=np.zeros(size), v=np.zeros(size), **hyper)


def nadam_step(params, grads, state: NadamState, block_names=None, block_sizes=None):
    """One Nadam update. Returns ``(new_params, state)``; the state is updated in place.

        m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
        m_hat = m / (1 - b1^(t+1))      g_hat = g / (1 - b1^t)
        theta <- theta - lr (b1 m_hat + (1 - b1) g_hat) / (sqrt(v / (1 - b2^t)) + eps)
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ArgumentError(f"nadam shapes differ: params {params.shape}, grads {grads.shape}, "
                            f"state {state.m.shape}")
    bad = ~np.isfinite(grads)
    if bad.any():
        idx = int(np.argmax(bad))
        where = f"index {idx}"
        if block_names is not None:
            edges = np.cumsum(block_sizes)
            where = f"block {block_names[int(np.searchsorted(edges, idx, side='right'))]!r}"
        raise NumericError(f"non-finite gradient in {where}")
    b1, b2 = state.beta1, state.beta2
    state.t += 1
    t = state.t
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** (t + 1))
    g_hat = grads / (1.0 - b1 ** t)
    v_hat = state.v / (1.0 - b2 ** t)
    lookahead = b1 * m_hat + (1.0 - b1) * g_hat
    return params - state.lr * lookahead / (np.sqrt(v_hat) + state.eps), state


class Nadam:
    """Nadam bound to a :class:`ParamGroup`."""

    def __init__(self, group, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.group = group
        self.state = NadamState.zeros(group.size, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        new, _ = nadam_step(self.group.get_flat(), self.group.grad_flat(), self.state,
                            self.group.block_names(), self.group.block_sizes())
        self.group.set_flat(new)
