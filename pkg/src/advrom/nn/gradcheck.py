"""Central finite-difference verification of the hand-written backward passes."""
import numpy as np

from .losses import bce_grad, bce_loss, mse_grad, mse_loss
from .network import ParamGroup

LOSSES = {"mse": (mse_loss, mse_grad), "bce": (bce_loss, bce_grad)}


def relative_errors(g_fd, g_an):
    return np.abs(g_fd - g_an) / np.maximum(np.maximum(np.abs(g_fd), np.abs(g_an)), 1e-8)


def check_gradients(group: ParamGroup, closure, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``closure(backward)`` must run the forward pass and return the scalar
    loss; with ``backward=True`` it must also back-propagate into ``group``.
    The step for parameter ``theta`` is ``step * max(1, |theta|)``.
    """
    group.zero_grad()
    closure(True)
    g_an = group.grad_flat()
    theta = group.get_flat()
    g_fd = np.empty_like(theta)
    for i in range(theta.size):
        h = step * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tp[i] += h
        group.set_flat(tp)
        lp = closure(False)
        tp[i] -= 2 * h
        group.set_flat(tp)
        lm = closure(False)
        g_fd[i] = (lp - lm) / (2 * h)
    group.set_flat(theta)
    return float(relative_errors(g_fd, g_an).max()) if theta.size else 0.0


def gradient_check(network, x, loss="mse", target=None, step=1e-5, train=False, seed=0):
    """Gradient check of ``loss(network(x), target)`` over every parameter.

    In train mode dropout masks are replayed from ``seed`` and running
    batch-norm statistics are left untouched.
    """
    loss_fn, loss_grad = LOSSES[loss] if isinstance(loss, str) else loss
    group = ParamGroup({"net": network})

    def closure(backward):
        rng = np.random.default_rng(seed)
        y = network.forward(x, train=train, rng=rng, update_stats=False)
        value = loss_fn(y, target)
        if backward:
            network.backward(loss_grad(y, target))
        return value

    return check_gradients(group, closure, step)
