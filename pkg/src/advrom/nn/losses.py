import numpy as np

from ..errors import ArgumentError

BCE_EPS = 1e-7


def bce_loss(p, target, eps=BCE_EPS):
    """Mean binary cross-entropy with predictions clamped to [eps, 1 - eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    y = np.broadcast_to(np.asarray(target, dtype=np.float64), p.shape)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_grad(p, target, eps=BCE_EPS):
    """d bce_loss / d p. Zero where the clamp is active."""
    p = np.asarray(p, dtype=np.float64)
    y = np.broadcast_to(np.asarray(target, dtype=np.float64), p.shape)
    pc = np.clip(p, eps, 1.0 - eps)
    g = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / p.size
    return np.where((p < eps) | (p > 1.0 - eps), 0.0, g)


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ArgumentError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse_loss(a, b):
    a, b = _check(a, b)
    return float(np.mean((a - b) ** 2))


def mse_grad(a, b):
    """d mse_loss / d a."""
    a, b = _check(a, b)
    return 2.0 * (a - b) / a.size
