"""PCA reduced-order model: ``x = P Pi + xbar`` with truncation to ``tau`` PCs."""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, NumericError
from .formats import read_sections, write_sections
from .snapshots import SnapshotMatrix

PCA_MAGIC = b"ROMPCA1"
TAU_GRID = (4, 8, 16, 32)


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PCAModel:
    mean: np.ndarray             # (m,)
    eofs: np.ndarray             # (r, m), orthonormal rows
    scores: np.ndarray           # (n, r)
    singular_values: np.ndarray  # (r,), non-increasing

    def __post_init__(self):
        for name in ("mean", "eofs", "scores", "singular_values"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def r(self):
        return self.eofs.shape[0]

    @property
    def m(self):
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class ScalingParams:
    col_min: np.ndarray
    col_max: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.col_min), _frozen(self.col_max)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ArgumentError("scaling min/max must be vectors of equal length")
        if np.any(hi < lo):
            raise ArgumentError("scaling max must be >= min componentwise")
        object.__setattr__(self, "col_min", lo)
        object.__setattr__(self, "col_max", hi)

    @property
    def constant(self):
        """Boolean mask of columns that had zero range in the training data."""
        return self.col_max == self.col_min

    def __len__(self):
        return self.col_min.shape[0]


def fit_pca(x: SnapshotMatrix) -> PCAModel:
    data = np.asarray(x.data if isinstance(x, SnapshotMatrix) else x, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ArgumentError("fit_pca needs at least two snapshots")
    if not np.all(np.isfinite(data)):
        raise NumericError("fit_pca: non-finite input")
    n, m = data.shape
    mean = data.mean(axis=0)
    u, s, vt = np.linalg.svd(data - mean, full_matrices=False)
    r = min(n - 1, m)
    u, s, vt = u[:, :r], s[:r], vt[:r]
    # largest-magnitude entry of every EOF made positive
    pivot = vt[np.arange(r), np.argmax(np.abs(vt), axis=1)]
    signs = np.where(pivot < 0, -1.0, 1.0)
    vt = vt * signs[:, None]
    u = u * signs[None, :]
    return PCAModel(mean=mean, eofs=vt, scores=u * s, singular_values=s)


def _check_tau(model, tau):
    if not isinstance(tau, (int, np.integer)) or tau < 0 or tau > model.r:
        raise ArgumentError(f"tau={tau!r} out of range [0, {model.r}]")


def reconstruct(model: PCAModel, scores, tau: int, dt=1.0, layout="generic") -> SnapshotMatrix:
    """``x_tau = P_tau Pi_tau + xbar``; ``tau = 0`` returns the mean field."""
    return SnapshotMatrix(reconstruct_array(model, scores, tau), dt=dt, layout=layout)


def reconstruct_array(model: PCAModel, scores, tau: int):
    _check_tau(model, tau)
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.shape[1] != tau:
        raise ArgumentError(f"scores have {scores.shape[1]} columns, expected tau={tau}")
    return scores @ model.eofs[:tau] + model.mean


def project(model: PCAModel, x_new, tau: int):
    _check_tau(model, tau)
    data = np.atleast_2d(np.asarray(x_new.data if isinstance(x_new, SnapshotMatrix) else x_new,
                                    dtype=np.float64))
    if data.shape[1] != model.m:
        raise ArgumentError(f"x_new has {data.shape[1]} columns, model expects m={model.m}")
    return (data - model.mean) @ model.eofs[:tau].T


def truncation_error(model: PCAModel, x, tau: int):
    """Mean absolute error of the rank-``tau`` reconstruction of ``x``."""
    data = x.data if isinstance(x, SnapshotMatrix) else np.asarray(x)
    approx = reconstruct_array(model, project(model, data, tau), tau)
    return float(np.mean(np.abs(approx - data)))


def fit_scaling(scores) -> ScalingParams:
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    return ScalingParams(s.min(axis=0), s.max(axis=0))


def _check_cols(s, params):
    if s.shape[-1] != len(params):
        raise ArgumentError(f"{s.shape[-1]} columns given, scaling has {len(params)}")


def scale(scores, params: ScalingParams):
    """Affine map of each column, training min -> -1, max -> +1. No clamping."""
    s = np.asarray(scores, dtype=np.float64)
    _check_cols(s, params)
    span = params.col_max - params.col_min
    const = params.constant
    safe = np.where(const, 1.0, span)
    out = 2.0 * (s - params.col_min) / safe - 1.0
    return np.where(const, 0.0, out)


def unscale(scaled, params: ScalingParams):
    s = np.asarray(scaled, dtype=np.float64)
    _check_cols(s, params)
    span = params.col_max - params.col_min
    return (s + 1.0) * 0.5 * span + params.col_min


def save_pca(model: PCAModel, path, scaling: ScalingParams = None):
    sections = {
        "meta": {"r": model.r, "m": model.m, "n": int(model.scores.shape[0]),
                 "has_scaling": scaling is not None},
        "mean": model.mean,
        "eofs": model.eofs,
        "scores": model.scores,
        "singular_values": model.singular_values,
    }
    if scaling is not None:
        sections["scaling_min"] = scaling.col_min
        sections["scaling_max"] = scaling.col_max
    write_sections(path, PCA_MAGIC, sections)


def load_pca(path):
    """Return ``(PCAModel, ScalingParams or None)``."""
    sec = read_sections(path, PCA_MAGIC)
    model = PCAModel(sec["mean"], sec["eofs"], sec["scores"], sec["singular_values"])
    scaling = None
    if sec["meta"].get("has_scaling"):
        scaling = ScalingParams(sec["scaling_min"], sec["scaling_max"])
    return model, scaling


def export_scores_csv(scores, path, dt=1.0):
    scores = np.atleast_2d(scores)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"pc{j}" for j in range(scores.shape[1])])
        for i, row in enumerate(scores):
            w.writerow([repr(i * dt)] + [repr(float(v)) for v in row])
