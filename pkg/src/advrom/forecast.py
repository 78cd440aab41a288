"""Autoregressive roll-out, latent -> physical decoding and ensemble scoring."""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .alstm import next_latent
from .errors import ArgumentError, PipelineError
from .rom import unscale
from .snapshots import LatentSeries, SnapshotMatrix

DEFAULT_HORIZON = 100
COMPONENT_NAMES = {1: ("x",), 2: ("u", "v"), 3: ("u", "v", "w")}


@dataclass
class RolloutResult:
    latent: np.ndarray              # (H, L); shorter if the roll-out diverged
    start: int
    model_id: str = ""
    physical: np.ndarray = None     # (H, m) once decoded
    diverged_at: int = None         # first step with a non-finite prediction


def rollout(gen, seed_window, H, start=None, model_id=""):
    """Feed each prediction back as input for ``H`` steps.

    ``gen`` needs a ``predict_delta(window)`` method.  No ground truth enters
    after the seed window.
    """
    if H < 1:
        raise ArgumentError(f"horizon must be >= 1, got {H}")
    window = np.array(seed_window, dtype=np.float64)
    if window.ndim != 2:
        raise ArgumentError(f"seed window must be (N, L), got {window.shape}")
    out = []
    diverged = None
    for step in range(H):
        z_next = next_latent(gen, window)
        if not np.all(np.isfinite(z_next)):
            diverged = step
            break
        out.append(z_next)
        window = np.concatenate([window[1:], z_next[None]], axis=0)
    latent = np.array(out) if out else np.zeros((0, window.shape[1]))
    return RolloutResult(latent=latent, start=start if start is not None else -1,
                         model_id=model_id, diverged_at=diverged)


def decode_to_physical(aae, pca, scaling, z):
    """decoder -> unscale -> times EOFs -> plus mean, for one latent or a batch."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != aae.cfg.latent_dim:
        raise PipelineError("decoder", f"latent width {z.shape[-1]} != {aae.cfg.latent_dim}")
    p_scaled = aae.decode(z)
    if p_scaled.shape[-1] != len(scaling):
        raise PipelineError("unscale", f"decoder emits {p_scaled.shape[-1]} PCs, scaling "
                                       f"has {len(scaling)}")
    pcs = unscale(p_scaled, scaling)
    k = pcs.shape[-1]
    if k > pca.r:
        raise PipelineError("eofs", f"{k} PCs but the PCA model retains only {pca.r}")
    x = pcs @ pca.eofs[:k]
    if x.shape[-1] != pca.mean.shape[0]:
        raise PipelineError("mean", f"state width {x.shape[-1]} != {pca.mean.shape[0]}")
    return x + pca.mean


@dataclass
class EnsembleErrorCurve:
    name: str
    per_start: np.ndarray                 # (S, H) MAE per start and horizon step
    per_start_components: np.ndarray      # (S, H, C)
    starts: np.ndarray
    component_names: tuple = ("u", "v")
    units: str = "m/s"

    @property
    def horizon(self):
        return self.per_start.shape[1]

    @property
    def mean(self):
        return self.per_start.mean(axis=0)

    @property
    def std(self):
        return self.per_start.std(axis=0)

    @property
    def component_mean(self):
        return self.per_start_components.mean(axis=0)

    @property
    def component_std(self):
        return self.per_start_components.std(axis=0)

    def to_csv(self, path):
        cm, cs = self.component_mean, self.component_std
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["step", "mean", "std"]
            for c in self.component_names:
                header += [f"{c}_mean", f"{c}_std"]
            w.writerow(header)
            for h in range(self.horizon):
                row = [h + 1, repr(float(self.mean[h])), repr(float(self.std[h]))]
                for j in range(len(self.component_names)):
                    row += [repr(float(cm[h, j])), repr(float(cs[h, j]))]
                w.writerow(row)


def _values(latent):
    return latent.values if isinstance(latent, LatentSeries) else np.atleast_2d(latent)


def check_starts(starts, N, T, H):
    starts = np.asarray(list(starts), dtype=int)
    if starts.size == 0:
        raise ArgumentError("no start indices given")
    bad = starts[(starts < N) | (starts + H > T)]
    if bad.size:
        raise ArgumentError(f"starts {bad.tolist()} infeasible for N={N}, H={H}, T={T}; "
                            f"feasible starts are {N}..{T - H}")
    return starts


def _errors(pred, truth, slices):
    err = np.abs(pred - truth)
    return err.mean(axis=1), np.stack([err[:, s].mean(axis=1) for s in slices], axis=1)


def ensemble_evaluate(models, latent, x: SnapshotMatrix, starts, H, decode, N=None):
    """Roll every model out from identical true seed windows and score in physical space.

    ``models`` maps a name to anything with ``predict_delta``; ``decode`` maps
    latents (batch) to physical states.  The seed window for start ``s`` is
    ``z[s-N:s]`` and step ``h`` (1-based) is compared with ``x[s+h-1]``.
    Diverged roll-outs score ``inf`` from the divergence step on.
    """
    z = _values(latent)
    if N is None:
        N = next(iter(models.values())).cfg.time_lag
    if z.shape[0] != x.n:
        raise ArgumentError(f"latent series has {z.shape[0]} steps, snapshots {x.n}")
    starts = check_starts(starts, N, x.n, H)
    slices = x.component_slices()
    names = COMPONENT_NAMES.get(len(slices), tuple(f"c{j}" for j in range(len(slices))))
    curves = {}
    for name, model in models.items():
        tot = np.full((len(starts), H), np.inf)
        comp = np.full((len(starts), H, len(slices)), np.inf)
        for i, s in enumerate(starts):
            res = rollout(model, z[s - N:s], H, start=int(s), model_id=name)
            k = len(res.latent)
            if k:
                tot[i, :k], comp[i, :k] = _errors(decode(res.latent), x.data[s:s + k], slices)
        curves[name] = EnsembleErrorCurve(name, tot, comp, starts, names)
    return curves


def reconstruction_curve(latent, x: SnapshotMatrix, starts, H, decode, N):
    """Error of decoding the *true* latents over the same windows: the floor
    any forecaster sits on."""
    z = _values(latent)
    starts = check_starts(starts, N, x.n, H)
    slices = x.component_slices()
    names = COMPONENT_NAMES.get(len(slices), tuple(f"c{j}" for j in range(len(slices))))
    tot = np.empty((len(starts), H))
    comp = np.empty((len(starts), H, len(slices)))
    for i, s in enumerate(starts):
        tot[i], comp[i] = _errors(decode(z[s:s + H]), x.data[s:s + H], slices)
    return EnsembleErrorCurve("reconstruction", tot, comp, starts, names)


class OracleForecaster:
    """Returns the true next delta of ``series`` for the matching window."""

    def __init__(self, series, N):
        self.z = _values(series)
        self.N = N
        self.windows = np.stack([self.z[k - N + 1:k + 1] for k in range(N - 1, len(self.z) - 1)])

    def predict_delta(self, window):
        window = np.asarray(window, dtype=np.float64)
        dist = np.abs(self.windows - window).reshape(len(self.windows), -1).max(axis=1)
        k = int(np.argmin(dist)) + self.N - 1
        return self.z[k + 1] - self.z[k]


@dataclass
class ComparisonReport:
    names: tuple
    horizon: int
    threshold: float
    differences: dict          # "a-b" -> per-step mean difference
    divergence_step: dict      # name -> first 1-based step with mean > threshold, or None
    winner_per_step: list      # name or "tie" per step
    winner_at_horizon: str
    mean_at_horizon: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "names": list(self.names),
            "horizon": self.horizon,
            "threshold": self.threshold,
            "differences": {k: [float(v) for v in d] for k, d in self.differences.items()},
            "divergence_step": self.divergence_step,
            "winner_per_step": self.winner_per_step,
            "winner_at_horizon": self.winner_at_horizon,
            "mean_at_horizon": self.mean_at_horizon,
            "metadata": self.metadata,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def divergence_step(curve_mean, threshold):
    over = np.nonzero(np.asarray(curve_mean) > threshold)[0]
    return int(over[0]) + 1 if over.size else None


def _winner(values):
    names = list(values)
    best = min(values.values())
    winners = [n for n in names if values[n] == best]
    return winners[0] if len(winners) == 1 else "tie"


def compare_report(curves, threshold=None, reference=None, factor=2.0, metadata=None):
    """Compare >= 2 curves of equal horizon.

    The divergence threshold defaults to ``factor`` times the horizon-averaged
    mean of ``reference`` (the reconstruction-only curve).
    """
    curves = dict(curves)
    if len(curves) < 2:
        raise ArgumentError("compare_report needs at least two curves")
    horizons = {c.horizon for c in curves.values()}
    if len(horizons) != 1:
        raise ArgumentError(f"horizon mismatch between curves: {sorted(horizons)}")
    H = horizons.pop()
    if threshold is None:
        if reference is None:
            raise ArgumentError("give either a threshold or a reference curve")
        threshold = factor * float(np.mean(reference.mean))
    names = tuple(curves)
    diffs = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            diffs[f"{a}-{b}"] = curves[a].mean - curves[b].mean
    per_step = [_winner({n: float(curves[n].mean[h]) for n in names}) for h in range(H)]
    at_h = {n: float(curves[n].mean[-1]) for n in names}
    return ComparisonReport(
        names=names, horizon=H, threshold=float(threshold), differences=diffs,
        divergence_step={n: divergence_step(curves[n].mean, threshold) for n in names},
        winner_per_step=per_step, winner_at_horizon=_winner(at_h),
        mean_at_horizon=at_h, metadata=dict(metadata or {}))
