"""Latent-space forecasters: adversarial LSTM and its classically trained twin.

The generator maps a window of ``N`` latent vectors to the next latent delta
``z[k+1] - z[k]``.  In adversarial mode a mirrored LSTM discriminator learns
to tell true deltas (label 1) from generated ones (label 0), and the generator
minimises ``BCE(D(fake), 1) + lambda_rec * MSE(fake, true)``.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, ConfigError, NumericError, RomIOError
from .nn import (LSTM, BatchNorm, Dense, Dropout, Nadam, ParamGroup, Sequential, Sigmoid,
                 bce_grad, bce_loss, load_checkpoint, mse_grad, mse_loss, save_checkpoint)
from .nn.network import recalibrate_batchnorm
from .snapshots import LatentSeries
from .training import TrainingLog, epoch_batches, split_real_fake_grad

MODES = ("adversarial", "classic")
ADV_LOG_COLUMNS = ("epoch", "gen_adv_loss", "gen_mse", "disc_loss")
CLASSIC_LOG_COLUMNS = ("epoch", "mse")


@dataclass
class ForecasterConfig:
    latent_dim: int
    time_lag: int = 5
    hidden: int = 64
    disc_hidden: int = 64
    mode: str = "adversarial"
    disc_context: bool = True
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    dropout: float = 0.5
    lambda_rec: float = 1.0
    val_fraction: float = 0.2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5

    def validate(self):
        problems = []
        if self.latent_dim < 1:
            problems.append("latent_dim must be positive")
        if self.time_lag < 1:
            problems.append("time_lag must be >= 1")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2 (batch normalisation)")
        if self.epochs < 1:
            problems.append("epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must lie in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            problems.append("val_fraction must lie in [0, 1)")
        if problems:
            raise ConfigError("invalid forecaster configuration", problems)


@dataclass(frozen=True, eq=False)
class WindowSet:
    """``inputs[i]`` holds ``z[k-N+1 .. k]`` and ``targets[i] = z[k+1] - z[k]``
    for ``k = ends[i]``."""

    inputs: np.ndarray   # (W, N, L)
    targets: np.ndarray  # (W, L)
    ends: np.ndarray     # (W,)

    def __post_init__(self):
        for name in ("inputs", "targets", "ends"):
            a = np.array(getattr(self, name), copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return WindowSet(self.inputs[idx], self.targets[idx], self.ends[idx])


def make_windows(series, N=5) -> WindowSet:
    z = series.values if isinstance(series, LatentSeries) else np.atleast_2d(series)
    T = z.shape[0]
    if N < 1 or T <= N:
        raise ArgumentError(f"series of length {T} too short for time lag {N} (need T >= N + 1)")
    ends = np.arange(N - 1, T - 1)
    inputs = np.stack([z[k - N + 1:k + 1] for k in ends])
    targets = z[ends + 1] - z[ends]
    return WindowSet(inputs, targets, ends)


class ForecasterModel:
    def __init__(self, cfg: ForecasterConfig, gen_rng=None, disc_rng=None):
        self.cfg = c = cfg
        L = c.latent_dim
        self.gen = Sequential([
            LSTM(L, c.hidden, gen_rng),
            BatchNorm(c.hidden, c.bn_momentum, c.bn_eps),
            Dropout(c.dropout),
            Dense(c.hidden, L, gen_rng),
        ])
        self.disc = None
        if c.mode == "adversarial":
            width = 2 * L if c.disc_context else L
            self.disc = Sequential([
                LSTM(width, c.disc_hidden, disc_rng),
                BatchNorm(c.disc_hidden, c.bn_momentum, c.bn_eps),
                Dropout(c.dropout),
                Dense(c.disc_hidden, 1, disc_rng),
                Sigmoid(),
            ])

    def networks(self):
        nets = {"generator": self.gen}
        if self.disc is not None:
            nets["discriminator"] = self.disc
        return nets

    def _check_windows(self, windows):
        w = np.asarray(windows, dtype=np.float64)
        single = w.ndim == 2
        w = w[None] if single else w
        if w.ndim != 3 or w.shape[1:] != (self.cfg.time_lag, self.cfg.latent_dim):
            raise ArgumentError(f"windows must be (batch, {self.cfg.time_lag}, "
                                f"{self.cfg.latent_dim}), got {np.shape(windows)}")
        return w, single

    def predict_delta(self, windows):
        """Inference-mode delta for one window (N, L) or a batch (B, N, L)."""
        w, single = self._check_windows(windows)
        out = self.gen.forward(w, train=False)
        return out[0] if single else out

    def disc_input(self, windows, deltas):
        if self.cfg.disc_context:
            rep = np.broadcast_to(deltas[:, None, :], windows.shape)
            return np.concatenate([windows, rep], axis=2)
        return deltas[:, None, :]

    def disc_input_grad(self, dx):
        """Gradient w.r.t. the deltas from a gradient w.r.t. :meth:`disc_input`."""
        if self.cfg.disc_context:
            return dx[:, :, self.cfg.latent_dim:].sum(axis=1)
        return dx[:, 0, :]

    def discriminate(self, windows, deltas):
        w, _ = self._check_windows(windows)
        d = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
        return self.disc.forward(self.disc_input(w, d), train=False)[:, 0]


def generate_delta(model: ForecasterModel, window):
    return model.predict_delta(window)


def next_latent(model, window):
    """``z~[k+1] = delta~ + z[k]``; ``model`` needs only ``predict_delta``."""
    window = np.asarray(window, dtype=np.float64)
    return model.predict_delta(window) + window[..., -1, :]


def discriminate_delta(model: ForecasterModel, windows, deltas):
    return model.discriminate(windows, deltas)


def disc_step(model, opt, windows, deltas, rng):
    """Discriminator update on [true; generated] deltas. Generator untouched."""
    fake = model.gen.forward(windows, train=True, rng=rng, update_stats=False)
    B = len(windows)
    x = np.concatenate([model.disc_input(windows, deltas), model.disc_input(windows, fake)])
    opt.group.zero_grad()
    d = model.disc.forward(x, train=True, rng=rng)[:, 0]
    loss = bce_loss(d[:B], 1.0) + bce_loss(d[B:], 0.0)
    model.disc.backward(split_real_fake_grad(bce_grad, d, B)[:, None])
    opt.step()
    return loss


def generator_step(model, opt, windows, deltas, rng, lambda_rec=1.0):
    """Generator update; the discriminator (parameters and running stats) is untouched.

    The discriminator sees the same [true; generated] batch composition as
    in its own step so its batch statistics match; only the generated half
    enters the adversarial loss.
    """
    opt.group.zero_grad()
    fake = model.gen.forward(windows, train=True, rng=rng)
    B = len(windows)
    x = np.concatenate([model.disc_input(windows, deltas), model.disc_input(windows, fake)])
    d = model.disc.forward(x, train=True, rng=rng, update_stats=False)[:, 0]
    adv = bce_loss(d[B:], 1.0)
    mse = mse_loss(fake, deltas)
    dd = np.zeros((2 * B, 1))
    dd[B:, 0] = bce_grad(d[B:], 1.0)
    dfake = model.disc_input_grad(model.disc.backward(dd)[B:])
    model.disc.zero_grad()
    model.gen.backward(dfake + lambda_rec * mse_grad(fake, deltas))
    opt.step()
    return adv, mse


def classic_step(model, opt, windows, deltas, rng):
    opt.group.zero_grad()
    pred = model.gen.forward(windows, train=True, rng=rng)
    loss = mse_loss(pred, deltas)
    model.gen.backward(mse_grad(pred, deltas))
    opt.step()
    return loss


def split_windows(windows: WindowSet, val_fraction):
    """Time-ordered split: first windows train, last ``val_fraction`` validate."""
    n_val = int(round(len(windows) * val_fraction))
    n_train = len(windows) - n_val
    return windows.subset(slice(0, n_train)), windows.subset(slice(n_train, None))


def train_forecaster(cfg: ForecasterConfig, windows: WindowSet, progress=None):
    """Train in ``cfg.mode``; returns ``(model, TrainingLog)``.

    Generator weights come from ``[seed, 0]`` in both modes, so classic and
    adversarial runs with equal seeds start from identical generators.  Per
    adversarial batch the training stream ``[seed, 2]`` feeds dropout masks in
    the order: generator and discriminator in the discriminator step, then
    generator and discriminator in the generator step.
    """
    cfg.validate()
    if len(windows) == 0:
        raise ArgumentError("empty window set")
    if windows.inputs.shape[1:] != (cfg.time_lag, cfg.latent_dim):
        raise ArgumentError(f"windows are {windows.inputs.shape[1:]}, config expects "
                            f"({cfg.time_lag}, {cfg.latent_dim})")
    train, _ = split_windows(windows, cfg.val_fraction)
    if len(train) < 2:
        raise ArgumentError("need at least two training windows")
    model = ForecasterModel(cfg, np.random.default_rng([cfg.seed, 0]),
                            np.random.default_rng([cfg.seed, 1]))
    rng = np.random.default_rng([cfg.seed, 2])
    hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    opt_g = Nadam(ParamGroup({"generator": model.gen}), **hyper)
    adversarial = cfg.mode == "adversarial"
    if adversarial:
        opt_d = Nadam(ParamGroup({"discriminator": model.disc}), **hyper)
        log = TrainingLog(ADV_LOG_COLUMNS)
    else:
        log = TrainingLog(CLASSIC_LOG_COLUMNS)
    X, Y = train.inputs, train.targets
    for epoch in range(cfg.epochs):
        acc = []
        for b, idx in enumerate(epoch_batches(len(X), cfg.batch_size, rng)):
            if adversarial:
                d = disc_step(model, opt_d, X[idx], Y[idx], rng)
                adv, mse = generator_step(model, opt_g, X[idx], Y[idx], rng, cfg.lambda_rec)
                acc.append((adv, mse, d))
            else:
                acc.append((classic_step(model, opt_g, X[idx], Y[idx], rng),))
            if not np.all(np.isfinite(acc[-1])):
                raise NumericError(f"non-finite forecaster loss at epoch {epoch}, batch {b}")
        means = np.mean(acc, axis=0)
        if adversarial:
            log.append(epoch=epoch, gen_adv_loss=means[0], gen_mse=means[1], disc_loss=means[2])
        else:
            log.append(epoch=epoch, mse=means[0])
        if progress is not None:
            progress(epoch, log.rows[-1])
    recalibrate_batchnorm(model.gen, X)
    return model, log


def validation_mse(model: ForecasterModel, windows: WindowSet):
    return mse_loss(model.predict_delta(windows.inputs), windows.targets)


def save_forecaster(model: ForecasterModel, path):
    c = model.cfg
    save_checkpoint(path, model.networks(), {"type": "forecaster", "mode": c.mode,
                                             "time_lag": c.time_lag, "latent_dim": c.latent_dim,
                                             "config": asdict(c)})


def load_forecaster(path):
    nets, extra, _ = load_checkpoint(path)
    if extra.get("type") != "forecaster":
        raise RomIOError(f"{path}: not a forecaster checkpoint")
    model = ForecasterModel(ForecasterConfig(**extra["config"]))
    model.gen = nets["generator"]
    model.disc = nets.get("discriminator")
    return model
