"""PC-based adversarial autoencoder.

Encoder trunk with Gaussian ``mu`` / ``log_sigma`` heads, reparameterised
sampling ``z = mu + exp(log_sigma) * eps``, a tanh-headed decoder and a prior
discriminator that separates ``N(0, I)`` draws (label 1) from encoder codes
(label 0).
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, ConfigError, NumericError, RomIOError
from .nn import (BatchNorm, Dense, LeakyReLU, Nadam, ParamGroup, Sequential, Sigmoid, Tanh,
                 bce_grad, bce_loss, load_checkpoint, mse_grad, mse_loss, save_checkpoint)
from .nn.network import recalibrate_batchnorm
from .training import TrainingLog, epoch_batches, split_real_fake_grad

WIDTH_LADDER = (64, 32, 16, 8, 4)
LATENT_GRID = (4, 8, 16, 32)


def trunk_widths(latent_dim):
    """Hidden encoder widths for a latent size, e.g. 8 -> (64, 32, 16)."""
    return tuple(w for w in WIDTH_LADDER if w > latent_dim)


@dataclass
class AAEConfig:
    input_dim: int
    latent_dim: int = 8
    encoder_widths: tuple = None
    decoder_widths: tuple = None
    disc_widths: tuple = None
    batch_size: int = 32
    epochs: int = 500
    seed: int = 0
    lambda_rec: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    leaky_slope: float = 0.3
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.encoder_widths is None:
            self.encoder_widths = trunk_widths(self.latent_dim)
        if self.decoder_widths is None:
            self.decoder_widths = tuple(reversed(self.encoder_widths))
        self.encoder_widths = tuple(int(w) for w in self.encoder_widths)
        self.decoder_widths = tuple(int(w) for w in self.decoder_widths)
        if self.disc_widths is None:
            self.disc_widths = (self.latent_dim,)
        self.disc_widths = tuple(int(w) for w in self.disc_widths)

    def validate(self):
        problems = []
        if self.input_dim < 1:
            problems.append(f"input_dim must be positive, got {self.input_dim}")
        if self.latent_dim < 1:
            problems.append(f"latent_dim must be positive, got {self.latent_dim}")
        elif self.latent_dim >= self.input_dim:
            problems.append(f"latent_dim ({self.latent_dim}) must be < input_dim ({self.input_dim})")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2 (batch normalisation)")
        if self.epochs < 1:
            problems.append("epochs must be positive")
        if self.lambda_rec < 0:
            problems.append("lambda_rec must be non-negative")
        if problems:
            raise ConfigError("invalid AAE configuration", problems)


def _mlp(widths, rng, slope, mom, eps, batchnorm=True):
    """Dense layers with [batch-norm +] leaky ReLU in between (none after the last)."""
    layers = []
    for k, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(Dense(a, b, rng))
        if k < len(widths) - 2:
            if batchnorm:
                layers.append(BatchNorm(b, mom, eps))
            layers.append(LeakyReLU(slope))
    return layers


class AAEModel:
    def __init__(self, cfg: AAEConfig, rng=None):
        self.cfg = cfg
        c = cfg
        trunk = (c.input_dim,) + c.encoder_widths
        self.encoder = Sequential(_mlp(trunk, rng, c.leaky_slope, c.bn_momentum, c.bn_eps))
        if c.encoder_widths:
            self.encoder.layers += [BatchNorm(trunk[-1], c.bn_momentum, c.bn_eps),
                                    LeakyReLU(c.leaky_slope)]
        self.mu_head = Sequential([Dense(trunk[-1], c.latent_dim, rng)])
        self.logsig_head = Sequential([Dense(trunk[-1], c.latent_dim, rng)])
        dec = (c.latent_dim,) + c.decoder_widths + (c.input_dim,)
        self.decoder = Sequential(_mlp(dec, rng, c.leaky_slope, c.bn_momentum, c.bn_eps) + [Tanh()])
        disc = (c.latent_dim,) + c.disc_widths + (1,)
        # no batch-norm here: the encoder learns to hide a mean/scale shift from
        # batch-normalised statistics of the mixed prior/posterior batch
        self.disc = Sequential(_mlp(disc, rng, c.leaky_slope, c.bn_momentum, c.bn_eps,
                                    batchnorm=False) + [Sigmoid()])
        self.scaling = None

    def autoencoder_params(self):
        return ParamGroup({"encoder": self.encoder, "mu": self.mu_head,
                           "log_sigma": self.logsig_head, "decoder": self.decoder})

    def disc_params(self):
        return ParamGroup({"disc": self.disc})

    def networks(self):
        return {"encoder": self.encoder, "mu": self.mu_head, "log_sigma": self.logsig_head,
                "decoder": self.decoder, "disc": self.disc}

    def _check(self, x, width, what):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != width:
            raise ArgumentError(f"{what} expects width {width}, got {x.shape[-1]}")
        return x

    def encode(self, p, train=False, rng=None, update_stats=True):
        p = self._check(p, self.cfg.input_dim, "encoder")
        h = self.encoder.forward(np.atleast_2d(p), train, rng, update_stats)
        mu = self.mu_head.forward(h, train, rng, update_stats)
        ls = self.logsig_head.forward(h, train, rng, update_stats)
        if p.ndim == 1:
            return mu[0], ls[0]
        return mu, ls

    def encode_backward(self, dmu, dls):
        dh = self.mu_head.backward(dmu) + self.logsig_head.backward(dls)
        return self.encoder.backward(dh)

    def decode(self, z, train=False, rng=None, update_stats=True):
        z = self._check(z, self.cfg.latent_dim, "decoder")
        out = self.decoder.forward(np.atleast_2d(z), train, rng, update_stats)
        return out[0] if z.ndim == 1 else out

    def discriminate(self, z, train=False, rng=None, update_stats=True):
        z = self._check(z, self.cfg.latent_dim, "discriminator")
        out = self.disc.forward(np.atleast_2d(z), train, rng, update_stats)[:, 0]
        return out[0] if z.ndim == 1 else out

    def reconstruct(self, p):
        """Posterior-mean round trip ``decode(mu(p))`` in inference mode."""
        mu, _ = self.encode(p)
        return self.decode(mu)


def encode(model: AAEModel, p):
    return model.encode(p)


def sample_latent(mu, log_sigma, eps):
    return np.asarray(mu) + np.exp(np.asarray(log_sigma)) * np.asarray(eps)


def decode(model: AAEModel, z):
    return model.decode(z)


def discriminate_prior(model: AAEModel, z):
    return model.discriminate(z)


def disc_loss(p_prior, p_posterior):
    """BCE(D(z_prior), 1) + BCE(D(z_posterior), 0)."""
    return bce_loss(p_prior, 1.0) + bce_loss(p_posterior, 0.0)


AAE_LOG_COLUMNS = ("epoch", "disc_loss", "adv_loss", "rec_mse", "latent_mean_norm",
                   "latent_var_mean")


def disc_step(model: AAEModel, opt: Nadam, p, z_prior, eps):
    """One discriminator update; encoder/decoder parameters and statistics untouched."""
    mu, ls = model.encode(p, train=True, update_stats=False)
    z = sample_latent(mu, ls, eps)
    B = len(z_prior)
    opt.group.zero_grad()
    d = model.disc.forward(np.concatenate([z_prior, z]), train=True)[:, 0]
    loss = disc_loss(d[:B], d[B:])
    model.disc.backward(split_real_fake_grad(bce_grad, d, B)[:, None])
    opt.step()
    return loss


def autoencoder_step(model: AAEModel, opt: Nadam, p, eps, lambda_rec=1.0):
    """One encoder/decoder update; discriminator parameters untouched."""
    opt.group.zero_grad()
    mu, ls = model.encode(p, train=True)
    sig = np.exp(ls)
    z = mu + sig * eps
    p_rec = model.decoder.forward(z, train=True)
    d = model.disc.forward(z, train=True, update_stats=False)[:, 0]
    adv = bce_loss(d, 1.0)
    rec = mse_loss(p_rec, p)
    dz = model.disc.backward(bce_grad(d, 1.0)[:, None])
    model.disc.zero_grad()
    dz = dz + model.decoder.backward(lambda_rec * mse_grad(p_rec, p))
    model.encode_backward(dz, dz * eps * sig)
    opt.step()
    return adv, rec, z


def train_aae(cfg: AAEConfig, scores, progress=None):
    """Alternating discriminator / autoencoder training on scaled PC rows.

    Per batch the run's generator is consumed as: prior draws, discriminator
    ``eps``, autoencoder ``eps``.  Returns ``(model, TrainingLog)``.
    """
    cfg.validate()
    P = np.asarray(scores, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != cfg.input_dim:
        raise ArgumentError(f"scores must be (rows, {cfg.input_dim}), got {P.shape}")
    if P.shape[0] < cfg.batch_size:
        raise ArgumentError(f"{P.shape[0]} rows is fewer than batch_size={cfg.batch_size}")
    init_rng = np.random.default_rng([cfg.seed, 0])
    rng = np.random.default_rng([cfg.seed, 1])
    model = AAEModel(cfg, init_rng)
    hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    opt_d = Nadam(model.disc_params(), **hyper)
    opt_ae = Nadam(model.autoencoder_params(), **hyper)
    log = TrainingLog(AAE_LOG_COLUMNS)
    L = cfg.latent_dim
    for epoch in range(cfg.epochs):
        dl, al, rl, zs = [], [], [], []
        for b, idx in enumerate(epoch_batches(len(P), cfg.batch_size, rng)):
            batch = P[idx]
            z_prior = rng.standard_normal((len(idx), L))
            eps_d = rng.standard_normal((len(idx), L))
            eps_g = rng.standard_normal((len(idx), L))
            d = disc_step(model, opt_d, batch, z_prior, eps_d)
            adv, rec, z = autoencoder_step(model, opt_ae, batch, eps_g, cfg.lambda_rec)
            if not np.isfinite(d + adv + rec):
                raise NumericError(f"non-finite AAE loss at epoch {epoch}, batch {b}")
            dl.append(d)
            al.append(adv)
            rl.append(rec)
            zs.append(z)
        z = np.concatenate(zs)
        log.append(epoch=epoch, disc_loss=np.mean(dl), adv_loss=np.mean(al), rec_mse=np.mean(rl),
                   latent_mean_norm=float(np.linalg.norm(z.mean(axis=0))),
                   latent_var_mean=float(z.var(axis=0).mean()))
        if progress is not None:
            progress(epoch, log.rows[-1])
    recalibrate(model, P)
    return model, log


def recalibrate(model: AAEModel, P):
    """Replace the lagging running batch-norm averages by population statistics
    of the final weights over the training rows (decoder fed posterior means)."""
    h = recalibrate_batchnorm(model.encoder, P)
    recalibrate_batchnorm(model.decoder, model.mu_head.forward(h))


def latent_moments(model: AAEModel, scores, rng):
    """Per-dimension mean and variance of sampled codes over ``scores``."""
    mu, ls = model.encode(scores)
    z = sample_latent(mu, ls, rng.standard_normal(mu.shape))
    return z.mean(axis=0), z.var(axis=0)


def save_aae(model: AAEModel, path, extra=None):
    cfg = asdict(model.cfg)
    save_checkpoint(path, model.networks(), {"type": "aae", "config": cfg, **(extra or {})})


def load_aae(path):
    nets, extra, _ = load_checkpoint(path)
    if extra.get("type") != "aae":
        raise RomIOError(f"{path}: not an AAE checkpoint")
    cfg = AAEConfig(**extra["config"])
    model = AAEModel(cfg)
    model.encoder, model.mu_head, model.logsig_head = nets["encoder"], nets["mu"], nets["log_sigma"]
    model.decoder, model.disc = nets["decoder"], nets["disc"]
    return model
