"""Snapshot data model, synthetic vortex-flow corpus and snapshot file I/O."""
import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ConfigError, EmptyInputError, RomIOError

SNAP_MAGIC = b"ROMSNAP1"
_HEADER = struct.Struct("<QQdI")

# layout tag <-> (name, number of stacked velocity components)
LAYOUTS = {
    0: ("generic", 1),
    1: ("uv-component-major", 2),
    2: ("uvw-component-major", 3),
}
_LAYOUT_TAGS = {name: tag for tag, (name, _) in LAYOUTS.items()}


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SnapshotMatrix:
    """``n`` time steps by ``m`` state values, uniformly spaced by ``dt``.

    Velocity components are stacked component-major: with the
    ``uv-component-major`` layout columns ``[0, m/2)`` are ``u`` and the rest
    are ``v``.
    """

    data: np.ndarray
    dt: float = 1.0
    layout: str = "generic"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ArgumentError(f"snapshot data must be 2-D, got shape {data.shape}")
        n, m = data.shape
        if n < 2 or m < 1:
            raise ArgumentError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
        bad = np.argwhere(~np.isfinite(data))
        if bad.size:
            r, c = bad[0]
            raise ArgumentError(f"non-finite value at row {r}, column {c}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ArgumentError(f"dt must be positive, got {self.dt}")
        if self.layout not in _LAYOUT_TAGS:
            raise ArgumentError(f"unknown layout {self.layout!r}")
        if m % self.n_components:
            raise ArgumentError(f"m={m} not divisible by {self.n_components} components")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def m(self):
        return self.data.shape[1]

    @property
    def n_components(self):
        return LAYOUTS[_LAYOUT_TAGS[self.layout]][1]

    @property
    def times(self):
        return np.arange(self.n) * self.dt

    def component_slices(self):
        """Column slice for every stacked physical component."""
        k = self.m // self.n_components
        return [slice(i * k, (i + 1) * k) for i in range(self.n_components)]

    def rows(self, start, stop=None):
        return SnapshotMatrix(self.data[start:stop], self.dt, self.layout)


@dataclass(frozen=True)
class SyntheticFlowConfig:
    grid_nx: int = 16
    grid_ny: int = 16
    n_steps: int = 300
    n_modes: int = 8
    seed: int = 0
    noise_amplitude: float = 0.0
    dt: float = 1.0
    period_steps: float = 100.0

    def validate(self):
        problems = []
        for name in ("grid_nx", "grid_ny", "n_steps", "n_modes"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                problems.append(f"{name} must be a positive integer, got {v!r}")
        if isinstance(self.n_steps, int) and self.n_steps < 2:
            problems.append("n_steps must be >= 2")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            problems.append(f"seed must be an unsigned integer, got {self.seed!r}")
        if not (np.isfinite(self.noise_amplitude) and self.noise_amplitude >= 0):
            problems.append(f"noise_amplitude must be >= 0, got {self.noise_amplitude!r}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            problems.append(f"dt must be positive, got {self.dt!r}")
        if not (np.isfinite(self.period_steps) and self.period_steps > 0):
            problems.append(f"period_steps must be positive, got {self.period_steps!r}")
        if problems:
            raise ConfigError("invalid synthetic flow configuration", problems)


def _velocity(psi, h_x, h_y):
    # u = d(psi)/dy, v = -d(psi)/dx on the cell-centred grid
    dpsi_dx, dpsi_dy = np.gradient(psi, h_x, h_y)
    return dpsi_dy, -dpsi_dx


def _unit_rms(u, v):
    s = np.sqrt(np.mean(u**2 + v**2))
    return u / s, v / s


def generate_synthetic_flow(cfg: SyntheticFlowConfig) -> SnapshotMatrix:
    """Superpose analytic vortex cells on a periodic-in-time orbit.

    Mode 0 is a pulsating Gaussian vortex (a fixed pattern times a scalar
    amplitude).  Every further mode is a vortex dipole rotating about a fixed
    centre at ``k`` times the base frequency, which spans exactly two spatial
    patterns.  Amplitudes decay with mode index and are slowly modulated, so
    the noise-free field lies on a closed one-parameter orbit of rank at most
    ``2 * n_modes - 1``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    nx, ny = cfg.grid_nx, cfg.grid_ny
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    t = np.arange(cfg.n_steps, dtype=np.float64)
    w0 = 2.0 * np.pi / cfg.period_steps

    centres = rng.uniform(0.25, 0.75, size=(cfg.n_modes, 2))
    widths = rng.uniform(0.10, 0.20, size=cfg.n_modes)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.n_modes, 2))

    u = np.zeros((cfg.n_steps, nx, ny))
    v = np.zeros_like(u)
    for k in range(cfg.n_modes):
        dx, dy = X - centres[k, 0], Y - centres[k, 1]
        gauss = np.exp(-(dx**2 + dy**2) / (2.0 * widths[k] ** 2))
        amp = 1.5 / (1.0 + 0.5 * k)
        if k == 0:
            pu, pv = _unit_rms(*_velocity(gauss, 1.0 / nx, 1.0 / ny))
            s = amp * (1.0 + 0.5 * np.sin(w0 * t + phases[k, 0]))
            u += s[:, None, None] * pu
            v += s[:, None, None] * pv
            continue
        # dipole streamfunctions along x and y: a rotating dipole is a
        # cos/sin combination of the two
        ax_u, ax_v = _unit_rms(*_velocity(-dx / widths[k] * gauss, 1.0 / nx, 1.0 / ny))
        ay_u, ay_v = _unit_rms(*_velocity(-dy / widths[k] * gauss, 1.0 / nx, 1.0 / ny))
        theta = k * w0 * t + phases[k, 0]
        r = amp * (1.0 + 0.25 * np.sin(w0 * t + phases[k, 1]))
        a, b = r * np.cos(theta), r * np.sin(theta)
        u += a[:, None, None] * ax_u + b[:, None, None] * ay_u
        v += a[:, None, None] * ax_v + b[:, None, None] * ay_v

    data = np.concatenate([u.reshape(cfg.n_steps, -1), v.reshape(cfg.n_steps, -1)], axis=1)
    if cfg.noise_amplitude > 0:
        data = data + cfg.noise_amplitude * rng.standard_normal(data.shape)
    return SnapshotMatrix(data, dt=cfg.dt, layout="uv-component-major")


def lag1_autocorrelation(x: SnapshotMatrix) -> float:
    d = x.data - x.data.mean(axis=0)
    num = np.sum(d[:-1] * d[1:])
    den = np.sqrt(np.sum(d[:-1] ** 2) * np.sum(d[1:] ** 2))
    return float(num / den) if den > 0 else 1.0


def save_snapshots(x: SnapshotMatrix, path, csv_path=None):
    """Write ``x`` in the ROMSNAP1 binary format, optionally also as CSV."""
    tag = _LAYOUT_TAGS[x.layout]
    with open(path, "wb") as fh:
        fh.write(SNAP_MAGIC)
        fh.write(_HEADER.pack(x.n, x.m, x.dt, tag))
        fh.write(np.ascontiguousarray(x.data, dtype="<f8").tobytes())
    if csv_path is not None:
        export_csv(x, csv_path)


def load_snapshots(path) -> SnapshotMatrix:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf:
        raise EmptyInputError(f"{path}: empty input")
    if not buf.startswith(SNAP_MAGIC):
        raise RomIOError(f"{path}: malformed header (bad magic)")
    if len(buf) < len(SNAP_MAGIC) + _HEADER.size:
        raise RomIOError(f"{path}: malformed header (truncated)")
    n, m, dt, tag = _HEADER.unpack_from(buf, len(SNAP_MAGIC))
    if tag not in LAYOUTS:
        raise RomIOError(f"{path}: malformed header (unknown layout tag {tag})")
    if not (np.isfinite(dt) and dt > 0):
        raise RomIOError(f"{path}: malformed header (dt={dt})")
    body = buf[len(SNAP_MAGIC) + _HEADER.size:]
    if len(body) != 8 * n * m:
        raise RomIOError(
            f"{path}: dimension mismatch, header says {n}x{m} ({8 * n * m} bytes), "
            f"found {len(body)} bytes")
    data = np.frombuffer(body, dtype="<f8").reshape(n, m)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        r, c = bad[0]
        raise RomIOError(f"{path}: non-finite value at row {r}, column {c}")
    try:
        return SnapshotMatrix(data, dt=dt, layout=LAYOUTS[tag][0])
    except ArgumentError as exc:
        raise RomIOError(f"{path}: {exc}") from exc


def export_csv(x: SnapshotMatrix, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"c{j}" for j in range(x.m)])
        for t, row in zip(x.times, x.data):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class LatentSeries:
    """Time-ordered latent vectors (rows) plus what is needed to invert them.

    ``scaling`` is the :class:`advrom.rom.ScalingParams` used to put the PC
    scores in [-1, 1] before encoding; ``None`` for raw series.
    """

    values: np.ndarray
    dt: float = 1.0
    scaling: object = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ArgumentError(f"latent series must be 2-D, got shape {v.shape}")
        object.__setattr__(self, "values", _frozen(v))

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"z{j}" for j in range(self.dim)])
            for i, row in enumerate(self.values):
                w.writerow([repr(i * self.dt)] + [repr(float(v)) for v in row])
