"""Run configuration: a sectioned YAML file validated with line-numbered errors.

Schema (every key optional; defaults shown)::

    seed: 0                  # global seed, all sub-seeds derive from it
    output: out              # output directory
    data:
      path: null             # existing ROMSNAP1 file instead of synthesis
      grid_nx: 16
      grid_ny: 16
      n_steps: 300
      n_modes: 17
      noise_amplitude: 0.0
      period_steps: 200.0
      dt: 1.0
      seed: null             # default: derived from the global seed
      train_fraction: 0.8    # leading rows used for fitting; the tail is held out
    rom:
      tau_grid: [4, 8, 16, 32]
      rank_tol: 1.0e-8       # PCs with sigma <= rank_tol * sigma_1 are not fed to the AAE
    aae:       {latent_dim: 8, batch_size: 32, epochs: 500, lambda_rec: 1.0, lr: 1.0e-3}
    forecaster:
      {time_lag: 5, hidden: 64, disc_hidden: 64, batch_size: 32, epochs: 500,
       lambda_rec: 1.0, dropout: 0.5, disc_context: true, val_fraction: 0.2, lr: 1.0e-3}
    evaluation:
      start_first: 150       # starts are start_first .. start_first + n_starts - 1
      n_starts: 50
      horizon: 100
      extra_horizons: [80]
      divergence_factor: 2.0
"""
import copy
import hashlib
import json
import os

import yaml

from .errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "output": "out",
    "data": {
        "path": None, "grid_nx": 16, "grid_ny": 16, "n_steps": 300, "n_modes": 17,
        "noise_amplitude": 0.0, "period_steps": 200.0, "dt": 1.0, "seed": None,
        "train_fraction": 0.8,
    },
    "rom": {"tau_grid": [4, 8, 16, 32], "rank_tol": 1e-8},
    "aae": {"latent_dim": 8, "batch_size": 32, "epochs": 500, "lambda_rec": 1.0, "lr": 1e-3},
    "forecaster": {
        "time_lag": 5, "hidden": 64, "disc_hidden": 64, "batch_size": 32, "epochs": 500,
        "lambda_rec": 1.0, "dropout": 0.5, "disc_context": True, "val_fraction": 0.2,
        "lr": 1e-3,
    },
    "evaluation": {
        "start_first": 150, "n_starts": 50, "horizon": 100, "extra_horizons": [80],
        "divergence_factor": 2.0,
    },
}

_POS_INT = ("positive integer", lambda v: isinstance(v, int) and not isinstance(v, bool) and v > 0)
_UINT = ("unsigned integer", lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0)
_POS_REAL = ("positive number",
             lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0)
_NONNEG_REAL = ("non-negative number",
                lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0)
_FRACTION = ("number in (0, 1)",
             lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and 0 < v < 1)
_FRACTION0 = ("number in [0, 1)",
              lambda v: isinstance(v, (int, float)) and not isinstance(v, bool) and 0 <= v < 1)
_BOOL = ("boolean", lambda v: isinstance(v, bool))
_STR = ("string", lambda v: isinstance(v, str) and v != "")
_OPT_STR = ("string or null", lambda v: v is None or (isinstance(v, str) and v != ""))
_OPT_UINT = ("unsigned integer or null", lambda v: v is None or _UINT[1](v))
_INT_LIST = ("list of positive integers",
             lambda v: isinstance(v, list) and all(_POS_INT[1](x) for x in v))
_INT_LIST_NE = ("non-empty list of positive integers", lambda v: bool(v) and _INT_LIST[1](v))

SCHEMA = {
    "seed": _UINT,
    "output": _STR,
    "data": {
        "path": _OPT_STR, "grid_nx": _POS_INT, "grid_ny": _POS_INT, "n_steps": _POS_INT,
        "n_modes": _POS_INT, "noise_amplitude": _NONNEG_REAL, "period_steps": _POS_REAL,
        "dt": _POS_REAL, "seed": _OPT_UINT, "train_fraction": _FRACTION,
    },
    "rom": {"tau_grid": _INT_LIST_NE, "rank_tol": _NONNEG_REAL},
    "aae": {"latent_dim": _POS_INT, "batch_size": _POS_INT, "epochs": _POS_INT,
            "lambda_rec": _NONNEG_REAL, "lr": _POS_REAL},
    "forecaster": {
        "time_lag": _POS_INT, "hidden": _POS_INT, "disc_hidden": _POS_INT,
        "batch_size": _POS_INT, "epochs": _POS_INT, "lambda_rec": _NONNEG_REAL,
        "dropout": _FRACTION0, "disc_context": _BOOL, "val_fraction": _FRACTION0,
        "lr": _POS_REAL,
    },
    "evaluation": {
        "start_first": _UINT, "n_starts": _POS_INT, "horizon": _POS_INT,
        "extra_horizons": _INT_LIST, "divergence_factor": _POS_REAL,
    },
}


def _node_lines(node, path=(), out=None):
    """Map key paths to 1-based source lines from a composed YAML node tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            _node_lines(v, p, out)
    return out


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate(raw, lines=None, source="<config>"):
    """Check ``raw`` against the schema; raise one ConfigError listing every problem."""
    lines = lines or {}
    problems = []

    def where(path):
        ln = lines.get(path)
        return f"{source}:{ln}: " if ln else f"{source}: "

    def walk(d, schema, path):
        if not isinstance(d, dict):
            problems.append(f"{where(path)}{'.'.join(path) or 'top level'} must be a mapping")
            return
        for k, v in d.items():
            p = path + (k,)
            if k not in schema:
                problems.append(f"{where(p)}unknown key {'.'.join(p)!r}")
            elif isinstance(schema[k], dict):
                walk(v, schema[k], p)
            elif not schema[k][1](v):
                problems.append(f"{where(p)}{'.'.join(p)} must be a {schema[k][0]}, got {v!r}")

    walk(raw, SCHEMA, ())
    cfg = _merge(DEFAULTS, raw) if isinstance(raw, dict) and not problems else None
    if cfg is not None:
        ev, fc = cfg["evaluation"], cfg["forecaster"]
        if ev["start_first"] < fc["time_lag"]:
            problems.append(f"{where(('evaluation', 'start_first'))}evaluation.start_first "
                            f"({ev['start_first']}) must be >= forecaster.time_lag "
                            f"({fc['time_lag']})")
        if cfg["data"]["path"] is None:
            n = cfg["data"]["n_steps"]
            last = ev["start_first"] + ev["n_starts"] - 1
            for h in [ev["horizon"]] + list(ev["extra_horizons"]):
                if last + h > n:
                    problems.append(f"{where(('evaluation', 'horizon'))}start {last} + horizon "
                                    f"{h} exceeds data.n_steps={n}")
        elif not os.path.exists(cfg["data"]["path"]):
            problems.append(f"{where(('data', 'path'))}data.path {cfg['data']['path']!r} "
                            "does not exist")
    if problems:
        raise ConfigError(f"{len(problems)} configuration error(s)", problems)
    return cfg


def load_config(path=None, overrides=None):
    """Read, merge with defaults and validate. ``overrides`` maps dotted keys to values."""
    raw, lines, source = {}, {}, "<command line>"
    if path is not None:
        source = str(path)
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            node = yaml.compose(text)
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: YAML syntax error", [str(exc)]) from exc
        raw = {} if raw is None else raw
        if node is not None:
            lines = _node_lines(node)
    for key, value in (overrides or {}).items():
        d = raw
        parts = key.split(".")
        for i, p in enumerate(parts[:-1]):
            d = d.setdefault(p, {})
            if not isinstance(d, dict):
                raise ConfigError(f"cannot set {key!r}: {'.'.join(parts[:i + 1])} is not a "
                                  "section")
        d[parts[-1]] = value
    return validate(raw, lines, source)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def derive_seed(global_seed, label):
    """Deterministic 32-bit sub-seed for a named pipeline stage."""
    h = hashlib.sha256(f"{global_seed}:{label}".encode()).digest()
    return int.from_bytes(h[:4], "little")
