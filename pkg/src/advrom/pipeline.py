"""Pipeline stages, in memory and as file-producing commands.

The in-memory functions (``synthesize``, ``fit_rom_stage``, ...) take plain
objects and a validated config dict.  The ``cmd_*`` functions wrap them with
the on-disk layout below; every stage directory gets a ``manifest.json``::

    <out>/data/snapshots.romsnap
    <out>/rom/pca.rompca  truncation_mae.csv  scores.csv
    <out>/aae/aae.romnn  log.csv  latent.csv
    <out>/forecaster_<mode>/model.romnn  log.csv
    <out>/eval/curve_h<H>_<name>.csv  comparison_h<H>.json
    <out>/fig2/top_per_step.csv  top_summary.csv  bottom_h<H>_<name>.csv  bottom_h<H>.json
"""
import csv
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import rom
from .alstm import MODES, ForecasterConfig, load_forecaster, make_windows, save_forecaster
from .alstm import split_windows, train_forecaster, validation_mse
from .config import config_hash, derive_seed
from .errors import MissingArtifactError
from .forecast import compare_report, decode_to_physical, ensemble_evaluate, reconstruction_curve
from .pcaae import AAEConfig, load_aae, save_aae, train_aae
from .snapshots import (LatentSeries, SnapshotMatrix, SyntheticFlowConfig, generate_synthetic_flow,
                        lag1_autocorrelation, load_snapshots, save_snapshots)

log = logging.getLogger("advrom")

SNAPSHOT_FILE = os.path.join("data", "snapshots.romsnap")
PCA_FILE = os.path.join("rom", "pca.rompca")
AAE_FILE = os.path.join("aae", "aae.romnn")


def forecaster_file(mode):
    return os.path.join(f"forecaster_{mode}", "model.romnn")


def stage_seeds(cfg):
    g = cfg["seed"]
    data_seed = cfg["data"]["seed"]
    return {
        "global": g,
        "data": derive_seed(g, "data") if data_seed is None else data_seed,
        "aae": derive_seed(g, "aae"),
        # one seed for both modes: identical generator initialisation
        "forecaster": derive_seed(g, "forecaster"),
    }


def n_train_rows(cfg, n):
    return int(round(cfg["data"]["train_fraction"] * n))


# ---------------------------------------------------------------- in memory

def synthesize(cfg):
    d = cfg["data"]
    flow = SyntheticFlowConfig(grid_nx=d["grid_nx"], grid_ny=d["grid_ny"], n_steps=d["n_steps"],
                               n_modes=d["n_modes"], seed=stage_seeds(cfg)["data"],
                               noise_amplitude=d["noise_amplitude"], dt=d["dt"],
                               period_steps=d["period_steps"])
    return generate_synthetic_flow(flow)


@dataclass
class RomStage:
    pca: rom.PCAModel
    scaling: rom.ScalingParams
    n_train: int

    @property
    def k(self):
        """Number of PCs fed to the autoencoder."""
        return len(self.scaling)

    def scaled_scores(self, x):
        data = x.data if isinstance(x, SnapshotMatrix) else x
        return rom.scale(rom.project(self.pca, data, self.k), self.scaling)


def effective_rank(singular_values, rank_tol):
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def fit_rom_stage(x: SnapshotMatrix, cfg):
    n_train = n_train_rows(cfg, x.n)
    pca = rom.fit_pca(x.data[:n_train])
    k = effective_rank(pca.singular_values, cfg["rom"]["rank_tol"])
    scaling = rom.fit_scaling(pca.scores[:, :k])
    return RomStage(pca, scaling, n_train)


def truncation_table(stage: RomStage, x: SnapshotMatrix, taus):
    """Rows of (tau, train MAE, held-out MAE, residual^2, discarded sigma^2)."""
    train, held = x.data[:stage.n_train], x.data[stage.n_train:]
    s2 = stage.pca.singular_values ** 2
    rows = []
    for tau in taus:
        tau = min(tau, stage.pca.r)
        approx = rom.reconstruct_array(stage.pca, stage.pca.scores[:, :tau], tau)
        resid = float(np.sum((train - approx) ** 2))
        held_mae = rom.truncation_error(stage.pca, held, tau) if len(held) else float("nan")
        rows.append((tau, rom.truncation_error(stage.pca, train, tau), held_mae, resid,
                     float(np.sum(s2[tau:]))))
    return rows


def aae_config(cfg, stage: RomStage, latent_dim=None):
    a = cfg["aae"]
    return AAEConfig(input_dim=stage.k, latent_dim=latent_dim or a["latent_dim"],
                     batch_size=a["batch_size"], epochs=a["epochs"], seed=stage_seeds(cfg)["aae"],
                     lambda_rec=a["lambda_rec"], lr=a["lr"])


def train_aae_stage(cfg, stage: RomStage, latent_dim=None, progress=None):
    P = rom.scale(stage.pca.scores[:, :stage.k], stage.scaling)
    return train_aae(aae_config(cfg, stage, latent_dim), P, progress)


def aae_reconstruction(aae, stage: RomStage, x):
    """Physical reconstruction of every row through encoder mean and decoder."""
    p = aae.reconstruct(stage.scaled_scores(x))
    return rom.unscale(p, stage.scaling) @ stage.pca.eofs[:stage.k] + stage.pca.mean


def encode_series(aae, stage: RomStage, x: SnapshotMatrix):
    """Posterior-mean latents for every row of ``x``."""
    mu, _ = aae.encode(stage.scaled_scores(x))
    return LatentSeries(mu, dt=x.dt, scaling=stage.scaling)


def forecaster_config(cfg, latent_dim, mode):
    f = cfg["forecaster"]
    return ForecasterConfig(latent_dim=latent_dim, time_lag=f["time_lag"], hidden=f["hidden"],
                            disc_hidden=f["disc_hidden"], mode=mode,
                            disc_context=f["disc_context"], batch_size=f["batch_size"],
                            epochs=f["epochs"], seed=stage_seeds(cfg)["forecaster"],
                            dropout=f["dropout"], lambda_rec=f["lambda_rec"],
                            val_fraction=f["val_fraction"], lr=f["lr"])


def train_forecaster_stage(cfg, z: LatentSeries, n_train, mode, progress=None):
    """Windows come from the training rows only."""
    fcfg = forecaster_config(cfg, z.dim, mode)
    windows = make_windows(z.values[:n_train], fcfg.time_lag)
    model, tlog = train_forecaster(fcfg, windows, progress)
    _, val = split_windows(windows, fcfg.val_fraction)
    val_mse = validation_mse(model, val) if len(val) else float("nan")
    return model, tlog, val_mse


def evaluation_starts(cfg):
    e = cfg["evaluation"]
    return range(e["start_first"], e["start_first"] + e["n_starts"])


def evaluation_horizons(cfg):
    e = cfg["evaluation"]
    return [e["horizon"]] + [h for h in e["extra_horizons"] if h != e["horizon"]]


def evaluate_stage(cfg, models, aae, stage: RomStage, x, z, H, metadata=None):
    """Curves for each model plus the reconstruction floor, and their comparison."""
    decode = partial(decode_to_physical, aae, stage.pca, stage.scaling)
    N = cfg["forecaster"]["time_lag"]
    starts = evaluation_starts(cfg)
    curves = ensemble_evaluate(models, z, x, starts, H, decode, N)
    floor = reconstruction_curve(z, x, starts, H, decode, N)
    report = compare_report(curves, reference=floor,
                            factor=cfg["evaluation"]["divergence_factor"], metadata=metadata)
    return curves, floor, report


# ------------------------------------------------------------------ on disk

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dir(cfg, name):
    d = os.path.join(cfg["output"], name)
    os.makedirs(d, exist_ok=True)
    return d


def _require(cfg, rel, command):
    path = os.path.join(cfg["output"], rel)
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing {path}; run `advrom {command}` with the same "
                                   "config and output directory first")
    return path


def write_manifest(directory, command, cfg, inputs=(), extra=None):
    """Record config, seeds and hashes of every file in ``directory`` (no timestamps)."""
    artifacts = {}
    for name in sorted(os.listdir(directory)):
        p = os.path.join(directory, name)
        if name != "manifest.json" and os.path.isfile(p):
            artifacts[name] = sha256_file(p)
    manifest = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seeds": stage_seeds(cfg),
        "inputs": {os.path.relpath(p, cfg["output"]): sha256_file(p) for p in inputs},
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, str)) else repr(float(v)) for v in row])


def _progress(label, every=100):
    def report(epoch, row):
        if (epoch + 1) % every == 0:
            log.info("%s epoch %d: %s", label, epoch + 1,
                     ", ".join(f"{v:.4g}" for v in row[1:]))
    return report


def cmd_gen_data(cfg):
    d = _dir(cfg, "data")
    inputs = []
    if cfg["data"]["path"] is not None:
        x = load_snapshots(cfg["data"]["path"])
        inputs = [cfg["data"]["path"]]
        source = "file"
    else:
        x = synthesize(cfg)
        source = "synthetic"
    out = os.path.join(d, "snapshots.romsnap")
    save_snapshots(x, out)
    log.info("wrote %s (%d x %d)", out, x.n, x.m)
    write_manifest(d, "gen-data", cfg, inputs=inputs,
                   extra={"source": source, "n": x.n, "m": x.m,
                          "lag1_autocorrelation": lag1_autocorrelation(x)})
    return out


def _load_data(cfg, command):
    return load_snapshots(_require(cfg, SNAPSHOT_FILE, command))


def _load_rom(cfg, x, command="fit-rom"):
    path = _require(cfg, PCA_FILE, command)
    pca, scaling = rom.load_pca(path)
    return RomStage(pca, scaling, n_train_rows(cfg, x.n))


def cmd_fit_rom(cfg):
    src = _require(cfg, SNAPSHOT_FILE, "gen-data")
    x = load_snapshots(src)
    stage = fit_rom_stage(x, cfg)
    d = _dir(cfg, "rom")
    rom.save_pca(stage.pca, os.path.join(d, "pca.rompca"), stage.scaling)
    _write_rows(os.path.join(d, "truncation_mae.csv"),
                ["tau", "train_mae", "heldout_mae", "residual_sq", "discarded_sigma_sq"],
                truncation_table(stage, x, cfg["rom"]["tau_grid"]))
    rom.export_scores_csv(stage.pca.scores[:, :stage.k], os.path.join(d, "scores.csv"), x.dt)
    log.info("PCA rank %d, %d PCs above rank_tol", stage.pca.r, stage.k)
    write_manifest(d, "fit-rom", cfg, inputs=[src],
                   extra={"rank": stage.pca.r, "aae_input_pcs": stage.k,
                          "n_train": stage.n_train})
    return stage


def cmd_train_aae(cfg):
    x = _load_data(cfg, "gen-data")
    stage = _load_rom(cfg, x)
    aae, tlog = train_aae_stage(cfg, stage, progress=_progress("aae"))
    d = _dir(cfg, "aae")
    save_aae(aae, os.path.join(d, "aae.romnn"))
    tlog.to_csv(os.path.join(d, "log.csv"))
    encode_series(aae, stage, x).to_csv(os.path.join(d, "latent.csv"))
    rec = aae_reconstruction(aae, stage, x)
    held = slice(stage.n_train, None)
    write_manifest(d, "train-aae", cfg,
                   inputs=[os.path.join(cfg["output"], SNAPSHOT_FILE),
                           os.path.join(cfg["output"], PCA_FILE)],
                   extra={"train_mae": float(np.mean(np.abs(rec[:stage.n_train]
                                                            - x.data[:stage.n_train]))),
                          "heldout_mae": float(np.mean(np.abs(rec[held] - x.data[held])))})
    return aae


def _load_aae(cfg):
    return load_aae(_require(cfg, AAE_FILE, "train-aae"))


def cmd_train_forecaster(cfg, mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    x = _load_data(cfg, "gen-data")
    stage = _load_rom(cfg, x)
    aae = _load_aae(cfg)
    z = encode_series(aae, stage, x)
    model, tlog, val_mse = train_forecaster_stage(cfg, z, stage.n_train, mode,
                                                  _progress(f"forecaster[{mode}]"))
    d = _dir(cfg, f"forecaster_{mode}")
    save_forecaster(model, os.path.join(d, "model.romnn"))
    tlog.to_csv(os.path.join(d, "log.csv"))
    log.info("forecaster[%s] validation mse %.4g", mode, val_mse)
    write_manifest(d, "train-forecaster", cfg,
                   inputs=[os.path.join(cfg["output"], p) for p in (SNAPSHOT_FILE, PCA_FILE,
                                                                    AAE_FILE)],
                   extra={"mode": mode, "validation_mse": float(val_mse)})
    return model


def _evaluate_into(cfg, d, curve_prefix, report_prefix):
    x = _load_data(cfg, "gen-data")
    stage = _load_rom(cfg, x)
    aae = _load_aae(cfg)
    models = {}
    for mode in MODES:
        path = _require(cfg, forecaster_file(mode), f"train-forecaster --mode {mode}")
        models[mode] = load_forecaster(path)
    z = encode_series(aae, stage, x)
    meta = {"config_hash": config_hash(cfg), "seeds": stage_seeds(cfg),
            "starts": [min(evaluation_starts(cfg)), max(evaluation_starts(cfg))]}
    summary = {}
    for H in evaluation_horizons(cfg):
        curves, floor, report = evaluate_stage(cfg, models, aae, stage, x, z, H, meta)
        for name, curve in list(curves.items()) + [("reconstruction", floor)]:
            curve.to_csv(os.path.join(d, f"{curve_prefix}h{H}_{name}.csv"))
        report.to_json(os.path.join(d, f"{report_prefix}h{H}.json"))
        summary[H] = report
        log.info("H=%d mean MAE %s, divergence step %s, winner %s", H,
                 {k: round(v, 4) for k, v in report.mean_at_horizon.items()},
                 report.divergence_step, report.winner_at_horizon)
    inputs = [os.path.join(cfg["output"], p) for p in (SNAPSHOT_FILE, PCA_FILE, AAE_FILE)]
    inputs += [os.path.join(cfg["output"], forecaster_file(m)) for m in MODES]
    return summary, inputs


def cmd_evaluate(cfg):
    d = _dir(cfg, "eval")
    summary, inputs = _evaluate_into(cfg, d, "curve_", "comparison_")
    write_manifest(d, "evaluate", cfg, inputs=inputs)
    return summary


def fig2_top(cfg, stage: RomStage, x, progress=None):
    """Per-row MAE of PCA truncation and of an AAE with latent size tau, per tau.

    An AAE needs fewer latent dimensions than input PCs; other taus get NaN
    columns and a ``skipped`` status.
    """
    per_row, summary = {}, []
    held = slice(stage.n_train, None)
    train = slice(0, stage.n_train)
    for tau in cfg["rom"]["tau_grid"]:
        t = min(tau, stage.pca.r)
        approx = rom.reconstruct_array(stage.pca, rom.project(stage.pca, x.data, t), t)
        pca_err = np.abs(approx - x.data).mean(axis=1)
        if tau < stage.k:
            aae, _ = train_aae_stage(cfg, stage, latent_dim=tau, progress=progress)
            aae_err = np.abs(aae_reconstruction(aae, stage, x) - x.data).mean(axis=1)
            status = "trained"
        else:
            aae_err = np.full(x.n, np.nan)
            status = f"skipped: latent {tau} >= {stage.k} input PCs"
        per_row[tau] = (pca_err, aae_err)
        summary.append((tau, pca_err[train].mean(), pca_err[held].mean(),
                        aae_err[train].mean(), aae_err[held].mean(), status))
    return per_row, summary


def cmd_reproduce_fig2(cfg):
    x = _load_data(cfg, "gen-data")
    stage = _load_rom(cfg, x)
    d = _dir(cfg, "fig2")
    per_row, summary = fig2_top(cfg, stage, x, _progress("fig2 aae"))
    taus = list(per_row)
    header = ["t", "split"]
    for tau in taus:
        header += [f"pca_tau{tau}", f"aae_tau{tau}"]
    rows = []
    for i in range(x.n):
        row = [repr(float(x.times[i])), "train" if i < stage.n_train else "heldout"]
        for tau in taus:
            row += [per_row[tau][0][i], per_row[tau][1][i]]
        rows.append(row)
    _write_rows(os.path.join(d, "top_per_step.csv"), header, rows)
    _write_rows(os.path.join(d, "top_summary.csv"),
                ["tau", "pca_train_mae", "pca_heldout_mae", "aae_train_mae", "aae_heldout_mae",
                 "aae_status"], summary)
    _, inputs = _evaluate_into(cfg, d, "bottom_", "bottom_")
    write_manifest(d, "reproduce-fig2", cfg, inputs=inputs)
    return summary
