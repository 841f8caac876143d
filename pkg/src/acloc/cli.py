"""Command-line surface tying the pipeline together.

Exit codes: 0 success, 2 config error, 3 data validation error, 4 numeric
failure. Every failure prints a single machine-parsable line to stderr.
Each command echoes its effective configuration next to its outputs.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import evaluate as ev
from . import localize as loc
from . import model as mdl
from . import plots, synth, temporal
from .concepts import load_label_lexicon, load_pos_lexicon
from .data import load_embedding_table, load_manifest
from .errors import AclocError, ConfigError
from .nn import grad_check


def _fail(exc: AclocError) -> None:
    click.echo(f"error[{exc.kind}]: {exc}", err=True)
    sys.exit(exc.exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except AclocError as exc:
            _fail(exc)
    return wrapper


def _echo_config(out_path, command: str, config: dict) -> None:
    """Serialize the effective configuration next to an output for provenance."""
    target = str(out_path) + ".config.json"
    with open(target, "w", encoding="utf-8") as fh:
        json.dump({"command": command, "config": config}, fh, indent=1,
                  sort_keys=True)
        fh.write("\n")


def _merge_config(defaults: dict, config_path, overrides: dict) -> dict:
    """Precedence: flags > config file > built-in defaults. Unknown keys in
    the config file are rejected."""
    merged = dict(defaults)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        unknown = set(raw) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(raw)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _parse_ints(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} from {text!r}") from exc


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} from {text!r}") from exc


def _sibling(manifest_path: str, name: str, explicit: str | None) -> str:
    return explicit if explicit else os.path.join(os.path.dirname(manifest_path), name)


def _train_config(config_file, **overrides) -> mdl.TrainConfig:
    defaults = {
        "batch_size": 28, "beta": 0.01, "gamma": 1.0, "lr": 0.005,
        "epochs": 10, "seed": 0, "d_t": 1024, "d_a": 256, "hidden": 1000,
        "sentence_dim": 4800, "pos_tiou": 0.5, "neg_tiou": 0.3,
        "scales": "64,128,256,512", "overlap": 0.75, "ctx_units": 8,
    }
    merged = _merge_config(defaults, config_file, overrides)
    if isinstance(merged["scales"], str):
        merged["scales"] = _parse_ints(merged["scales"], "scales")
    else:
        merged["scales"] = tuple(int(s) for s in merged["scales"])
    cfg = mdl.TrainConfig(**merged)
    cfg.validate()
    return cfg


def _write_log(rows, header: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


@click.group()
def main():
    """Language-driven temporal localization on precomputed unit features."""


@main.command("synth")
@click.option("--config", "config_file", type=str, default=None,
              help="JSON file of generator settings.")
@click.option("--out", "out_dir", type=str, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--num-videos", type=int, default=None)
@click.option("--classes", "num_classes", type=int, default=None)
@click.option("--sigma-f", type=float, default=None)
@click.option("--vo-coverage", type=float, default=None)
@handle_errors
def synth_cmd(config_file, out_dir, **overrides):
    """Generate a synthetic benchmark dataset."""
    defaults = synth.SynthConfig().to_json()
    merged = _merge_config(defaults, config_file, overrides)
    cfg = synth.SynthConfig.from_json(merged)
    manifest = synth.generate(cfg, out_dir)
    click.echo(f"wrote {len(manifest.videos)} videos, {len(manifest.queries)} "
               f"queries under {out_dir}")


@main.command("train-actionness")
@click.option("--data", "data_path", type=str, required=True)
@click.option("--out", "out_path", type=str, required=True)
@click.option("--log", "log_path", type=str, default=None)
@click.option("--config", "config_file", type=str, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--pos-tiou", type=float, default=None)
@click.option("--neg-tiou", type=float, default=None)
@click.option("--scales", type=str, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--ctx-units", type=int, default=None)
@click.option("--figures/--no-figures", default=True)
@handle_errors
def train_actionness_cmd(data_path, out_path, log_path, config_file, figures,
                         **overrides):
    """Train the actionness score generator."""
    cfg = _train_config(config_file, **overrides)
    manifest = load_manifest(data_path)
    params, log = mdl.train_actionness(manifest, cfg)
    mdl.save_actionness(params, out_path)
    log_path = log_path or out_path + ".log.csv"
    _write_log(log, "step,loss", log_path)
    if figures:
        plots.save_loss_figure(log, out_path + ".loss.png")
    _echo_config(out_path, "train-actionness", {**cfg.__dict__, "data": data_path})
    click.echo(f"trained actionness on {len(log)} steps -> {out_path}")


@main.command("train-acl")
@click.option("--data", "data_path", type=str, required=True)
@click.option("--variant", type=click.Choice([v.value for v in mdl.Variant]),
              default="full")
@click.option("--out", "out_path", type=str, required=True)
@click.option("--log", "log_path", type=str, default=None)
@click.option("--embeddings", type=str, default=None,
              help="Word embedding table; defaults to embeddings.txt next to the manifest.")
@click.option("--pos-lexicon", type=str, default=None,
              help="POS lexicon; defaults to pos_lexicon.txt next to the manifest.")
@click.option("--config", "config_file", type=str, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--d-t", type=int, default=None)
@click.option("--d-a", type=int, default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--sentence-dim", type=int, default=None)
@click.option("--pos-tiou", type=float, default=None)
@click.option("--scales", type=str, default=None)
@click.option("--overlap", type=float, default=None)
@click.option("--ctx-units", type=int, default=None)
@click.option("--figures/--no-figures", default=True)
@handle_errors
def train_acl_cmd(data_path, variant, out_path, log_path, embeddings,
                  pos_lexicon, config_file, figures, **overrides):
    """Train the activity-concept localizer."""
    cfg = _train_config(config_file, **overrides)
    manifest = load_manifest(data_path)
    table = load_embedding_table(_sibling(data_path, "embeddings.txt", embeddings))
    lexicon = load_pos_lexicon(_sibling(data_path, "pos_lexicon.txt", pos_lexicon))
    n_samples = len(temporal.collect_training_samples(
        manifest, cfg.scales, cfg.overlap, cfg.pos_tiou, cfg.ctx_units))
    click.echo(f"collected {n_samples} aligned training samples")
    params, log = mdl.train_acl(manifest, table, lexicon, cfg,
                                mdl.Variant(variant))
    mdl.save_localizer(params, out_path)
    log_path = log_path or out_path + ".log.csv"
    _write_log(log, "step,l_aln,l_rgr,l_loc", log_path)
    if figures:
        plots.save_loss_figure(log, out_path + ".loss.png")
    _echo_config(out_path, "train-acl",
                 {**cfg.__dict__, "variant": variant, "data": data_path})
    click.echo(f"trained {variant} localizer on {len(log)} steps -> {out_path}")


@main.command("localize")
@click.option("--data", "data_path", type=str, required=True)
@click.option("--acl", "acl_path", type=str, required=True)
@click.option("--actionness", "actionness_path", type=str, default=None)
@click.option("--mode", type=click.Choice([m.value for m in loc.Mode]),
              default="swin-score")
@click.option("--late-fusion", "theta", type=float, default=None,
              help="Enable label late fusion with this similarity threshold.")
@click.option("--labels", "labels_path", type=str, default=None)
@click.option("--embeddings", type=str, default=None)
@click.option("--pos-lexicon", type=str, default=None)
@click.option("--out", "out_path", type=str, required=True)
@click.option("--window-lengths", type=str, default="128,256")
@click.option("--overlap", type=float, default=0.75)
@click.option("--ctx-units", type=int, default=8)
@handle_errors
def localize_cmd(data_path, acl_path, actionness_path, mode, theta,
                 labels_path, embeddings, pos_lexicon, out_path,
                 window_lengths, overlap, ctx_units):
    """Score, fuse, refine and rank candidate windows for every query."""
    manifest = load_manifest(data_path)
    acl = mdl.load_localizer(acl_path)
    actionness = mdl.load_actionness(actionness_path) if actionness_path else None
    table = load_embedding_table(_sibling(data_path, "embeddings.txt", embeddings))
    lexicon = load_pos_lexicon(_sibling(data_path, "pos_lexicon.txt", pos_lexicon))
    fusion = None
    if theta is not None:
        label_lex = load_label_lexicon(
            _sibling(data_path, "labels.txt", labels_path), table)
        fusion = loc.LateFusion(label_lex, table, theta)
    lengths = _parse_ints(window_lengths, "window lengths")
    preds = loc.score_all(manifest, acl, actionness, table, lexicon,
                          loc.Mode(mode), lengths, overlap, ctx_units, fusion)
    loc.write_predictions_csv(preds, manifest.fps, out_path)
    _echo_config(out_path, "localize", {
        "data": data_path, "acl": acl_path, "actionness": actionness_path,
        "mode": mode, "late_fusion": theta, "window_lengths": list(lengths),
        "overlap": overlap, "ctx_units": ctx_units,
    })
    click.echo(f"wrote predictions for {len(preds)} queries -> {out_path}")


@main.command("evaluate")
@click.option("--pred", "pred_path", type=str, required=True)
@click.option("--data", "data_path", type=str, required=True)
@click.option("--out", "out_path", type=str, required=True)
@click.option("--layout", type=click.Choice(sorted(ev.LAYOUTS)), default="charades")
@click.option("--method", type=str, default="model")
@click.option("--arf", "arf_path", type=str, default=None,
              help="Also write the AR-F data file (needs --actionness).")
@click.option("--actionness", "actionness_path", type=str, default=None)
@click.option("--arf-frequencies", type=str, default="0.02,0.05,0.1,0.2,0.3,0.5")
@click.option("--arf-iou", type=float, default=0.5)
@click.option("--window-lengths", type=str, default="128,256")
@click.option("--overlap", type=float, default=0.75)
@click.option("--ctx-units", type=int, default=8)
@click.option("--figures/--no-figures", default=True)
@handle_errors
def evaluate_cmd(pred_path, data_path, out_path, layout, method, arf_path,
                 actionness_path, arf_frequencies, arf_iou, window_lengths,
                 overlap, ctx_units, figures):
    """Compute R@n,IoU=m from a prediction file (and optionally AR-F)."""
    manifest = load_manifest(data_path)
    preds = loc.read_predictions_csv(pred_path)
    gt = {q.id: (q.start_sec, q.end_sec) for q in manifest.queries}
    report = ev.compute_report(preds, gt, method=method)
    ev.emit_report(report, out_path, layout=layout)
    if figures:
        plots.save_report_figure(report, out_path + ".png", layout=layout)
    for label, key in ev.LAYOUTS[layout]:
        click.echo(f"{method} {label} = {report.recalls[key]:.4f}")
    if arf_path:
        if not actionness_path:
            raise ConfigError("--arf needs --actionness to rank windows")
        curve = _arf_curve(manifest, actionness_path,
                           _parse_ints(window_lengths, "window lengths"),
                           overlap, ctx_units,
                           _parse_floats(arf_frequencies, "frequencies"),
                           arf_iou)
        ev.emit_arf(curve, arf_path)
        if figures:
            plots.save_arf_figure({"swin-score": curve}, arf_path + ".png",
                                  arf_iou)
        click.echo(f"wrote AR-F curve -> {arf_path}")
    _echo_config(out_path, "evaluate", {
        "pred": pred_path, "data": data_path, "layout": layout,
        "method": method, "arf": arf_path,
    })


def _arf_curve(manifest, actionness_path, lengths, overlap, ctx_units,
               frequencies, iou_thresh):
    from .data import load_video_features
    actionness = mdl.load_actionness(actionness_path)
    uf = manifest.unit_frames
    ranked = {}
    durations = {}
    gt_by_video: dict[str, list] = {v.id: [] for v in manifest.videos}
    for q in manifest.queries:
        gt_by_video[q.video_id].append(
            temporal.Interval.from_seconds(q.start_sec, q.end_sec, manifest.fps))
    for video in manifest.videos:
        durations[video.id] = video.duration_sec
        windows = temporal.sliding_windows(video.id, video.num_units, lengths,
                                           overlap, uf, ctx_units)
        feats = load_video_features(manifest, video)
        X = np.array([temporal.clip_feature(feats, w) for w in windows])
        eta = mdl.actionness_scores(actionness, X)
        order = sorted(range(len(windows)),
                       key=lambda i: (-eta[i], windows[i].start_unit))
        ranked[video.id] = [windows[i].to_interval(uf) for i in order]
    return ev.ar_f(ranked, gt_by_video, durations, frequencies, iou_thresh)


@main.command("gradcheck")
@click.option("--variant", type=click.Choice([v.value for v in mdl.Variant]),
              default="full")
@click.option("--d-v", type=int, default=20)
@click.option("--sentence-dim", type=int, default=48)
@click.option("--concept-dim", type=int, default=6)
@click.option("--vo-dim", type=int, default=600)
@click.option("--d-t", type=int, default=32)
@click.option("--d-a", type=int, default=16)
@click.option("--hidden", type=int, default=32)
@click.option("--batch", type=int, default=4)
@click.option("--gamma", type=float, default=1.0)
@click.option("--beta", type=float, default=0.01)
@click.option("--seed", type=int, default=0)
@click.option("--eps", type=float, default=1e-5)
@click.option("--tol", type=float, default=1e-4)
@click.option("--max-coords", type=int, default=150,
              help="Sampled coordinates per tensor.")
@handle_errors
def gradcheck_cmd(variant, d_v, sentence_dim, concept_dim, vo_dim, d_t, d_a,
                  hidden, batch, gamma, beta, seed, eps, tol, max_coords):
    """Check the full-model analytic gradient against central differences."""
    err = run_gradcheck(mdl.Variant(variant), d_v, sentence_dim, concept_dim,
                        vo_dim, d_t, d_a, hidden, batch, gamma, beta, seed,
                        eps, max_coords)
    click.echo(f"max_rel_err={err:.6e} tol={tol:.1e}")
    if err >= tol:
        click.echo(f"error[numeric]: gradient check failed: {err:.3e} >= {tol:.1e}",
                   err=True)
        sys.exit(4)


def run_gradcheck(variant: mdl.Variant, d_v: int = 20, sentence_dim: int = 48,
                  concept_dim: int = 6, vo_dim: int = 600, d_t: int = 32,
                  d_a: int = 16, hidden: int = 32, batch: int = 4,
                  gamma: float = 1.0, beta: float = 0.01, seed: int = 0,
                  eps: float = 1e-5, max_coords: int | None = 150) -> float:
    """Gradient check of the multi-task loss on one random batch."""
    rng = np.random.default_rng(seed)
    params = mdl.LocalizerParams.create(
        variant, 3 * d_v, sentence_dim, concept_dim, vo_dim, d_t, d_a,
        hidden, rng)
    V = rng.standard_normal((batch, 3 * d_v))
    S = rng.standard_normal((batch, sentence_dim))
    C = rng.standard_normal((batch, concept_dim))
    Q = rng.standard_normal((batch, vo_dim))
    t_s = rng.standard_normal(batch)
    t_e = rng.standard_normal(batch)
    diag = np.arange(batch)

    def loss_and_grads():
        delta, off_s, off_e, cache = mdl.forward_cross(params, V, S, C, Q)
        p_s, p_e = off_s[diag, diag], off_e[diag, diag]
        loss = mdl.alignment_loss(delta, gamma) + beta * mdl.regression_loss(
            p_s, p_e, t_s, t_e)
        d_delta = mdl.alignment_loss_grad(delta, gamma)
        g_s, g_e = mdl.regression_loss_grad(p_s, p_e, t_s, t_e)
        d_off_s = np.zeros_like(off_s)
        d_off_e = np.zeros_like(off_e)
        d_off_s[diag, diag] = beta * g_s
        d_off_e[diag, diag] = beta * g_e
        grads = mdl.backward_cross(params, cache, d_delta, d_off_s, d_off_e)
        return loss, grads

    return grad_check(loss_and_grads, params.named(), eps=eps,
                      max_coords_per_tensor=max_coords,
                      rng=np.random.default_rng(seed + 1))


if __name__ == "__main__":
    main()
