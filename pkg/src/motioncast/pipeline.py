"""Experiment wiring shared by the CLI and tests: corpus loading, split and
window preparation, and the train / finetune / eval / compare stages with
their on-disk artifacts.
"""

import os

import numpy as np

from . import evaluate as ev
from .config import ExperimentConfig
from .data import (
    denormalize_array,
    fit_stats,
    load_sequences,
    normalize_array,
    split_cross_subject,
    window_sequences,
    windows_to_arrays,
)
from .errors import ConfigError
from .finetune import train_phase2
from .model import ModelParams, load_checkpoint, save_checkpoint
from .synth import synth_generate
from .training import TrainData, train_phase1, write_log_csv


def load_corpus(config):
    """Sequences plus skeleton per the config's data source."""
    tree = config.skeleton()
    if config.data["csv"] is not None:
        seqs = load_sequences(config.data["csv"], skeleton=tree)
    else:
        seqs = synth_generate(config.synth_spec(), tree=tree)
    return seqs, tree


def phase1_windows(config, splits):
    tau, horizon = config.data["tau"], config.data["horizon"]
    stride = config.data["train_stride"]
    train_w = window_sequences(splits.phase1_train, tau, horizon, stride)
    val_w = window_sequences(splits.phase1_val, tau, horizon, stride)
    if not train_w or not val_w:
        raise ConfigError(
            "phase-1 sequences too short for the configured tau/horizon"
        )
    return train_w, val_w


def _normalized_arrays(windows, stats):
    obs, tgt = windows_to_arrays(windows)
    return normalize_array(obs, stats), normalize_array(tgt, stats)


def run_train(config, out_dir):
    """Full phase 1: corpus -> splits -> stats -> training -> artifacts."""
    seqs, tree = load_corpus(config)
    splits = split_cross_subject(seqs, config.data["val_fraction"], config.seed)
    train_w, val_w = phase1_windows(config, splits)
    stats = fit_stats(train_w)
    train_obs, train_tgt = _normalized_arrays(train_w, stats)
    val_obs, val_tgt = _normalized_arrays(val_w, stats)

    n_activities = len({s.activity_id for s in seqs})
    hyper = config.hyper(tree, n_activities)
    params = ModelParams.init(hyper, seed=config.seed)
    result = train_phase1(
        TrainData(train_obs, train_tgt, val_obs, val_tgt), params, config.train_config()
    )

    ckpt = os.path.join(out_dir, "checkpoint_phase1.json")
    save_checkpoint(ckpt, result.params, stats)
    write_log_csv(os.path.join(out_dir, "train_log.csv"), result.log_rows)
    config.save(os.path.join(out_dir, "config_snapshot.json"))
    return result, ckpt


def run_finetune(config, out_dir, checkpoint_path, subject=None):
    """Phase 2 for one held-out subject starting from a phase-1 checkpoint."""
    params, stats = load_checkpoint(checkpoint_path)
    if stats is None:
        raise ConfigError("checkpoint carries no normalization stats")
    seqs, _ = load_corpus(config)
    splits = split_cross_subject(seqs, config.data["val_fraction"], config.seed)
    if subject is None:
        subject = config.finetune["subject"]
    if subject is None:
        subject = sorted(splits.phase2_pool)[0]
    if subject not in splits.phase2_pool:
        raise ConfigError(
            f"subject {subject} not in phase-2 pool {sorted(splits.phase2_pool)}"
        )
    ft_windows = window_sequences(
        splits.phase2_pool[subject].finetune,
        config.data["tau"],
        config.data["horizon"],
        config.data["train_stride"],
    )
    if not ft_windows:
        raise ConfigError("fine-tune trial too short for tau/horizon")
    obs, tgt = _normalized_arrays(ft_windows, stats)
    result = train_phase2(
        params,
        obs,
        tgt,
        config.finetune_config(),
        phase1_lr=config.train_config().learning_rate,
        mask=config.freeze_mask(),
    )
    ckpt = os.path.join(out_dir, f"checkpoint_phase2_s{subject}.json")
    save_checkpoint(ckpt, result.params, stats)
    write_log_csv(os.path.join(out_dir, f"finetune_log_s{subject}.csv"), result.log_rows)
    return result, ckpt, subject


def test_windows_for(config, splits, subject):
    return window_sequences(
        splits.phase2_pool[subject].test,
        config.data["tau"],
        config.data["horizon"],
        config.data["eval_stride"],
    )


def run_eval(config, out_dir, method, checkpoint_path=None, subjects=None):
    """Evaluate one method over phase-2 test trials; writes report + curves
    CSVs and the per-frame figure alongside."""
    from .plots import plot_report_curves

    params = stats = None
    if checkpoint_path is not None:
        params, stats = load_checkpoint(checkpoint_path)
        if stats is None:
            raise ConfigError("checkpoint carries no normalization stats")
    seqs, tree = load_corpus(config)
    splits = split_cross_subject(seqs, config.data["val_fraction"], config.seed)
    if subjects is None:
        subjects = sorted(splits.phase2_pool)
    reports = []
    for subject in subjects:
        if subject not in splits.phase2_pool:
            raise ConfigError(f"subject {subject} not in phase-2 pool")
        windows = test_windows_for(config, splits, subject)
        if not windows:
            raise ConfigError(f"no evaluation windows for subject {subject}")
        reports.append(
            ev.evaluate(
                windows,
                config.eval["frame_indices"],
                method,
                params=params,
                stats=stats,
                seed=config.seed,
                per_coord=config.eval["per_coord"],
                joints=tree.n_joints,
            )
        )
    report_path = os.path.join(out_dir, f"report_{method}.csv")
    ev.write_report_csv(report_path, reports)
    for rep in reports:
        ev.write_curve_csv(
            os.path.join(out_dir, f"curves_{method}_s{rep.subject}.csv"), [rep]
        )
    plot_report_curves(reports, os.path.join(out_dir, f"report_{method}.png"))
    return reports, report_path


def run_compare(out_dir, report_paths):
    """Merge per-method reports into the comparison table + figure."""
    from .plots import plot_report_curves

    reports = []
    for path in report_paths:
        reports.extend(ev.load_report(path))
    table = ev.compare_table(reports)
    text_path = os.path.join(out_dir, "comparison.txt")
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(table.text)
    best = {k: v for k, v in table.best.items()}
    ev.write_report_csv(os.path.join(out_dir, "comparison.csv"), reports, extra_best=best)
    plot_report_curves(reports, os.path.join(out_dir, "comparison.png"))
    return table


def run_predict(config, out_dir, checkpoint_path, subject, activity, trial, start):
    """Predict one window and emit the poses as CSV rows."""
    import csv

    params, stats = load_checkpoint(checkpoint_path)
    if stats is None:
        raise ConfigError("checkpoint carries no normalization stats")
    seqs, _ = load_corpus(config)
    matches = [
        s
        for s in seqs
        if s.subject_id == subject and s.activity_id == activity and s.trial_id == trial
    ]
    if not matches:
        raise ConfigError(f"no sequence for subject={subject} activity={activity} trial={trial}")
    seq = matches[0]
    tau, horizon = config.data["tau"], config.data["horizon"]
    if start < 0 or start + tau > seq.n_frames:
        raise ConfigError(
            f"start {start} leaves no {tau}-frame observation in a {seq.n_frames}-frame trial"
        )
    observed = seq.frames.reshape(seq.n_frames, -1)[start : start + tau]
    from .model import predict_sequence

    pred = denormalize_array(
        predict_sequence(normalize_array(observed, stats), params, horizon), stats
    )
    path = os.path.join(
        out_dir, f"predicted_s{subject}_a{activity}_t{trial}_f{start}.csv"
    )
    n_joints = pred.shape[1] // 3
    header = ["frame_offset"] + [f"{c}{j}" for j in range(1, n_joints + 1) for c in ("x", "y", "z")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(pred.shape[0]):
            writer.writerow([k + 1] + [repr(float(v)) for v in pred[k]])
    return np.asarray(pred), path
