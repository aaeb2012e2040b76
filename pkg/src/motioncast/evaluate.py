"""Pose-error metric in cm^2, the zero-velocity baseline, frame-interval
reports and the three-method comparison table.

The metric averages the squared L2 distance of each joint (summed over its
D coordinates) over joints and frames; an optional per-coordinate mode also
divides by D and is labeled in report method names.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import denormalize_array, normalize_array
from .errors import ConfigError
from .model import predict_sequence

DEFAULT_FRAME_INDICES = (2, 4, 8, 10, 13, 15)


def mse_metric(pred, truth, per_coord=False):
    """Eq.-style pose error: scalar plus per-frame vector.

    ``pred``/``truth`` are (T, J, D) arrays in cm. The per-frame entry is the
    joint-averaged squared L2 distance at that frame; the scalar averages the
    per-frame vector over frames. ``per_coord`` additionally divides by D.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ConfigError(f"mse_metric shapes differ: {pred.shape} vs {truth.shape}")
    if pred.ndim != 3:
        raise ConfigError(f"mse_metric expects (T, J, D), got {pred.shape}")
    sq = np.sum((pred - truth) ** 2, axis=2)  # (T, J) squared joint distances
    if per_coord:
        sq = sq / pred.shape[2]
    per_frame = sq.mean(axis=1)
    return float(per_frame.mean()), per_frame


def zero_velocity_baseline(window):
    """Repeat the last observed pose for every future frame, bit-exactly."""
    horizon = window.target.shape[0]
    last = window.observed[-1]
    return np.tile(last, (horizon, 1))


@dataclass
class EvalReport:
    """Per-subject, per-method error summary at selected frame offsets."""

    subject: int
    method: str
    frame_indices: list
    values: list  # cm^2 at each frame index
    curve: np.ndarray  # full per-frame vector, length H
    n_windows: int
    seed: int
    per_coord: bool = False

    def labeled_method(self):
        return f"{self.method}/percoord" if self.per_coord else self.method


def _predict_windows(windows, params, stats):
    """Model predictions for a window list, de-normalized back to cm."""
    obs = np.stack([normalize_array(w.observed, stats) for w in windows], axis=0)
    horizon = windows[0].target.shape[0]
    preds = predict_sequence(obs, params, horizon)
    return denormalize_array(preds, stats)


def evaluate(windows, frame_indices, method, params=None, stats=None, seed=0,
             per_coord=False, joints=None, dims=3):
    """Per-frame MSE averaged over windows, reported at ``frame_indices``.

    ``method`` is a label; when ``params`` is None the zero-velocity baseline
    is evaluated instead of the model. Frame indices are 1-based offsets into
    the predicted horizon. All windows must share one subject.
    """
    if not windows:
        raise ConfigError("evaluate needs at least one window")
    subjects = {w.subject_id for w in windows}
    if len(subjects) != 1:
        raise ConfigError(f"evaluate expects a single subject, got {sorted(subjects)}")
    horizon = windows[0].target.shape[0]
    for k in frame_indices:
        if not 1 <= k <= horizon:
            raise ConfigError(f"frame index {k} outside horizon 1..{horizon}")
    n_pose = windows[0].target.shape[1]
    joints = joints if joints is not None else n_pose // dims
    if joints * dims != n_pose:
        raise ConfigError(f"pose width {n_pose} is not joints*dims ({joints}*{dims})")

    if params is not None:
        if stats is None:
            raise ConfigError("model evaluation requires normalization stats")
        preds = _predict_windows(windows, params, stats)
    else:
        preds = np.stack([zero_velocity_baseline(w) for w in windows], axis=0)

    curves = np.zeros((len(windows), horizon))
    for i, w in enumerate(windows):
        _, per_frame = mse_metric(
            preds[i].reshape(horizon, joints, dims),
            w.target.reshape(horizon, joints, dims),
            per_coord=per_coord,
        )
        curves[i] = per_frame
    curve = curves.mean(axis=0)
    return EvalReport(
        subject=next(iter(subjects)),
        method=method,
        frame_indices=list(frame_indices),
        values=[float(curve[k - 1]) for k in frame_indices],
        curve=curve,
        n_windows=len(windows),
        seed=seed,
        per_coord=per_coord,
    )


REPORT_COLUMNS = ["subject", "method", "frame_index", "mse_cm2", "n_windows", "seed"]


def write_report_csv(path, reports, extra_best=None):
    """Delimited report rows; floats as shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(REPORT_COLUMNS)
        if extra_best is not None:
            header.append("best")
        writer.writerow(header)
        for rep in reports:
            for k, v in zip(rep.frame_indices, rep.values):
                row = [rep.subject, rep.labeled_method(), k, repr(float(v)),
                       rep.n_windows, rep.seed]
                if extra_best is not None:
                    row.append(int(extra_best.get((rep.subject, rep.labeled_method(), k), 0)))
                writer.writerow(row)


def load_report(path):
    """Parse a report CSV back to EvalReport objects (full curves absent)."""
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REPORT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"report {path} missing columns {missing}")
        for rec in reader:
            key = (int(rec["subject"]), rec["method"])
            entry = rows.setdefault(
                key,
                {"frames": [], "values": [], "n": int(rec["n_windows"]), "seed": int(rec["seed"])},
            )
            entry["frames"].append(int(rec["frame_index"]))
            entry["values"].append(float(rec["mse_cm2"]))
    reports = []
    for (subject, method), entry in rows.items():
        per_coord = method.endswith("/percoord")
        reports.append(
            EvalReport(
                subject=subject,
                method=method[: -len("/percoord")] if per_coord else method,
                frame_indices=entry["frames"],
                values=entry["values"],
                curve=np.asarray(entry["values"]),
                n_windows=entry["n"],
                seed=entry["seed"],
                per_coord=per_coord,
            )
        )
    return reports


def write_curve_csv(path, reports):
    """Plot-ready per-frame curves: method,frame_index,mse_cm2."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "frame_index", "mse_cm2"])
        for rep in reports:
            for k, v in enumerate(rep.curve, start=1):
                writer.writerow([rep.labeled_method(), k, repr(float(v))])


@dataclass
class ComparisonTable:
    text: str
    reports: list
    best: dict = field(default_factory=dict)  # (subject, method, frame) -> bool


def compare_table(reports):
    """Three-methods-per-subject comparison with the best value per column
    marked '*'. Exact ties are all marked. Reports must share frame indices.
    """
    if not reports:
        raise ConfigError("compare_table needs at least one report")
    frames = reports[0].frame_indices
    for rep in reports[1:]:
        if rep.frame_indices != frames:
            raise ConfigError(
                f"mismatched frame indices: {rep.frame_indices} vs {frames}"
            )
    by_subject = {}
    for rep in reports:
        by_subject.setdefault(rep.subject, []).append(rep)

    best = {}
    lines = []
    name_width = max(len(r.labeled_method()) for r in reports) + 2
    for subject in sorted(by_subject):
        group = by_subject[subject]
        lines.append(f"Subject {subject}")
        header = "frames".ljust(name_width) + "".join(f"{k:>10d}" for k in frames)
        lines.append(header)
        for col, k in enumerate(frames):
            col_min = min(rep.values[col] for rep in group)
            for rep in group:
                best[(subject, rep.labeled_method(), k)] = rep.values[col] == col_min
        for rep in group:
            cells = []
            for col, k in enumerate(frames):
                mark = "*" if best[(subject, rep.labeled_method(), k)] else " "
                cells.append(f"{mark}{rep.values[col]:>9.2f}")
            lines.append(rep.labeled_method().ljust(name_width) + "".join(cells))
        lines.append("")
    return ComparisonTable(text="\n".join(lines).rstrip() + "\n", reports=list(reports), best=best)
