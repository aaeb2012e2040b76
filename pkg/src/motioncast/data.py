"""Skeleton sequence data model: file IO, feature streams, windows, splits.

Sequence files are CSV with one frame per row:
``subject,activity,trial,frame_index,x1,y1,z1,...,xJ,yJ,zJ`` (header row
required, positions in centimeters). Rows of one trial are contiguous with
ascending frame_index.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError


@dataclass
class SkeletonSequence:
    """One recorded trial: (T, J, 3) joint positions in cm plus identity."""

    subject_id: int
    activity_id: int
    trial_id: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ConfigError(f"frames must be (T>=1, J, D), got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ConfigError("sequence contains non-finite positions")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_joints(self):
        return self.frames.shape[1]

    def key(self):
        return (self.subject_id, self.activity_id, self.trial_id)


@dataclass
class MotionWindow:
    """Observed (tau, N) and target (H, N) pose slices, N = J*D flattened."""

    observed: np.ndarray
    target: np.ndarray
    subject_id: int
    activity_id: int
    trial_id: int
    start: int  # 0-based frame offset of the first observed frame


@dataclass
class FeatureStreams:
    """Position plus first/second-order difference streams of a window."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def streams_from_positions(positions):
    """Derivative streams for a (tau, N) or (B, tau, N) position array.

    First-frame velocity and acceleration are zero; positions are exactly
    position[0] + cumsum(velocity) along the time axis.
    """
    pos = np.asarray(positions, dtype=np.float64)
    t_axis = pos.ndim - 2
    zero = np.zeros_like(np.take(pos, [0], axis=t_axis))
    vel = np.concatenate([zero, np.diff(pos, axis=t_axis)], axis=t_axis)
    acc = np.concatenate([zero, np.diff(vel, axis=t_axis)], axis=t_axis)
    return FeatureStreams(pos, vel, acc)


def derive_streams(window):
    return streams_from_positions(window.observed)


def window_sequences(seqs, tau, horizon, stride=1):
    """Every contiguous (tau + horizon)-frame window of every sequence."""
    if tau < 1 or horizon < 1 or stride < 1:
        raise ConfigError("tau, horizon and stride must all be >= 1")
    windows = []
    for seq in seqs:
        total = tau + horizon
        flat = seq.frames.reshape(seq.n_frames, -1)
        for start in range(0, seq.n_frames - total + 1, stride):
            windows.append(
                MotionWindow(
                    observed=flat[start : start + tau].copy(),
                    target=flat[start + tau : start + total].copy(),
                    subject_id=seq.subject_id,
                    activity_id=seq.activity_id,
                    trial_id=seq.trial_id,
                    start=start,
                )
            )
    return windows


@dataclass
class SubjectSplit:
    """Phase-2 data for one held-out subject."""

    finetune: list
    test: list


@dataclass
class Splits:
    phase1_train: list
    phase1_val: list
    phase2_pool: dict  # subject_id -> SubjectSplit


def split_cross_subject(seqs, val_fraction=0.1, seed=0):
    """Odd subjects feed phase 1 (with trial-level validation hold-out);
    even subjects form the phase-2 pool: lowest trial fine-tunes, the rest test.
    """
    phase1 = [s for s in seqs if s.subject_id % 2 == 1]
    phase2 = [s for s in seqs if s.subject_id % 2 == 0]
    if not phase1:
        raise ConfigError("no odd-numbered subjects available for phase 1")
    if not phase2:
        raise ConfigError("no even-numbered subjects available for phase 2")
    if len(phase1) < 2:
        raise ConfigError("phase 1 needs at least two trials to hold out validation")
    rng = np.random.default_rng([int(seed), 404])
    perm = rng.permutation(len(phase1))
    n_val = max(1, round(val_fraction * len(phase1)))
    val_idx = set(perm[:n_val].tolist())
    train = [s for i, s in enumerate(phase1) if i not in val_idx]
    val = [s for i, s in enumerate(phase1) if i in val_idx]
    if not train:
        raise ConfigError("validation fraction leaves no phase-1 training trials")

    pool = {}
    for s in phase2:
        pool.setdefault(s.subject_id, []).append(s)
    phase2_pool = {}
    for subject, trials in sorted(pool.items()):
        trials = sorted(trials, key=lambda s: (s.activity_id, s.trial_id))
        trial_ids = sorted({s.trial_id for s in trials})
        if len(trial_ids) < 2:
            raise ConfigError(
                f"subject {subject} needs >=2 trials to split fine-tune/test"
            )
        ft_trial = trial_ids[0]
        phase2_pool[subject] = SubjectSplit(
            finetune=[s for s in trials if s.trial_id == ft_trial],
            test=[s for s in trials if s.trial_id != ft_trial],
        )
    return Splits(train, val, phase2_pool)


@dataclass
class Stats:
    """Per-coordinate standardization fitted on phase-1 training windows."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


VAR_FLOOR = 1e-8


def fit_stats(windows):
    """Mean/std over every frame (observed and target) of the given windows."""
    if not windows:
        raise ConfigError("cannot fit normalization stats on zero windows")
    frames = np.concatenate(
        [w.observed for w in windows] + [w.target for w in windows], axis=0
    )
    mean = frames.mean(axis=0)
    var = np.maximum(frames.var(axis=0), VAR_FLOOR)
    return Stats(mean=mean, std=np.sqrt(var))


def normalize_array(arr, stats):
    return (np.asarray(arr, dtype=np.float64) - stats.mean) / stats.std


def denormalize_array(arr, stats):
    return np.asarray(arr, dtype=np.float64) * stats.std + stats.mean


def normalize_windows(windows, stats):
    """New windows with standardized coordinates (provenance preserved)."""
    return [
        MotionWindow(
            observed=normalize_array(w.observed, stats),
            target=normalize_array(w.target, stats),
            subject_id=w.subject_id,
            activity_id=w.activity_id,
            trial_id=w.trial_id,
            start=w.start,
        )
        for w in windows
    ]


def windows_to_arrays(windows):
    """Stack windows into (n, tau, N) observed and (n, H, N) target arrays."""
    obs = np.stack([w.observed for w in windows], axis=0)
    tgt = np.stack([w.target for w in windows], axis=0)
    return obs, tgt


def save_sequences(path, seqs):
    """Write sequences to the CSV trial format (floats as shortest repr)."""
    if not seqs:
        raise ConfigError("no sequences to save")
    n_joints = seqs[0].n_joints
    header = ["subject", "activity", "trial", "frame_index"]
    for j in range(1, n_joints + 1):
        header += [f"x{j}", f"y{j}", f"z{j}"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for seq in seqs:
            flat = seq.frames.reshape(seq.n_frames, -1)
            for t in range(seq.n_frames):
                row = [seq.subject_id, seq.activity_id, seq.trial_id, t]
                row += [repr(float(v)) for v in flat[t]]
                writer.writerow(row)


def load_sequences(path, skeleton=None):
    """Parse the CSV trial format into SkeletonSequence objects.

    When ``skeleton`` is given, the file's joint count must match it.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if len(header) < 7 or header[:4] != ["subject", "activity", "trial", "frame_index"]:
            raise ParseError(
                "header must start with subject,activity,trial,frame_index", line=1
            )
        if (len(header) - 4) % 3 != 0:
            raise ParseError(
                f"position columns not a multiple of 3 ({len(header) - 4})", line=1
            )
        n_joints = (len(header) - 4) // 3
        if skeleton is not None and n_joints != skeleton.n_joints:
            raise ParseError(
                f"file has {n_joints} joints, skeleton expects {skeleton.n_joints}", line=1
            )
        expected_cols = len(header)

        seqs = []
        cur_key = None
        cur_frames = []
        last_index = None
        seen = set()

        def flush(lineno):
            if cur_key is None:
                return
            if cur_key in seen:
                raise ParseError(
                    f"rows of trial {cur_key} are not contiguous", line=lineno
                )
            seen.add(cur_key)
            frames = np.asarray(cur_frames, dtype=np.float64).reshape(
                len(cur_frames), n_joints, 3
            )
            seqs.append(SkeletonSequence(cur_key[0], cur_key[1], cur_key[2], frames))

        lineno = 1
        for row in reader:
            lineno += 1
            if not row:
                continue
            if len(row) != expected_cols:
                raise ParseError(
                    f"expected {expected_cols} columns, got {len(row)}", line=lineno
                )
            try:
                key = (int(row[0]), int(row[1]), int(row[2]))
                frame_index = int(row[3])
                values = [float(v) for v in row[4:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not all(np.isfinite(values)):
                raise ParseError("non-finite position value", line=lineno)
            if key != cur_key:
                flush(lineno)
                cur_key = key
                cur_frames = []
                last_index = None
            if last_index is not None and frame_index <= last_index:
                raise ParseError(
                    f"frame_index {frame_index} not ascending within trial", line=lineno
                )
            last_index = frame_index
            cur_frames.append(values)
        flush(lineno + 1)
        if not seqs:
            raise ParseError("file contains no data rows", line=lineno)
        return seqs
