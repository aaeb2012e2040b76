"""Deterministic synthetic skeleton motion, the desk-scale dataset stand-in.

Each activity is a base pattern of per-joint sinusoids (plus an optional
whole-body drift) on top of a rest pose that respects the skeleton tree's
bone lengths. Each subject carries persistent idiosyncrasies shared across
all of its activities: a limb-scale factor applied to the rest pose, an
amplitude multiplier, a phase offset and a gait-frequency multiplier. Trials
of the same (subject, activity) differ only by small per-trial phase jitter
and additive noise, so subject identity is a learnable signal.
"""

from dataclasses import dataclass

import numpy as np

from .data import SkeletonSequence
from .errors import ConfigError
from .skeleton import chain_skeleton, default_skeleton

FPS = 30.0

# rest pose (cm) for the packaged 20-joint topology, y is up
_REST_20 = np.array(
    [
        [0.0, 90.0, 0.0],     # hip_center
        [0.0, 110.0, 0.0],    # spine
        [0.0, 130.0, 0.0],    # shoulder_center
        [0.0, 148.0, 0.0],    # head
        [-18.0, 128.0, 0.0],  # shoulder_left
        [-26.0, 102.0, 0.0],  # elbow_left
        [-30.0, 78.0, 0.0],   # wrist_left
        [-32.0, 68.0, 0.0],   # hand_left
        [18.0, 128.0, 0.0],   # shoulder_right
        [26.0, 102.0, 0.0],   # elbow_right
        [30.0, 78.0, 0.0],    # wrist_right
        [32.0, 68.0, 0.0],    # hand_right
        [-10.0, 86.0, 0.0],   # hip_left
        [-12.0, 48.0, 0.0],   # knee_left
        [-13.0, 10.0, 0.0],   # ankle_left
        [-14.0, 2.0, 8.0],    # foot_left
        [10.0, 86.0, 0.0],    # hip_right
        [12.0, 48.0, 0.0],    # knee_right
        [13.0, 10.0, 0.0],    # ankle_right
        [14.0, 2.0, 8.0],     # foot_right
    ]
)


@dataclass
class SynthSpec:
    n_subjects: int = 4
    n_activities: int = 3
    trials: int = 4
    n_frames: int = 60
    n_joints: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("n_subjects", "n_activities", "trials", "n_frames", "n_joints"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synth spec field {name} must be >= 1")


def synth_skeleton(n_joints):
    """Topology matching generated data: packaged 20-joint tree or a chain."""
    if n_joints == 20:
        return default_skeleton()
    return chain_skeleton(n_joints)


def rest_pose(tree):
    """Rest-pose joint positions (cm) respecting the tree's bone structure."""
    if tree.n_joints == 20 and tree.parents == default_skeleton().parents:
        return _REST_20.copy()
    # procedural rest pose for ad-hoc trees: fixed bone offsets per joint,
    # independent of the corpus seed so geometry is a skeleton property
    pose = np.zeros((tree.n_joints, 3))
    for j in tree.topo_order():
        p = tree.parents[j]
        if p == -1:
            pose[j] = (0.0, 100.0, 0.0)
            continue
        rng = np.random.default_rng([977, j])
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        pose[j] = pose[p] + direction * rng.uniform(15.0, 30.0)
    return pose


def _subject_traits(seed, subject):
    rng = np.random.default_rng([int(seed), 101, int(subject)])
    return {
        "limb_scale": rng.uniform(0.82, 1.18),
        "amplitude": rng.uniform(0.8, 1.25),
        "phase": rng.uniform(0.0, 2.0 * np.pi),
        "freq_mult": rng.uniform(0.85, 1.2),
    }


def _activity_pattern(seed, activity, tree):
    rng = np.random.default_rng([int(seed), 202, int(activity)])
    n = tree.n_joints
    base_freq = rng.uniform(0.5, 1.1)  # Hz; periods of ~0.9-2 s at 30 fps
    depth = np.array([len(tree.ancestors(j)) for j in range(n)], dtype=np.float64)
    mobility = 0.4 + 0.6 * depth / max(depth.max(), 1.0)  # extremities move more
    amp = rng.uniform(0.5, 5.0, size=(n, 3)) * mobility[:, None]
    freq = base_freq * rng.uniform(0.85, 1.2, size=(n, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n, 3))
    drift = np.array([rng.uniform(-3.0, 3.0), 0.0, rng.uniform(-3.0, 3.0)])  # cm/s
    return {"amp": amp, "freq": freq, "phase": phase, "drift": drift}


def synth_generate(spec, tree=None):
    """Generate the full corpus for a SynthSpec, bit-deterministic per seed."""
    tree = tree if tree is not None else synth_skeleton(spec.n_joints)
    if tree.n_joints != spec.n_joints:
        raise ConfigError(
            f"tree has {tree.n_joints} joints, spec wants {spec.n_joints}"
        )
    rest = rest_pose(tree)
    t = np.arange(spec.n_frames, dtype=np.float64)[:, None, None] / FPS
    seqs = []
    for subject in range(1, spec.n_subjects + 1):
        traits = _subject_traits(spec.seed, subject)
        scaled_rest = rest * traits["limb_scale"]
        for activity in range(1, spec.n_activities + 1):
            pat = _activity_pattern(spec.seed, activity, tree)
            for trial in range(1, spec.trials + 1):
                rng = np.random.default_rng(
                    [int(spec.seed), 303, subject, activity, trial]
                )
                trial_jitter = rng.normal(0.0, 0.05)
                noise = rng.normal(0.0, 0.15, size=(spec.n_frames, tree.n_joints, 3))
                arg = (
                    2.0 * np.pi * pat["freq"] * traits["freq_mult"] * t
                    + pat["phase"]
                    + traits["phase"]
                    + trial_jitter
                )
                frames = (
                    scaled_rest
                    + traits["amplitude"] * pat["amp"] * np.sin(arg)
                    + pat["drift"] * t
                    + noise
                )
                seqs.append(SkeletonSequence(subject, activity, trial, frames))
    return seqs
