"""Phase-2 curriculum step: freeze encoder, latent heads and discriminators,
fine-tune only the decoder at a reduced learning rate on a small sample from
one new subject. The objective is reconstruction only; no adversarial term
ever enters phase 2.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError, TrainingDiverged
from .model import GROUPS
from .training import Adam, TrainResult, _batch_recon, _guard, validation_loss


@dataclass
class FreezeMask:
    """Per-group frozen flags. Defaults follow the phase-2 contract:
    only the decoder trains."""

    frozen: dict = field(
        default_factory=lambda: {
            "encoder": True,
            "latent": True,
            "decoder": False,
            "discriminators": True,
        }
    )

    def __post_init__(self):
        unknown = set(self.frozen) - set(GROUPS)
        if unknown:
            raise ConfigError(f"freeze mask references unknown groups {sorted(unknown)}")
        for g in GROUPS:
            self.frozen.setdefault(g, True)
        if all(self.frozen.values()):
            raise ConfigError("freeze mask leaves no trainable group")

    def trainable_groups(self):
        return [g for g in GROUPS if not self.frozen[g]]

    def frozen_groups(self):
        return [g for g in GROUPS if self.frozen[g]]


@dataclass
class FinetuneConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    sample_budget: int = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.25

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in (0, 1)")


def freeze_partition(params, mask):
    """Split parameter names into (trainable, frozen) per the mask."""
    trainable, frozen = [], []
    for name in params.names():
        group = params.group_of(name)
        (frozen if mask.frozen[group] else trainable).append(name)
    if not trainable:
        raise ConfigError("freeze mask leaves no trainable parameters")
    return trainable, frozen


def train_phase2(pretrained, obs, tgt, config, phase1_lr, mask=None):
    """Fine-tune the unfrozen groups on one subject's trial windows.

    ``obs``/``tgt`` are the normalized window arrays of the fine-tuning
    trial; the trailing ``val_fraction`` of windows is held out for early
    stopping. Frozen groups are bit-identical afterwards (digest-checked).
    Returns a TrainResult whose log rows leave the adversarial columns empty.
    """
    if config.learning_rate >= phase1_lr:
        raise ConfigError(
            f"phase-2 learning rate {config.learning_rate} must be below "
            f"phase-1 rate {phase1_lr}"
        )
    if obs.shape[0] == 0:
        raise ConfigError("fine-tune trial produced no windows")
    mask = mask if mask is not None else FreezeMask()
    params = pretrained.copy()
    trainable, _ = freeze_partition(params, mask)
    frozen_digests = {g: params.group_digest(g) for g in mask.frozen_groups()}

    if config.max_epochs == 0:
        return TrainResult(params, [], 0, np.inf)

    rng_shuffle = np.random.default_rng([config.seed, 21])
    rng_budget = np.random.default_rng([config.seed, 22])
    if config.sample_budget is not None and config.sample_budget < obs.shape[0]:
        idx = np.sort(rng_budget.choice(obs.shape[0], size=config.sample_budget, replace=False))
        obs, tgt = obs[idx], tgt[idx]

    n = obs.shape[0]
    n_val = max(1, int(round(config.val_fraction * n))) if n > 1 else 0
    if n_val and n - n_val >= 1:
        train_obs, train_tgt = obs[: n - n_val], tgt[: n - n_val]
        val_obs, val_tgt = obs[n - n_val :], tgt[n - n_val :]
    else:
        # degenerate single-window trial: validate on the training window
        train_obs, train_tgt = obs, tgt
        val_obs, val_tgt = obs, tgt

    opt = Adam(trainable, config.learning_rate, config.beta1, config.beta2, config.eps)
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    stale = 0
    rows = []
    t0 = time.monotonic()

    for epoch in range(1, config.max_epochs + 1):
        order = rng_shuffle.permutation(train_obs.shape[0])
        total = 0.0
        n_batches = 0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            try:
                params.zero_grad()
                loss, _ = _batch_recon(params, train_obs[idx], train_tgt[idx])
                _guard(loss, epoch, n_batches + 1)
                ad.backward(loss)
                opt.step(params)
            except NumericError as exc:
                raise TrainingDiverged(str(exc), epoch=epoch, batch=n_batches + 1) from exc
            total += float(loss.data)
            n_batches += 1
        for group, digest in frozen_digests.items():
            if params.group_digest(group) != digest:
                raise RuntimeError(f"frozen group {group} changed during fine-tuning")

        val = validation_loss(params, val_obs, val_tgt)
        rows.append(
            {
                "epoch": epoch,
                "recon_train": total / n_batches,
                "recon_val": val,
                "disc_z": "",
                "disc_c": "",
                "gen_z": "",
                "gen_c": "",
                "wall_time_s": time.monotonic() - t0,
            }
        )
        if val < best_val:
            best_val = val
            best_params = params.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    for group, digest in frozen_digests.items():
        if best_params.group_digest(group) != digest:
            raise RuntimeError(f"frozen group {group} changed during fine-tuning")
    return TrainResult(best_params, rows, best_epoch, best_val)
