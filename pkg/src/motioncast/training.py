"""Phase-1 training: reconstruction objective plus the min-max game pushing
the continuous latent toward a standard Gaussian and the categorical latent
toward a uniform one-hot prior, each via its own discriminator.

Every batch runs three sub-steps in order:
  (a) reconstruction  - update encoder + latent heads + decoder
  (b) discriminators  - update D_z, D_c on fresh prior samples vs the
      batch latents treated as constants (detached values from (a))
  (c) regularization  - re-encode with current weights and update
      encoder + latent heads on the weighted generator losses

Sub-step isolation is enforced structurally (each optimizer only sees its
groups) and checked with parameter-group digests every batch.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import streams_from_positions
from .errors import ConfigError, NumericError, TrainingDiverged
from .model import encode, rollout

LOG_COLUMNS = [
    "epoch",
    "recon_train",
    "recon_val",
    "disc_z",
    "disc_c",
    "gen_z",
    "gen_c",
    "wall_time_s",
]

_CLAMP = 1e-7  # discriminator outputs are clamped to [eps, 1-eps] before log


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adv_weight: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    teacher_forcing: float = 0.0
    sample_budget: int = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.adv_weight < 0:
            raise ConfigError("adv_weight must be >= 0")
        if not 0.0 <= self.teacher_forcing <= 1.0:
            raise ConfigError("teacher_forcing must be in [0, 1]")


class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter names.

    Parameters are immutable tensors, so a step replaces each updated tensor
    in the store; moments are keyed by name and survive the replacement.
    """

    def __init__(self, names, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = list(names)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name in self.names:
            tensor = params[name]
            g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            m = self.m.get(name, 0.0)
            v = self.v.get(name, 0.0)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.m[name] = m
            self.v[name] = v
            update = self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            params[name] = Tensor(tensor.data - update, requires_grad=True)


def recon_loss(predicted, target):
    """Mean squared error over every frame, joint and coordinate."""
    predicted = predicted if isinstance(predicted, Tensor) else Tensor(predicted)
    target = target if isinstance(target, Tensor) else Tensor(target)
    if predicted.shape != target.shape:
        raise ConfigError(
            f"recon_loss shapes differ: {predicted.shape} vs {target.shape}"
        )
    return ad.mean(ad.square(predicted - target))


def sample_priors(batch, d_z, d_c, rng):
    """Prior draws: z ~ N(0, I), c = uniform-category one-hot rows."""
    if d_z < 1 or d_c < 1:
        raise ConfigError("latent dims must be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    z = rng.standard_normal((batch, d_z))
    cats = rng.integers(0, d_c, size=batch)
    c = np.zeros((batch, d_c))
    c[np.arange(batch), cats] = 1.0
    return z, c


def disc_forward(params, which, x):
    """Two-layer discriminator (tanh hidden, sigmoid output), (B, 1) in (0,1)."""
    prefix = f"discriminators.{which}"
    hidden = ad.tanh(x @ params[f"{prefix}.W1"] + params[f"{prefix}.b1"])
    return ad.sigmoid(hidden @ params[f"{prefix}.W2"] + params[f"{prefix}.b2"])


def _log_prob(p):
    return ad.log(ad.clip(p, _CLAMP, 1.0 - _CLAMP))


def disc_loss(params, which, real, fake):
    """Binary cross-entropy: -mean log D(real) - mean log(1 - D(fake)).

    Callers pass ``fake`` as a detached tensor when the encoder must not
    receive gradient (the training loop does); the loss itself is pure.
    """
    real = real if isinstance(real, Tensor) else Tensor(real)
    fake = fake if isinstance(fake, Tensor) else Tensor(fake)
    loss_real = ad.mean(_log_prob(disc_forward(params, which, real)))
    loss_fake = ad.mean(_log_prob(1.0 - disc_forward(params, which, fake)))
    return -(loss_real + loss_fake)


def gen_loss(params, which, latent_batch):
    """Non-saturating generator objective -mean log D(latent)."""
    return -ad.mean(_log_prob(disc_forward(params, which, latent_batch)))


def phase1_composite_loss(params, observed, target, z_prior, c_prior, adv_weight):
    """Single detach-free scalar combining every phase-1 term.

    Used by the gradient-check suite: the training loop applies the same
    terms in scoped sub-steps (with detached discriminator inputs), which
    would break finite-difference agreement; this composition keeps every
    dependency differentiable.
    """
    preds, latent = rollout(params, observed, np.asarray(target).shape[-2])
    pred = ad.concat(preds, axis=1)
    tgt = np.asarray(target, dtype=np.float64)
    tgt = tgt.reshape(tgt.shape[0], -1) if tgt.ndim == 3 else tgt.reshape(1, -1)
    loss = recon_loss(pred, Tensor(tgt))
    loss = loss + disc_loss(params, "dz", Tensor(z_prior), latent.z)
    loss = loss + disc_loss(params, "dc", Tensor(c_prior), latent.c)
    loss = loss + adv_weight * (gen_loss(params, "dz", latent.z) + gen_loss(params, "dc", latent.c))
    return loss


@dataclass
class TrainData:
    """Normalized observation/target arrays for train and validation."""

    train_obs: np.ndarray
    train_tgt: np.ndarray
    val_obs: np.ndarray
    val_tgt: np.ndarray


@dataclass
class TrainResult:
    params: object
    log_rows: list
    best_epoch: int
    best_val: float
    extra: dict = field(default_factory=dict)


def _batch_recon(params, obs, tgt, teacher=None, tf_ratio=0.0, rng=None):
    preds, latent = rollout(params, obs, tgt.shape[1], teacher=teacher, tf_ratio=tf_ratio, rng=rng)
    pred = ad.concat(preds, axis=1)
    return recon_loss(pred, Tensor(tgt.reshape(tgt.shape[0], -1))), latent


def validation_loss(params, obs, tgt, batch_size=256):
    """Autoregressive reconstruction error on a held-out set (no grads)."""
    total, count = 0.0, 0
    with ad.no_grad():
        for lo in range(0, obs.shape[0], batch_size):
            ob = obs[lo : lo + batch_size]
            tg = tgt[lo : lo + batch_size]
            loss, _ = _batch_recon(params, ob, tg)
            total += float(loss.data) * ob.shape[0]
            count += ob.shape[0]
    return total / max(count, 1)


def disc_accuracy(params, which, real, latents):
    """Fraction of prior/latent samples the discriminator labels correctly."""
    with ad.no_grad():
        p_real = disc_forward(params, which, Tensor(real)).data
        p_fake = disc_forward(params, which, Tensor(latents)).data
    correct = float(np.sum(p_real > 0.5) + np.sum(p_fake <= 0.5))
    return correct / (len(p_real) + len(p_fake))


def encode_latents(params, obs):
    """Latent arrays (z, c) for an observation batch, no graph kept."""
    with ad.no_grad():
        _, latent = encode(streams_from_positions(obs), params)
    return latent.z.data, latent.c.data


def _subsample(obs, tgt, budget, rng):
    if budget is None or budget >= obs.shape[0]:
        return obs, tgt
    idx = np.sort(rng.choice(obs.shape[0], size=budget, replace=False))
    return obs[idx], tgt[idx]


def train_phase1(data, params, config):
    """End-to-end phase-1 optimization with early stopping on validation
    reconstruction loss; returns the best-validation checkpoint and a log.
    """
    if data.train_obs.shape[0] == 0 or data.val_obs.shape[0] == 0:
        raise ConfigError("train_phase1 needs non-empty train and validation splits")
    rng_shuffle = np.random.default_rng([config.seed, 11])
    rng_prior = np.random.default_rng([config.seed, 12])
    rng_tf = np.random.default_rng([config.seed, 13])
    rng_budget = np.random.default_rng([config.seed, 14])

    train_obs, train_tgt = _subsample(
        data.train_obs, data.train_tgt, config.sample_budget, rng_budget
    )

    ae_names = params.names("encoder") + params.names("latent") + params.names("decoder")
    opt_recon = Adam(ae_names, config.learning_rate, config.beta1, config.beta2, config.eps)
    opt_disc = Adam(
        params.names("discriminators"), config.learning_rate, config.beta1, config.beta2, config.eps
    )
    opt_gen = Adam(
        params.names("encoder") + params.names("latent"),
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.eps,
    )

    d_z, d_c = params.hyper.latent, params.hyper.categories
    n = train_obs.shape[0]
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    stale = 0
    rows = []
    t0 = time.monotonic()

    for epoch in range(1, config.max_epochs + 1):
        order = rng_shuffle.permutation(n)
        sums = {"recon": 0.0, "disc_z": 0.0, "disc_c": 0.0, "gen_z": 0.0, "gen_c": 0.0}
        n_batches = 0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            obs, tgt = train_obs[idx], train_tgt[idx]
            batch_no = n_batches + 1
            try:
                # (a) reconstruction: encoder + latent + decoder
                params.zero_grad()
                loss_r, latent = _batch_recon(
                    params, obs, tgt, teacher=tgt, tf_ratio=config.teacher_forcing, rng=rng_tf
                )
                _guard(loss_r, epoch, batch_no)
                dig_disc = params.group_digest("discriminators")
                ad.backward(loss_r)
                opt_recon.step(params)
                assert params.group_digest("discriminators") == dig_disc

                # (b) discriminators on fresh priors vs detached latents
                z_fake, c_fake = latent.z.detach(), latent.c.detach()
                z_prior, c_prior = sample_priors(len(idx), d_z, d_c, rng_prior)
                params.zero_grad()
                loss_dz = disc_loss(params, "dz", Tensor(z_prior), z_fake)
                loss_dc = disc_loss(params, "dc", Tensor(c_prior), c_fake)
                _guard(loss_dz, epoch, batch_no)
                _guard(loss_dc, epoch, batch_no)
                dig_enc = params.group_digest("encoder")
                dig_lat = params.group_digest("latent")
                dig_dec = params.group_digest("decoder")
                ad.backward(loss_dz + loss_dc)
                opt_disc.step(params)
                assert params.group_digest("encoder") == dig_enc
                assert params.group_digest("latent") == dig_lat
                assert params.group_digest("decoder") == dig_dec

                # (c) regularization: encoder + latent confuse the (fixed) critics
                params.zero_grad()
                _, latent_g = encode(streams_from_positions(obs), params)
                loss_gz = gen_loss(params, "dz", latent_g.z)
                loss_gc = gen_loss(params, "dc", latent_g.c)
                _guard(loss_gz, epoch, batch_no)
                _guard(loss_gc, epoch, batch_no)
                dig_disc = params.group_digest("discriminators")
                dig_dec = params.group_digest("decoder")
                if config.adv_weight > 0:
                    ad.backward(config.adv_weight * (loss_gz + loss_gc))
                    opt_gen.step(params)
                assert params.group_digest("discriminators") == dig_disc
                assert params.group_digest("decoder") == dig_dec
            except NumericError as exc:
                raise TrainingDiverged(str(exc), epoch=epoch, batch=batch_no) from exc

            sums["recon"] += float(loss_r.data)
            sums["disc_z"] += float(loss_dz.data)
            sums["disc_c"] += float(loss_dc.data)
            sums["gen_z"] += float(loss_gz.data)
            sums["gen_c"] += float(loss_gc.data)
            n_batches += 1

        val = validation_loss(params, data.val_obs, data.val_tgt)
        if not np.isfinite(val):
            raise TrainingDiverged("non-finite validation loss", epoch=epoch, batch=0)
        rows.append(
            {
                "epoch": epoch,
                "recon_train": sums["recon"] / n_batches,
                "recon_val": val,
                "disc_z": sums["disc_z"] / n_batches,
                "disc_c": sums["disc_c"] / n_batches,
                "gen_z": sums["gen_z"] / n_batches,
                "gen_c": sums["gen_c"] / n_batches,
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
    return TrainResult(best_params, rows, best_epoch, best_val)


def _guard(loss, epoch, batch):
    if not np.isfinite(loss.data):
        raise TrainingDiverged("non-finite loss", epoch=epoch, batch=batch)


def write_log_csv(path, rows):
    """Training log CSV; adversarial columns may be empty (phase 2)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["epoch"],
                    *(
                        repr(float(row[c])) if row.get(c) is not None and row.get(c) != "" else ""
                        for c in LOG_COLUMNS[1:]
                    ),
                ]
            )
