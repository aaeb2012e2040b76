"""motioncast: motion prediction with an adversarially regularized
encoder-decoder and decoder-only continual fine-tuning, on a from-scratch
reverse-mode autodiff engine."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, grad_check, no_grad
from .data import (
    FeatureStreams,
    MotionWindow,
    SkeletonSequence,
    Stats,
    derive_streams,
    fit_stats,
    load_sequences,
    save_sequences,
    split_cross_subject,
    window_sequences,
)
from .evaluate import EvalReport, compare_table, evaluate, mse_metric, zero_velocity_baseline
from .finetune import FinetuneConfig, FreezeMask, freeze_partition, train_phase2
from .model import (
    Hyper,
    LatentState,
    ModelParams,
    attention_fuse,
    decode_step,
    encode,
    gru_step,
    latent_heads,
    load_checkpoint,
    predict_sequence,
    save_checkpoint,
    spl_forward,
)
from .skeleton import SkeletonTree, chain_skeleton, default_skeleton, load_skeleton
from .synth import SynthSpec, synth_generate, synth_skeleton
from .training import (
    TrainConfig,
    TrainData,
    disc_loss,
    gen_loss,
    recon_loss,
    sample_priors,
    train_phase1,
)
