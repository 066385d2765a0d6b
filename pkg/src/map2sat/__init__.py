"""map2sat: conditional-GAN translation of map tiles to aerial-style imagery.

A self-contained pix2pix-style pipeline: a from-scratch reverse-mode
autodiff core with compiled convolution kernels, a U-Net generator, a
patch-logit discriminator, the jitter/mirror/normalize data pipeline, and
an alternating adversarial training loop with deterministic resume.
"""

__version__ = "0.1.0"

from .tensor import ParamStore, ShapeError, Tensor4, as_leaf
from .tape import Tape, backward
from .rng import Rng
from .imgio import ImagePair, encode_png, load_combined, make_triptych
from .pipeline import Dataset, JitterSpec, denormalize, normalize, resize, synth_pair
from .generator import GeneratorSpec, build_generator, generator_forward
from .discriminator import (DiscriminatorSpec, build_discriminator,
                            discriminator_forward, patch_score)
from .losses import gan_bce, l1_loss
from .optim import AdamConfig, AdamState, TrainingDiverged, adam_step
from .config import RunConfig, TrainConfig, load_config
from .training import (StepReport, TrainerState, evaluate, fit, generate_image,
                       load_state, save_state, train_step)

__all__ = [
    "ParamStore", "ShapeError", "Tensor4", "as_leaf",
    "Tape", "backward", "Rng",
    "ImagePair", "encode_png", "load_combined", "make_triptych",
    "Dataset", "JitterSpec", "denormalize", "normalize", "resize", "synth_pair",
    "GeneratorSpec", "build_generator", "generator_forward",
    "DiscriminatorSpec", "build_discriminator", "discriminator_forward", "patch_score",
    "gan_bce", "l1_loss",
    "AdamConfig", "AdamState", "TrainingDiverged", "adam_step",
    "RunConfig", "TrainConfig", "load_config",
    "StepReport", "TrainerState", "evaluate", "fit", "generate_image",
    "load_state", "save_state", "train_step",
    "__version__",
]
