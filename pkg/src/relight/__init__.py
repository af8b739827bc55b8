"""Retinex-decomposition + cycle-consistent adversarial low-light enhancement."""

from .adversarial import (
    CycleState,
    PatchDiscriminator,
    bce,
    cycle_loss_R,
    cycle_loss_S,
    discriminate,
    discriminator_losses,
    generator_losses,
)
from .data import (
    PairedDataset,
    UnpairedDataset,
    make_paired_corpus,
    make_unpaired_corpus,
    synthesize_image,
)
from .decomposition import (
    DecompLossWeights,
    DecompNet,
    DecompTrainConfig,
    DecompositionResult,
    decomp_loss,
    decompose,
    train_decomposition,
)
from .enhancement import (
    EnhanceNet,
    GeneratorBundle,
    UNetSpec,
    build_unet,
    enhance_illumination,
    generate,
)
from .errors import (
    ConfigError,
    FormatError,
    RelightError,
    ShapeError,
    StateError,
    TrainingDiverged,
)
from .imaging import (
    DegradationParams,
    PatchSpec,
    degrade,
    load_image,
    recompose,
    sample_patches,
    save_image,
)
from .metrics import evaluate, mse, niqe, ssim
from .training import TrainConfig, train_gan, train_step

__version__ = "0.1.0"

__all__ = [
    "CycleState", "PatchDiscriminator", "bce", "cycle_loss_R", "cycle_loss_S",
    "discriminate", "discriminator_losses", "generator_losses",
    "PairedDataset", "UnpairedDataset", "make_paired_corpus",
    "make_unpaired_corpus", "synthesize_image",
    "DecompLossWeights", "DecompNet", "DecompTrainConfig", "DecompositionResult",
    "decomp_loss", "decompose", "train_decomposition",
    "EnhanceNet", "GeneratorBundle", "UNetSpec", "build_unet",
    "enhance_illumination", "generate",
    "ConfigError", "FormatError", "RelightError", "ShapeError", "StateError",
    "TrainingDiverged",
    "DegradationParams", "PatchSpec", "degrade", "load_image", "recompose",
    "sample_patches", "save_image",
    "evaluate", "mse", "niqe", "ssim",
    "TrainConfig", "train_gan", "train_step",
]
