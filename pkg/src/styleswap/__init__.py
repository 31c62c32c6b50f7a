"""Desk-scale face swapping with a style-based generator.

Submodules: generator (synthesis network + discriminator), encoder (facial
attribute encoder), routing (input assembly for swapping and ID mixing),
surrogates (frozen perception networks), losses, training, roi (face-box
compositing), metrics, config, data, checkpoint, pipeline, cli.
"""

__version__ = "0.1.0"

from .config import RunConfig, default_run_config, load_config
from .generator import (
    Discriminator,
    GeneratorConfig,
    StyleCodeSet,
    StyleMapSet,
    SynthesisGenerator,
    build_layer_table,
)
from .encoder import FacialAttributeEncoder
from .losses import LossWeights
from .pipeline import Models, build_models, build_trainer, face_swap, id_mix
from .routing import plan_face_swap, plan_id_mix
from .surrogates import PerceptionSuite, SurrogateSpec
from .training import TrainConfig, Trainer

__all__ = [
    "Discriminator",
    "FacialAttributeEncoder",
    "GeneratorConfig",
    "LossWeights",
    "Models",
    "PerceptionSuite",
    "RunConfig",
    "StyleCodeSet",
    "StyleMapSet",
    "SurrogateSpec",
    "SynthesisGenerator",
    "TrainConfig",
    "Trainer",
    "build_layer_table",
    "build_models",
    "build_trainer",
    "default_run_config",
    "face_swap",
    "id_mix",
    "load_config",
    "plan_face_swap",
    "plan_id_mix",
    "__version__",
]
