"""Model assembly and the inference entry points shared by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .config import RunConfig
from .encoder import FacialAttributeEncoder
from .generator import Discriminator, SynthesisGenerator
from .roi import RoiMaskSpec, blend, build_mask
from .routing import assemble, plan_face_swap, plan_id_mix
from .surrogates import PerceptionSuite
from .training import Trainer


@dataclass
class Models:
    encoder: FacialAttributeEncoder
    generator: SynthesisGenerator
    discriminator: Discriminator
    suite: PerceptionSuite


def build_models(run: RunConfig) -> Models:
    run.validate()
    return Models(
        encoder=FacialAttributeEncoder(run.generator, width=run.encoder_width, seed=run.seed),
        generator=SynthesisGenerator(run.generator, seed=run.seed + 1),
        discriminator=Discriminator.from_config(run.generator, seed=run.seed + 2),
        suite=PerceptionSuite(run.surrogates),
    )


def build_trainer(run: RunConfig, models: Models | None = None) -> Trainer:
    models = models or build_models(run)
    return Trainer(
        models.encoder,
        models.generator,
        models.discriminator,
        models.suite,
        run.train,
        run.weights,
    )


def _batched(image: Tensor) -> Tensor:
    return image.unsqueeze(0) if image.dim() == 3 else image


@torch.no_grad()
def face_swap(models: Models, source: Tensor, target: Tensor) -> Tensor:
    """Generate images carrying the source identity in the target setting."""
    source, target = _batched(source), _batched(target)
    codes_src, _ = models.encoder.encode(source)
    codes_tgt, maps_tgt = models.encoder.encode(target)
    plan = plan_face_swap(models.generator.cfg)
    codes, maps = assemble({"source": codes_src, "target": codes_tgt}, maps_tgt, plan)
    return models.generator(codes, maps)


@torch.no_grad()
def id_mix(models: Models, global_source: Tensor, local_source: Tensor, target: Tensor) -> Tensor:
    """Generate images with a blended identity from two source images."""
    global_source, local_source, target = (
        _batched(global_source), _batched(local_source), _batched(target)
    )
    codes_gb, _ = models.encoder.encode(global_source)
    codes_lc, _ = models.encoder.encode(local_source)
    codes_tgt, maps_tgt = models.encoder.encode(target)
    plan = plan_id_mix(models.generator.cfg)
    codes, maps = assemble(
        {"global_source": codes_gb, "local_source": codes_lc, "target": codes_tgt},
        maps_tgt,
        plan,
    )
    return models.generator(codes, maps)


def apply_roi(generated: Tensor, target: Tensor, canvas: int) -> Tensor:
    """Composite the generated face region onto the target background."""
    mask = build_mask(RoiMaskSpec(canvas=canvas))
    return blend(_batched(generated), _batched(target), torch.from_numpy(mask))
