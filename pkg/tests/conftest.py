import pytest
import torch
import torch.nn.functional as F

from styleswap.config import RunConfig
from styleswap.generator import GeneratorConfig
from styleswap.losses import LossWeights
from styleswap.surrogates import PerceptionSuite, SurrogateSpec
from styleswap.training import TrainConfig


def smooth_images(n: int, resolution: int, seed: int, detail: int = 8) -> torch.Tensor:
    """Low-frequency synthetic images in [-1, 1]; stand-ins for aligned
    face photos, which are dominated by smooth structure."""
    g = torch.Generator().manual_seed(seed)
    low = torch.rand(n, 3, detail, detail, generator=g) * 2 - 1
    img = F.interpolate(low, size=(resolution, resolution), mode="bilinear", align_corners=False)
    return img.clamp(-1, 1)


def tiny_generator_config(**overrides) -> GeneratorConfig:
    params = dict(resolution=64, base_channels=4, max_channels=32)
    params.update(overrides)
    return GeneratorConfig(**params)


def tiny_run_config(**overrides) -> RunConfig:
    gen = overrides.pop("generator", tiny_generator_config())
    params = dict(
        generator=gen,
        train=TrainConfig(total_steps=50, batch_size=4, self_recon_count=1, lr=1e-3, seed=0),
        weights=LossWeights(),
        surrogates=SurrogateSpec(input_size=gen.resolution, seed=7),
        encoder_width=16,
        seed=11,
    )
    params.update(overrides)
    return RunConfig(**params)


@pytest.fixture(scope="session")
def suite64() -> PerceptionSuite:
    return PerceptionSuite(SurrogateSpec(input_size=64, seed=7))


@pytest.fixture(scope="session")
def suite8() -> PerceptionSuite:
    """Tiny-input suite for float64 finite-difference checks."""
    return PerceptionSuite(SurrogateSpec(input_size=8, seed=7)).double()
