"""Facial attribute encoder.

A small residual backbone extracts a three-level feature pyramid from the
input image. Map-to-code heads turn pyramid levels into one raw vector per
generator layer; a per-layer elementwise affine maps raw vectors into the
generator's modulation space. Map-to-maps heads produce the four spatial
style maps, instance-normalized so their statistics match noise inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .errors import ConfigurationError, ShapeError
from .generator import (
    GeneratorConfig,
    StyleCodeSet,
    StyleMapSet,
    build_layer_table,
    seeded_normal_init_,
    style_map_sites,
)

INSTANCE_NORM_EPS = 1e-5
MAP_HEAD_SLOPE = 0.01  # LeakyReLU slope inside map-to-maps heads
# Extra init gain on map heads: keeps pre-normalization channel variance far
# above the instance-norm eps floor so normalized maps stay near unit variance.
MAP_HEAD_GAIN = 4.0


@dataclass(frozen=True)
class LatentPyramid:
    """Hierarchical latent maps at strictly increasing spatial sizes."""

    coarse: Tensor
    medium: Tensor
    fine: Tensor

    def levels(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.coarse, self.medium, self.fine)

    def by_resolution(self, resolution: int) -> Tensor:
        for level in self.levels():
            if level.shape[-1] == resolution:
                return level
        raise ConfigurationError(
            [f"pyramid has no level at resolution {resolution}; "
             f"levels are {[lvl.shape[-1] for lvl in self.levels()]}"]
        )


def instance_norm(x: Tensor, eps: float = INSTANCE_NORM_EPS) -> Tensor:
    """Per-sample, per-channel spatial normalization (population variance)."""
    mean = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps)


class _ResidualDown(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        y = F.leaky_relu(self.conv1(x), 0.2)
        y = F.leaky_relu(self.conv2(y), 0.2)
        y = F.avg_pool2d(y, 2)
        return (y + self.skip(F.avg_pool2d(x, 2))) / math.sqrt(2.0)


class EncoderBackbone(nn.Module):
    """Feature pyramid at input/8, input/4 and input/2 spatial sizes."""

    def __init__(self, input_resolution: int, width: int = 64, in_channels: int = 3, seed: int = 0):
        super().__init__()
        if input_resolution < 8 or input_resolution & (input_resolution - 1):
            raise ConfigurationError(
                [f"encoder input resolution must be a power of two >= 8, got {input_resolution}"]
            )
        self.input_resolution = input_resolution
        self.width = width
        self.stem = nn.Conv2d(in_channels, width, 3, padding=1)
        self.down_fine = _ResidualDown(width, width)      # input/2
        self.down_medium = _ResidualDown(width, width)    # input/4
        self.down_coarse = _ResidualDown(width, width)    # input/8
        seeded_normal_init_(self, seed)

    def forward(self, image: Tensor) -> LatentPyramid:
        if image.dim() == 3:
            image = image.unsqueeze(0)
        r = self.input_resolution
        if image.dim() != 4 or image.shape[-2:] != (r, r):
            raise ShapeError(
                f"expected input of spatial size {r}x{r}, got {tuple(image.shape)}"
            )
        x = F.leaky_relu(self.stem(image), 0.2)
        fine = self.down_fine(x)
        medium = self.down_medium(fine)
        coarse = self.down_coarse(medium)
        return LatentPyramid(coarse=coarse, medium=medium, fine=fine)


class MapToCode(nn.Module):
    """Reduce one pyramid level to a single code vector.

    A chain of stride-2 convolutions collapses the spatial extent to 1x1,
    then a linear layer produces the code.
    """

    def __init__(self, level_resolution: int, level_channels: int, code_dim: int):
        super().__init__()
        steps = int(math.log2(level_resolution))
        self.convs = nn.ModuleList(
            nn.Conv2d(level_channels, level_channels, 3, stride=2, padding=1)
            for _ in range(steps)
        )
        self.linear = nn.Linear(level_channels, code_dim)

    def forward(self, level: Tensor) -> Tensor:
        x = level
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
        return self.linear(x.flatten(1))


class StyleAffine(nn.Module):
    """Per-layer elementwise affine: code -> gain * code + offset.

    Gains are learnable (initialized to 0.1); offsets are fixed all-ones
    buffers standing in for the neutral modulation point.
    """

    GAIN_INIT = 0.1

    def __init__(self, dims: tuple[int, ...]):
        super().__init__()
        self.gains = nn.ParameterList(nn.Parameter(torch.full((d,), self.GAIN_INIT)) for d in dims)
        for i, d in enumerate(dims):
            self.register_buffer(f"offset_{i}", torch.ones(d))

    def offset(self, i: int) -> Tensor:
        return getattr(self, f"offset_{i}")

    def forward(self, raw_codes: list[Tensor]) -> list[Tensor]:
        if len(raw_codes) != len(self.gains):
            raise ShapeError(f"expected {len(self.gains)} codes, got {len(raw_codes)}")
        out = []
        for i, c in enumerate(raw_codes):
            gain = self.gains[i]
            if c.shape[-1] != gain.shape[0]:
                raise ShapeError(f"code {i}: dim {c.shape[-1]} != affine dim {gain.shape[0]}")
            out.append(gain * c + self.offset(i))
        return out


class MapToMaps(nn.Module):
    """Two shared 3x3 conv stages, then two separated conv branches, each
    instance-normalized, yielding the pair of style maps for one resolution."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.shared1 = nn.Conv2d(in_channels, in_channels, 3, stride=1, padding=1)
        self.shared2 = nn.Conv2d(in_channels, out_channels, 3, stride=1, padding=1)
        self.branch0 = nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1)
        self.branch1 = nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1)

    def forward(self, latent: Tensor) -> tuple[Tensor, Tensor]:
        h = F.leaky_relu(self.shared1(latent), MAP_HEAD_SLOPE)
        h = F.leaky_relu(self.shared2(h), MAP_HEAD_SLOPE)
        return instance_norm(self.branch0(h)), instance_norm(self.branch1(h))


def pyramid_level_for_layer(index: int, layer_count: int) -> int:
    """Thirds rule: first third of layer indices read the coarsest level (0),
    middle third the medium level (1), the rest the finest level (2)."""
    if index < layer_count // 3:
        return 0
    if index < 2 * layer_count // 3:
        return 1
    return 2


class FacialAttributeEncoder(nn.Module):
    """Produces the full per-layer style-code sequence and the style maps."""

    def __init__(self, cfg: GeneratorConfig, width: int = 64, seed: int = 0):
        super().__init__()
        self.cfg = cfg.validate()
        self.table = build_layer_table(cfg)
        self.width = width
        self.backbone = EncoderBackbone(cfg.resolution, width=width, seed=seed)

        self.code_heads = nn.ModuleList()
        level_resolutions = (cfg.resolution // 8, cfg.resolution // 4, cfg.resolution // 2)
        for layer in self.table:
            level = pyramid_level_for_layer(layer.index, len(self.table))
            self.code_heads.append(MapToCode(level_resolutions[level], width, layer.in_channels))

        self.affine = StyleAffine(tuple(layer.in_channels for layer in self.table))

        self.map_heads = nn.ModuleDict()
        for res in cfg.style_map_resolutions:
            if res not in level_resolutions:
                raise ConfigurationError(
                    [f"style map resolution {res} is not a pyramid level "
                     f"(levels: {level_resolutions})"]
                )
            site_channels = cfg.channels(res)
            self.map_heads[str(res)] = MapToMaps(width, site_channels)

        seeded_normal_init_(self, seed + 1)
        with torch.no_grad():
            for gain in self.affine.gains:
                gain.fill_(StyleAffine.GAIN_INIT)
            for head in self.map_heads.values():
                for conv in (head.shared1, head.shared2, head.branch0, head.branch1):
                    conv.weight.mul_(MAP_HEAD_GAIN)

    @property
    def layer_count(self) -> int:
        return len(self.table)

    def encode_pyramid(self, image: Tensor) -> LatentPyramid:
        return self.backbone(image)

    def raw_codes(self, pyramid: LatentPyramid) -> list[Tensor]:
        """One pre-affine code vector per generator layer."""
        levels = pyramid.levels()
        out = []
        for layer in self.table:
            level = levels[pyramid_level_for_layer(layer.index, len(self.table))]
            out.append(self.code_heads[layer.index](level))
        return out

    def style_codes(self, image: Tensor) -> StyleCodeSet:
        pyramid = self.encode_pyramid(image)
        return StyleCodeSet(tuple(self.affine(self.raw_codes(pyramid))))

    def style_maps_from_pyramid(self, pyramid: LatentPyramid) -> StyleMapSet:
        # Each resolution yields a (branch0, branch1) pair consumed by its two
        # injection sites in layer-index order.
        pairs = {
            res: self.map_heads[str(res)](pyramid.by_resolution(res))
            for res in self.cfg.style_map_resolutions
        }
        out = []
        consumed: dict[int, int] = {}
        for site in style_map_sites(self.table):
            k = consumed.get(site.resolution, 0)
            out.append(pairs[site.resolution][k])
            consumed[site.resolution] = k + 1
        return StyleMapSet(tuple(out))

    def style_maps(self, image: Tensor) -> StyleMapSet:
        return self.style_maps_from_pyramid(self.encode_pyramid(image))

    def encode(self, image: Tensor) -> tuple[StyleCodeSet, StyleMapSet]:
        pyramid = self.encode_pyramid(image)
        codes = StyleCodeSet(tuple(self.affine(self.raw_codes(pyramid))))
        return codes, self.style_maps_from_pyramid(pyramid)
