"""Style-based synthesis generator and its discriminator.

The generator consumes one modulation vector per layer (applied through
weight demodulation) plus four spatial style maps injected as noise at
fixed sites, and renders an RGB image by accumulating per-resolution
ToRGB outputs over bilinearly upsampled skip connections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .errors import ConfigurationError, ShapeError

DEMOD_EPS = 1e-8
MIN_RESOLUTION = 64


class LayerKind(str, Enum):
    CONV = "conv"
    CONV_UP = "conv_up"
    TO_RGB = "to_rgb"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def channel_schedule(resolution: int, base_channels: int, max_channels: int) -> int:
    """Feature channels at a given resolution: halve per octave, capped."""
    return min(max_channels, base_channels * 2 ** (10 - int(math.log2(resolution))))


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: int = 64
    base_channels: int = 16
    max_channels: int = 128
    border_index: int = 8
    style_map_resolutions: tuple[int, int] = (16, 32)
    rgb_channels: int = 3

    @property
    def layer_count(self) -> int:
        return 2 + 3 * (int(math.log2(self.resolution)) - 2)

    def channels(self, resolution: int) -> int:
        return channel_schedule(resolution, self.base_channels, self.max_channels)

    def problems(self) -> list[str]:
        out = []
        if not _is_power_of_two(self.resolution) or self.resolution < MIN_RESOLUTION:
            out.append(
                f"resolution must be a power of two >= {MIN_RESOLUTION}, got {self.resolution}"
            )
            return out  # layer_count is meaningless below; stop here
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            out.append(
                f"need 1 <= base_channels <= max_channels, got "
                f"{self.base_channels}/{self.max_channels}"
            )
        if not 0 < self.border_index < self.layer_count:
            out.append(
                f"border_index must lie strictly inside [1, {self.layer_count - 1}], "
                f"got {self.border_index}"
            )
        for res in self.style_map_resolutions:
            if not _is_power_of_two(res) or res < 16 or res >= self.resolution:
                out.append(
                    f"style map resolution {res} must be a power of two in "
                    f"[16, {self.resolution // 2}]"
                )
        if len(set(self.style_map_resolutions)) != len(self.style_map_resolutions):
            out.append("style map resolutions must be distinct")
        if self.rgb_channels < 1:
            out.append(f"rgb_channels must be >= 1, got {self.rgb_channels}")
        return out

    def validate(self) -> "GeneratorConfig":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self

    def as_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "base_channels": self.base_channels,
            "max_channels": self.max_channels,
            "border_index": self.border_index,
            "style_map_resolutions": list(self.style_map_resolutions),
            "rgb_channels": self.rgb_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "style_map_resolutions" in d:
            d["style_map_resolutions"] = tuple(d["style_map_resolutions"])
        return cls(**d)


@dataclass(frozen=True)
class LayerDescriptor:
    index: int
    resolution: int
    kind: LayerKind
    in_channels: int
    out_channels: int
    takes_style_map: bool

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "resolution": self.resolution,
            "kind": self.kind.value,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "takes_style_map": self.takes_style_map,
        }


def build_layer_table(cfg: GeneratorConfig) -> tuple[LayerDescriptor, ...]:
    """Deterministic layer layout: 4x4 {Conv, ToRGB}, then per octave
    {ConvUp, Conv, ToRGB} up to the output resolution."""
    cfg.validate()

    def takes_map(kind: LayerKind, res: int) -> bool:
        return kind in (LayerKind.CONV, LayerKind.CONV_UP) and res in cfg.style_map_resolutions

    layers = []
    c4 = cfg.channels(4)
    layers.append(LayerDescriptor(0, 4, LayerKind.CONV, c4, c4, takes_map(LayerKind.CONV, 4)))
    layers.append(LayerDescriptor(1, 4, LayerKind.TO_RGB, c4, cfg.rgb_channels, False))
    prev = c4
    res = 8
    while res <= cfg.resolution:
        c = cfg.channels(res)
        i = len(layers)
        layers.append(LayerDescriptor(i, res, LayerKind.CONV_UP, prev, c, takes_map(LayerKind.CONV_UP, res)))
        layers.append(LayerDescriptor(i + 1, res, LayerKind.CONV, c, c, takes_map(LayerKind.CONV, res)))
        layers.append(LayerDescriptor(i + 2, res, LayerKind.TO_RGB, c, cfg.rgb_channels, False))
        prev = c
        res *= 2
    assert len(layers) == cfg.layer_count
    return tuple(layers)


def style_map_sites(table: Sequence[LayerDescriptor]) -> tuple[LayerDescriptor, ...]:
    return tuple(layer for layer in table if layer.takes_style_map)


@dataclass(frozen=True)
class StyleCodeSet:
    """One modulation vector per generator layer, each of shape (N, in_channels)."""

    codes: tuple[Tensor, ...]

    def __len__(self) -> int:
        return len(self.codes)

    def __getitem__(self, i: int) -> Tensor:
        return self.codes[i]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.codes)

    @property
    def batch_size(self) -> int:
        return self.codes[0].shape[0]

    def validate_against(self, table: Sequence[LayerDescriptor]) -> "StyleCodeSet":
        if len(self.codes) != len(table):
            raise ShapeError(
                f"expected {len(table)} style codes, got {len(self.codes)}"
            )
        batch = self.codes[0].shape[0]
        for layer, code in zip(table, self.codes):
            if code.dim() != 2 or code.shape != (batch, layer.in_channels):
                raise ShapeError(
                    f"code {layer.index}: expected shape ({batch}, {layer.in_channels}), "
                    f"got {tuple(code.shape)}"
                )
        return self

    @classmethod
    def ones(cls, table: Sequence[LayerDescriptor], batch: int = 1, dtype=torch.float32) -> "StyleCodeSet":
        """Neutral modulation (all-ones vectors)."""
        return cls(tuple(torch.ones(batch, layer.in_channels, dtype=dtype) for layer in table))


@dataclass(frozen=True)
class StyleMapSet:
    """Spatial style maps for the injection sites, in layer-index order."""

    maps: tuple[Tensor, ...]

    def __len__(self) -> int:
        return len(self.maps)

    def __getitem__(self, i: int) -> Tensor:
        return self.maps[i]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.maps)

    def validate_against(self, table: Sequence[LayerDescriptor]) -> "StyleMapSet":
        sites = style_map_sites(table)
        if len(self.maps) != len(sites):
            raise ShapeError(f"expected {len(sites)} style maps, got {len(self.maps)}")
        batch = self.maps[0].shape[0]
        for site, m in zip(sites, self.maps):
            want = (batch, site.out_channels, site.resolution, site.resolution)
            if m.dim() != 4 or m.shape != want:
                raise ShapeError(
                    f"style map for layer {site.index}: expected shape {want}, "
                    f"got {tuple(m.shape)}"
                )
        return self

    def check_normalized(self, mean_tol: float = 1e-3, var_tol: float = 1e-2) -> None:
        """Per-channel statistics contract enforced upstream by instance norm."""
        for i, m in enumerate(self.maps):
            mean = m.mean(dim=(2, 3))
            var = m.var(dim=(2, 3), unbiased=False)
            if mean.abs().max().item() > mean_tol:
                raise ShapeError(f"style map {i}: channel mean off by {mean.abs().max():.2e}")
            if (var - 1).abs().max().item() > var_tol:
                raise ShapeError(f"style map {i}: channel variance off by {(var - 1).abs().max():.2e}")

    @classmethod
    def zeros(cls, table: Sequence[LayerDescriptor], batch: int = 1, dtype=torch.float32) -> "StyleMapSet":
        return cls(
            tuple(
                torch.zeros(batch, site.out_channels, site.resolution, site.resolution, dtype=dtype)
                for site in style_map_sites(table)
            )
        )


def demodulated_conv(
    features: Tensor,
    weight: Tensor,
    style: Tensor,
    eps: float = DEMOD_EPS,
    demodulate: bool = True,
) -> Tensor:
    """Convolve with per-input-channel style scaling and (optionally)
    per-output-channel L2 renormalization of the scaled weights.

    ``features`` is (N, C_in, H, W), ``weight`` is (C_out, C_in, k, k), and
    ``style`` is (C_in,) or (N, C_in). Padding keeps the spatial size.
    """
    if features.dim() != 4:
        raise ShapeError(f"features must be 4D (N,C,H,W), got {tuple(features.shape)}")
    if weight.dim() != 4:
        raise ShapeError(f"weight must be 4D (O,I,k,k), got {tuple(weight.shape)}")
    n, in_ch, h, w = features.shape
    out_ch, w_in, kh, kw = weight.shape
    if in_ch != w_in:
        raise ShapeError(f"feature channels {in_ch} != weight input channels {w_in}")
    if style.dim() == 1:
        style = style.unsqueeze(0).expand(n, -1)
    if style.shape != (n, in_ch):
        raise ShapeError(f"style must be ({n}, {in_ch}) or ({in_ch},), got {tuple(style.shape)}")

    scaled = weight.unsqueeze(0) * style[:, None, :, None, None]  # (N, O, I, kh, kw)
    if demodulate:
        denom = torch.sqrt(scaled.pow(2).sum(dim=(2, 3, 4), keepdim=True) + eps)
        scaled = scaled / denom
    out = F.conv2d(
        features.reshape(1, n * in_ch, h, w),
        scaled.reshape(n * out_ch, in_ch, kh, kw),
        padding=kh // 2,
        groups=n,
    )
    return out.reshape(n, out_ch, out.shape[-2], out.shape[-1])


def inject_style_map(features: Tensor, style_map: Tensor, scale) -> Tensor:
    """features + scale * style_map, element-wise."""
    if style_map.dim() == features.dim() - 1:
        style_map = style_map.unsqueeze(0)
    if style_map.shape[1:] != features.shape[1:] or (
        style_map.shape[0] not in (1, features.shape[0])
    ):
        raise ShapeError(
            f"style map shape {tuple(style_map.shape)} does not match features "
            f"{tuple(features.shape)}"
        )
    return features + scale * style_map


def _upsample2(x: Tensor) -> Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def seeded_normal_init_(module: nn.Module, seed: int, skip: tuple[str, ...] = ()) -> torch.Generator:
    """Reproducible init: weights ~ N(0, 1/sqrt(fan_in)), vectors/scalars zero.

    Walks parameters in sorted name order so the draw sequence is stable
    across processes. Returns the generator for follow-up custom draws.
    """
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(module.named_parameters()):
            if name in skip:
                continue
            if p.dim() >= 2:
                fan_in = int(torch.tensor(p.shape[1:]).prod().item())
                p.normal_(0.0, 1.0 / math.sqrt(fan_in), generator=g)
            else:
                p.zero_()
    return g


class SynthesisGenerator(nn.Module):
    """Renders an image from a StyleCodeSet and a StyleMapSet.

    Starts from a learned 4x4 constant; Conv/ConvUp layers apply demodulated
    convolutions (ConvUp bilinearly doubles the feature map first); ToRGB
    layers use style modulation without demodulation and accumulate into the
    skip image. Style maps are added after the convolution at their sites,
    each scaled by a learned scalar initialized to zero.
    """

    def __init__(self, cfg: GeneratorConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg.validate()
        self.table = build_layer_table(cfg)
        self.weights = nn.ParameterList()
        self.biases = nn.ParameterList()
        for layer in self.table:
            k = 1 if layer.kind is LayerKind.TO_RGB else 3
            self.weights.append(nn.Parameter(torch.empty(layer.out_channels, layer.in_channels, k, k)))
            self.biases.append(nn.Parameter(torch.zeros(layer.out_channels)))
        self.map_scales = nn.ParameterDict(
            {str(site.index): nn.Parameter(torch.zeros(())) for site in style_map_sites(self.table)}
        )
        self.const = nn.Parameter(torch.empty(1, cfg.channels(4), 4, 4))
        g = seeded_normal_init_(self, seed, skip=("const",))
        with torch.no_grad():
            self.const.normal_(0.0, 1.0, generator=g)

    def forward(
        self,
        codes: StyleCodeSet,
        maps: StyleMapSet,
        return_activations: bool = False,
    ):
        codes.validate_against(self.table)
        maps.validate_against(self.table)
        sites = [site.index for site in style_map_sites(self.table)]
        batch = codes.batch_size
        x = self.const.expand(batch, -1, -1, -1).to(codes[0].dtype)
        rgb = None
        activations = []
        for layer in self.table:
            w = self.weights[layer.index]
            b = self.biases[layer.index]
            code = codes[layer.index]
            if layer.kind is LayerKind.TO_RGB:
                y = demodulated_conv(x, w, code, demodulate=False)
                y = y + b[None, :, None, None]
                rgb = y if rgb is None else _upsample2(rgb) + y
                activations.append(rgb)
                continue
            if layer.kind is LayerKind.CONV_UP:
                x = _upsample2(x)
            x = demodulated_conv(x, w, code)
            if layer.takes_style_map:
                m = maps[sites.index(layer.index)]
                x = inject_style_map(x, m, self.map_scales[str(layer.index)])
            x = F.leaky_relu(x + b[None, :, None, None], 0.2)
            activations.append(x)
        if return_activations:
            return rgb, activations
        return rgb

    def synthesize(self, codes: StyleCodeSet, maps: StyleMapSet) -> Tensor:
        return self.forward(codes, maps)


class _DiscriminatorBlock(nn.Module):
    """Residual downsampling block: two 3x3 convs then 2x average pool,
    summed with a pooled 1x1 skip and rescaled."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, in_channels, 3, padding=1)
        self.conv2 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.skip = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        y = F.leaky_relu(self.conv1(x), 0.2)
        y = F.leaky_relu(self.conv2(y), 0.2)
        y = F.avg_pool2d(y, 2)
        s = self.skip(F.avg_pool2d(x, 2))
        return (y + s) / math.sqrt(2.0)


class Discriminator(nn.Module):
    """Produces one realism logit per image.

    Accepts any power-of-two resolution >= 8 so tiny instances can be used
    for gradient verification.
    """

    def __init__(
        self,
        resolution: int,
        base_channels: int = 16,
        max_channels: int = 128,
        rgb_channels: int = 3,
        seed: int = 0,
    ):
        super().__init__()
        if not _is_power_of_two(resolution) or resolution < 8:
            raise ConfigurationError(
                [f"discriminator resolution must be a power of two >= 8, got {resolution}"]
            )
        self.resolution = resolution
        self.rgb_channels = rgb_channels

        def ch(res: int) -> int:
            return channel_schedule(res, base_channels, max_channels)

        self.from_rgb = nn.Conv2d(rgb_channels, ch(resolution), 1)
        blocks = []
        res = resolution
        while res > 4:
            blocks.append(_DiscriminatorBlock(ch(res), ch(res // 2)))
            res //= 2
        self.blocks = nn.ModuleList(blocks)
        self.final_conv = nn.Conv2d(ch(4), ch(4), 3, padding=1)
        self.dense = nn.Linear(ch(4) * 16, ch(4))
        self.out = nn.Linear(ch(4), 1)
        seeded_normal_init_(self, seed)

    @classmethod
    def from_config(cls, cfg: GeneratorConfig, seed: int = 0) -> "Discriminator":
        cfg.validate()
        return cls(cfg.resolution, cfg.base_channels, cfg.max_channels, cfg.rgb_channels, seed)

    def forward(self, image: Tensor) -> Tensor:
        if image.dim() == 3:
            image = image.unsqueeze(0)
        want = (self.rgb_channels, self.resolution, self.resolution)
        if image.dim() != 4 or tuple(image.shape[1:]) != want:
            raise ShapeError(
                f"expected images of shape (N, {want[0]}, {want[1]}, {want[2]}), "
                f"got {tuple(image.shape)}"
            )
        x = F.leaky_relu(self.from_rgb(image), 0.2)
        for block in self.blocks:
            x = block(x)
        x = F.leaky_relu(self.final_conv(x), 0.2)
        x = F.leaky_relu(self.dense(x.flatten(1)), 0.2)
        return self.out(x).squeeze(1)

    def discriminate(self, image: Tensor) -> Tensor:
        return self.forward(image)
