"""Region-of-interest compositing for inference.

A fixed face box (specified on a 1024-pixel reference canvas and scaled
proportionally) is rasterized to a binary mask, blurred by area-averaging
down to a small grid and bilinearly upsampling back, then used as a convex
blend between the generated image and the target image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor

from .errors import ConfigurationError, ShapeError

REFERENCE_CANVAS = 1024


@dataclass(frozen=True)
class RoiMaskSpec:
    """Box geometry on the reference canvas plus the output canvas size."""

    canvas: int = REFERENCE_CANVAS
    box_top: int = 384
    box_left: int = 256
    box_height: int = 608
    box_width: int = 512
    blur_size: int = 16

    def scaled_box(self) -> tuple[int, int, int, int]:
        """(top, left, height, width) scaled to the canvas, rounded to the
        nearest integer."""
        s = self.canvas / REFERENCE_CANVAS

        def r(v: int) -> int:
            return int(math.floor(v * s + 0.5))

        return r(self.box_top), r(self.box_left), r(self.box_height), r(self.box_width)

    def problems(self) -> list[str]:
        out = []
        if self.canvas < 1:
            return [f"canvas must be positive, got {self.canvas}"]
        if self.blur_size < 2:
            out.append(f"blur size must be >= 2, got {self.blur_size}")
        elif self.canvas % self.blur_size != 0:
            out.append(f"canvas {self.canvas} must be divisible by blur size {self.blur_size}")
        top, left, height, width = self.scaled_box()
        if height < 1 or width < 1:
            out.append(f"scaled box degenerate: height={height}, width={width}")
        if top < 0 or left < 0 or top + height > self.canvas or left + width > self.canvas:
            out.append(
                f"scaled box ({top},{left},{height},{width}) exceeds canvas {self.canvas}"
            )
        return out

    def validate(self) -> "RoiMaskSpec":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self


def _area_downsample(x: np.ndarray, out_size: int) -> np.ndarray:
    """Exact block-mean downsampling; input size must be divisible."""
    n = x.shape[0]
    k = n // out_size
    return x.reshape(out_size, k, out_size, k).mean(axis=(1, 3))


def _bilinear_axis(x: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    """Bilinear upsampling along one axis with the half-pixel (align_corners
    False) convention and edge replication. Uses the a + f*(b-a) form so
    constant regions reproduce their value exactly."""
    x = np.moveaxis(x, axis, 0)
    m = x.shape[0]
    coords = (np.arange(out_size, dtype=np.float64) + 0.5) * (m / out_size) - 0.5
    i0 = np.floor(coords).astype(np.int64)
    frac = coords - i0
    i1 = np.clip(i0 + 1, 0, m - 1)
    i0 = np.clip(i0, 0, m - 1)
    lo = x[i0]
    hi = x[i1]
    out = lo + frac.reshape(-1, *([1] * (x.ndim - 1))) * (hi - lo)
    return np.moveaxis(out, 0, axis)


def build_mask(spec: RoiMaskSpec) -> np.ndarray:
    """Blurred box mask in [0, 1], shape (canvas, canvas), float32."""
    spec.validate()
    top, left, height, width = spec.scaled_box()
    hard = np.zeros((spec.canvas, spec.canvas), dtype=np.float64)
    hard[top : top + height, left : left + width] = 1.0
    coarse = _area_downsample(hard, spec.blur_size)
    soft = _bilinear_axis(coarse, spec.canvas, axis=0)
    soft = _bilinear_axis(soft, spec.canvas, axis=1)
    return soft.astype(np.float32)


def blend(x_swap: Tensor, x_tgt: Tensor, mask) -> Tensor:
    """mask * x_swap + (1 - mask) * x_tgt, broadcasting the mask over
    leading (batch, channel) dimensions."""
    if x_swap.shape != x_tgt.shape:
        raise ShapeError(f"image shapes differ: {tuple(x_swap.shape)} vs {tuple(x_tgt.shape)}")
    if isinstance(mask, np.ndarray):
        mask = torch.from_numpy(mask)
    mask = mask.to(x_swap.dtype)
    if mask.shape[-2:] != x_swap.shape[-2:]:
        raise ShapeError(
            f"mask spatial size {tuple(mask.shape[-2:])} does not match images "
            f"{tuple(x_swap.shape[-2:])}"
        )
    return mask * x_swap + (1.0 - mask) * x_tgt


def mask_to_image_bytes(mask: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] mask to uint8 for PNG export."""
    return np.clip(np.rint(mask * 255.0), 0, 255).astype(np.uint8)
