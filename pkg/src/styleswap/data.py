"""Image IO and the training dataset.

Images are decoded to float32 CHW tensors in [-1, 1] at a fixed resolution;
export clamps to [-1, 1] and writes 8-bit PNG.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import Tensor

from .errors import DataError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def load_image(path: str | Path, resolution: int) -> Tensor:
    path = Path(path)
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if img.size != (resolution, resolution):
                img = img.resize((resolution, resolution), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32)
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    chw = np.transpose(arr, (2, 0, 1)) / 127.5 - 1.0
    return torch.from_numpy(chw)


def save_image(tensor: Tensor, path: str | Path) -> None:
    """Clamp to [-1, 1], map affinely to [0, 255], write PNG."""
    if tensor.dim() == 4:
        if tensor.shape[0] != 1:
            raise DataError(f"can only save a single image, got batch of {tensor.shape[0]}")
        tensor = tensor[0]
    arr = tensor.detach().clamp(-1.0, 1.0).cpu().numpy()
    arr = np.rint((np.transpose(arr, (1, 2, 0)) + 1.0) * 127.5).astype(np.uint8)
    Image.fromarray(arr).save(Path(path), format="PNG")


class ImageDataset:
    """Sorted directory of images decoded at a fixed resolution."""

    def __init__(self, root: str | Path, resolution: int):
        self.root = Path(root)
        self.resolution = resolution
        if not self.root.is_dir():
            raise DataError(f"dataset directory {self.root} does not exist")
        self.paths = sorted(
            p for p in self.root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not self.paths:
            raise DataError(f"no images found under {self.root}")
        self._stack: Tensor | None = None

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index: int) -> Tensor:
        return self.stack()[index]

    def stack(self) -> Tensor:
        if self._stack is None:
            self._stack = torch.stack(
                [load_image(p, self.resolution) for p in self.paths]
            )
        return self._stack


class TensorDataset:
    """In-memory dataset over a preloaded (N, C, H, W) tensor."""

    def __init__(self, images: Tensor):
        if images.dim() != 4 or images.shape[0] == 0:
            raise DataError(f"expected a non-empty (N,C,H,W) tensor, got {tuple(images.shape)}")
        self.images = images

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, index: int) -> Tensor:
        return self.images[index]

    def stack(self) -> Tensor:
        return self.images
