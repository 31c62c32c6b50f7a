"""Training objectives and the weighted total.

Generator-side terms: identity (one minus cosine similarity), pixel L1 plus
perceptual feature reconstruction, non-saturating adversarial loss, face
parameter losses (shape toward the source; pose and expression toward the
target), and an optional sparse landmark loss. Discriminator-side terms:
non-saturating loss plus a lazily applied gradient penalty on real images.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import torch
from torch import Tensor
from torch.nn import functional as F

from .errors import ArgumentError, ConfigurationError, NumericError, ShapeError
from .surrogates import AttributePack

# Chin, nose bridge, outer eye corners and mouth corners in the 68-point
# convention. Indices are 1-based; the loss converts them internally.
SPARSE_LANDMARK_SUBSET = (9, 31, 37, 46, 49, 55)

TOTAL_TERMS = ("id", "recon", "adv", "r1", "shape", "pose", "expression", "landmark")


@dataclass(frozen=True)
class LossWeights:
    id: float = 2.0
    recon: float = 1.0
    adv: float = 0.1
    r1: float = 10.0
    shape: float = 5.0
    pose: float = 1.0
    expression: float = 1.0
    landmark: float = 0.0
    r1_period: int = 16

    def problems(self) -> list[str]:
        out = []
        for term in TOTAL_TERMS:
            if getattr(self, term) < 0:
                out.append(f"loss weight {term} must be >= 0, got {getattr(self, term)}")
        if self.r1_period < 1:
            out.append(f"r1_period must be >= 1, got {self.r1_period}")
        return out

    def validate(self) -> "LossWeights":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self

    def for_term(self, term: str) -> float:
        return float(getattr(self, term))

    def as_dict(self) -> dict:
        return {t: getattr(self, t) for t in TOTAL_TERMS} | {"r1_period": self.r1_period}


@dataclass
class LossReport:
    """Itemized loss values for one step; ``total`` is the weighted sum of
    ``terms``; ``extras`` are logged but not part of the total."""

    step: int
    terms: dict[str, float]
    weighted: dict[str, float]
    total: float
    extras: dict[str, float] = field(default_factory=dict)

    def is_finite(self) -> bool:
        values = [self.total, *self.terms.values(), *self.extras.values()]
        return all(math.isfinite(v) for v in values)

    def json_line(self, lr: float | None = None) -> str:
        record: dict = {"step": self.step}
        if lr is not None:
            record["lr"] = lr
        record.update(self.terms)
        record.update(self.extras)
        record["total"] = self.total
        return json.dumps(record)


def _check_finite(name: str, t: Tensor) -> Tensor:
    if not torch.isfinite(t).all():
        raise NumericError(f"{name} contains non-finite values")
    return t


def id_loss(e_swap: Tensor, e_src: Tensor) -> Tensor:
    """1 - cosine similarity between unit embeddings; mean over the batch."""
    _check_finite("e_swap", e_swap)
    _check_finite("e_src", e_src)
    if e_swap.shape != e_src.shape:
        raise ShapeError(f"embedding shapes differ: {tuple(e_swap.shape)} vs {tuple(e_src.shape)}")
    cos = (e_swap * e_src).sum(dim=-1)
    return (1.0 - cos).mean()


def recon_loss(x_swap: Tensor, x_tgt: Tensor, perceptual) -> Tensor:
    """Mean absolute pixel difference plus the sum over feature layers of
    mean squared feature distance."""
    if x_swap.shape != x_tgt.shape:
        raise ShapeError(f"image shapes differ: {tuple(x_swap.shape)} vs {tuple(x_tgt.shape)}")
    loss = (x_swap - x_tgt).abs().mean()
    if perceptual is not None:
        feats_swap = perceptual(x_swap)
        feats_tgt = perceptual(x_tgt)
        for fs, ft in zip(feats_swap, feats_tgt):
            loss = loss + (fs - ft).pow(2).mean()
    return loss


def adv_g_loss(logits_fake: Tensor) -> Tensor:
    _check_finite("logits_fake", logits_fake)
    return F.softplus(-logits_fake).mean()


def adv_d_loss(logits_real: Tensor, logits_fake: Tensor) -> Tensor:
    _check_finite("logits_real", logits_real)
    _check_finite("logits_fake", logits_fake)
    return F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()


def r1_penalty(discriminator, x_real: Tensor) -> Tensor:
    """Mean squared gradient norm of the real logits with respect to the
    real images. Keeps the graph so it can be backpropagated."""
    x = x_real.detach().requires_grad_(True)
    logits = discriminator(x)
    (grads,) = torch.autograd.grad(
        outputs=logits.sum(), inputs=x, create_graph=True
    )
    return grads.pow(2).flatten(1).sum(dim=1).mean()


def _l2(a: Tensor, b: Tensor, what: str) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() == 1:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    return (a - b).flatten(1).norm(dim=1).mean()


def param_losses(
    pack_swap: AttributePack, pack_src: AttributePack, pack_tgt: AttributePack
) -> tuple[Tensor, Tensor, Tensor]:
    """Shape compares the swap to the SOURCE; pose and expression compare the
    swap to the TARGET."""
    l_shape = _l2(pack_swap.shape, pack_src.shape, "shape")
    l_pose = _l2(pack_swap.pose, pack_tgt.pose, "pose")
    l_exp = _l2(pack_swap.expression, pack_tgt.expression, "expression")
    return l_shape, l_pose, l_exp


def to_zero_based(subset: Sequence[int], count: int) -> tuple[int, ...]:
    """Convert 1-based landmark indices to 0-based, validating the range."""
    out = []
    for k in subset:
        if not 1 <= k <= count:
            raise ArgumentError(f"landmark index {k} outside [1, {count}] (indices are 1-based)")
        out.append(k - 1)
    return tuple(out)


def landmark_loss(
    q_gen: Tensor, q_gt: Tensor, subset: Sequence[int] = SPARSE_LANDMARK_SUBSET
) -> Tensor:
    """Mean over the chosen keypoints of the per-point L1 distance
    |dx| + |dy|. ``subset`` uses 1-based indices."""
    if q_gen.shape != q_gt.shape or q_gen.shape[-1] != 2:
        raise ShapeError(
            f"landmark arrays must share shape (..., K, 2); got "
            f"{tuple(q_gen.shape)} vs {tuple(q_gt.shape)}"
        )
    idx = to_zero_based(subset, q_gen.shape[-2])
    diff = (q_gen[..., idx, :] - q_gt[..., idx, :]).abs()
    # Sum |dx| + |dy| per point, average over points (and batch if present).
    return diff.sum(dim=-1).mean()


def weighted_terms(
    terms: Mapping[str, Tensor | float], weights: LossWeights, step: int
) -> dict[str, Tensor | float]:
    """Per-term weighted contributions; r1 participates only on its lazy
    schedule (step divisible by the period)."""
    out: dict[str, Tensor | float] = {}
    for name, value in terms.items():
        if name not in TOTAL_TERMS:
            raise ArgumentError(f"unknown loss term {name!r}; expected one of {TOTAL_TERMS}")
        if name == "r1" and step % weights.r1_period != 0:
            continue
        out[name] = weights.for_term(name) * value
    return out


def _scalar(v: Tensor | float) -> float:
    return float(v.detach()) if isinstance(v, Tensor) else float(v)


def total_loss(
    terms: Mapping[str, Tensor | float],
    weights: LossWeights,
    step: int,
    extras: Mapping[str, Tensor | float] | None = None,
) -> LossReport:
    contributions = {k: _scalar(v) for k, v in weighted_terms(terms, weights, step).items()}
    return LossReport(
        step=step,
        terms={k: _scalar(v) for k, v in terms.items()},
        weighted=contributions,
        total=sum(contributions.values()),
        extras={k: _scalar(v) for k, v in (extras or {}).items()},
    )
