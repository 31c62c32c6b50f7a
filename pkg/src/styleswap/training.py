"""Optimization loop: batch assembly with one self-reconstruction pair,
alternating discriminator and encoder+generator updates, lazy gradient
penalty, staircase learning-rate decay, and JSON-lines logging."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np
import torch
from torch import Tensor

from .errors import ConfigurationError, DataError, NumericError, TrainingDiverged
from .generator import SynthesisGenerator, Discriminator
from .encoder import FacialAttributeEncoder
from .losses import (
    LossReport,
    LossWeights,
    adv_d_loss,
    adv_g_loss,
    id_loss,
    landmark_loss,
    param_losses,
    r1_penalty,
    recon_loss,
    total_loss,
    weighted_terms,
)
from .routing import assemble, plan_face_swap
from .surrogates import PerceptionSuite


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2000
    batch_size: int = 4
    self_recon_count: int = 1
    lr: float = 1e-4
    decay_amount: float = 2e-5
    decay_period: int = 40_000
    decay_start: int = 500_000
    seed: int = 0
    checkpoint_period: int = 500

    def problems(self) -> list[str]:
        out = []
        if self.total_steps < 1:
            out.append(f"total_steps must be >= 1, got {self.total_steps}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.self_recon_count < max(self.batch_size, 1):
            out.append(
                f"self_recon_count must lie in [0, batch_size), got "
                f"{self.self_recon_count} with batch_size {self.batch_size}"
            )
        if self.lr <= 0:
            out.append(f"lr must be > 0, got {self.lr}")
        if self.decay_amount < 0:
            out.append(f"decay_amount must be >= 0, got {self.decay_amount}")
        if self.decay_period < 1:
            out.append(f"decay_period must be >= 1, got {self.decay_period}")
        if self.decay_start < 0:
            out.append(f"decay_start must be >= 0, got {self.decay_start}")
        if self.checkpoint_period < 1:
            out.append(f"checkpoint_period must be >= 1, got {self.checkpoint_period}")
        return out

    def validate(self) -> "TrainConfig":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self

    def as_dict(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "batch_size": self.batch_size,
            "self_recon_count": self.self_recon_count,
            "lr": self.lr,
            "decay_amount": self.decay_amount,
            "decay_period": self.decay_period,
            "decay_start": self.decay_start,
            "seed": self.seed,
            "checkpoint_period": self.checkpoint_period,
        }


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Base rate up to and including the decay start, then a staircase that
    drops by ``decay_amount`` every ``decay_period`` steps, floored at 0."""
    if step < 0:
        raise ConfigurationError([f"step must be >= 0, got {step}"])
    if step <= cfg.decay_start:
        return cfg.lr
    decays = (step - cfg.decay_start) // cfg.decay_period
    return max(cfg.lr - decays * cfg.decay_amount, 0.0)


@dataclass
class Batch:
    sources: Tensor
    targets: Tensor
    source_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    self_mask: tuple[bool, ...]


def make_batch(dataset, rng: np.random.Generator, cfg: TrainConfig) -> Batch:
    """Uniform-with-replacement pairs; the first ``self_recon_count`` entries
    reuse the target as the source."""
    n = len(dataset)
    if n == 0:
        raise DataError("cannot sample a batch from an empty dataset")
    target_ids = [int(rng.integers(n)) for _ in range(cfg.batch_size)]
    source_ids = []
    self_mask = []
    for i, t in enumerate(target_ids):
        if i < cfg.self_recon_count:
            source_ids.append(t)
            self_mask.append(True)
        else:
            source_ids.append(int(rng.integers(n)))
            self_mask.append(False)
    images = dataset.stack()
    return Batch(
        sources=images[source_ids],
        targets=images[target_ids],
        source_ids=tuple(source_ids),
        target_ids=tuple(target_ids),
        self_mask=tuple(self_mask),
    )


def build_optimizer(
    params, lr: float, kind: str = "adam", betas: tuple[float, float] = (0.5, 0.99)
) -> torch.optim.Optimizer:
    """Adaptive-moment optimizer behind a small factory so variants can be
    slotted in without touching the loop. Low first-moment decay suits the
    alternating adversarial updates at desk scale."""
    if kind == "adam":
        return torch.optim.Adam(params, lr=lr, betas=betas)
    raise ConfigurationError([f"unknown optimizer kind {kind!r}"])


class Trainer:
    """Single-writer training loop over an encoder, generator, discriminator
    and a frozen perception suite."""

    def __init__(
        self,
        encoder: FacialAttributeEncoder,
        generator: SynthesisGenerator,
        discriminator: Discriminator,
        suite: PerceptionSuite,
        cfg: TrainConfig,
        weights: LossWeights,
    ):
        self.encoder = encoder
        self.generator = generator
        self.discriminator = discriminator
        self.suite = suite
        self.cfg = cfg.validate()
        self.weights = weights.validate()
        self.plan = plan_face_swap(generator.cfg)
        gen_params = list(encoder.parameters()) + list(generator.parameters())
        self.g_opt = build_optimizer(gen_params, cfg.lr)
        self.d_opt = build_optimizer(discriminator.parameters(), cfg.lr)
        self.batch_rng = np.random.default_rng(cfg.seed)
        self.step = 0

    def swap(self, sources: Tensor, targets: Tensor) -> Tensor:
        """Face-swap forward pass for a batch of (source, target) pairs."""
        codes_src, _ = self.encoder.encode(sources)
        codes_tgt, maps_tgt = self.encoder.encode(targets)
        codes, maps = assemble(
            {"source": codes_src, "target": codes_tgt}, maps_tgt, self.plan
        )
        return self.generator(codes, maps)

    def _set_lr(self, step: int) -> float:
        lr = lr_at(step, self.cfg)
        for opt in (self.g_opt, self.d_opt):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    def train_step(self, batch: Batch, step: int) -> LossReport:
        try:
            return self._train_step(batch, step)
        except NumericError as exc:
            raise TrainingDiverged(f"non-finite values during step {step}: {exc}") from exc

    def _train_step(self, batch: Batch, step: int) -> LossReport:
        self._set_lr(step)
        r1_fires = step % self.weights.r1_period == 0

        # One swap forward serves both updates: the discriminator sees it
        # detached, the generator update reuses the live graph afterwards.
        swap = self.swap(batch.sources, batch.targets)

        # Discriminator update on real targets vs detached swaps.
        d_real = self.discriminator(batch.targets)
        d_fake = self.discriminator(swap.detach())
        d_adv = adv_d_loss(d_real, d_fake)
        r1_value = None
        d_total = d_adv
        if r1_fires:
            r1_value = r1_penalty(self.discriminator, batch.targets)
            d_total = d_total + self.weights.r1 * r1_value
        self.d_opt.zero_grad(set_to_none=True)
        d_total.backward()
        self.d_opt.step()

        # Encoder + generator update on the full generator objective,
        # with the adversarial term scored by the just-updated discriminator.
        pack_swap = self.suite.attributes(swap)
        pack_src = self.suite.attributes(batch.sources)
        pack_tgt = self.suite.attributes(batch.targets)
        l_shape, l_pose, l_exp = param_losses(pack_swap, pack_src, pack_tgt)
        terms: dict[str, Tensor] = {
            "id": id_loss(pack_swap.id_embedding, pack_src.id_embedding),
            "recon": recon_loss(swap, batch.targets, self.suite.perceptual_feats),
            "adv": adv_g_loss(self.discriminator(swap)),
            "shape": l_shape,
            "pose": l_pose,
            "expression": l_exp,
        }
        if self.weights.landmark > 0:
            q_gt = self.suite.face_params.landmarks_from_params(
                pack_src.shape, pack_tgt.pose, pack_tgt.expression
            )
            terms["landmark"] = landmark_loss(pack_swap.landmarks, q_gt)
        g_total = sum(weighted_terms(terms, self.weights, step).values())
        self.g_opt.zero_grad(set_to_none=True)
        g_total.backward()
        self.g_opt.step()

        report_terms = dict(terms)
        if r1_value is not None:
            report_terms["r1"] = r1_value
        report = total_loss(
            report_terms, self.weights, step, extras={"d_adv": d_adv}
        )
        if not report.is_finite():
            raise TrainingDiverged(
                f"non-finite loss at step {step}: {report.terms}", report
            )
        self.step = step + 1
        return report

    def self_recon_l1(self, batch: Batch) -> float:
        """Mean absolute error of the self-reconstruction pairs (diagnostic)."""
        idx = [i for i, is_self in enumerate(batch.self_mask) if is_self]
        if not idx:
            return math.nan
        with torch.no_grad():
            out = self.swap(batch.targets[idx], batch.targets[idx])
            return float((out - batch.targets[idx]).abs().mean())

    def fit(
        self,
        dataset,
        steps: int | None = None,
        log_stream: IO[str] | None = None,
        checkpoint_dir: str | Path | None = None,
        save_checkpoint_fn=None,
    ) -> list[LossReport]:
        """Run ``steps`` (default: config total) steps from the current step
        counter; returns the reports in order."""
        end = self.step + (steps if steps is not None else self.cfg.total_steps)
        reports = []
        while self.step < end:
            step = self.step
            batch = make_batch(dataset, self.batch_rng, self.cfg)
            report = self.train_step(batch, step)
            reports.append(report)
            if log_stream is not None:
                log_stream.write(report.json_line(lr=lr_at(step, self.cfg)) + "\n")
            at_period = (step + 1) % self.cfg.checkpoint_period == 0
            if checkpoint_dir is not None and save_checkpoint_fn is not None and (
                at_period or self.step == end
            ):
                save_checkpoint_fn(self, Path(checkpoint_dir) / f"step_{self.step:08d}.pt")
        return reports

    # State used by checkpointing; optimizer state dicts are handled by the
    # checkpoint module alongside module parameters.
    def rng_state(self) -> dict:
        return {"batch_rng": self.batch_rng.bit_generator.state}

    def restore_rng_state(self, state: dict) -> None:
        self.batch_rng.bit_generator.state = state["batch_rng"]
