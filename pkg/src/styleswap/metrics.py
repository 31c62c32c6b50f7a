"""Quantitative evaluation: per-pair attribute distances, feature-space
Frechet distance, and the relative identity/shape metrics for ID mixing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from torch import Tensor

from .errors import ArgumentError, DataError
from .surrogates import PerceptionSuite

log = logging.getLogger(__name__)

CSV_COLUMNS = ("Identity", "Shape", "Expression", "Pose", "Pose-HN", "FID")


@dataclass
class MetricReport:
    identity: float
    shape: float
    expression: float
    pose: float
    pose_hn: float
    fid: float | None
    pairs: int

    def as_dict(self) -> dict:
        return {
            "identity": self.identity,
            "shape": self.shape,
            "expression": self.expression,
            "pose": self.pose,
            "pose_hn": self.pose_hn,
            "fid": self.fid,
            "pairs": self.pairs,
        }

    def csv_rows(self) -> list[str]:
        cols = CSV_COLUMNS if self.fid is not None else CSV_COLUMNS[:-1]
        values = [self.identity, self.shape, self.expression, self.pose, self.pose_hn]
        if self.fid is not None:
            values.append(self.fid)
        return [
            ",".join(cols),
            ",".join(f"{v:.6f}" for v in values),
        ]


def _l2(a: Tensor, b: Tensor) -> float:
    return float((a - b).flatten().norm().item())


def pair_metrics(
    x_swap: Tensor, x_src: Tensor, x_tgt: Tensor, suite: PerceptionSuite
) -> dict[str, float]:
    """Identity and shape measure distance to the SOURCE; expression, pose
    and pose feature distance measure distance to the TARGET."""
    pack_swap = suite.attributes(x_swap)
    pack_src = suite.attributes(x_src)
    pack_tgt = suite.attributes(x_tgt)
    return {
        "identity": _l2(pack_swap.id_embedding, pack_src.id_embedding),
        "shape": _l2(pack_swap.shape, pack_src.shape),
        "expression": _l2(pack_swap.expression, pack_tgt.expression),
        "pose": _l2(pack_swap.pose, pack_tgt.pose),
        "pose_hn": _l2(suite.pose_feats(x_swap), suite.pose_feats(x_tgt)),
    }


def aggregate(records: Sequence[dict], fid_value: float | None = None) -> MetricReport:
    if not records:
        raise DataError("no metric records to aggregate")
    mean = {k: float(np.mean([r[k] for r in records])) for k in records[0]}
    return MetricReport(
        identity=mean["identity"],
        shape=mean["shape"],
        expression=mean["expression"],
        pose=mean["pose"],
        pose_hn=mean["pose_hn"],
        fid=fid_value,
        pairs=len(records),
    )


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_real: np.ndarray, features_gen: np.ndarray, eps: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    Covariances are regularized by ``eps * I``; the trace of the covariance
    cross term uses an eigendecomposition of the symmetrized product, with
    negative eigenvalues clipped at zero.
    """
    real = np.asarray(features_real, dtype=np.float64)
    gen = np.asarray(features_gen, dtype=np.float64)
    if real.ndim != 2 or gen.ndim != 2 or real.shape[1] != gen.shape[1]:
        raise ArgumentError(
            f"feature sets must be 2D with a shared dimension; got "
            f"{real.shape} and {gen.shape}"
        )
    if real.shape[0] < 2 or gen.shape[0] < 2:
        raise ArgumentError("need at least 2 samples per side to fit a Gaussian")
    mu_r, mu_g = real.mean(axis=0), gen.mean(axis=0)
    cov_r = np.cov(real, rowvar=False) + eps * np.eye(real.shape[1])
    cov_g = np.cov(gen, rowvar=False) + eps * np.eye(gen.shape[1])
    cov_r = np.atleast_2d(cov_r)
    cov_g = np.atleast_2d(cov_g)

    root_r = _sqrt_psd(cov_r)
    inner = root_r @ cov_g @ root_r
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < -1e-10:
        log.warning("covariance cross term had negative eigenvalue %.3e; clipping", vals.min())
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()

    value = float(((mu_r - mu_g) ** 2).sum() + np.trace(cov_r) + np.trace(cov_g) - 2.0 * tr_sqrt)
    return max(value, 0.0)


def relative_from_distances(d_gb: float, d_lc: float) -> tuple[float, float]:
    """Normalized split of two distances; (0.5, 0.5) when both are zero."""
    if d_gb < 0 or d_lc < 0:
        raise ArgumentError(f"distances must be >= 0, got {d_gb}, {d_lc}")
    denom = d_gb + d_lc
    if denom == 0.0:
        log.warning("both distances are zero; defining relative metrics as (0.5, 0.5)")
        return 0.5, 0.5
    return d_gb / denom, d_lc / denom


def relative_metrics(
    x_mix: Tensor, x_gb: Tensor, x_lc: Tensor, suite: PerceptionSuite
) -> tuple[float, float, float, float]:
    """(R-ID global, R-ID local, R-Shape global, R-Shape local)."""
    e_mix = suite.id_embed(x_mix)
    d_id_gb = _l2(e_mix, suite.id_embed(x_gb))
    d_id_lc = _l2(e_mix, suite.id_embed(x_lc))
    s_mix = suite.attributes(x_mix).shape
    d_sh_gb = _l2(s_mix, suite.attributes(x_gb).shape)
    d_sh_lc = _l2(s_mix, suite.attributes(x_lc).shape)
    r_id = relative_from_distances(d_id_gb, d_id_lc)
    r_shape = relative_from_distances(d_sh_gb, d_sh_lc)
    return r_id[0], r_id[1], r_shape[0], r_shape[1]


@dataclass(frozen=True)
class MixTriplet:
    target_id: int
    global_id: int
    local_id: int


def build_triplets(dataset_size: int, n: int, seed: int) -> list[MixTriplet]:
    """Seeded random triplets with distinct ids whenever the dataset allows."""
    if dataset_size < 1:
        raise DataError("cannot build triplets from an empty dataset")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        if dataset_size >= 3:
            t, g, l = rng.choice(dataset_size, size=3, replace=False)
        else:
            t, g, l = rng.choice(dataset_size, size=3, replace=True)
        out.append(MixTriplet(int(t), int(g), int(l)))
    return out
