"""Frozen perception networks standing in for pretrained evaluators.

Losses and metrics only need four interfaces: an identity embedder, a face
parameter estimator (shape/pose/expression plus landmarks), a pose feature
extractor, and a multi-layer perceptual feature extractor. At desk scale
each is a small randomly-initialized convnet, frozen after construction and
fully reproducible from its seed. External models can be plugged in through
the adapter registry as long as they honor the same contracts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .errors import ArgumentError, ConfigurationError, ShapeError
from .generator import seeded_normal_init_


@dataclass(frozen=True)
class SurrogateSpec:
    kind: str = "fixed_random"
    seed: int = 7
    input_size: int = 64
    id_dim: int = 64
    shape_dim: int = 20
    pose_dim: int = 6
    expression_dim: int = 10
    landmark_count: int = 68
    pose_feature_dim: int = 32
    perceptual_layers: int = 4
    external: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        if self.kind not in ("fixed_random", "external"):
            out.append(f"surrogate kind must be fixed_random or external, got {self.kind!r}")
        for name in ("input_size", "id_dim", "shape_dim", "pose_dim", "expression_dim",
                     "landmark_count", "pose_feature_dim", "perceptual_layers"):
            if getattr(self, name) < 1:
                out.append(f"surrogate {name} must be >= 1")
        return out

    def validate(self) -> "SurrogateSpec":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "input_size": self.input_size,
            "id_dim": self.id_dim,
            "shape_dim": self.shape_dim,
            "pose_dim": self.pose_dim,
            "expression_dim": self.expression_dim,
            "landmark_count": self.landmark_count,
            "pose_feature_dim": self.pose_feature_dim,
            "perceptual_layers": self.perceptual_layers,
            "external": dict(self.external),
        }


@dataclass(frozen=True)
class AttributePack:
    """Per-image perception outputs used by losses and metrics."""

    id_embedding: Tensor   # (N, id_dim), unit norm
    shape: Tensor          # (N, shape_dim)
    pose: Tensor           # (N, pose_dim)
    expression: Tensor     # (N, expression_dim)
    landmarks: Tensor      # (N, K, 2), coordinates in [0, 1]


def _as_batch(image: Tensor, input_size: int) -> Tensor:
    if image.dim() == 3:
        image = image.unsqueeze(0)
    if image.dim() != 4 or image.shape[-2:] != (input_size, input_size):
        raise ShapeError(
            f"expected images of spatial size {input_size}x{input_size}, "
            f"got {tuple(image.shape)}"
        )
    return image


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module.eval()


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameter and buffer bytes, in state-dict order."""
    h = hashlib.sha256()
    for key, value in module.state_dict().items():
        h.update(key.encode())
        h.update(value.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


class _ConvTrunk(nn.Module):
    """Stride-2 conv stages with LeakyReLU; returns all stage activations."""

    def __init__(self, stages: int, width: int, in_channels: int = 3):
        super().__init__()
        convs = []
        c = in_channels
        for _ in range(stages):
            convs.append(nn.Conv2d(c, width, 3, stride=2, padding=1))
            c = width
        self.convs = nn.ModuleList(convs)

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats


class IdentityEmbedder(nn.Module):
    """Maps an image to a unit-norm identity embedding."""

    def __init__(self, spec: SurrogateSpec):
        super().__init__()
        self.input_size = spec.input_size
        self.trunk = _ConvTrunk(3, 32)
        self.head = nn.Linear(32, spec.id_dim)
        seeded_normal_init_(self, spec.seed * 4 + 0)
        freeze(self)

    def forward(self, image: Tensor) -> Tensor:
        x = _as_batch(image, self.input_size)
        feat = self.trunk(x)[-1]
        v = self.head(F.adaptive_avg_pool2d(feat, 1).flatten(1))
        return F.normalize(v, dim=-1, eps=1e-12)


class FaceParamEstimator(nn.Module):
    """3D-morphable-model style parameter regressor.

    Shape, pose and expression heads are tanh-bounded in (-1, 1). Landmarks
    come from a fixed affine head on the concatenated parameters whose rows
    are L1-normalized, so coordinates stay inside [0, 1] and ground truth
    landmarks for mixed parameters (e.g. source shape with target pose and
    expression) can be synthesized exactly.
    """

    def __init__(self, spec: SurrogateSpec):
        super().__init__()
        self.input_size = spec.input_size
        self.dims = (spec.shape_dim, spec.pose_dim, spec.expression_dim)
        self.landmark_count = spec.landmark_count
        self.trunk = _ConvTrunk(3, 32)
        self.shape_head = nn.Linear(32, spec.shape_dim)
        self.pose_head = nn.Linear(32, spec.pose_dim)
        self.expression_head = nn.Linear(32, spec.expression_dim)
        g = seeded_normal_init_(self, spec.seed * 4 + 1)
        param_dim = sum(self.dims)
        lm = torch.randn(spec.landmark_count * 2, param_dim, generator=g)
        lm = lm / lm.abs().sum(dim=1, keepdim=True)
        self.register_buffer("landmark_weight", lm)
        freeze(self)

    def params(self, image: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        x = _as_batch(image, self.input_size)
        feat = F.adaptive_avg_pool2d(self.trunk(x)[-1], 1).flatten(1)
        return (
            torch.tanh(self.shape_head(feat)),
            torch.tanh(self.pose_head(feat)),
            torch.tanh(self.expression_head(feat)),
        )

    def landmarks_from_params(self, shape: Tensor, pose: Tensor, expression: Tensor) -> Tensor:
        """Affine landmark head; accepts any mix of parameter vectors."""
        for name, t, d in (("shape", shape, self.dims[0]),
                           ("pose", pose, self.dims[1]),
                           ("expression", expression, self.dims[2])):
            if t.shape[-1] != d:
                raise ShapeError(f"{name} dim {t.shape[-1]} != {d}")
        p = torch.cat([shape, pose, expression], dim=-1)
        flat = 0.5 + 0.25 * F.linear(p, self.landmark_weight.to(p.dtype))
        return flat.reshape(*p.shape[:-1], self.landmark_count, 2)

    def forward(self, image: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        shape, pose, expression = self.params(image)
        return shape, pose, expression, self.landmarks_from_params(shape, pose, expression)


class PoseFeatureExtractor(nn.Module):
    """Pose-sensitive feature vector from a frozen random convnet."""

    def __init__(self, spec: SurrogateSpec):
        super().__init__()
        self.input_size = spec.input_size
        self.trunk = _ConvTrunk(3, 32)
        self.head = nn.Linear(32, spec.pose_feature_dim)
        seeded_normal_init_(self, spec.seed * 4 + 2)
        freeze(self)

    def forward(self, image: Tensor) -> Tensor:
        x = _as_batch(image, self.input_size)
        feat = self.trunk(x)[-1]
        return self.head(F.adaptive_avg_pool2d(feat, 1).flatten(1))


class PerceptualFeatureExtractor(nn.Module):
    """Multi-stage activations used for the perceptual loss term and for
    feature-distribution statistics."""

    def __init__(self, spec: SurrogateSpec):
        super().__init__()
        self.input_size = spec.input_size
        self.trunk = _ConvTrunk(spec.perceptual_layers, 32)
        seeded_normal_init_(self, spec.seed * 4 + 3)
        freeze(self)

    def forward(self, image: Tensor) -> list[Tensor]:
        x = _as_batch(image, self.input_size)
        return self.trunk(x)

    def pooled_final(self, image: Tensor) -> Tensor:
        """Mean-pooled last stage; one vector per image."""
        return F.adaptive_avg_pool2d(self.forward(image)[-1], 1).flatten(1)


_EXTERNAL_REGISTRY: dict[str, Callable[[SurrogateSpec], nn.Module]] = {}


def register_external(name: str, factory: Callable[[SurrogateSpec], nn.Module]) -> None:
    """Register an adapter factory resolvable from config as ``external:<name>``."""
    _EXTERNAL_REGISTRY[name] = factory


def resolve_external(key: str, spec: SurrogateSpec) -> nn.Module:
    if not key.startswith("external:"):
        raise ArgumentError(f"external model key must look like external:<name>, got {key!r}")
    name = key.split(":", 1)[1]
    if name not in _EXTERNAL_REGISTRY:
        raise ArgumentError(
            f"no external surrogate registered under {name!r}; "
            f"known: {sorted(_EXTERNAL_REGISTRY)}"
        )
    return freeze(_EXTERNAL_REGISTRY[name](spec))


class PerceptionSuite(nn.Module):
    """Bundles the four perception surrogates behind one object."""

    COMPONENTS = ("id_embedder", "face_params", "pose_features", "perceptual")

    def __init__(self, spec: SurrogateSpec):
        super().__init__()
        self.spec = spec.validate()
        builders = {
            "id_embedder": IdentityEmbedder,
            "face_params": FaceParamEstimator,
            "pose_features": PoseFeatureExtractor,
            "perceptual": PerceptualFeatureExtractor,
        }
        for component in self.COMPONENTS:
            key = spec.external.get(component)
            if key is not None:
                module = resolve_external(key, spec)
            else:
                module = builders[component](spec)
            setattr(self, component, module)
        freeze(self)

    def id_embed(self, image: Tensor) -> Tensor:
        return self.id_embedder(image)

    def estimate_face_params(self, image: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.face_params(image)

    def pose_feats(self, image: Tensor) -> Tensor:
        return self.pose_features(image)

    def perceptual_feats(self, image: Tensor) -> list[Tensor]:
        return self.perceptual(image)

    def fid_features(self, image: Tensor) -> Tensor:
        return self.perceptual.pooled_final(image)

    def attributes(self, image: Tensor) -> AttributePack:
        shape, pose, expression, landmarks = self.face_params(image)
        return AttributePack(
            id_embedding=self.id_embedder(image),
            shape=shape,
            pose=pose,
            expression=expression,
            landmarks=landmarks,
        )

    def checksum(self) -> str:
        return parameter_checksum(self)
