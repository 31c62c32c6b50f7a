"""Run configuration: YAML loading, defaults, and cross-module validation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .generator import GeneratorConfig
from .losses import LossWeights
from .surrogates import SurrogateSpec
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig
    train: TrainConfig
    weights: LossWeights
    surrogates: SurrogateSpec
    encoder_width: int = 64
    dataset: str | None = None
    output_dir: str = "runs/out"
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        out.extend(self.generator.problems())
        out.extend(self.train.problems())
        out.extend(self.weights.problems())
        out.extend(self.surrogates.problems())
        if self.encoder_width < 1:
            out.append(f"encoder_width must be >= 1, got {self.encoder_width}")
        if not out:
            # Cross-module consistency, only meaningful once parts are sane.
            r = self.generator.resolution
            levels = (r // 8, r // 4, r // 2)
            for res in self.generator.style_map_resolutions:
                if res not in levels:
                    out.append(
                        f"style map resolution {res} is not an encoder pyramid level "
                        f"{levels} at resolution {r}"
                    )
            if self.surrogates.input_size != r:
                out.append(
                    f"surrogate input size {self.surrogates.input_size} must equal "
                    f"the generator resolution {r}"
                )
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dataset": self.dataset,
            "output_dir": self.output_dir,
            "encoder_width": self.encoder_width,
            "generator": self.generator.as_dict(),
            "train": self.train.as_dict(),
            "losses": self.weights.as_dict(),
            "surrogates": self.surrogates.as_dict(),
        }


def default_run_config() -> RunConfig:
    gen = GeneratorConfig()
    return RunConfig(
        generator=gen,
        train=TrainConfig(),
        weights=LossWeights(),
        surrogates=SurrogateSpec(input_size=gen.resolution),
    )


def _take_section(doc: dict, key: str) -> dict:
    section = doc.pop(key, None) or {}
    if not isinstance(section, dict):
        raise ConfigurationError([f"config section {key!r} must be a mapping"])
    return section


def _build_section(cls, defaults, section: dict, rename: dict | None = None, name: str = ""):
    rename = rename or {}
    known = set(defaults.__dataclass_fields__)
    fields = {}
    for key, value in section.items():
        field = rename.get(key, key)
        if field not in known:
            raise ConfigurationError(
                [f"unknown key {key!r} in section {name!r}; known: {sorted(known)}"]
            )
        if isinstance(value, list):
            value = tuple(value)
        fields[field] = value
    return replace(defaults, **fields)


def load_config(path: str | Path) -> RunConfig:
    """Parse a YAML config; missing keys fall back to the built-in defaults.

    Raises ConfigurationError with the parser's line/column on syntax errors,
    or with the full list of violated invariants on semantic errors.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError([f"cannot read config {path}: {exc}"]) from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigurationError([f"config parse error{where}: {exc}"]) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError(["config root must be a mapping"])

    defaults = default_run_config()
    gen = _build_section(GeneratorConfig, defaults.generator, _take_section(doc, "generator"),
                         name="generator")
    train = _build_section(TrainConfig, defaults.train, _take_section(doc, "train"), name="train")
    weights = _build_section(LossWeights, defaults.weights, _take_section(doc, "losses"),
                             name="losses")
    surrogate_section = _take_section(doc, "surrogates")
    surrogate_section.setdefault("input_size", gen.resolution)
    surrogates = _build_section(SurrogateSpec, defaults.surrogates, surrogate_section,
                                name="surrogates")
    if isinstance(surrogates.external, tuple):
        surrogates = replace(surrogates, external=dict(surrogates.external))

    encoder_section = _take_section(doc, "encoder")
    encoder_width = encoder_section.pop("width", defaults.encoder_width)
    if encoder_section:
        raise ConfigurationError(
            [f"unknown key {k!r} in section 'encoder'" for k in encoder_section]
        )

    top_level = {"seed": defaults.seed, "dataset": defaults.dataset,
                 "output_dir": defaults.output_dir}
    for key in list(doc):
        if key in top_level:
            top_level[key] = doc.pop(key)
    if doc:
        raise ConfigurationError([f"unknown top-level config key {k!r}" for k in doc])

    run = RunConfig(
        generator=gen,
        train=train,
        weights=weights,
        surrogates=surrogates,
        encoder_width=int(encoder_width),
        dataset=top_level["dataset"],
        output_dir=str(top_level["output_dir"]),
        seed=int(top_level["seed"]),
    )
    return run.validate()
