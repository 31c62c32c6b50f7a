"""Versioned checkpoint container.

A checkpoint is a torch-serialized mapping with a format version, the run
configuration summary, named parameter arrays for every trainable module,
optimizer states, the step counter, and the batch RNG state, so training can
resume with an identical continued trajectory.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .errors import CheckpointError, CheckpointVersionError

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, trainer, run_config_dict: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "step": trainer.step,
        "config": run_config_dict or {},
        "generator_config": trainer.generator.cfg.as_dict(),
        "modules": {
            "encoder": trainer.encoder.state_dict(),
            "generator": trainer.generator.state_dict(),
            "discriminator": trainer.discriminator.state_dict(),
        },
        "optimizers": {
            "generator": trainer.g_opt.state_dict(),
            "discriminator": trainer.d_opt.state_dict(),
        },
        "rng": trainer.rng_state(),
        "torch_rng": torch.get_rng_state(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"checkpoint {path} has no format version")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint {path} has format version {version}; this build reads "
            f"version {FORMAT_VERSION} and needs an explicit migration"
        )
    return payload


def restore_trainer(trainer, payload: dict) -> None:
    """Load module/optimizer/RNG state and step counter into a trainer built
    with the same configuration."""
    trainer.encoder.load_state_dict(payload["modules"]["encoder"])
    trainer.generator.load_state_dict(payload["modules"]["generator"])
    trainer.discriminator.load_state_dict(payload["modules"]["discriminator"])
    trainer.g_opt.load_state_dict(payload["optimizers"]["generator"])
    trainer.d_opt.load_state_dict(payload["optimizers"]["discriminator"])
    trainer.restore_rng_state(payload["rng"])
    torch.set_rng_state(payload["torch_rng"])
    trainer.step = payload["step"]


def import_parameters(module: torch.nn.Module, path: str | Path, prefix: str = "") -> list[str]:
    """Import hook for externally trained weights: loads any state-dict
    entries (optionally under ``prefix``) whose names and shapes match.
    Returns the names that were loaded."""
    payload = load_checkpoint(path)
    pools = [payload.get("modules", {}).get(name, {}) for name in
             ("encoder", "generator", "discriminator")]
    own = module.state_dict()
    loaded = {}
    for pool in pools:
        for name, value in pool.items():
            key = name[len(prefix):] if prefix and name.startswith(prefix) else name
            if key in own and own[key].shape == value.shape:
                loaded[key] = value
    module.load_state_dict({**own, **loaded})
    return sorted(loaded)
