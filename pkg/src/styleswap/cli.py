"""Command-line interface: train, swap, idmix, evaluate, routing, mask."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .checkpoint import load_checkpoint, restore_trainer, save_checkpoint
from .config import RunConfig, load_config
from .data import ImageDataset, load_image, save_image
from .errors import StyleSwapError
from .generator import build_layer_table
from .metrics import aggregate, fid, pair_metrics, relative_metrics
from .pipeline import apply_roi, build_models, build_trainer, face_swap, id_mix
from .roi import RoiMaskSpec, build_mask, mask_to_image_bytes
from .routing import plan_face_swap, plan_id_mix


def _fail(exc: Exception) -> None:
    error = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(error), err=True)
    sys.exit(1)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StyleSwapError as exc:
            _fail(exc)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _load_run(config_path: str) -> RunConfig:
    return load_config(config_path)


def _restore_models(run: RunConfig, checkpoint_path: str):
    models = build_models(run)
    payload = load_checkpoint(checkpoint_path)
    models.encoder.load_state_dict(payload["modules"]["encoder"])
    models.generator.load_state_dict(payload["modules"]["generator"])
    models.discriminator.load_state_dict(payload["modules"]["discriminator"])
    return models


@click.group()
def main() -> None:
    """Face swapping, identity mixing, and evaluation."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=None, help="Override the configured step count.")
@_guarded
def train(config_path: str, resume_path: str | None, steps: int | None) -> None:
    """Train the encoder, generator and discriminator."""
    run = _load_run(config_path)
    if run.dataset is None:
        raise click.ClickException("config must set a dataset directory for training")
    base = Path(config_path).parent
    dataset = ImageDataset(base / run.dataset, run.generator.resolution)
    trainer = build_trainer(run)
    if resume_path is not None:
        restore_trainer(trainer, load_checkpoint(resume_path))
    out_dir = Path(run.output_dir)
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"
    with log_path.open("a") as log_stream:
        trainer.fit(
            dataset,
            steps=steps,
            log_stream=log_stream,
            checkpoint_dir=out_dir / "checkpoints",
            save_checkpoint_fn=lambda t, p: save_checkpoint(p, t, run.as_dict()),
        )
    click.echo(f"trained to step {trainer.step}; log at {log_path}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--source", required=True, type=click.Path(exists=True))
@click.option("--target", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--roi", is_flag=True, default=False, help="Composite only the face region.")
@_guarded
def swap(config_path, checkpoint_path, source, target, output, roi) -> None:
    """Swap the source identity onto the target image."""
    run = _load_run(config_path)
    models = _restore_models(run, checkpoint_path)
    r = run.generator.resolution
    src = load_image(source, r)
    tgt = load_image(target, r)
    out = face_swap(models, src, tgt)
    if roi:
        out = apply_roi(out, tgt, r)
    save_image(out, output)
    click.echo(f"wrote {output}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--global", "global_path", required=True, type=click.Path(exists=True))
@click.option("--local", "local_path", required=True, type=click.Path(exists=True))
@click.option("--target", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--roi", is_flag=True, default=False)
@_guarded
def idmix(config_path, checkpoint_path, global_path, local_path, target, output, roi) -> None:
    """Blend two source identities (global + local) onto the target."""
    run = _load_run(config_path)
    models = _restore_models(run, checkpoint_path)
    r = run.generator.resolution
    gb = load_image(global_path, r)
    lc = load_image(local_path, r)
    tgt = load_image(target, r)
    out = id_mix(models, gb, lc, tgt)
    if roi:
        out = apply_roi(out, tgt, r)
    save_image(out, output)
    click.echo(f"wrote {output}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--output-dir", "output_dir", required=True, type=click.Path())
@_guarded
def evaluate(config_path, checkpoint_path, manifest_path, output_dir) -> None:
    """Evaluate swaps listed in a CSV manifest (source_path, target_path and
    optionally global_path, local_path per row; paths relative to the
    manifest)."""
    run = _load_run(config_path)
    models = _restore_models(run, checkpoint_path)
    r = run.generator.resolution
    base = Path(manifest_path).parent

    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"source_path", "target_path"} <= set(reader.fieldnames):
            raise click.ClickException(
                "manifest must have a header with source_path and target_path"
            )
        rows = list(reader)
    if not rows:
        raise click.ClickException("manifest has no rows")

    records = []
    mix_records = []
    real_feats = []
    gen_feats = []
    for row in rows:
        src = load_image(base / row["source_path"], r)
        tgt = load_image(base / row["target_path"], r)
        out = face_swap(models, src, tgt)
        records.append(pair_metrics(out, src.unsqueeze(0), tgt.unsqueeze(0), models.suite))
        real_feats.append(models.suite.fid_features(tgt.unsqueeze(0)).numpy())
        gen_feats.append(models.suite.fid_features(out).numpy())
        if row.get("global_path") and row.get("local_path"):
            gb = load_image(base / row["global_path"], r)
            lc = load_image(base / row["local_path"], r)
            mix = id_mix(models, gb, lc, tgt)
            r_id_gb, r_id_lc, r_sh_gb, r_sh_lc = relative_metrics(
                mix, gb.unsqueeze(0), lc.unsqueeze(0), models.suite
            )
            mix_records.append(
                {"r_id_gb": r_id_gb, "r_id_lc": r_id_lc,
                 "r_shape_gb": r_sh_gb, "r_shape_lc": r_sh_lc}
            )

    fid_value = None
    if len(rows) >= 2:
        fid_value = fid(np.concatenate(real_feats), np.concatenate(gen_feats))
    report = aggregate(records, fid_value=fid_value)

    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.as_dict()
    if mix_records:
        payload["id_mixing"] = {
            k: float(np.mean([m[k] for m in mix_records])) for k in mix_records[0]
        }
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2) + "\n")
    (out_dir / "metrics.csv").write_text("\n".join(report.csv_rows()) + "\n")
    click.echo(json.dumps(payload))


@main.group()
def routing() -> None:
    """Inspect routing plans."""


@routing.command("show")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["face-swap", "id-mix"]), default="face-swap")
@_guarded
def routing_show(config_path: str, mode: str) -> None:
    run = _load_run(config_path)
    table = build_layer_table(run.generator)
    plan = plan_face_swap(run.generator) if mode == "face-swap" else plan_id_mix(run.generator)
    click.echo(plan.describe(table))


@main.group()
def mask() -> None:
    """ROI mask utilities."""


@mask.command("export")
@click.option("--canvas", type=int, default=1024, show_default=True)
@click.option("--output", required=True, type=click.Path(), help="PNG output path.")
@click.option("--npy", "npy_path", type=click.Path(), default=None,
              help="Also write the raw float32 mask as .npy.")
@_guarded
def mask_export(canvas: int, output: str, npy_path: str | None) -> None:
    spec = RoiMaskSpec(canvas=canvas)
    m = build_mask(spec)
    Image.fromarray(mask_to_image_bytes(m), mode="L").save(output, format="PNG")
    if npy_path is not None:
        np.save(npy_path, m)
    click.echo(f"wrote {output}")


if __name__ == "__main__":
    main()
