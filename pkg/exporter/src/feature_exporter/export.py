"""Export jobs: run a checkpoint over a dataset, write feature bundles."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

from .bundle_format import write_bundle_dir
from .corruptions import apply_recipe, recipe_slug
from .datasets import load_dataset
from .errors import ExportError
from .models import load_classifier


@dataclass(frozen=True)
class ExportJob:
    """One model/dataset/recipe combination to export.

    model: path to an .npz checkpoint
    data: path to an .npz dataset (images + labels)
    recipe: corruption applied before the forward pass ("none" = clean)
    out_dir: bundle directory to create
    bundle_id: manifest id; defaults to "<model name>-<recipe slug>"
    """

    model: str
    data: str
    out_dir: str
    recipe: str = "none"
    batch_size: int = 256
    device: str = "cpu"
    bundle_id: str | None = None


@dataclass(frozen=True)
class ExportResult:
    out_dir: str
    bundle_id: str
    n: int
    d: int
    accuracy: float


def export(job: ExportJob) -> ExportResult:
    """Run one export job and write its bundle directory.

    Accuracy is computed from the same float32 logits that land in
    logits.bin, so consumers that revalidate it byte-for-byte agree.
    """
    if job.device != "cpu":
        raise ExportError(f"unsupported device {job.device!r}: only 'cpu' is available")
    model = load_classifier(job.model)
    images, labels = load_dataset(job.data)
    if labels.size and int(labels.max()) >= model.n_classes:
        raise ExportError(
            f"dataset has label {int(labels.max())} but model"
            f" {model.name!r} outputs {model.n_classes} classes"
        )
    corrupted = apply_recipe(images, job.recipe)
    features, logits = model.forward(corrupted, batch_size=job.batch_size)

    bundle_id = job.bundle_id or f"{model.name}-{recipe_slug(job.recipe)}"
    accuracy = write_bundle_dir(
        job.out_dir,
        bundle_id=bundle_id,
        features=features,
        logits=logits,
        labels=labels,
        model_ref=model.name,
        extra_manifest={"recipe": job.recipe},
    )
    meta = {
        "recipe": job.recipe,
        "model_checkpoint": os.path.basename(job.model),
        "dataset": os.path.basename(job.data),
        "batch_size": job.batch_size,
        "device": job.device,
    }
    with open(os.path.join(job.out_dir, "export_meta.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=False) + "\n")
    return ExportResult(
        out_dir=job.out_dir,
        bundle_id=bundle_id,
        n=features.shape[0],
        d=features.shape[1],
        accuracy=accuracy,
    )


def export_grid(base: ExportJob, recipes: list[str], grid_dir: str) -> list[ExportResult]:
    """Export one bundle per recipe into subdirectories of grid_dir.

    Directory and bundle ids encode the recipe so a grid of corruptions
    stays self-describing on disk.
    """
    if not recipes:
        raise ExportError("export_grid needs at least one recipe")
    slugs = [recipe_slug(r) for r in recipes]
    if len(set(slugs)) != len(slugs):
        dupes = sorted({s for s in slugs if slugs.count(s) > 1})
        raise ExportError(f"duplicate recipes in grid: {dupes}")
    results = []
    for recipe, slug in zip(recipes, slugs):
        job = replace(
            base,
            recipe=recipe,
            out_dir=os.path.join(grid_dir, slug),
            bundle_id=None,
        )
        results.append(export(job))
    return results
