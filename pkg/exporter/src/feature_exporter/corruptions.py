"""Deterministic image corruptions applied before feature extraction.

A recipe string is either "none" or "family:severity" with severity in
0..5.  Severity 0 is always the identity so grids can include a clean
anchor per family.  Randomized families derive their generator from the
recipe text and image count, so re-running a job reproduces the exact
same pixels.
"""
from __future__ import annotations

import zlib

import numpy as np

from .errors import ExportError

# per-family severity ladders, index = severity
_NOISE_SIGMA = (0.0, 0.08, 0.12, 0.18, 0.26, 0.38)
_BRIGHT_DELTA = (0.0, 0.08, 0.16, 0.24, 0.32, 0.42)
_CONTRAST_GAIN = (1.0, 0.75, 0.55, 0.4, 0.3, 0.2)
_PIXELATE_BLOCK = (1, 2, 4, 8, 8, 16)

FAMILIES = ("gaussian_noise", "brightness", "contrast", "pixelate")


def parse_recipe(recipe: str) -> tuple[str, int]:
    """Split a recipe into (family, severity); "none" maps to severity 0."""
    text = recipe.strip()
    if text == "none":
        return "none", 0
    if ":" not in text:
        raise ExportError(
            f"bad recipe {recipe!r}: expected 'none' or 'family:severity'"
        )
    family, _, raw = text.partition(":")
    if family not in FAMILIES:
        raise ExportError(f"unknown corruption family {family!r} in {recipe!r}")
    try:
        severity = int(raw)
    except ValueError:
        raise ExportError(f"bad severity {raw!r} in {recipe!r}") from None
    if not 0 <= severity <= 5:
        raise ExportError(f"severity must be 0..5, got {severity} in {recipe!r}")
    return family, severity


def recipe_slug(recipe: str) -> str:
    family, severity = parse_recipe(recipe)
    if family == "none":
        return "clean"
    return f"{family}-s{severity}"


def _rng_for(recipe: str, n: int) -> np.random.Generator:
    key = zlib.crc32(f"{recipe}|{n}".encode("utf-8"))
    return np.random.default_rng(key)


def apply_recipe(images: np.ndarray, recipe: str) -> np.ndarray:
    """Return a corrupted uint8 copy of an (n, H, W, C) image stack."""
    family, severity = parse_recipe(recipe)
    if family == "none" or severity == 0:
        return images.copy()
    work = images.astype(np.float64) / 255.0
    if family == "gaussian_noise":
        rng = _rng_for(recipe, images.shape[0])
        work = work + rng.normal(0.0, _NOISE_SIGMA[severity], size=work.shape)
    elif family == "brightness":
        work = work + _BRIGHT_DELTA[severity]
    elif family == "contrast":
        mean = work.mean(axis=(1, 2, 3), keepdims=True)
        work = mean + _CONTRAST_GAIN[severity] * (work - mean)
    elif family == "pixelate":
        block = _PIXELATE_BLOCK[severity]
        n, h, w, c = work.shape
        if h % block or w % block:
            raise ExportError(
                f"pixelate severity {severity} needs side divisible by {block},"
                f" image is {h}x{w}"
            )
        coarse = work.reshape(n, h // block, block, w // block, block, c)
        coarse = coarse.mean(axis=(2, 4))
        work = np.repeat(np.repeat(coarse, block, axis=1), block, axis=2)
    return np.clip(np.rint(work * 255.0), 0, 255).astype(np.uint8)
