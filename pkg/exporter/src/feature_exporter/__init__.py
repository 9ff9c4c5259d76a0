"""Bridge from image datasets + classifier checkpoints to feature bundles."""

from .corruptions import FAMILIES, apply_recipe, parse_recipe, recipe_slug
from .datasets import load_dataset, save_dataset
from .errors import ExportError
from .export import ExportJob, ExportResult, export, export_grid
from .models import Classifier, load_classifier, make_demo

__all__ = [
    "FAMILIES",
    "apply_recipe",
    "parse_recipe",
    "recipe_slug",
    "load_dataset",
    "save_dataset",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "export",
    "export_grid",
    "Classifier",
    "load_classifier",
    "make_demo",
]

__version__ = "0.1.0"
