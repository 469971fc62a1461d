"""Folder-per-class image datasets.

The on-disk layout is the retraining contract: one folder per species
under a root, images inside.  Class order is the byte-ascending sort of
folder names, and each file lands in train/validation/test purely by a
hash of its file name, so the split is stable across runs, machines,
and re-indexing after adding files.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, ImageOps, UnidentifiedImageError

from . import ops
from .bundle import LabelList
from .errors import DatasetError
from .tensor import Tensor

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")
SPLITS = ("train", "validation", "test")
_BUCKETS = 10000

PathLike = Union[str, Path]


def _check_fraction(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value < 0.5:
        raise DatasetError(f"{name} must be in [0, 0.5), got {value}")
    return value


def assign_split(path: PathLike, validation_fraction: float, test_fraction: float) -> str:
    """Deterministically place a file into train/validation/test.

    Buckets on sha256 of the file's base name only, so moving a tree or
    renaming a class folder never reshuffles membership.
    """
    validation_fraction = _check_fraction("validation_fraction", validation_fraction)
    test_fraction = _check_fraction("test_fraction", test_fraction)
    digest = hashlib.sha256(Path(path).name.encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:8], "big") % _BUCKETS
    validation_cut = round(validation_fraction * _BUCKETS)
    test_cut = validation_cut + round(test_fraction * _BUCKETS)
    if bucket < validation_cut:
        return "validation"
    if bucket < test_cut:
        return "test"
    return "train"


@dataclass(frozen=True)
class ImageEntry:
    path: Path
    class_index: int
    split: str


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    classes: LabelList
    entries: tuple
    validation_fraction: float
    test_fraction: float

    def split_entries(self, split: str) -> list:
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}; expected one of {SPLITS}")
        return [e for e in self.entries if e.split == split]

    def split_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS}
        for entry in self.entries:
            counts[entry.split] += 1
        return counts

    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in self.classes}
        for entry in self.entries:
            counts[self.classes[entry.class_index]] += 1
        return counts


def index_dataset(
    root: PathLike,
    validation_fraction: float = 0.10,
    test_fraction: float = 0.10,
) -> DatasetIndex:
    """Scan a folder-per-class tree into a deterministic index.

    Class folders sort byte-ascending; files sort the same way within
    each class.  Hidden entries and non-image extensions are ignored.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted(
        (d for d in root.iterdir() if d.is_dir() and not d.name.startswith(".")),
        key=lambda d: d.name.encode("utf-8"),
    )
    if len(class_dirs) < 2:
        raise DatasetError(
            f"dataset root {root} needs at least 2 class folders, found {len(class_dirs)}"
        )
    classes = LabelList(d.name for d in class_dirs)
    entries = []
    for index, directory in enumerate(class_dirs):
        files = sorted(
            (
                f
                for f in directory.iterdir()
                if f.is_file()
                and not f.name.startswith(".")
                and f.suffix.lower() in IMAGE_EXTENSIONS
            ),
            key=lambda f: f.name.encode("utf-8"),
        )
        if not files:
            raise DatasetError(f"class folder {directory.name!r} contains no images")
        for f in files:
            entries.append(
                ImageEntry(
                    path=f,
                    class_index=index,
                    split=assign_split(f, validation_fraction, test_fraction),
                )
            )
    return DatasetIndex(
        root=root,
        classes=classes,
        entries=tuple(entries),
        validation_fraction=float(validation_fraction),
        test_fraction=float(test_fraction),
    )


def decode_rgb(source: Union[PathLike, bytes]) -> Tensor:
    """Decode JPEG/PNG bytes or a file into a [1, h, w, 3] tensor of 0..255.

    EXIF orientation is applied before anything else so phone photos
    come out upright.
    """
    try:
        if isinstance(source, (bytes, bytearray)):
            image = Image.open(io.BytesIO(source))
        else:
            image = Image.open(source)
        with image:
            image = ImageOps.exif_transpose(image)
            array = np.asarray(image.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        origin = "image bytes" if isinstance(source, (bytes, bytearray)) else str(source)
        raise DatasetError(f"cannot decode {origin}: {exc}") from exc
    return Tensor._wrap(array[None, ...])


def prepare_image(source: Union[PathLike, bytes], target_size: int) -> Tensor:
    """Decode, resize to target_size x target_size, normalize to [-1, 1]."""
    decoded = decode_rgb(source)
    resized = ops.resize_bilinear(decoded, target_size, target_size)
    return ops.normalize_pixels(resized, mode="symmetric")


def load_training_image(path: PathLike, target_size: int) -> Tensor:
    return prepare_image(Path(path), target_size)
