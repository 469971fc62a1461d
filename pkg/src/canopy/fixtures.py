"""Synthetic tree-photo dataset for tests and demos.

Six species folders, each a distinct dominant hue; neighboring hues
alternate between bright and dark so every class pair differs in color
or brightness, keeping classes separable under a frozen random feature
extractor, which is exactly what the retraining path needs to
demonstrate.  Same seed, same bytes: the PNG files are reproducible
for determinism checks.
"""
from __future__ import annotations

import argparse
import colorsys
from pathlib import Path

import numpy as np
from PIL import Image

SPECIES = ("cypress", "ginkgo", "locust", "magnolia", "pine", "sycamore")
DEFAULT_SEED = 20240801
DEFAULT_PER_CLASS = 10
DEFAULT_SIZE = 64
DEFAULT_NOISE = 10.0
_BRIGHT_VALUE = 0.78
_DARK_VALUE = 0.50


def generate_dataset(
    root,
    classes=SPECIES,
    per_class: int = DEFAULT_PER_CLASS,
    size: int = DEFAULT_SIZE,
    seed: int = DEFAULT_SEED,
    noise: float = DEFAULT_NOISE,
) -> list:
    """Write `root/<class>/<class>_NNN.png` files; returns their paths."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    paths = []
    for class_index, name in enumerate(classes):
        folder = root / name
        folder.mkdir(parents=True, exist_ok=True)
        base_hue = class_index / len(classes)
        base_value = _BRIGHT_VALUE if class_index % 2 == 0 else _DARK_VALUE
        for i in range(per_class):
            hue = (base_hue + rng.uniform(-0.01, 0.01)) % 1.0
            saturation = rng.uniform(0.75, 0.88)
            value = base_value + rng.uniform(-0.04, 0.04)
            r, g, b = colorsys.hsv_to_rgb(hue, saturation, value)
            pixels = np.empty((size, size, 3), dtype=np.float64)
            pixels[..., 0] = r * 255.0
            pixels[..., 1] = g * 255.0
            pixels[..., 2] = b * 255.0
            pixels += rng.normal(0.0, noise, size=(size, size, 3))
            array = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
            path = folder / f"{name}_{i:03d}.png"
            Image.fromarray(array, mode="RGB").save(path)
            paths.append(path)
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m canopy.fixtures",
        description="Generate a synthetic folder-per-class image dataset.",
    )
    parser.add_argument("out", help="dataset root directory to create")
    parser.add_argument("--per-class", type=int, default=DEFAULT_PER_CLASS)
    parser.add_argument("--size", type=int, default=DEFAULT_SIZE)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--noise", type=float, default=DEFAULT_NOISE)
    args = parser.parse_args(argv)
    paths = generate_dataset(
        args.out, per_class=args.per_class, size=args.size, seed=args.seed, noise=args.noise
    )
    print(f"wrote {len(paths)} images across {len(SPECIES)} classes under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
