"""Patch datasets: directory layout, stratified splitting, synthetic corpus.

Layout on disk is one directory per class under a root, holding .png or .ppm
files. A directory named "uncertain" is unlabelled: its patches never enter
training and are always assigned to the holdout split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .images import SUPPORTED_SUFFIXES, bilinear_resize, load_image, save_image

UNCERTAIN_DIR = "uncertain"


@dataclass
class PatchRecord:
    patch_id: str
    class_name: str
    label: int | None
    pixels: np.ndarray
    split: str = ""
    source_path: str = ""


@dataclass
class DatasetManifest:
    root: str
    classes: dict[str, int]
    records: list[PatchRecord] = field(default_factory=list)
    uncertain: list[PatchRecord] = field(default_factory=list)

    def all_records(self) -> list[PatchRecord]:
        return list(self.records) + list(self.uncertain)


def _load_dir(class_dir: Path, class_name: str, label: int | None,
              image_size: tuple[int, int] | None) -> list[PatchRecord]:
    records = []
    files = sorted(p for p in class_dir.iterdir()
                   if p.suffix.lower() in SUPPORTED_SUFFIXES)
    for path in files:
        pixels = load_image(path)
        if image_size is not None:
            pixels = bilinear_resize(pixels, image_size[0], image_size[1])
        records.append(PatchRecord(
            patch_id=f"{class_name}__{path.stem}",
            class_name=class_name,
            label=label,
            pixels=pixels,
            source_path=str(path),
        ))
    return records


def load_dataset(root, image_size: tuple[int, int] | None = None) -> DatasetManifest:
    """Read every class directory under root in sorted order.

    Labels are assigned 0..n-1 over the sorted labelled class names. An empty
    labelled class directory is an error; the uncertain directory may hold any
    number of patches, including none.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    labelled = [p for p in class_dirs if p.name != UNCERTAIN_DIR]
    if not labelled:
        raise DataError(f"dataset root {root} has no class directories")

    classes = {p.name: i for i, p in enumerate(labelled)}
    manifest = DatasetManifest(root=str(root), classes=classes)
    for class_dir in labelled:
        records = _load_dir(class_dir, class_dir.name, classes[class_dir.name], image_size)
        if not records:
            raise DataError(f"class directory {class_dir} holds no patches")
        manifest.records.extend(records)

    uncertain_dir = root / UNCERTAIN_DIR
    if uncertain_dir.is_dir():
        manifest.uncertain.extend(_load_dir(uncertain_dir, UNCERTAIN_DIR, None, image_size))
    return manifest


def load_patch_dir(path, image_size: tuple[int, int] | None = None,
                   class_name: str = "query") -> list[PatchRecord]:
    """Read a flat directory of images as unlabelled query patches."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path} is not a directory")
    records = _load_dir(path, class_name, None, image_size)
    if not records:
        raise DataError(f"{path} holds no {' or '.join(SUPPORTED_SUFFIXES)} files")
    return records


def split_dataset(records: list[PatchRecord], train_fraction: float,
                  seed: int) -> tuple[list[PatchRecord], list[PatchRecord]]:
    """Stratified split; unlabelled records always land in the holdout.

    Each class contributes round(n * train_fraction) training patches from a
    seeded per-class shuffle, the rest become test queries. Assigns each
    record's split field to train, test, or holdout.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_label: dict[int, list[PatchRecord]] = {}
    holdout: list[PatchRecord] = []
    for rec in records:
        if rec.label is None:
            rec.split = "holdout"
            holdout.append(rec)
        else:
            by_label.setdefault(rec.label, []).append(rec)

    for label, group in sorted(by_label.items()):
        if len(group) < 2:
            raise DataError(f"class labelled {label} has {len(group)} records; need at least 2")

    rng = np.random.default_rng(seed)
    train: list[PatchRecord] = []
    for label in sorted(by_label):
        group = by_label[label]
        order = rng.permutation(len(group))
        n_train = round(len(group) * train_fraction)
        for i in order[:n_train]:
            group[i].split = "train"
            train.append(group[i])
        for i in order[n_train:]:
            group[i].split = "test"
            holdout.append(group[i])
    return train, holdout


def _textured_channels(base: np.ndarray, rng) -> np.ndarray:
    """Correlated RGB: one base texture scaled by per-channel gains."""
    gains = rng.uniform(0.6, 1.0, size=3)
    image = base[:, :, None] * gains[None, None, :]
    return np.clip(image, 0.0, 1.0)


def _blob_texture(h: int, w: int, rng) -> np.ndarray:
    ch = int(rng.integers(2, max(3, h // 8) + 1))
    cw = int(rng.integers(2, max(3, w // 8) + 1))
    base = rng.uniform(0.1, 0.9, size=(ch, cw, 1))
    return bilinear_resize(base, h, w)[:, :, 0]


def _speckle_texture(h: int, w: int, rng) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(h, w))


def synth_generate(n_per_class: int, size: tuple[int, int] = (32, 32),
                   seed: int = 0) -> DatasetManifest:
    """Synthetic three-class patch corpus.

    blob (label 0) is smooth low-frequency texture, speckle (label 1) is
    per-pixel noise, and each uncertain patch is half of one and half of the
    other, spliced down the middle. Texture parameters are drawn per record
    from seeded distributions; everything is deterministic given the seed.
    """
    if n_per_class < 4:
        raise ConfigError(f"n_per_class must be >= 4, got {n_per_class}")
    h, w = int(size[0]), int(size[1])
    if h < 16 or w < 16:
        raise ConfigError(f"size must be at least 16x16, got {h}x{w}")

    manifest = DatasetManifest(root="", classes={"blob": 0, "speckle": 1})
    makers = {"blob": _blob_texture, "speckle": _speckle_texture}
    for class_name, label in manifest.classes.items():
        for i in range(n_per_class):
            rng = np.random.default_rng(seed * 1_000_003 + label * 10_007 + i)
            pixels = _textured_channels(makers[class_name](h, w, rng), rng)
            manifest.records.append(PatchRecord(
                patch_id=f"{class_name}__{i:04d}",
                class_name=class_name,
                label=label,
                pixels=pixels,
            ))

    half = w // 2
    for i in range(n_per_class):
        rng = np.random.default_rng(seed * 1_000_003 + 777_001 + i)
        pixels = _textured_channels(_blob_texture(h, w, rng), rng)
        speckle = _textured_channels(_speckle_texture(h, w, rng), rng)
        pixels[:, half:, :] = speckle[:, half:, :]
        manifest.uncertain.append(PatchRecord(
            patch_id=f"{UNCERTAIN_DIR}__{i:04d}",
            class_name=UNCERTAIN_DIR,
            label=None,
            pixels=pixels,
        ))
    return manifest


def write_dataset(manifest: DatasetManifest, root) -> None:
    """Materialize a manifest to disk in the class-directory layout."""
    root = Path(root)
    for rec in manifest.all_records():
        class_dir = root / rec.class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        stem = rec.patch_id.split("__", 1)[1]
        path = class_dir / f"{stem}.png"
        save_image(rec.pixels, path)
        rec.source_path = str(path)
