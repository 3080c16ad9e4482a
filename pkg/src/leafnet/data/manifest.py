"""Dataset manifests: class table, per-image split assignment, augmentation provenance."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetError
from .images import AUGMENTATIONS, IMAGE_SUFFIXES, PROVENANCES

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class ImageRecord:
    path: str
    label: int
    split: str
    provenance: str = "original"


@dataclass
class DatasetManifest:
    class_names: list
    records: list
    seed: int = 0
    version: int = MANIFEST_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        c = len(self.class_names)
        for r in self.records:
            if not 0 <= r.label < c:
                raise DatasetError(f"{r.path}: label {r.label} outside class table of size {c}")
            if r.split not in SPLITS:
                raise DatasetError(f"{r.path}: unknown split {r.split!r}")
            if r.provenance not in PROVENANCES:
                raise DatasetError(f"{r.path}: unknown provenance {r.provenance!r}")
            if r.provenance != "original" and r.split != "train":
                raise DatasetError(f"{r.path}: augmented record assigned to {r.split}")

    @property
    def num_classes(self):
        return len(self.class_names)

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def counts(self):
        return {s: len(self.split(s)) for s in SPLITS}

    def class_counts(self, originals_only=True):
        """``{class_name: {split: count}}``."""
        table = {name: dict.fromkeys(SPLITS, 0) for name in self.class_names}
        for r in self.records:
            if originals_only and r.provenance != "original":
                continue
            table[self.class_names[r.label]][r.split] += 1
        return table

    def to_dict(self):
        return {
            "version": self.version,
            "seed": self.seed,
            "class_names": list(self.class_names),
            "records": [asdict(r) for r in self.records],
            **self.extra,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != MANIFEST_VERSION:
            raise DatasetError(f"unsupported manifest version {d.get('version')!r}")
        try:
            records = [ImageRecord(str(r["path"]), int(r["label"]), r["split"],
                                   r.get("provenance", "original")) for r in d["records"]]
            extra = {k: v for k, v in d.items()
                     if k not in ("version", "seed", "class_names", "records")}
            return cls(list(d["class_names"]), records, int(d["seed"]), extra=extra)
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"malformed manifest: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def scan_dataset(root):
    """Collect ``(path, label)`` pairs from a ``root/<class>/<image>`` tree.

    Classes are the sorted subdirectory names. Raises :class:`DatasetError`
    on a missing root, no class directories, or an empty class.
    """
    root = Path(root).resolve()
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"dataset root {root} contains no class directories")
    class_names, items = [], []
    for label, d in enumerate(class_dirs):
        files = sorted(p for p in d.iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DatasetError(f"class directory {d.name!r} contains no PNG/JPEG images")
        class_names.append(d.name)
        items.extend((str(p), label) for p in files)
    return class_names, items


def split_counts(n, ratios=DEFAULT_RATIOS):
    """Per-split sizes: floor of each share, leftovers handed out train, val, test."""
    sizes = [int(np.floor(n * r + 1e-9)) for r in ratios]  # 0.29*100 == 28.999...96
    i = 0
    while sum(sizes) < n:
        sizes[i % len(sizes)] += 1
        i += 1
    return tuple(sizes)


def split_dataset(items, class_names, ratios=DEFAULT_RATIOS, seed=0, augment=True,
                  min_per_class=10, check_paths=True):
    """Stratified train/val/test split of ``(path, label)`` originals.

    Each class is shuffled with a generator derived from ``seed`` and cut by
    :func:`split_counts`. With ``augment`` every train original gains four
    virtual records, one per augmentation, so the train split grows fivefold.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1) > 1e-9 or min(ratios) < 0:
        raise DatasetError(f"ratios must be three non-negative shares summing to 1, got {ratios}")
    by_class = {label: [] for label in range(len(class_names))}
    for path, label in items:
        if not 0 <= label < len(class_names):
            raise DatasetError(f"{path}: label {label} outside class table")
        if check_paths and not Path(path).is_file():
            raise DatasetError(f"{path}: file does not exist")
        by_class[label].append(str(path))
    records = []
    for label, paths in by_class.items():
        if len(paths) < min_per_class:
            raise DatasetError(f"class {class_names[label]!r} has {len(paths)} images; "
                               f"at least {min_per_class} required")
        paths = sorted(paths)
        order = np.random.default_rng([seed, label]).permutation(len(paths))
        n_train, n_val, _ = split_counts(len(paths), ratios)
        for rank, idx in enumerate(order):
            split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            records.append(ImageRecord(paths[idx], label, split))
            if augment and split == "train":
                records.extend(ImageRecord(paths[idx], label, split, prov)
                               for prov in AUGMENTATIONS)
    return DatasetManifest(list(class_names), records, seed,
                           extra={"ratios": list(ratios), "augmented": bool(augment)})
