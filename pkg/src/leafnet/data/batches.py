"""Turning manifest records into shuffled batches of preprocessed images."""

import queue
import threading
from dataclasses import dataclass

import numpy as np

from ..errors import DatasetError
from .images import apply_provenance, preprocess


@dataclass
class Batch:
    images: np.ndarray  # [b, h, w, 3], values in [0, 1]
    labels: np.ndarray  # [b] int64
    records: list

    def __len__(self):
        return len(self.labels)


class ImageLoader:
    """Loads a record as a preprocessed (and, if needed, augmented) image.

    With ``cache=True`` preprocessed originals are kept in memory, which
    pays off when the same small dataset is visited for many epochs.
    """

    def __init__(self, image_size=256, crop_fraction=0.8, degrees=10.0, cache=False):
        self.image_size = image_size
        self.crop_fraction = crop_fraction
        self.degrees = degrees
        self._cache = {} if cache else None
        self._lock = threading.Lock()

    def original(self, path):
        if self._cache is None:
            return preprocess(path, self.image_size)
        with self._lock:
            hit = self._cache.get(path)
        if hit is None:
            hit = preprocess(path, self.image_size)
            with self._lock:
                self._cache[path] = hit
        return hit

    def load(self, record):
        img = self.original(record.path)
        return apply_provenance(img, record.provenance, self.crop_fraction, self.degrees)


def epoch_order(n, shuffle_seed, epoch):
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n)


def make_batches(manifest, split, batch_size=32, shuffle_seed=0, epoch=0, loader=None):
    """Yield :class:`Batch` objects covering ``split`` exactly once.

    The train split is reshuffled per epoch from ``(shuffle_seed, epoch)``;
    val and test keep manifest order. The final partial batch is kept.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    records = manifest.split(split)
    if not records:
        raise DatasetError(f"split {split!r} is empty")
    if split == "train":
        records = [records[i] for i in epoch_order(len(records), shuffle_seed, epoch)]
    loader = loader or ImageLoader()
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        images = np.stack([loader.load(r) for r in chunk]).astype(np.float32)
        labels = np.array([r.label for r in chunk], dtype=np.int64)
        yield Batch(images, labels, chunk)


_DONE = object()


def prefetch(iterable, capacity=2):
    """Produce items of ``iterable`` on a worker thread, at most ``capacity`` ahead.

    Item order is unchanged, so results never depend on whether prefetching is on.
    """
    if capacity < 1:
        yield from iterable
        return
    q = queue.Queue(maxsize=capacity)
    stop = threading.Event()

    def worker():
        try:
            for item in iterable:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_DONE)
        except BaseException as exc:  # re-raised in the consumer
            q.put(exc)

    t = threading.Thread(target=worker, daemon=True)
    t.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        t.join(timeout=1.0)
