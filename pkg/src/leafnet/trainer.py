"""Epoch loop, evaluation, prediction and epoch logs."""

import copy
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .data.batches import ImageLoader, make_batches, prefetch
from .data.images import preprocess
from .errors import ConfigError, DatasetError, SpecMismatchError, TrainingDivergedError
from .metrics import compute_metrics, confusion, cross_entropy, softmax
from .optim import Optimizer, OptimizerConfig

log = logging.getLogger(__name__)

EPOCH_CSV_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,seconds"


@dataclass
class TrainingConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 32
    max_epochs: int = 10
    seed: int = 0
    precision: str = "float32"
    track_best_validation: bool = False
    prefetch: int = 2

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    wall_time: float = 0.0

    def key(self):
        """Everything except wall time, for determinism comparisons."""
        return (self.epoch, self.train_loss, self.train_accuracy,
                self.val_loss, self.val_accuracy)

    def csv_row(self, with_time=False):
        secs = f"{self.wall_time:.3f}" if with_time else ""
        return (f"{self.epoch},{self.train_loss:.9g},{self.train_accuracy:.9g},"
                f"{self.val_loss:.9g},{self.val_accuracy:.9g},{secs}")


def epoch_csv(history, with_time=False):
    return "\n".join([EPOCH_CSV_HEADER] + [m.csv_row(with_time) for m in history]) + "\n"


def _split_pass(model, manifest, split, batch_size, loader, prefetch_depth=0):
    """Infer-mode pass: mean loss, predictions and truth over ``split``."""
    losses, preds, truth = [], [], []
    batches = make_batches(manifest, split, batch_size, loader=loader)
    for batch in prefetch(batches, prefetch_depth):
        probs = model.forward(batch.images, "infer")
        loss, _ = cross_entropy(probs, batch.labels)
        losses.append(loss * len(batch))
        preds.append(np.argmax(probs, axis=1))
        truth.append(batch.labels)
    preds = np.concatenate(preds)
    truth = np.concatenate(truth)
    return float(np.sum(losses) / len(truth)), preds, truth


class Trainer:
    """Owns a model, its optimizer and the epoch history of one run."""

    def __init__(self, model, class_names, cfg=None, optimizer=None, loader=None,
                 epoch=0, history=None):
        self.model = model
        self.class_names = list(class_names)
        self.cfg = cfg or TrainingConfig()
        self.optimizer = optimizer or Optimizer(self.cfg.optimizer)
        self.loader = loader or ImageLoader(model.spec.input_shape[:2])
        self.epoch = epoch
        self.history = list(history or [])
        self.best = None
        self.best_val_accuracy = -1.0
        self.best_epoch = None
        if len(self.class_names) != model.spec.num_classes:
            raise SpecMismatchError(f"model has {model.spec.num_classes} classes, "
                                    f"class table has {len(self.class_names)}")

    def _check_manifest(self, manifest):
        if manifest.class_names != self.class_names:
            raise SpecMismatchError(
                f"manifest classes {manifest.class_names} differ from model classes "
                f"{self.class_names}"
            )
        for split in ("train", "val"):
            if not manifest.split(split):
                raise DatasetError(f"manifest has an empty {split} split")

    def run_epoch(self, manifest):
        cfg = self.cfg
        epoch = self.epoch
        start = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, epoch, 1])
        total_loss, correct, seen = 0.0, 0, 0
        batches = make_batches(manifest, "train", cfg.batch_size, cfg.seed, epoch, self.loader)
        for b, batch in enumerate(prefetch(batches, cfg.prefetch)):
            if len(batch) < 2:
                log.warning("epoch %d: skipping single-sample batch %d (%s); "
                            "batch norm needs two samples", epoch + 1, b, batch.records[0].path)
                continue
            logits = self.model.forward_logits(batch.images, "train", rng)
            if not np.all(np.isfinite(logits)):
                self._diverged(epoch, b, batch, "non-finite logits")
            probs = softmax(logits)
            loss, dlogits = cross_entropy(probs, batch.labels)
            if not np.isfinite(loss):
                self._diverged(epoch, b, batch, f"non-finite loss {loss}")
            self.model.backward(dlogits.astype(self.model.dtype, copy=False))
            self.optimizer.step(self.model.parameters(), self.model.gradients())
            total_loss += loss * len(batch)
            correct += int(np.sum(np.argmax(probs, axis=1) == batch.labels))
            seen += len(batch)
        if seen == 0:
            raise DatasetError("no trainable batch in the train split")
        val_loss, preds, truth = _split_pass(self.model, manifest, "val", cfg.batch_size,
                                             self.loader, cfg.prefetch)
        self.epoch += 1
        m = EpochMetrics(self.epoch, total_loss / seen, correct / seen, val_loss,
                         float(np.mean(preds == truth)), time.perf_counter() - start)
        self.history.append(m)
        log.info("epoch %d: train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
                 m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy)
        if cfg.track_best_validation and m.val_accuracy > self.best_val_accuracy:
            self.best_val_accuracy = m.val_accuracy
            self.best_epoch = m.epoch
            self.best = self.checkpoint()
        return m

    def _diverged(self, epoch, b, batch, what):
        paths = [f"{r.path}[{r.provenance}]" for r in batch.records]
        raise TrainingDivergedError(
            f"{what} at epoch {epoch + 1}, batch {b} (first record {paths[0]})",
            epoch=epoch + 1, batch=b, paths=paths)

    def fit(self, manifest, epochs=None):
        """Run ``epochs`` more epochs (default: up to ``cfg.max_epochs`` in total)."""
        self._check_manifest(manifest)
        if epochs is None:
            epochs = self.cfg.max_epochs - self.epoch
        new = [self.run_epoch(manifest) for _ in range(max(epochs, 0))]
        return new

    def checkpoint(self):
        state = self.optimizer.state
        return Checkpoint(
            spec=copy.deepcopy(self.model.spec),
            arrays={k: v.copy() for k, v in self.model.state_arrays().items()},
            class_names=list(self.class_names),
            epoch=self.epoch,
            seed=self.cfg.seed,
            precision=self.model.precision,
            optimizer_config=copy.deepcopy(self.optimizer.cfg),
            optimizer_step=state.step,
            optimizer_buffers={kind: {k: v.copy() for k, v in slot.items()}
                               for kind, slot in state.buffers.items()},
            meta={
                "training": {"batch_size": self.cfg.batch_size,
                             "max_epochs": self.cfg.max_epochs,
                             "track_best_validation": self.cfg.track_best_validation},
                "history": [list(m.key()) for m in self.history],
                "best_val_accuracy": self.best_val_accuracy,
                "best_epoch": self.best_epoch,
            },
        )

    @classmethod
    def from_checkpoint(cls, ckpt, cfg=None, loader=None):
        """Rebuild a trainer that continues exactly where ``ckpt`` stopped."""
        model = ckpt.build_model()
        if cfg is None:
            t = ckpt.meta.get("training", {})
            cfg = TrainingConfig(optimizer=ckpt.optimizer_config, seed=ckpt.seed,
                                 precision=ckpt.precision,
                                 batch_size=t.get("batch_size", 32),
                                 max_epochs=t.get("max_epochs", max(ckpt.epoch, 1)),
                                 track_best_validation=t.get("track_best_validation", False))
        elif cfg.seed != ckpt.seed:
            raise ConfigError(f"resume seed {cfg.seed} differs from checkpoint seed {ckpt.seed}")
        history = [EpochMetrics(*row) for row in ckpt.meta.get("history", [])]
        trainer = cls(model, ckpt.class_names, cfg, ckpt.build_optimizer(model.dtype),
                      loader, epoch=ckpt.epoch, history=history)
        trainer.best_val_accuracy = ckpt.meta.get("best_val_accuracy", -1.0)
        trainer.best_epoch = ckpt.meta.get("best_epoch")
        return trainer


def train(model, manifest, cfg=None, loader=None):
    """Train ``model`` for ``cfg.max_epochs`` epochs.

    Returns ``(model, history, best)``; ``best`` is the checkpoint of the
    highest-validation-accuracy epoch (earliest on ties) when
    ``cfg.track_best_validation`` is set, else ``None``.
    """
    trainer = Trainer(model, manifest.class_names, cfg, loader=loader)
    trainer.fit(manifest)
    return trainer.model, trainer.history, trainer.best


def evaluate(model, manifest, split="test", batch_size=32, loader=None, average="macro"):
    """Infer-mode metrics on ``split``; returns ``(MetricsReport, ConfusionMatrix)``."""
    if manifest.num_classes != model.spec.num_classes:
        raise SpecMismatchError(f"manifest has {manifest.num_classes} classes, "
                                f"model expects {model.spec.num_classes}")
    loader = loader or ImageLoader(model.spec.input_shape[:2])
    _, preds, truth = _split_pass(model, manifest, split, batch_size, loader)
    cm = confusion(preds, truth, manifest.num_classes, manifest.class_names)
    return compute_metrics(cm, average), cm


def predict(model, path, class_names, loader=None):
    """Ranked ``[(class_name, probability), ...]`` for one image file."""
    if len(class_names) != model.spec.num_classes:
        raise SpecMismatchError("class table size does not match the model")
    size = loader.image_size if loader else model.spec.input_shape[:2]
    img = preprocess(path, size)
    probs = model.forward(img[None], "infer")[0].astype(np.float64)
    order = np.argsort(-probs, kind="stable")
    return [(class_names[i], float(probs[i])) for i in order]
