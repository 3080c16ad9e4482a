"""Softmax, categorical cross-entropy and classification metrics."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeError

PROB_FLOOR = 1e-12
CSV_COLUMNS = ("dataset", "split", "accuracy", "precision", "recall", "f1")


def softmax(logits):
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"softmax expects [n, C>=2] logits, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("softmax received non-finite logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, targets):
    """Mean negative log-likelihood and the fused softmax+CE logit gradient.

    Returns ``(loss, grad)`` where ``grad = (probs - onehot) / n`` is the
    derivative of the loss with respect to the logits that produced ``probs``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    n, c = probs.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} does not match batch size {n}")
    if np.any(targets < 0) or np.any(targets >= c):
        raise ValueError(f"target labels must lie in [0, {c})")
    picked = probs[np.arange(n), targets]
    loss = float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1
    grad /= n
    return loss, grad


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    class_names: list = field(default_factory=list)

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        if self.counts.shape != other.counts.shape:
            raise ShapeError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, list(self.class_names))

    def to_csv(self):
        names = self.class_names or [str(i) for i in range(len(self.counts))]
        lines = ["true\\pred," + ",".join(names)]
        for name, row in zip(names, self.counts):
            lines.append(name + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text):
        rows = [line.split(",") for line in text.strip().splitlines()]
        names = rows[0][1:]
        counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
        return cls(counts, names)


def confusion(pred, truth, num_classes, class_names=None):
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction and truth lengths differ: {pred.size} vs {truth.size}")
    for name, arr in (("prediction", pred), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} label out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    names = list(class_names) if class_names is not None else [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts, names)


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict = field(default_factory=dict)  # name -> {precision, recall, f1, support}
    average: str = "macro"

    def csv_row(self, dataset, split):
        vals = (self.accuracy, self.precision, self.recall, self.f1)
        return ",".join([dataset, split] + [f"{v:.6f}" for v in vals])

    def to_csv(self, dataset, split):
        return ",".join(CSV_COLUMNS) + "\n" + self.csv_row(dataset, split) + "\n"


def _safe_div(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def compute_metrics(cm, average="macro"):
    """Accuracy plus macro (or support-weighted) precision, recall and F1.

    A per-class metric whose denominator is zero scores 0, so every class
    takes part in the average.
    """
    counts = np.asarray(cm.counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, actual)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    # sum then divide, so a perfect matrix averages to exactly 1.0
    if average == "macro":
        def avg(v):
            return float(v.sum() / len(v))
    elif average == "weighted":
        def avg(v):
            return float((v * actual).sum() / total)
    else:
        raise ValueError(f"unknown averaging {average!r}; expected 'macro' or 'weighted'")
    names = cm.class_names or [str(i) for i in range(len(tp))]
    per_class = {
        name: {"precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
        for name, p, r, f, s in zip(names, precision, recall, f1, actual)
    }
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision=avg(precision),
        recall=avg(recall),
        f1=avg(f1),
        per_class=per_class,
        average=average,
    )
