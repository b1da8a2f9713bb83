"""Accuracy, macro-F1, and sliced evaluation of a polarity model."""

from dataclasses import dataclass
from typing import Optional

from .data import POLARITIES
from .model import predict_polarity


def accuracy(gold, pred):
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    if not gold:
        raise ValueError("empty label lists")
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def macro_f1(gold, pred):
    """Unweighted mean of per-class F1 over classes present in gold or pred.

    A class absent from both lists contributes nothing; a class whose
    precision and recall are both zero gets F1 = 0.
    """
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} pred")
    if not gold:
        raise ValueError("empty label lists")
    classes = sorted(set(gold) | set(pred))
    f1s = []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        if 2 * tp + fp + fn == 0:
            f1s.append(0.0)
        else:
            f1s.append(2 * tp / (2 * tp + fp + fn))
    return sum(f1s) / len(f1s)


@dataclass
class EvalResult:
    all_accuracy: float
    all_macro_f1: float
    isa_accuracy: Optional[float]
    isa_macro_f1: Optional[float]
    confusion: list  # 3x3 counts, rows gold, cols pred, label order fixed
    n_all: int
    n_implicit: int

    def row(self, pct=True):
        scale = 100.0 if pct else 1.0
        fmt = lambda v: None if v is None else round(v * scale, 2)
        return {
            "all_accuracy": fmt(self.all_accuracy),
            "all_macro_f1": fmt(self.all_macro_f1),
            "isa_accuracy": fmt(self.isa_accuracy),
            "isa_macro_f1": fmt(self.isa_macro_f1),
        }


def evaluate(model, dataset):
    """Metrics over all instances and over the implicit slice.

    Predictions are the polarity head's argmax. When the dataset has no
    implicit instances the isa fields are None, not zero.
    """
    instances = list(dataset)
    if not instances:
        raise ValueError("evaluate: empty dataset")
    gold = [inst.polarity for inst in instances]
    pred = [predict_polarity(model, inst, model.vocab) for inst in instances]

    idx = {label: i for i, label in enumerate(POLARITIES)}
    confusion = [[0] * 3 for _ in range(3)]
    for g, p in zip(gold, pred):
        confusion[idx[g]][idx[p]] += 1

    imp = [(g, p) for inst, g, p in zip(instances, gold, pred) if inst.implicit]
    if imp:
        ig = [g for g, _ in imp]
        ip = [p for _, p in imp]
        isa_acc, isa_f1 = accuracy(ig, ip), macro_f1(ig, ip)
    else:
        isa_acc = isa_f1 = None
    return EvalResult(
        all_accuracy=accuracy(gold, pred),
        all_macro_f1=macro_f1(gold, pred),
        isa_accuracy=isa_acc,
        isa_macro_f1=isa_f1,
        confusion=confusion,
        n_all=len(instances),
        n_implicit=len(imp),
    )
