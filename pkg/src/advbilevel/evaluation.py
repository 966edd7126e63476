"""Confusion tallies and the symmetric P4 score (class 1 = positive).

P4 = 4 TP TN / (4 TP TN + (TP + TN)(FP + FN)) treats both classes
symmetrically: relabelling classes leaves it unchanged, unlike F1.  When the
denominator vanishes the score is defined as 1 if there are no errors
(empty test set, or a one-class test set predicted perfectly) and 0
otherwise, so hyperparameter sweeps stay total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(predictions, truths) -> ConfusionCounts:
    preds = np.asarray(predictions).astype(int)
    truth = np.asarray(truths).astype(int)
    if preds.shape != truth.shape:
        raise ValueError(f"got {preds.shape} predictions for {truth.shape} truths")
    return ConfusionCounts(
        tp=int(np.sum((preds == 1) & (truth == 1))),
        tn=int(np.sum((preds == 0) & (truth == 0))),
        fp=int(np.sum((preds == 1) & (truth == 0))),
        fn=int(np.sum((preds == 0) & (truth == 1))),
    )


def p4_score(c: ConfusionCounts) -> float:
    num = 4.0 * c.tp * c.tn
    den = num + (c.tp + c.tn) * (c.fp + c.fn)
    if den == 0.0:
        return 1.0 if c.fp == 0 and c.fn == 0 else 0.0
    return num / den


def f1_score(c: ConfusionCounts) -> float:
    den = 2.0 * c.tp + c.fp + c.fn
    return 0.0 if den == 0.0 else 2.0 * c.tp / den
