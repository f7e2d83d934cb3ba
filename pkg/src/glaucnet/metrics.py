"""Segmentation and classification metrics, plus CSV report emission."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.labels import cup_region, disc_region
from .errors import DegenerateMask, EmptyInput, IoFailure, LengthMismatch, OneClassOnly, ShapeMismatch


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap of two binary masks; two empty masks score 1."""
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"dice: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def _row_extent(region: np.ndarray) -> int:
    rows = np.flatnonzero(region.any(axis=1))
    return 0 if rows.size == 0 else int(rows[-1] - rows[0] + 1)


def vertical_cdr(mask: np.ndarray) -> float:
    """Vertical cup extent over vertical disc extent (rows spanned, inclusive)."""
    disc = _row_extent(disc_region(mask))
    if disc == 0:
        raise DegenerateMask("mask has no disc pixels")
    return _row_extent(cup_region(mask)) / disc


def mae_cdr(pred_cdrs, true_cdrs) -> float:
    pred, true = np.asarray(pred_cdrs, dtype=np.float64), np.asarray(true_cdrs, dtype=np.float64)
    if pred.shape != true.shape:
        raise LengthMismatch(f"{pred.size} predicted vs {true.size} true CDRs")
    if pred.size == 0:
        raise EmptyInput("mae_cdr of nothing")
    return float(np.mean(np.abs(pred - true)))


def _split_classes(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.size} scores vs {labels.size} labels")
    return scores, labels == 1


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    start = 0
    while start < values.size:
        stop = start + 1
        while stop < values.size and sorted_vals[stop] == sorted_vals[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop + 1)
        start = stop
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(positive outscores negative), ties counting one half."""
    scores, pos = _split_classes(scores, labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("AUC needs at least one positive and one negative")
    ranks = midranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def sensitivity(scores, labels, threshold: float = 0.5) -> float:
    scores, pos = _split_classes(scores, labels)
    if not pos.any():
        raise OneClassOnly("sensitivity needs at least one positive")
    return float(np.mean(scores[pos] >= threshold))


def specificity(scores, labels, threshold: float = 0.5) -> float:
    scores, pos = _split_classes(scores, labels)
    if pos.all():
        raise OneClassOnly("specificity needs at least one negative")
    return float(np.mean(scores[~pos] < threshold))


def ensemble_mean(probabilities) -> float:
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.size == 0:
        raise EmptyInput("ensemble of zero models")
    if probs.min() < 0 or probs.max() > 1:
        raise ValueError("probabilities must lie in [0, 1]")
    return float(probs.mean())


@dataclass
class SegReport:
    ids: list[str] = field(default_factory=list)
    cup_dice: list[float] = field(default_factory=list)
    disc_dice: list[float] = field(default_factory=list)
    pred_cdr: list[float] = field(default_factory=list)
    true_cdr: list[float] = field(default_factory=list)

    def add(self, sample_id: str, pred_mask: np.ndarray, true_mask: np.ndarray):
        self.ids.append(sample_id)
        self.cup_dice.append(dice(cup_region(pred_mask), cup_region(true_mask)))
        self.disc_dice.append(dice(disc_region(pred_mask), disc_region(true_mask)))
        # a prediction without any disc has no defined ratio; score it as 0
        self.pred_cdr.append(vertical_cdr(pred_mask) if disc_region(pred_mask).any() else 0.0)
        self.true_cdr.append(vertical_cdr(true_mask))

    @property
    def mean_cup_dice(self) -> float:
        return float(np.mean(self.cup_dice))

    @property
    def mean_disc_dice(self) -> float:
        return float(np.mean(self.disc_dice))

    @property
    def mae_cdr(self) -> float:
        return mae_cdr(self.pred_cdr, self.true_cdr)

    def rows(self):
        yield ["id", "cup_dice", "disc_dice", "pred_cdr", "true_cdr"]
        for row in zip(self.ids, self.cup_dice, self.disc_dice, self.pred_cdr, self.true_cdr):
            yield [row[0]] + [repr(float(v)) for v in row[1:]]
        yield ["aggregate", repr(self.mean_cup_dice), repr(self.mean_disc_dice),
               repr(float(np.mean(self.pred_cdr))), repr(float(np.mean(self.true_cdr)))]


@dataclass
class ClsReport:
    ids: list[str]
    probs: list[float]
    labels: list[int]
    threshold: float = 0.5

    @property
    def auc(self) -> float:
        return roc_auc(self.probs, self.labels)

    @property
    def sensitivity(self) -> float:
        return sensitivity(self.probs, self.labels, self.threshold)

    @property
    def specificity(self) -> float:
        return specificity(self.probs, self.labels, self.threshold)

    def rows(self):
        yield ["id", "prob", "label"]
        for sid, p, y in zip(self.ids, self.probs, self.labels):
            yield [sid, repr(float(p)), str(int(y))]
        yield ["aggregate", repr(float(np.mean(self.probs))), repr(float(np.mean(self.labels)))]


def write_report(report, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(report.rows())
    except OSError as exc:
        raise IoFailure(f"cannot write report {path}: {exc.strerror or exc}") from None
