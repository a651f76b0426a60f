"""Experiment protocol: splits, class balancing, accuracy statistics.

The split ratio is 50/25/25 for train/validation/test with any remainder
assigned train, then validation, then test. Class balancing oversamples
minority classes with replacement up to the majority count and never
drops a sample. Reported spreads are sample (n-1) standard deviations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass, EmptyInput, IoFailure, LengthMismatch, TooFew

RESULTS_HEADER = ("method", "aug_level", "mean_acc", "std_acc")
# recorded protocol decision: every run redraws both the split and the
# initial weights from seed + run_index
RESULTS_NOTE = "# runs resample split and weights with seeds seed+run_index"


@dataclass(frozen=True)
class Split:
    """Disjoint index lists covering range(n)."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        n = len(self.train) + len(self.validation) + len(self.test)
        joined = np.concatenate([self.train, self.validation, self.test])
        if len(np.unique(joined)) != n or (n and joined.max() != n - 1):
            raise ValueError("split parts must be disjoint and cover range(n)")

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def split_sizes(n: int) -> tuple[int, int, int]:
    """50/25/25 by floor; remainder goes to train, then val, then test."""
    tr, va, te = n // 2, n // 4, n // 4
    rem = n - (tr + va + te)
    tr += rem >= 1
    va += rem >= 2
    te += rem >= 3
    return tr, va, te


def split_dataset(n: int, seed: int) -> Split:
    """Random 50/25/25 partition of range(n) under the given seed."""
    if n < 4:
        raise TooFew(f"need at least 4 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    tr, va, te = split_sizes(n)
    return Split(train=perm[:tr], validation=perm[tr:tr + va],
                 test=perm[tr + va:], seed=seed)


def balance_classes(labels, seed: int) -> np.ndarray:
    """Index multiset equalizing class counts by oversampling.

    Returns range(n) followed by replacement draws from each minority
    class, so every original sample is kept. Already balanced input
    comes back as plain range(n).
    """
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0:
        raise EmptyClass("no samples, nothing to balance")
    counts = np.bincount(y)
    target = counts.max()
    rng = np.random.default_rng(seed)
    out = [np.arange(len(y))]
    for cls in np.flatnonzero(counts):
        short = target - counts[cls]
        if short:
            pool = np.flatnonzero(y == cls)
            out.append(rng.choice(pool, size=short, replace=True))
    return np.concatenate(out)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has {pred.shape}, truth has {truth.shape}")
    if pred.size == 0:
        raise EmptyInput("cannot score empty label vectors")
    return float((pred == truth).mean())


@dataclass(frozen=True)
class RunStats:
    """Per-run accuracies with their mean and sample (n-1) std."""

    accuracies: tuple[float, ...]
    mean: float
    std: float


def run_stats(accs) -> RunStats:
    accs = tuple(float(a) for a in accs)
    if len(accs) < 2:
        raise TooFew(f"need at least 2 runs for a spread, got {len(accs)}")
    return RunStats(accuracies=accs, mean=float(np.mean(accs)),
                    std=float(np.std(accs, ddof=1)))


def confusion_matrix(pred, truth, n_classes: int) -> np.ndarray:
    """Counts matrix M[t, p]; row sums are per-class truth counts."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has {pred.shape}, truth has {truth.shape}")
    if len(pred) and (pred.min() < 0 or truth.min() < 0
                      or max(pred.max(), truth.max()) >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (truth, pred), 1)
    return m


@dataclass(frozen=True)
class ResultRow:
    """One method at one augmentation level in the results table."""

    method: str
    aug_level: int
    mean_acc: float
    std_acc: float


def write_results(path, rows: list[ResultRow]) -> None:
    """Results CSV mirroring the comparison table, deterministic bytes."""
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(RESULTS_NOTE + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RESULTS_HEADER)
            for r in rows:
                writer.writerow([r.method, r.aug_level,
                                 f"{r.mean_acc:.6f}", f"{r.std_acc:.6f}"])
    except OSError as exc:
        raise IoFailure(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> list[ResultRow]:
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise IoFailure(f"cannot read results from {path}: {exc}") from exc
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(header) != RESULTS_HEADER:
        raise IoFailure(f"bad results header in {path}: {header}")
    return [ResultRow(method=m, aug_level=int(lv),
                      mean_acc=float(mu), std_acc=float(sd))
            for m, lv, mu, sd in reader]
