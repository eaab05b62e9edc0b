"""Calibration metrics for continual evaluation.

Binned expected calibration error over equal-width right-closed bins
(confidence 0 falls in the first bin), negative log-likelihood with a
1e-12 probability floor, per-task bundles, and the stream-level report:
unweighted task averages, the last-task ECE change, and the worst-case
per-task ECE change. Negative change means calibration improved.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_BINS = 10
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class BinStat:
    lower: float
    upper: float
    count: int
    mean_confidence: float | None
    accuracy: float | None


@dataclass(frozen=True)
class ReliabilityBins:
    edges: tuple
    bins: tuple  # of BinStat
    n_bins: int


@dataclass(frozen=True)
class TaskMetrics:
    task_id: int
    accuracy: float
    nll: float
    ece: float
    n: int


@dataclass(frozen=True)
class CalibrationReport:
    method_name: str
    per_task_pre: tuple  # TaskMetrics per task, before calibration
    per_task_post: tuple  # TaskMetrics per task, after calibration
    avg_acc: float
    avg_nll: float
    aece: float
    delta_lece: float
    max_delta_ece: float
    max_delta_ece_task: int

    def to_dict(self):
        def rows(items):
            return [
                {"task_id": m.task_id, "accuracy": m.accuracy, "nll": m.nll, "ece": m.ece, "n": m.n}
                for m in items
            ]

        return {
            "method": self.method_name,
            "per_task_pre": rows(self.per_task_pre),
            "per_task_post": rows(self.per_task_post),
            "avg_acc": self.avg_acc,
            "avg_nll": self.avg_nll,
            "aece": self.aece,
            "delta_lece": self.delta_lece,
            "max_delta_ece": self.max_delta_ece,
            "max_delta_ece_task": self.max_delta_ece_task,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self):
        """Flat rows: task_id, method, acc, nll, ece_pre, ece_post, delta_ece."""
        rows = []
        for pre, post in zip(self.per_task_pre, self.per_task_post):
            rows.append(
                {
                    "task_id": pre.task_id,
                    "method": self.method_name,
                    "acc": post.accuracy,
                    "nll": post.nll,
                    "ece_pre": pre.ece,
                    "ece_post": post.ece,
                    "delta_ece": post.ece - pre.ece,
                }
            )
        return rows


def bin_index(confidences, n_bins):
    """Right-closed equal-width bin index in [1, n_bins]; confidence 0 -> bin 1."""
    c = np.asarray(confidences, dtype=np.float64)
    idx = np.ceil(c * n_bins).astype(np.int64)
    idx[idx < 1] = 1
    idx[idx > n_bins] = n_bins
    return idx


def ece(confidences, correct, n_bins=DEFAULT_BINS):
    """Binned expected calibration error plus the reliability-bin detail."""
    c = np.asarray(confidences, dtype=np.float64)
    k = np.asarray(correct, dtype=np.float64)
    if c.shape[0] != k.shape[0] or c.shape[0] == 0:
        raise DataError("confidences and correctness must be equally long and non-empty")
    if n_bins < 1:
        raise DataError(f"bin count must be >= 1, got {n_bins}")
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise DataError("confidences must lie in [0, 1]")

    idx = bin_index(c, n_bins)
    counts = np.bincount(idx, minlength=n_bins + 1)[1:]
    conf_sums = np.bincount(idx, weights=c, minlength=n_bins + 1)[1:]
    acc_sums = np.bincount(idx, weights=k, minlength=n_bins + 1)[1:]

    n = c.shape[0]
    total = 0.0
    stats = []
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    for b in range(n_bins):
        if counts[b] > 0:
            conf_b = conf_sums[b] / counts[b]
            acc_b = acc_sums[b] / counts[b]
            total += counts[b] / n * abs(acc_b - conf_b)
            stats.append(BinStat(edges[b], edges[b + 1], int(counts[b]), conf_b, acc_b))
        else:
            stats.append(BinStat(edges[b], edges[b + 1], 0, None, None))
    bins = ReliabilityBins(edges=tuple(edges), bins=tuple(stats), n_bins=n_bins)
    return float(total), bins


def nll(prob_vectors, labels):
    """Mean negative log-likelihood; true-class probability floored at 1e-12."""
    p = np.asarray(prob_vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] != y.shape[0] or p.shape[0] == 0:
        raise DataError("need a non-empty (n, k) probability matrix aligned with labels")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise DataError("probability vectors must sum to 1 within 1e-6")
    if np.any(y < 0) or np.any(y >= p.shape[1]):
        raise DataError("label index outside probability width")
    picked = np.maximum(p[np.arange(p.shape[0]), y], PROB_FLOOR)
    return float(np.mean(-np.log(picked)))


def task_metrics(prob_vectors, labels, task_id, n_bins=DEFAULT_BINS):
    """Accuracy, NLL and ECE of one task's test split."""
    p = np.asarray(prob_vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    preds = np.argmax(p, axis=1)
    correct = preds == y
    conf = np.max(p, axis=1)
    ece_val, _ = ece(conf, correct, n_bins)
    return TaskMetrics(
        task_id=int(task_id),
        accuracy=float(np.mean(correct)),
        nll=nll(p, y),
        ece=ece_val,
        n=int(p.shape[0]),
    )


def continual_report(pre, post, method):
    """Stream-level report from aligned pre/post per-task metrics."""
    pre = tuple(sorted(pre, key=lambda m: m.task_id))
    post = tuple(sorted(post, key=lambda m: m.task_id))
    if [m.task_id for m in pre] != [m.task_id for m in post] or not pre:
        raise DataError("pre and post task metrics must cover the same non-empty task ids")
    deltas = [(q.ece - p.ece, q.task_id) for p, q in zip(pre, post)]
    max_delta, max_task = max(deltas, key=lambda t: (t[0], -t[1]))
    return CalibrationReport(
        method_name=method,
        per_task_pre=pre,
        per_task_post=post,
        avg_acc=float(np.mean([m.accuracy for m in post])),
        avg_nll=float(np.mean([m.nll for m in post])),
        aece=float(np.mean([m.ece for m in post])),
        delta_lece=float(deltas[-1][0]),
        max_delta_ece=float(max_delta),
        max_delta_ece_task=int(max_task),
    )


def reliability_csv_rows(bins, task_id=None, method=None):
    """Rows for the reliability-bin CSV export."""
    rows = []
    for stat in bins.bins:
        rows.append(
            {
                "task_id": task_id,
                "method": method,
                "bin_lower": stat.lower,
                "bin_upper": stat.upper,
                "count": stat.count,
                "mean_confidence": "" if stat.mean_confidence is None else stat.mean_confidence,
                "accuracy": "" if stat.accuracy is None else stat.accuracy,
            }
        )
    return rows
