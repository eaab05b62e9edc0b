"""Task-label-free calibration of a test split.

Each test sample is assigned to its nearest buffer class prototype by cosine
similarity; the most frequent classes covering at least the threshold
fraction of assignments stand in for the (unknown) task, their mean distance
score gives the test-set distance, and the applied temperature is
t_base + mean(w_c over those classes) * d_test.
"""

import json
from dataclasses import dataclass

import numpy as np

from .calibrators import apply_temperature
from .errors import BufferLookupError, DataError, DegeneratePrototypeError
from .stream import pad_logits


@dataclass(frozen=True)
class AssignmentHistogram:
    counts: dict  # class id -> count
    total: int


@dataclass(frozen=True)
class RepresentativeSet:
    classes: tuple  # descending count, ties by ascending class id
    coverage_achieved: float
    threshold: float


@dataclass(frozen=True)
class TestCalibration:
    d_test: float
    temperature: float
    representative: RepresentativeSet

    def trace_dict(self, task_id=None):
        out = {
            "representative_classes": list(self.representative.classes),
            "coverage": self.representative.coverage_achieved,
            "d_test": self.d_test,
            "temperature": self.temperature,
        }
        if task_id is not None:
            out["task_id"] = task_id
        return out

    def to_json(self, task_id=None):
        return json.dumps(self.trace_dict(task_id), indent=2, sort_keys=True)


def assign_test_samples(test_records, prototypes):
    """Tally each test sample under its nearest prototype (cosine, ties to lower id)."""
    if not test_records:
        raise DataError("cannot assign an empty test split")
    class_ids = sorted(prototypes)
    proto_mat = np.stack([prototypes[c].mean_embedding for c in class_ids])
    dim = proto_mat.shape[1]
    norms = np.linalg.norm(proto_mat, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegeneratePrototypeError("zero-norm prototype in test assignment")
    proto_mat = proto_mat / norms

    emb = np.stack([r.embedding for r in test_records])
    if emb.shape[1] != dim:
        raise DataError(f"test embedding dim {emb.shape[1]} != prototype dim {dim}")
    emb_norms = np.linalg.norm(emb, axis=1, keepdims=True)
    zero = np.nonzero(emb_norms[:, 0] == 0.0)[0]
    if zero.size:
        bad = ", ".join(test_records[i].sample_id for i in zero[:5])
        raise DataError(f"zero-norm test embeddings (samples {bad})")

    sims = (emb / emb_norms) @ proto_mat.T
    nearest = np.argmax(sims, axis=1)  # first max wins; columns are ascending class id
    counts = {}
    for idx in nearest:
        cid = class_ids[idx]
        counts[cid] = counts.get(cid, 0) + 1
    return AssignmentHistogram(counts=counts, total=len(test_records))


def select_representative(hist, threshold):
    """Greedy prefix of classes, by descending count, until coverage >= threshold."""
    if not (0.0 < threshold <= 1.0):
        raise DataError(f"threshold must be in (0, 1], got {threshold}")
    ordered = sorted(hist.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    taken = []
    cum = 0
    for cid, count in ordered:
        taken.append(cid)
        cum += count
        if cum / hist.total >= threshold:
            break
    return RepresentativeSet(
        classes=tuple(taken), coverage_achieved=cum / hist.total, threshold=threshold
    )


def compute_d_test(rep, table):
    """Mean normalized distance score of the representative classes."""
    missing = [c for c in rep.classes if c not in table.scores]
    if missing:
        raise BufferLookupError(f"classes {missing} missing from distance score table")
    return float(np.mean([table.scores[c] for c in rep.classes]))


def calibrate_test_set(test_records, model, table, threshold=0.6, width=None):
    """End-to-end test-time calibration of one test split.

    Returns the calibration trace and one probability vector per record, in
    record order. `width`, when given, right-zero-pads old-task logits to the
    current head width first.
    """
    hist = assign_test_samples(test_records, table.prototypes)
    rep = select_representative(hist, threshold)
    d_test = compute_d_test(rep, table)
    missing = [c for c in rep.classes if c not in model.weights]
    if missing:
        raise BufferLookupError(f"representative classes {missing} not in the fitted model")
    w_bar = float(np.mean([model.weights[c] for c in rep.classes]))
    temperature = max(model.t_base + w_bar * d_test, model.temperature_floor)
    if width is None:
        logits = np.stack([r.logits for r in test_records])
    else:
        logits = np.stack([pad_logits(r.logits, width) for r in test_records])
    probs = apply_temperature(logits, temperature)
    cal = TestCalibration(d_test=d_test, temperature=temperature, representative=rep)
    return cal, probs
