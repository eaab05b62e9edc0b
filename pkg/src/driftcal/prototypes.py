"""Class prototypes, cosine similarity, and per-class distance scores.

A buffer class's score is its minimum cosine distance to any current-task
class, min-max rescaled over all buffer classes. Identical prototype vectors
are pinned to similarity exactly 1.0 so self-distances are exactly zero;
float dot/sqrt rounding would otherwise leave ~1e-16 residues that poison
the exact-zero contract downstream.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import BufferLookupError, DataError, DegeneratePrototypeError


@dataclass(frozen=True)
class ClassPrototype:
    class_id: int
    mean_embedding: np.ndarray
    support: int

    def __post_init__(self):
        self.mean_embedding.flags.writeable = False


@dataclass(frozen=True)
class SimilarityMatrix:
    rows: tuple  # current-task class ids
    cols: tuple  # buffer class ids
    values: np.ndarray

    def __post_init__(self):
        self.values.flags.writeable = False


@dataclass(frozen=True)
class DistanceScoreTable:
    scores: dict  # class id -> normalized score in [0, 1]
    raw_scores: dict  # class id -> min cosine distance, >= 0
    prototypes: dict  # buffer-side class id -> ClassPrototype

    def to_json_dict(self):
        return {
            str(cid): {"raw": self.raw_scores[cid], "normalized": self.scores[cid]}
            for cid in self.scores
        }

    def to_json(self):
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def compute_prototype(samples):
    """Componentwise mean embedding of one class's samples."""
    if not samples:
        raise DataError("cannot compute a prototype from zero samples")
    labels = {s.label for s in samples}
    if len(labels) != 1:
        raise DataError(f"prototype samples carry mixed labels {sorted(labels)}")
    dims = {s.embedding.shape[0] for s in samples}
    if len(dims) != 1:
        raise DataError(f"prototype samples carry mixed embedding dims {sorted(dims)}")
    mean = np.mean([s.embedding for s in samples], axis=0)
    if not np.any(mean):
        raise DegeneratePrototypeError(
            f"class {samples[0].label}: mean embedding has zero norm"
        )
    return ClassPrototype(class_id=samples[0].label, mean_embedding=mean, support=len(samples))


def _stack_normalized(prototypes):
    mat = np.stack([p.mean_embedding for p in prototypes])
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegeneratePrototypeError("zero-norm prototype in similarity computation")
    return mat / norms


def similarity_matrix(current, buffer):
    """Pairwise cosine similarity, current classes as rows, buffer classes as columns."""
    if not current or not buffer:
        raise DataError("similarity_matrix needs non-empty prototype lists on both sides")
    dim = current[0].mean_embedding.shape[0]
    for p in list(current) + list(buffer):
        if p.mean_embedding.shape[0] != dim:
            raise DataError(
                f"embedding dim mismatch: class {p.class_id} has {p.mean_embedding.shape[0]}, expected {dim}"
            )
    values = _stack_normalized(current) @ _stack_normalized(buffer).T
    np.clip(values, -1.0, 1.0, out=values)
    # pin bitwise-equal prototypes to exactly 1.0 (self-distance must be exactly 0)
    near = np.argwhere(values > 1.0 - 1e-6)
    for i, j in near:
        if np.array_equal(current[i].mean_embedding, buffer[j].mean_embedding):
            values[i, j] = 1.0
    return SimilarityMatrix(
        rows=tuple(p.class_id for p in current),
        cols=tuple(p.class_id for p in buffer),
        values=values,
    )


def assign_distance_scores(similarity, buffer_prototypes=None):
    """Min distance of each buffer class to any current class, min-max normalized.

    When all raw scores coincide the rescaling is undefined; every score is
    then 0, which reduces the temperature model to its base temperature.
    """
    raw = np.min(1.0 - similarity.values, axis=0)
    lo, hi = float(raw.min()), float(raw.max())
    if hi > lo:
        normalized = (raw - lo) / (hi - lo)
    else:
        normalized = np.zeros_like(raw)
    protos = {}
    if buffer_prototypes is not None:
        protos = {p.class_id: p for p in buffer_prototypes}
    return DistanceScoreTable(
        scores={cid: float(normalized[j]) for j, cid in enumerate(similarity.cols)},
        raw_scores={cid: float(raw[j]) for j, cid in enumerate(similarity.cols)},
        prototypes=protos,
    )


def score_buffer_records(buffer, table):
    """Pair every buffered record with its class's normalized distance score."""
    out = []
    for class_id, records in buffer.entries.items():
        if class_id not in table.scores:
            raise BufferLookupError(f"class {class_id} missing from distance score table")
        score = table.scores[class_id]
        out.extend((rec, score) for rec in records)
    return out


def distance_table_for_task(dump, buffer):
    """Full per-task scoring pass: prototypes on both sides, similarity, scores.

    Current-task prototypes come from the task's complete validation split;
    buffer-side prototypes only from the stored buffer records.
    """
    current_protos = []
    for class_id in dump.class_set:
        samples = dump.val_records_of(class_id)
        if not samples:
            raise DataError(f"task {dump.task_id}: class {class_id} has no validation records")
        current_protos.append(compute_prototype(samples))
    buffer_protos = [compute_prototype(list(recs)) for recs in buffer.entries.values()]
    sim = similarity_matrix(current_protos, buffer_protos)
    return assign_distance_scores(sim, buffer_protos)
