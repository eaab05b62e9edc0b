"""Data model for class-incremental streams: task dumps and the calibration buffer.

On-disk layout is one directory per stream: a `manifest.json` naming the
tasks and one JSONL file per task, one record per line, lines sorted by
record id so round-trips are byte-comparable.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BufferLookupError,
    DataError,
    DumpDataError,
    DumpParseError,
    DumpSchemaError,
    StreamConsistencyError,
)

MANIFEST_NAME = "manifest.json"
SPLITS = ("val", "test")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    task_id: int
    split: str
    label: int
    logits: np.ndarray
    embedding: np.ndarray

    def __post_init__(self):
        self.logits.flags.writeable = False
        self.embedding.flags.writeable = False


@dataclass(frozen=True)
class TaskDump:
    task_id: int
    class_set: tuple
    logit_width: int
    val_records: tuple
    test_records: tuple

    @property
    def records(self):
        return self.val_records + self.test_records

    def val_records_of(self, class_id):
        return [r for r in self.val_records if r.label == class_id]


def pad_logits(logits, width):
    """Right-pad a logit vector with zeros up to `width` (argmax preserved)."""
    if logits.shape[0] == width:
        return logits
    if logits.shape[0] > width:
        raise DumpSchemaError(f"logit vector of length {logits.shape[0]} exceeds width {width}")
    out = np.zeros(width, dtype=np.float64)
    out[: logits.shape[0]] = logits
    return out


def _validate_record(rec, logit_width, embedding_dim, path, line_no):
    if rec.split not in SPLITS:
        raise DumpSchemaError(f"{path}:{line_no}: split must be one of {SPLITS}, got {rec.split!r}")
    if rec.logits.shape[0] != logit_width:
        raise DumpSchemaError(
            f"{path}:{line_no}: logits length {rec.logits.shape[0]} != manifest logit_width {logit_width}"
        )
    if embedding_dim is not None and rec.embedding.shape[0] != embedding_dim:
        raise DumpSchemaError(
            f"{path}:{line_no}: embedding length {rec.embedding.shape[0]} != manifest embedding_dim {embedding_dim}"
        )
    if not (np.all(np.isfinite(rec.logits)) and np.all(np.isfinite(rec.embedding))):
        raise DumpDataError(f"{path}:{line_no}: non-finite value in logits or embedding")
    if not (0 <= rec.label < logit_width):
        raise DumpDataError(
            f"{path}:{line_no}: label {rec.label} outside [0, {logit_width})"
        )


def ingest_task_dump(path, task_id, class_set, logit_width, embedding_dim=None,
                     seen_classes=None):
    """Parse and validate one task's JSONL dump into a TaskDump.

    seen_classes, when given, is the union of earlier tasks' class sets and
    triggers a StreamConsistencyError on overlap.
    """
    class_set = tuple(int(c) for c in class_set)
    if not class_set:
        raise DumpSchemaError(f"{path}: empty class_set for task {task_id}")
    if len(set(class_set)) != len(class_set):
        raise DumpSchemaError(f"{path}: duplicate class ids in class_set for task {task_id}")
    if seen_classes is not None:
        overlap = set(class_set) & set(seen_classes)
        if overlap:
            raise StreamConsistencyError(
                f"task {task_id} re-introduces classes {sorted(overlap)} from an earlier task"
            )

    val, test = [], []
    seen_ids = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DumpParseError(path, line_no, f"invalid JSON ({exc.msg})") from exc
            try:
                rec = SampleRecord(
                    sample_id=str(raw["id"]),
                    task_id=int(task_id),
                    split=str(raw["split"]),
                    label=int(raw["label"]),
                    logits=np.asarray(raw["logits"], dtype=np.float64),
                    embedding=np.asarray(raw["embedding"], dtype=np.float64),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DumpParseError(path, line_no, f"bad record shape ({exc})") from exc
            _validate_record(rec, logit_width, embedding_dim, path, line_no)
            if rec.sample_id in seen_ids:
                raise DumpSchemaError(f"{path}:{line_no}: duplicate sample id {rec.sample_id!r}")
            seen_ids.add(rec.sample_id)
            (val if rec.split == "val" else test).append(rec)

    if not val:
        raise DumpDataError(f"{path}: task {task_id} has no validation records")
    return TaskDump(
        task_id=int(task_id),
        class_set=class_set,
        logit_width=int(logit_width),
        val_records=tuple(val),
        test_records=tuple(test),
    )


def read_manifest(stream_dir):
    path = os.path.join(stream_dir, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no {MANIFEST_NAME} in {stream_dir}") from None
    except json.JSONDecodeError as exc:
        raise DumpParseError(path, exc.lineno, "manifest is not valid JSON") from exc
    for key in ("stream_id", "embedding_dim", "tasks"):
        if key not in manifest:
            raise DumpSchemaError(f"{path}: manifest missing key {key!r}")
    return manifest


def ingest_stream(stream_dir):
    """Ingest every task of a stream, in task order, with cross-task checks."""
    manifest = read_manifest(stream_dir)
    dumps = []
    seen_classes = set()
    last_width = 0
    for entry in sorted(manifest["tasks"], key=lambda e: e["task_id"]):
        dump = ingest_task_dump(
            os.path.join(stream_dir, entry["file"]),
            task_id=entry["task_id"],
            class_set=entry["class_set"],
            logit_width=entry["logit_width"],
            embedding_dim=manifest["embedding_dim"],
            seen_classes=seen_classes,
        )
        if dump.logit_width < last_width + len(dump.class_set):
            raise StreamConsistencyError(
                f"task {dump.task_id}: logit_width {dump.logit_width} smaller than "
                f"accumulated class count {last_width + len(dump.class_set)}"
            )
        seen_classes.update(dump.class_set)
        last_width = dump.logit_width
        dumps.append(dump)
    if not dumps:
        raise DataError(f"{stream_dir}: manifest lists no tasks")
    return dumps


@dataclass(frozen=True)
class CalibrationBuffer:
    """Class-keyed store of validation samples reserved across tasks.

    Immutable: update_calibration_buffer returns a new buffer. Records under
    each class are kept in ascending sample-id order within each task batch,
    so a full-fraction buffer reproduces the validation set exactly.
    """

    reserve_fraction: float
    rng_seed: int
    entries: dict = field(default_factory=dict)
    task_ids: tuple = ()

    def __post_init__(self):
        if not (0.0 < self.reserve_fraction <= 1.0):
            raise DataError(f"reserve_fraction must be in (0, 1], got {self.reserve_fraction}")

    @property
    def class_ids(self):
        return tuple(self.entries.keys())

    @property
    def n_records(self):
        return sum(len(v) for v in self.entries.values())

    def records_with_class(self):
        """All stored records as (record, class_id) pairs, class order then insertion order."""
        return [(rec, cid) for cid, recs in self.entries.items() for rec in recs]


def update_calibration_buffer(buffer, dump):
    """Reserve a seeded random fraction of each class's validation records.

    ceil(reserve_fraction * n) records per class, sampled uniformly without
    replacement. The RNG is derived per (task, class), so adding a class
    never perturbs another class's selection.
    """
    if dump.task_id in buffer.task_ids:
        raise StreamConsistencyError(f"task {dump.task_id} already in calibration buffer")
    new_entries = dict(buffer.entries)
    for class_id in dump.class_set:
        class_val = dump.val_records_of(class_id)
        if not class_val:
            raise DataError(
                f"task {dump.task_id}: class {class_id} has no validation records to reserve"
            )
        k = math.ceil(buffer.reserve_fraction * len(class_val))
        rng = np.random.default_rng(
            np.random.SeedSequence([int(buffer.rng_seed), int(dump.task_id), int(class_id)])
        )
        picked = rng.choice(len(class_val), size=k, replace=False)
        chosen = sorted((class_val[i] for i in picked), key=lambda r: r.sample_id)
        new_entries[class_id] = tuple(buffer.entries.get(class_id, ())) + tuple(chosen)
    return CalibrationBuffer(
        reserve_fraction=buffer.reserve_fraction,
        rng_seed=buffer.rng_seed,
        entries=new_entries,
        task_ids=buffer.task_ids + (dump.task_id,),
    )


def buffer_class_view(buffer, class_id):
    """Stored records for one class, in insertion order."""
    if class_id not in buffer.entries:
        raise BufferLookupError(f"class {class_id} not present in calibration buffer")
    return list(buffer.entries[class_id])
