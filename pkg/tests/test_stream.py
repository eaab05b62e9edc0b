import json
import math

import numpy as np
import pytest

from driftcal.errors import (
    BufferLookupError,
    DataError,
    DumpDataError,
    DumpParseError,
    DumpSchemaError,
    StreamConsistencyError,
)
from driftcal.stream import (
    CalibrationBuffer,
    buffer_class_view,
    ingest_stream,
    ingest_task_dump,
    pad_logits,
    update_calibration_buffer,
)

from conftest import make_dump, make_record


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def good_rows(n=10, width=2, emb=2, split_cycle=("val", "test")):
    rows = []
    for i in range(n):
        rows.append(
            {
                "id": f"s{i:03d}",
                "split": split_cycle[i % len(split_cycle)],
                "label": i % width,
                "logits": [float(i), 0.5] + [0.0] * (width - 2),
                "embedding": [1.0] * emb,
            }
        )
    return rows


class TestIngestTaskDump:
    def test_well_formed_file(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        write_jsonl(path, good_rows(10))
        dump = ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2, embedding_dim=2)
        assert dump.logit_width == 2
        assert len(dump.records) == 10
        assert len(dump.val_records) == 5 and len(dump.test_records) == 5

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        rows = good_rows(4)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(rows[0]) + "\n")
            fh.write("{not json\n")
        with pytest.raises(DumpParseError) as err:
            ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2)
        assert err.value.line_no == 2

    def test_logit_width_mismatch(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        rows = good_rows(3)
        rows[1]["logits"] = [1.0, 2.0, 3.0]
        write_jsonl(path, rows)
        with pytest.raises(DumpSchemaError):
            ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2)

    def test_non_finite_value(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        rows = good_rows(3)
        rows[0]["embedding"] = [1.0, float("nan")]
        write_jsonl(path, rows)
        with pytest.raises(DumpDataError):
            ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2, embedding_dim=2)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        rows = good_rows(3)
        rows[0]["label"] = 7
        write_jsonl(path, rows)
        with pytest.raises(DumpDataError):
            ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2)

    def test_duplicate_sample_id(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        rows = good_rows(3)
        rows[2]["id"] = rows[0]["id"]
        write_jsonl(path, rows)
        with pytest.raises(DumpSchemaError):
            ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2)

    def test_class_overlap_with_earlier_task(self, tmp_path):
        path = tmp_path / "t1.jsonl"
        write_jsonl(path, good_rows(3))
        with pytest.raises(StreamConsistencyError):
            ingest_task_dump(
                path, task_id=1, class_set=(0, 1), logit_width=2, seen_classes={1}
            )

    def test_missing_validation_split(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        write_jsonl(path, good_rows(3, split_cycle=("test",)))
        with pytest.raises(DumpDataError):
            ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2)

    def test_empty_test_split_is_allowed(self, tmp_path):
        path = tmp_path / "t0.jsonl"
        write_jsonl(path, good_rows(4, split_cycle=("val",)))
        dump = ingest_task_dump(path, task_id=0, class_set=(0, 1), logit_width=2)
        assert dump.test_records == ()


class TestIngestStream:
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            ingest_stream(tmp_path)

    def test_manifest_and_tasks(self, tmp_path):
        write_jsonl(tmp_path / "a.jsonl", good_rows(4, width=2))
        rows = good_rows(4, width=4)
        for i, row in enumerate(rows):
            row["label"] = 2 + (i % 2)
        write_jsonl(tmp_path / "b.jsonl", rows)
        manifest = {
            "stream_id": "s",
            "embedding_dim": 2,
            "tasks": [
                {"task_id": 0, "class_set": [0, 1], "logit_width": 2, "file": "a.jsonl"},
                {"task_id": 1, "class_set": [2, 3], "logit_width": 4, "file": "b.jsonl"},
            ],
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        dumps = ingest_stream(tmp_path)
        assert [d.task_id for d in dumps] == [0, 1]
        assert dumps[1].logit_width == 4


class TestPadLogits:
    def test_pad_preserves_argmax(self):
        z = np.array([3.0, 7.0, 1.0])
        padded = pad_logits(z, 6)
        assert padded.shape == (6,)
        assert int(np.argmax(padded)) == 1
        assert list(padded[3:]) == [0.0, 0.0, 0.0]

    def test_pad_rejects_shrinking(self):
        with pytest.raises(DumpSchemaError):
            pad_logits(np.zeros(4), 2)


def val_records_for_class(class_id, n, task_id=0):
    return [
        make_record(
            sample_id=f"t{task_id}-c{class_id}-{i:03d}",
            task_id=task_id,
            split="val",
            label=class_id,
            logits=np.zeros(2 * (task_id + 1)),
            embedding=(1.0, float(class_id)),
        )
        for i in range(n)
    ]


def dump_with_counts(task_id, class_set, n_per_class):
    records = []
    for c in class_set:
        records.extend(val_records_for_class(c, n_per_class, task_id))
    return make_dump(
        task_id=task_id,
        class_set=class_set,
        logit_width=2 * (task_id + 1),
        val=records,
    )


class TestCalibrationBuffer:
    def test_full_fraction_keeps_everything(self):
        buf = CalibrationBuffer(reserve_fraction=1.0, rng_seed=0)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), 20))
        assert len(buffer_class_view(buf, 0)) == 20
        assert len(buffer_class_view(buf, 1)) == 20

    def test_half_fraction_uses_ceiling(self):
        buf = CalibrationBuffer(reserve_fraction=0.5, rng_seed=0)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), 20))
        assert len(buffer_class_view(buf, 0)) == 10

    @pytest.mark.parametrize("n,frac", [(7, 0.33), (1, 0.01), (20, 0.5)])
    def test_ceiling_rule(self, n, frac):
        buf = CalibrationBuffer(reserve_fraction=frac, rng_seed=5)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), n))
        assert len(buffer_class_view(buf, 0)) == math.ceil(frac * n)

    def test_seeded_determinism(self):
        dump = dump_with_counts(0, (0, 1), 30)
        ids = []
        for _ in range(2):
            buf = CalibrationBuffer(reserve_fraction=0.3, rng_seed=99)
            buf = update_calibration_buffer(buf, dump)
            ids.append([r.sample_id for r in buffer_class_view(buf, 0)])
        assert ids[0] == ids[1]

    def test_no_sample_selected_twice(self):
        buf = CalibrationBuffer(reserve_fraction=0.7, rng_seed=1)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), 50))
        ids = [r.sample_id for r in buffer_class_view(buf, 0)]
        assert len(ids) == len(set(ids))

    def test_growth_across_tasks(self):
        buf = CalibrationBuffer(reserve_fraction=0.5, rng_seed=1)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), 10))
        buf = update_calibration_buffer(buf, dump_with_counts(1, (2, 3), 10))
        assert set(buf.class_ids) == {0, 1, 2, 3}

    def test_duplicate_task_rejected(self):
        buf = CalibrationBuffer(reserve_fraction=0.5, rng_seed=1)
        dump = dump_with_counts(0, (0, 1), 10)
        buf = update_calibration_buffer(buf, dump)
        with pytest.raises(StreamConsistencyError):
            update_calibration_buffer(buf, dump)

    def test_empty_class_validation_split_names_class(self):
        dump = make_dump(
            task_id=0,
            class_set=(0, 1),
            logit_width=2,
            val=val_records_for_class(0, 5),
        )
        buf = CalibrationBuffer(reserve_fraction=0.5, rng_seed=1)
        with pytest.raises(DataError, match="class 1"):
            update_calibration_buffer(buf, dump)

    def test_missing_class_lookup(self):
        buf = CalibrationBuffer(reserve_fraction=0.5, rng_seed=1)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), 10))
        with pytest.raises(BufferLookupError):
            buffer_class_view(buf, 42)

    def test_class_view_only_holds_that_class(self):
        buf = CalibrationBuffer(reserve_fraction=1.0, rng_seed=1)
        buf = update_calibration_buffer(buf, dump_with_counts(0, (0, 1), 5))
        buf = update_calibration_buffer(buf, dump_with_counts(1, (2, 3), 5))
        assert all(r.label == 2 for r in buffer_class_view(buf, 2))
        assert all(r.task_id == 0 for r in buffer_class_view(buf, 0))

    def test_adding_a_class_does_not_perturb_others(self):
        base = dump_with_counts(0, (0, 1), 30)
        extended = dump_with_counts(0, (0, 1, 2), 30)
        buf_a = update_calibration_buffer(CalibrationBuffer(0.3, 7), base)
        buf_b = update_calibration_buffer(CalibrationBuffer(0.3, 7), extended)
        ids_a = [r.sample_id for r in buffer_class_view(buf_a, 0)]
        ids_b = [r.sample_id for r in buffer_class_view(buf_b, 0)]
        assert ids_a == ids_b

    def test_only_val_records_stored(self):
        records = val_records_for_class(0, 5) + val_records_for_class(1, 5)
        test_recs = [
            make_record(sample_id=f"x{i}", split="test", label=0, logits=(0.0, 0.0))
            for i in range(5)
        ]
        dump = make_dump(task_id=0, class_set=(0, 1), logit_width=2, val=records, test=test_recs)
        buf = update_calibration_buffer(CalibrationBuffer(1.0, 0), dump)
        assert all(r.split == "val" for rs in buf.entries.values() for r in rs)

    def test_invalid_fraction(self):
        with pytest.raises(DataError):
            CalibrationBuffer(reserve_fraction=0.0, rng_seed=0)
