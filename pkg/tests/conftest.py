import numpy as np
import pytest

from driftcal.stream import SampleRecord, TaskDump


def make_record(sample_id="s0", task_id=0, split="val", label=0, logits=(0.0, 0.0),
                embedding=(1.0, 0.0)):
    return SampleRecord(
        sample_id=sample_id,
        task_id=task_id,
        split=split,
        label=label,
        logits=np.asarray(logits, dtype=np.float64),
        embedding=np.asarray(embedding, dtype=np.float64),
    )


def make_dump(task_id=0, class_set=(0, 1), logit_width=2, val=None, test=None):
    return TaskDump(
        task_id=task_id,
        class_set=tuple(class_set),
        logit_width=logit_width,
        val_records=tuple(val or ()),
        test_records=tuple(test or ()),
    )


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def dump_factory():
    return make_dump
