import numpy as np
import pytest

from driftcal.errors import BufferLookupError, DataError, DegeneratePrototypeError
from driftcal.prototypes import (
    ClassPrototype,
    assign_distance_scores,
    compute_prototype,
    score_buffer_records,
    similarity_matrix,
)
from driftcal.stream import CalibrationBuffer, update_calibration_buffer

from conftest import make_dump, make_record


def proto(class_id, vec, support=1):
    return ClassPrototype(
        class_id=class_id, mean_embedding=np.asarray(vec, dtype=np.float64), support=support
    )


class TestComputePrototype:
    def test_single_sample_is_identity(self):
        p = compute_prototype([make_record(embedding=(1.0, 2.0))])
        np.testing.assert_array_equal(p.mean_embedding, [1.0, 2.0])
        assert p.support == 1

    def test_hand_mean(self):
        samples = [make_record(embedding=(1.0, 0.0)), make_record(embedding=(3.0, 2.0))]
        p = compute_prototype(samples)
        np.testing.assert_allclose(p.mean_embedding, [2.0, 1.0])
        assert p.support == 2

    def test_zero_norm_mean_rejected(self):
        samples = [make_record(embedding=(1.0, 0.0)), make_record(embedding=(-1.0, 0.0))]
        with pytest.raises(DegeneratePrototypeError):
            compute_prototype(samples)

    def test_empty_and_mixed_labels_rejected(self):
        with pytest.raises(DataError):
            compute_prototype([])
        with pytest.raises(DataError):
            compute_prototype([make_record(label=0), make_record(label=1)])


class TestSimilarityMatrix:
    def test_identical_vectors_give_exactly_one(self):
        a = proto(0, (0.6, 0.8))
        s = similarity_matrix([a], [proto(1, (0.6, 0.8))])
        assert s.values[0, 0] == 1.0

    def test_orthogonal_vectors(self):
        s = similarity_matrix([proto(0, (1.0, 0.0))], [proto(1, (0.0, 1.0))])
        assert s.values[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_hand_cosine(self):
        s = similarity_matrix([proto(0, (1.0, 1.0))], [proto(1, (1.0, 0.0))])
        assert s.values[0, 0] == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        protos = [proto(i, rng.normal(size=6)) for i in range(4)]
        s_ab = similarity_matrix(protos[:2], protos[2:])
        s_ba = similarity_matrix(protos[2:], protos[:2])
        np.testing.assert_allclose(s_ab.values, s_ba.values.T, atol=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        cur = [proto(0, rng.normal(size=5))]
        buf = [proto(1, rng.normal(size=5))]
        base = similarity_matrix(cur, buf).values
        scaled = [proto(1, 7.3 * buf[0].mean_embedding)]
        np.testing.assert_allclose(similarity_matrix(cur, scaled).values, base, atol=1e-9)

    def test_values_clipped_to_unit_interval(self):
        rng = np.random.default_rng(2)
        protos = [proto(i, rng.normal(size=3)) for i in range(6)]
        s = similarity_matrix(protos[:3], protos[3:])
        assert np.all(s.values <= 1.0) and np.all(s.values >= -1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            similarity_matrix([proto(0, (1.0, 0.0))], [proto(1, (1.0, 0.0, 0.0))])


class TestDistanceScores:
    def test_spec_hand_example(self):
        # current {A=[1,0]}; buffer {A=[1,0], C=[0,1], B=[1,1]/sqrt(2)}
        cur = [proto(0, (1.0, 0.0))]
        buf = [proto(0, (1.0, 0.0)), proto(2, (0.0, 1.0)), proto(1, (1.0, 1.0))]
        table = assign_distance_scores(similarity_matrix(cur, buf), buf)
        assert table.raw_scores[0] == 0.0
        assert table.raw_scores[1] == pytest.approx(1.0 - 1.0 / np.sqrt(2.0), abs=1e-12)
        assert table.raw_scores[2] == pytest.approx(1.0, abs=1e-12)
        assert table.scores[0] == 0.0
        assert table.scores[1] == pytest.approx(1.0 - 1.0 / np.sqrt(2.0), abs=1e-12)
        assert table.scores[2] == 1.0

    def test_equal_prototype_scores_zero_regardless_of_others(self):
        cur = [proto(0, (0.3, 0.4, 0.5))]
        buf = [proto(0, (0.3, 0.4, 0.5)), proto(1, (1.0, 0.0, 0.0))]
        table = assign_distance_scores(similarity_matrix(cur, buf), buf)
        assert table.raw_scores[0] == 0.0
        assert table.scores[0] == 0.0

    def test_all_equal_raw_scores_normalize_to_zero(self):
        cur = [proto(0, (1.0, 0.0))]
        buf = [proto(1, (0.0, 1.0)), proto(2, (0.0, 2.0))]
        table = assign_distance_scores(similarity_matrix(cur, buf), buf)
        assert table.scores == {1: 0.0, 2: 0.0}

    def test_single_class_buffer_degenerate(self):
        cur = [proto(0, (1.0, 0.0))]
        buf = [proto(0, (1.0, 0.2))]
        table = assign_distance_scores(similarity_matrix(cur, buf), buf)
        assert table.scores[0] == 0.0

    def test_bounds_and_min_zero(self):
        rng = np.random.default_rng(3)
        cur = [proto(i, rng.normal(size=8)) for i in range(3)]
        buf = [proto(10 + i, rng.normal(size=8)) for i in range(7)]
        table = assign_distance_scores(similarity_matrix(cur, buf), buf)
        vals = list(table.scores.values())
        assert min(vals) == 0.0
        assert max(vals) == 1.0
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        cur = [proto(i, rng.normal(size=5)) for i in range(2)]
        buf = [proto(10 + i, rng.normal(size=5)) for i in range(5)]
        t1 = assign_distance_scores(similarity_matrix(cur, buf), buf)
        shuffled = [buf[i] for i in (3, 0, 4, 1, 2)]
        t2 = assign_distance_scores(similarity_matrix(cur, shuffled), shuffled)
        assert t1.scores == t2.scores


class TestScoreBufferRecords:
    def make_buffer(self):
        records = []
        for c in (0, 1):
            records.extend(
                make_record(sample_id=f"c{c}-{i}", label=c, embedding=(1.0, float(c + 1)))
                for i in range(3)
            )
        dump = make_dump(task_id=0, class_set=(0, 1), logit_width=2, val=records)
        return update_calibration_buffer(CalibrationBuffer(1.0, 0), dump)

    def test_broadcast_by_class(self):
        buf = self.make_buffer()
        cur = [proto(0, (1.0, 1.0))]
        bufp = [proto(0, (1.0, 1.0)), proto(1, (1.0, 2.0))]
        table = assign_distance_scores(similarity_matrix(cur, bufp), bufp)
        pairs = score_buffer_records(buf, table)
        assert len(pairs) == 6
        for rec, score in pairs:
            assert score == table.scores[rec.label]

    def test_missing_class_raises(self):
        buf = self.make_buffer()
        cur = [proto(0, (1.0, 1.0))]
        bufp = [proto(0, (1.0, 1.0))]
        table = assign_distance_scores(similarity_matrix(cur, bufp), bufp)
        with pytest.raises(BufferLookupError):
            score_buffer_records(buf, table)
