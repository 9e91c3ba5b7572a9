import numpy as np
import pytest

from comac.embedding import ReducedMatrix
from comac.errors import EmptyEntry, ShapeError
from comac.latesim import (
    colbert,
    mean_over_docs,
    normalized,
    sim_matrix,
    ssn,
    symmetric,
)
from comac.saliency import SelectionMask

from conftest import random_unit_matrix


def rm(rows):
    return ReducedMatrix(entry_id="m", rows=np.asarray(rows, dtype=np.float64))


def brute_force_colbert(x, y):
    """Triple-loop reference: sum over x rows of max dot against y rows."""
    total = 0.0
    for i in range(x.shape[0]):
        best = -np.inf
        for j in range(y.shape[0]):
            dot = 0.0
            for k in range(x.shape[1]):
                dot += x[i, k] * y[j, k]
            best = max(best, dot)
        total += best
    return total


class TestColbert:
    def test_identity_row_match(self):
        assert colbert(rm([[1, 0]]), rm([[1, 0], [0, 1]])) == pytest.approx(1.0)

    def test_two_query_rows(self):
        x, y = rm([[1, 0], [0, 1]]), rm([[1, 0]])
        assert colbert(x, y) == pytest.approx(brute_force_colbert(x.rows, y.rows))
        assert colbert(x, y) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert colbert(rm([[0, 1]]), rm([[1, 0]])) == pytest.approx(0.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = random_unit_matrix(rng, int(rng.integers(1, 9)), 8)
            y = random_unit_matrix(rng, int(rng.integers(1, 9)), 8)
            assert colbert(x, y) == pytest.approx(
                brute_force_colbert(x.rows, y.rows), abs=1e-6
            )

    def test_empty_matrix(self):
        empty = ReducedMatrix("e", np.zeros((0, 2)))
        with pytest.raises(EmptyEntry):
            colbert(empty, rm([[1, 0]]))

    def test_mixed_dims(self):
        with pytest.raises(ShapeError):
            colbert(rm([[1, 0]]), rm([[1, 0, 0]]))

    def test_bounds_unit_rows(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = random_unit_matrix(rng, int(rng.integers(1, 6)), 5)
            y = random_unit_matrix(rng, int(rng.integers(1, 6)), 5)
            s = colbert(x, y)
            assert -x.rows.shape[0] <= s <= x.rows.shape[0]
            assert -1.0 <= normalized(x, y) <= 1.0


class TestNormalized:
    def test_halves_two_row_query(self):
        assert normalized(rm([[1, 0], [0, 1]]), rm([[1, 0]])) == pytest.approx(0.5)

    def test_single_row_equals_colbert(self):
        x, y = rm([[0.6, 0.8]]), rm([[1, 0], [0, 1]])
        assert normalized(x, y) == pytest.approx(colbert(x, y))

    def test_duplicated_rows_unchanged(self):
        assert normalized(rm([[1, 0], [1, 0]]), rm([[1, 0]])) == pytest.approx(1.0)

    def test_duplication_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = random_unit_matrix(rng, int(rng.integers(1, 5)), 6)
            y = random_unit_matrix(rng, int(rng.integers(1, 5)), 6)
            reps = int(rng.integers(2, 4))
            tiled = ReducedMatrix("t", np.repeat(x.rows, reps, axis=0))
            assert normalized(tiled, y) == pytest.approx(normalized(x, y), abs=1e-6)
            assert colbert(tiled, y) == pytest.approx(reps * colbert(x, y), abs=1e-6)


class TestSymmetric:
    def test_hand_case(self):
        x, y = rm([[1, 0]]), rm([[1, 0], [0, 1]])
        assert symmetric(x, y) == pytest.approx(1.0 + 0.5)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = random_unit_matrix(rng, int(rng.integers(1, 8)), 7)
            y = random_unit_matrix(rng, int(rng.integers(1, 8)), 7)
            assert symmetric(x, y) == pytest.approx(symmetric(y, x), abs=1e-6)

    def test_self_similarity_unit_row(self):
        x = rm([[0.6, 0.8]])
        assert symmetric(x, x) == pytest.approx(2.0)


class TestSsn:
    def test_full_masks_reduce_to_symmetric(self):
        rng = np.random.default_rng(4)
        x = random_unit_matrix(rng, 4, 6)
        y = random_unit_matrix(rng, 3, 6)
        mx = SelectionMask("x", tuple(range(4)))
        my = SelectionMask("y", tuple(range(3)))
        assert ssn(x, y, mx, my) == symmetric(x, y)

    def test_submatrix_oracle(self):
        rng = np.random.default_rng(5)
        x = random_unit_matrix(rng, 2, 6)
        y = random_unit_matrix(rng, 2, 6)
        got = ssn(x, y, SelectionMask("x", (0,)), SelectionMask("y", (1,)))
        want = symmetric(
            ReducedMatrix("x", x.rows[0:1]), ReducedMatrix("y", y.rows[1:2])
        )
        assert got == pytest.approx(want, abs=1e-12)

    def test_out_of_range_mask(self):
        rng = np.random.default_rng(6)
        x = random_unit_matrix(rng, 2, 6)
        y = random_unit_matrix(rng, 2, 6)
        with pytest.raises(ShapeError):
            ssn(x, y, SelectionMask("x", (5,)), SelectionMask("y", (0,)))


class TestSimMatrix:
    def test_cells_equal_scalar_op(self):
        rng = np.random.default_rng(7)
        queries = [random_unit_matrix(rng, 3, 5) for _ in range(2)]
        docs = [random_unit_matrix(rng, 2, 5) for _ in range(3)]
        m = sim_matrix(queries, docs, metric="symmetric")
        assert m.shape == (2, 3)
        for i in range(2):
            for j in range(3):
                assert m[i, j] == symmetric(queries[i], docs[j])

    def test_transpose_identity_symmetric_metric(self):
        rng = np.random.default_rng(8)
        personas = [random_unit_matrix(rng, 3, 5) for _ in range(3)]
        knowledges = [random_unit_matrix(rng, 4, 5) for _ in range(2)]
        pk = sim_matrix(personas, knowledges, metric="symmetric")
        kp = sim_matrix(knowledges, personas, metric="symmetric")
        np.testing.assert_array_equal(pk, kp.T)

    def test_degenerate_single_pair(self):
        rng = np.random.default_rng(9)
        q = random_unit_matrix(rng, 2, 5)
        d = random_unit_matrix(rng, 3, 5)
        m = sim_matrix([q], [d], metric="colbert")
        assert m.shape == (1, 1)
        assert m[0, 0] == colbert(q, d)

    def test_threaded_matches_serial(self, monkeypatch):
        rng = np.random.default_rng(10)
        queries = [random_unit_matrix(rng, 3, 5) for _ in range(4)]
        docs = [random_unit_matrix(rng, 3, 5) for _ in range(4)]
        serial = sim_matrix(queries, docs, metric="symmetric")
        monkeypatch.setenv("COMAC_THREADS", "4")
        threaded = sim_matrix(queries, docs, metric="symmetric")
        np.testing.assert_array_equal(serial, threaded)

    def test_mixed_d0_rejected(self):
        rng = np.random.default_rng(11)
        with pytest.raises(ShapeError):
            sim_matrix(
                [random_unit_matrix(rng, 2, 5)],
                [random_unit_matrix(rng, 2, 6)],
                metric="colbert",
            )


class TestMeanOverDocs:
    def test_row_means(self):
        np.testing.assert_allclose(
            mean_over_docs(np.array([[1.0, 3.0], [2.0, 4.0]])), [2.0, 3.0]
        )

    def test_single_column(self):
        np.testing.assert_allclose(
            mean_over_docs(np.array([[1.5], [2.5]])), [1.5, 2.5]
        )

    def test_constant_matrix(self):
        np.testing.assert_allclose(mean_over_docs(np.full((3, 4), 7.0)), 7.0)
