import itertools
import math

import mpmath
import numpy as np
import pytest

from cgforge.errors import EmptyDatasetError, IllegalMoveError, ParentSetTooLargeError
from cgforge.graph import Dag
from cgforge.scoring import (
    ADD,
    DELETE,
    REVERSE,
    Move,
    ScoreCache,
    apply_move,
    count_family,
    delta_score,
    local_bic,
    total_bic,
)
from cgforge.search import legal_moves, ConstraintSet
from synth import make_dataset, random_dataset, random_dag_edges

mpmath.mp.dps = 50


def mp_local_bic(counts, n):
    """Arbitrary-precision BIC of one family from a (q, r) count table."""
    counts = [[int(x) for x in row] for row in counts]
    q, r = len(counts), len(counts[0])
    ll = mpmath.mpf(0)
    for row in counts:
        nj = sum(row)
        for njk in row:
            if njk:
                ll += njk * mpmath.log(mpmath.mpf(njk) / nj)
    return ll - mpmath.log(n) / 2 * q * (r - 1)


class TestCountFamily:
    def test_no_parents(self):
        d = make_dataset([[0, 0, 0, 1, 1, 1, 1, 1]])
        t = count_family(d, 0, [])
        assert t.q == 1 and t.counts.tolist() == [[3, 5]]

    def test_one_parent(self):
        d = make_dataset([[0, 0, 1], [0, 1, 1]], names=["p", "c"])
        t = count_family(d, 1, [0])
        assert t.counts.tolist() == [[1, 1], [0, 1]]
        assert t.marginals.tolist() == [2, 1]

    def test_empty(self):
        d = make_dataset([[], []], arities=[2, 3])
        t = count_family(d, 1, [0])
        assert t.counts.shape == (2, 3) and t.counts.sum() == 0

    def test_mixed_radix_first_parent_most_significant(self):
        # parents (0, 1) with arities (2, 3): config j = p0 * 3 + p1
        d = make_dataset([[1], [2], [1]], arities=[2, 3, 2])
        t = count_family(d, 2, [1, 0])
        assert t.q == 6
        assert t.counts[5].tolist() == [0, 1]
        assert t.counts.sum() == 1

    def test_marginals_sum_to_n(self):
        d = random_dataset(np.random.default_rng(0), 4, max_rows=300, min_rows=50)
        t = count_family(d, 0, [1, 2, 3])
        assert t.marginals.sum() == d.row_count

    def test_overflow(self):
        arities = [2] + [1 << 16] * 4
        d = make_dataset([[0]] * 5, arities=arities)
        with pytest.raises(ParentSetTooLargeError):
            count_family(d, 0, [1, 2, 3, 4])
        with pytest.raises(ParentSetTooLargeError):
            local_bic(d, 0, [1, 2, 3, 4])


class TestLocalBic:
    def test_hand_computed(self):
        d = make_dataset([[0] * 6 + [1] * 2])
        expected = mp_local_bic([[6, 2]], 8)
        assert float(expected) == pytest.approx(-5.5384, abs=1e-4)
        assert local_bic(d, 0, []) == pytest.approx(float(expected), abs=1e-9)

    def test_uniform(self):
        d = make_dataset([[0, 0, 1, 1]])
        expected = mp_local_bic([[2, 2]], 4)
        assert float(expected) == pytest.approx(-3.4657, abs=1e-4)
        assert local_bic(d, 0, []) == pytest.approx(float(expected), abs=1e-9)

    def test_deterministic_child(self):
        rng = np.random.default_rng(0)
        x = rng.integers(0, 2, 5000)
        d = make_dataset([x, x])
        assert local_bic(d, 1, [0]) == pytest.approx(-math.log(5000) / 2 * 2 * 1, abs=1e-9)

    def test_unobserved_configs_still_penalised(self):
        # parent has 3 states but only state 0 appears
        d = make_dataset([[0, 0, 0, 0], [0, 1, 0, 1]], arities=[3, 2])
        expected = mp_local_bic([[2, 2], [0, 0], [0, 0]], 4)
        assert local_bic(d, 1, [0]) == pytest.approx(float(expected), abs=1e-9)

    def test_random_families_against_mp(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            d = random_dataset(rng, 4, max_arity=3, max_rows=200, min_rows=5)
            child = int(rng.integers(4))
            parents = [v for v in range(4) if v != child and rng.random() < 0.5]
            table = count_family(d, child, parents)
            expected = mp_local_bic(table.counts, d.row_count)
            assert local_bic(d, child, parents) == pytest.approx(float(expected), abs=1e-9)

    def test_sparse_path_matches_dense(self, monkeypatch):
        import cgforge.scoring as scoring

        rng = np.random.default_rng(2)
        d = random_dataset(rng, 5, max_arity=3, max_rows=400, min_rows=100)
        dense = local_bic(d, 0, [1, 2, 3, 4])
        monkeypatch.setattr(scoring, "DENSE_LIMIT", 1)
        assert local_bic(d, 0, [1, 2, 3, 4]) == pytest.approx(dense, abs=1e-9)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            local_bic(make_dataset([[]], arities=[2]), 0, [])

    def test_penalty_grows_with_n(self):
        # doubling every count leaves the likelihood ratio terms scaled but the
        # penalty magnitude must rise with ln N
        base = [0, 0, 0, 1]
        small = make_dataset([base])
        big = make_dataset([base * 10])
        pen_small = math.log(4) / 2
        pen_big = math.log(40) / 2
        ll_small = local_bic(small, 0, []) + pen_small
        ll_big = local_bic(big, 0, []) + pen_big
        assert ll_big == pytest.approx(10 * ll_small, abs=1e-9)
        assert pen_big > pen_small


class TestCache:
    def test_canonical_keys(self):
        d = random_dataset(np.random.default_rng(3), 4, max_rows=100, min_rows=10)
        cache = ScoreCache()
        a = local_bic(d, 0, [3, 1], cache)
        b = local_bic(d, 0, (1, 3), cache)
        assert a == b and len(cache) == 1 and cache.hits == 1

    def test_transparent(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d = random_dataset(rng, 5, max_rows=150, min_rows=10)
            g = Dag(5, random_dag_edges(rng, 5))
            cache = ScoreCache()
            first = total_bic(d, g, cache)
            assert total_bic(d, g, cache) == first
            assert total_bic(d, g) == first
            for (child, parents), value in cache.items():
                assert local_bic(d, child, parents) == value

    def test_bound_to_one_dataset(self):
        d1 = make_dataset([[0, 1]])
        d2 = make_dataset([[1, 0]])
        cache = ScoreCache()
        local_bic(d1, 0, [], cache)
        with pytest.raises(ValueError):
            local_bic(d2, 0, [], cache)


def _orientations_of_path():
    # 0 - 1 - 2: the three Markov-equivalent orientations (no collider)
    return [[(0, 1), (1, 2)], [(1, 0), (2, 1)], [(1, 0), (1, 2)]]


class TestTotalBic:
    def test_edgeless_is_sum_of_marginals(self):
        d = random_dataset(np.random.default_rng(5), 3, max_rows=100, min_rows=10)
        assert total_bic(d, Dag(3)) == sum(local_bic(d, v, []) for v in range(3))

    def test_decomposable(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(1, 7))
            d = random_dataset(rng, n, max_rows=120, min_rows=5)
            g = Dag(n, random_dag_edges(rng, n))
            expected = sum(local_bic(d, v, g.parents(v)) for v in range(n))
            assert total_bic(d, g) == expected

    def test_score_equivalence_two_nodes(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            d = random_dataset(rng, 2, max_rows=300, min_rows=2)
            assert total_bic(d, Dag(2, [(0, 1)])) == pytest.approx(total_bic(d, Dag(2, [(1, 0)])), abs=1e-9)

    def test_score_equivalence_three_node_path(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            d = random_dataset(rng, 3, max_rows=300, min_rows=2)
            scores = [total_bic(d, Dag(3, e)) for e in _orientations_of_path()]
            assert max(scores) - min(scores) < 1e-9

    def test_dependent_edge_wins(self):
        rng = np.random.default_rng(9)
        x = rng.integers(0, 2, 5000)
        y = np.where(rng.random(5000) < 0.9, x, 1 - x)
        d = make_dataset([x, y])
        assert total_bic(d, Dag(2, [(0, 1)])) > total_bic(d, Dag(2))

    def test_consistency_at_scale(self):
        wins = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = rng.integers(0, 2, 1000)
            y = np.where(rng.random(1000) < 0.85, x, 1 - x)
            d = make_dataset([x, y])
            wins += total_bic(d, Dag(2, [(0, 1)])) > total_bic(d, Dag(2))
        assert wins >= 99


class TestDelta:
    def test_inverse_moves_cancel(self):
        d = random_dataset(np.random.default_rng(10), 3, max_rows=200, min_rows=20)
        g = Dag(3)
        up = delta_score(d, g, Move(ADD, (0, 1)))
        apply_move(g, Move(ADD, (0, 1)))
        down = delta_score(d, g, Move(DELETE, (0, 1)))
        assert up + down == pytest.approx(0.0, abs=1e-12)

    def test_reverse_identity(self):
        d = random_dataset(np.random.default_rng(11), 4, max_rows=200, min_rows=20)
        g = Dag(4, [(2, 0), (0, 1), (3, 1)])
        delta = delta_score(d, g, Move(REVERSE, (0, 1)))
        expected = (local_bic(d, 0, {2, 1}) - local_bic(d, 0, {2})
                    + local_bic(d, 1, {3}) - local_bic(d, 1, {0, 3}))
        assert delta == pytest.approx(expected, abs=1e-12)
        h = g.copy()
        apply_move(h, Move(REVERSE, (0, 1)))
        assert delta == pytest.approx(total_bic(d, h) - total_bic(d, g), abs=1e-9)

    @pytest.mark.parametrize("move", [
        Move(ADD, (0, 1)),      # present
        Move(ADD, (1, 0)),      # opposite present
        Move(ADD, (2, 0)),      # cycle 0->1->2->0
        Move(DELETE, (0, 2)),   # absent
        Move(REVERSE, (0, 2)),  # absent
        Move(ADD, (0, 0)),      # self-loop
        Move("flip", (0, 1)),
    ])
    def test_illegal(self, move):
        d = random_dataset(np.random.default_rng(12), 3, max_rows=50, min_rows=5)
        g = Dag(3, [(0, 1), (1, 2)])
        with pytest.raises(IllegalMoveError):
            delta_score(d, g, move)

    def test_reverse_cycle_illegal(self):
        d = random_dataset(np.random.default_rng(12), 3, max_rows=50, min_rows=5)
        g = Dag(3, [(0, 1), (1, 2), (0, 2)])
        with pytest.raises(IllegalMoveError, match="cycle"):
            delta_score(d, g, Move(REVERSE, (0, 2)))

    def test_every_move_matches_rescoring(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            d = random_dataset(rng, 5, max_rows=200, min_rows=10)
            g = Dag(5, random_dag_edges(rng, 5))
            base = total_bic(d, g)
            cache = ScoreCache()
            for move in legal_moves(g, ConstraintSet()):
                h = g.copy()
                apply_move(h, move)
                assert delta_score(d, g, move, cache) == pytest.approx(total_bic(d, h) - base, abs=1e-9)


def test_all_pairs_symmetric_small():
    # covers every two-variable arity combination up to 3
    rng = np.random.default_rng(14)
    for ra, rb in itertools.product([2, 3], repeat=2):
        x = rng.integers(0, ra, 100)
        y = (x + rng.integers(0, rb, 100)) % rb
        d = make_dataset([x, y], arities=[ra, rb])
        assert total_bic(d, Dag(2, [(0, 1)])) == pytest.approx(total_bic(d, Dag(2, [(1, 0)])), abs=1e-9)
