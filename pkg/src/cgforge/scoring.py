"""Decomposable BIC scoring for discrete data.

The score of a DAG is the sum over nodes of a local family score

    sum_j sum_k N_jk * ln(N_jk / N_j)  -  ln(N) / 2 * q * (r - 1)

where ``j`` ranges over joint parent configurations, ``k`` over child states,
``q`` is the number of parent configurations (observed or not) and ``r`` the
child's arity.  Higher is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .dataset import Dataset
from .errors import EmptyDatasetError, IllegalMoveError, ParentSetTooLargeError, ValidationError
from .graph import Dag, would_create_cycle

# Largest q * r we are willing to index with int64 codes.
MAX_CELLS = 2**62
# Up to this many cells the contingency table is tallied densely with bincount.
DENSE_LIMIT = 1 << 22

ADD, DELETE, REVERSE = "add", "delete", "reverse"
MOVE_KINDS = (ADD, DELETE, REVERSE)


class Move(NamedTuple):
    kind: str
    edge: tuple[int, int]

    def sort_key(self):
        return (MOVE_KINDS.index(self.kind), self.edge)

    def __str__(self) -> str:
        u, v = self.edge
        return f"{self.kind}({u}->{v})"


@dataclass(frozen=True)
class ContingencyTable:
    """Counts ``N_jk`` for parent configuration ``j`` and child state ``k``."""

    counts: np.ndarray  # shape (q, r)

    @property
    def r(self) -> int:
        return self.counts.shape[1]

    @property
    def q(self) -> int:
        return self.counts.shape[0]

    @property
    def marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def _canonical(child: int, parents: Iterable[int]) -> tuple[int, ...]:
    ps = tuple(sorted(set(parents)))
    if child in ps:
        raise ValidationError(f"node {child} cannot be its own parent")
    return ps


def _config_count(d: Dataset, parents: Sequence[int]) -> int:
    q = 1
    for p in parents:
        q *= d.variables[p].arity
    return q


def _cell_codes(d: Dataset, child: int, parents: Sequence[int], r: int, q: int) -> np.ndarray:
    # Mixed radix over parents in ascending index order, first parent most
    # significant, then the child state as the least significant digit.
    if q * r > MAX_CELLS:
        raise ParentSetTooLargeError(
            f"family of node {child} with parents {list(parents)} has {q} parent configurations"
        )
    key = np.zeros(d.row_count, dtype=np.int64)
    for p in parents:
        key *= d.variables[p].arity
        key += d.codes[p]
    key *= r
    key += d.codes[child]
    return key


def count_family(d: Dataset, child: int, parents: Iterable[int]) -> ContingencyTable:
    parents = _canonical(child, parents)
    r = d.variables[child].arity
    q = _config_count(d, parents)
    key = _cell_codes(d, child, parents, r, q)
    if q * r > DENSE_LIMIT:
        raise ParentSetTooLargeError(
            f"dense table for node {child} would need {q * r} cells; use local_bic directly"
        )
    counts = np.bincount(key, minlength=q * r).reshape(q, r)
    return ContingencyTable(counts)


def _log_likelihood(d: Dataset, child: int, parents: tuple[int, ...], r: int, q: int) -> float:
    key = _cell_codes(d, child, parents, r, q)
    if q * r <= DENSE_LIMIT:
        table = np.bincount(key, minlength=q * r).reshape(q, r)
        nj = table.sum(axis=1, keepdims=True)
        mask = table > 0
        njk = table[mask]
        nj = np.broadcast_to(nj, table.shape)[mask]
    else:
        cells, njk = np.unique(key, return_counts=True)
        configs, inverse = np.unique(cells // r, return_inverse=True)
        nj = np.bincount(inverse, weights=njk)[inverse]
    njk = njk.astype(np.float64)
    return float(np.sum(njk * np.log(njk / nj)))


class ScoreCache:
    """Memo of local scores keyed by ``(child, sorted parents)``.

    A cache belongs to one dataset; using it with another raises.
    """

    def __init__(self):
        self._scores: dict[tuple[int, tuple[int, ...]], float] = {}
        self._dataset: Dataset | None = None
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._scores)

    def __contains__(self, key) -> bool:
        return key in self._scores

    def bind(self, d: Dataset) -> None:
        if self._dataset is None:
            self._dataset = d
        elif self._dataset is not d:
            raise ValidationError("score cache is already bound to a different dataset")

    def get(self, key):
        value = self._scores.get(key)
        if value is None:
            self.misses += 1
        else:
            self.hits += 1
        return value

    def put(self, key, value: float) -> None:
        self._scores[key] = value

    def items(self):
        return self._scores.items()


def local_bic(d: Dataset, child: int, parents: Iterable[int], cache: ScoreCache | None = None) -> float:
    n = d.row_count
    if n == 0:
        raise EmptyDatasetError("BIC is undefined on an empty dataset")
    key = (child, _canonical(child, parents))
    if cache is not None:
        cache.bind(d)
        hit = cache.get(key)
        if hit is not None:
            return hit
    r = d.variables[child].arity
    q = _config_count(d, key[1])
    ll = _log_likelihood(d, child, key[1], r, q)
    score = ll - 0.5 * math.log(n) * q * (r - 1)
    if cache is not None:
        cache.put(key, score)
    return score


def total_bic(d: Dataset, g: Dag, cache: ScoreCache | None = None) -> float:
    if g.node_count != len(d.variables):
        raise ValidationError(
            f"graph has {g.node_count} nodes but dataset has {len(d.variables)} variables"
        )
    return sum(local_bic(d, v, g._parents[v], cache) for v in range(g.node_count))


def check_move(g: Dag, move: Move) -> None:
    """Raise :class:`IllegalMoveError` unless ``move`` can be applied to ``g``."""
    kind, (u, v) = move
    if kind not in MOVE_KINDS:
        raise IllegalMoveError(f"unknown move kind {kind!r}")
    if not (0 <= u < g.node_count and 0 <= v < g.node_count):
        raise IllegalMoveError(f"{move}: endpoint out of range")
    if u == v:
        raise IllegalMoveError(f"{move}: self-loop")
    if kind == ADD:
        if g.has_edge(u, v):
            raise IllegalMoveError(f"{move}: edge already present")
        if g.has_edge(v, u):
            raise IllegalMoveError(f"{move}: opposite edge present; use reverse")
        if would_create_cycle(g, (u, v)):
            raise IllegalMoveError(f"{move}: would create a cycle")
    else:
        if not g.has_edge(u, v):
            raise IllegalMoveError(f"{move}: edge not present")
        if kind == REVERSE and would_create_cycle(g, (v, u)):
            raise IllegalMoveError(f"{move}: reversal would create a cycle")


def apply_move(g: Dag, move: Move) -> None:
    kind, (u, v) = move
    if kind == ADD:
        g.add_edge(u, v)
    elif kind == DELETE:
        g.remove_edge(u, v)
    else:
        g.reverse_edge(u, v)


def move_delta(d: Dataset, g: Dag, move: Move, cache: ScoreCache | None = None) -> float:
    """Score change of a move assumed legal; touches at most two families."""
    kind, (u, v) = move
    pv = g._parents[v]
    if kind == ADD:
        return local_bic(d, v, pv | {u}, cache) - local_bic(d, v, pv, cache)
    if kind == DELETE:
        return local_bic(d, v, pv - {u}, cache) - local_bic(d, v, pv, cache)
    pu = g._parents[u]
    return (
        local_bic(d, u, pu | {v}, cache) - local_bic(d, u, pu, cache)
        + local_bic(d, v, pv - {u}, cache) - local_bic(d, v, pv, cache)
    )


def delta_score(d: Dataset, g: Dag, move: Move, cache: ScoreCache | None = None) -> float:
    """``total_bic(g after move) - total_bic(g)``, from local changes only."""
    move = Move(*move)
    check_move(g, move)
    return move_delta(d, g, move, cache)
