"""Greedy hill-climbing over DAGs under forbidden/required edge constraints.

Also provides an exhaustive search over every labeled DAG, usable as an
exact oracle on toy problems (up to five variables).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .dataset import Dataset
from .errors import ConstraintError, EmptyDatasetError, ValidationError
from .graph import Dag, Edge, has_cycle
from .scoring import ADD, DELETE, REVERSE, Move, ScoreCache, apply_move, move_delta, total_bic

logger = logging.getLogger(__name__)

# Deltas within this distance of each other count as ties; an improvement must
# exceed it.  Guards against accepting floating-point noise, e.g. flipping a
# covered edge between two score-equivalent orientations.
SCORE_EPS = 1e-9

EXHAUSTIVE_MAX_VARS = 5


@dataclass(frozen=True)
class ConstraintSet:
    forbidden: frozenset[Edge] = frozenset()
    required: frozenset[Edge] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "forbidden", frozenset(map(tuple, self.forbidden)))
        object.__setattr__(self, "required", frozenset(map(tuple, self.required)))

    def validate(self, node_count: int) -> None:
        """Raise :class:`ConstraintError` if the constraints cannot be satisfied."""
        for name, edges in (("forbidden", self.forbidden), ("required", self.required)):
            for u, v in edges:
                if u == v:
                    raise ConstraintError(f"{name} edge {u}->{v} is a self-loop")
                if not (0 <= u < node_count and 0 <= v < node_count):
                    raise ConstraintError(f"{name} edge {u}->{v} references an unknown node")
        both = self.forbidden & self.required
        if both:
            raise ConstraintError(f"edges both forbidden and required: {sorted(both)}")
        if has_cycle(node_count, self.required):
            raise ConstraintError("required edges form a directed cycle")

    def violations(self, g: Dag) -> list[str]:
        edges = g.edge_set()
        out = [f"required edge {u}->{v} missing" for u, v in sorted(self.required - edges)]
        out += [f"forbidden edge {u}->{v} present" for u, v in sorted(self.forbidden & edges)]
        return out

    def satisfied_by(self, g: Dag) -> bool:
        return not self.violations(g)

    def merge(self, other: ConstraintSet) -> ConstraintSet:
        return ConstraintSet(self.forbidden | other.forbidden, self.required | other.required)


def tiers_to_constraints(tiers: Mapping[int, int]) -> ConstraintSet:
    """Forbid every edge from a later (higher-numbered) tier into an earlier one."""
    for node, tier in tiers.items():
        if tier < 1:
            raise ConstraintError(f"node {node} has tier {tier} < 1")
    forbidden = {
        (u, v)
        for u, tu in tiers.items()
        for v, tv in tiers.items()
        if tu > tv
    }
    return ConstraintSet(forbidden=frozenset(forbidden))


@dataclass(frozen=True)
class SearchConfig:
    seed: int = 0
    max_iterations: int | None = None  # default 10 * n_vars**2
    start: str = "required-only"  # or "empty"
    random_ties: bool = False

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.start not in ("required-only", "empty"):
            raise ValidationError(f"unknown start graph {self.start!r}")


@dataclass
class TraceStep:
    move: Move
    delta: float
    score: float


@dataclass
class SearchTrace:
    initial_score: float
    steps: list[TraceStep] = field(default_factory=list)
    final_score: float = float("nan")
    hit_iteration_cap: bool = False
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)


def _descendant_sets(g: Dag) -> list[set[int]]:
    return [g.descendants(v) for v in range(g.node_count)]


def _moves(g: Dag, c: ConstraintSet) -> list[Move]:
    n = g.node_count
    desc = _descendant_sets(g)
    parents = g._parents
    children = g._children
    adds, deletes, reverses = [], [], []
    for u in range(n):
        for v in range(n):
            if u == v or (u, v) in c.forbidden:
                continue
            if u in parents[v]:
                continue
            if v in parents[u] or u in desc[v]:
                continue
            adds.append(Move(ADD, (u, v)))
    for u, v in g.edges:
        if (u, v) in c.required:
            continue
        deletes.append(Move(DELETE, (u, v)))
        if (v, u) in c.forbidden:
            continue
        # reversal closes a cycle iff u reaches v other than via the edge itself
        if any(w == v or v in desc[w] for w in children[u] if w != v):
            continue
        reverses.append(Move(REVERSE, (u, v)))
    return adds + deletes + reverses


def legal_moves(g: Dag, c: ConstraintSet) -> list[Move]:
    """All add/delete/reverse moves that keep ``g`` acyclic and within ``c``.

    Ordered adds first, then deletes, then reverses; lexicographic by edge
    within each kind.
    """
    bad = c.violations(g)
    if bad:
        raise ConstraintError("graph violates constraints: " + "; ".join(bad))
    return _moves(g, c)


def start_graph(n: int, c: ConstraintSet, start: str = "required-only") -> Dag:
    return Dag(n, sorted(c.required) if start == "required-only" else ())


def hill_climb(d: Dataset, c: ConstraintSet, cfg: SearchConfig = SearchConfig(),
               cache: ScoreCache | None = None) -> tuple[Dag, SearchTrace]:
    """Repeatedly apply the single best-scoring legal move until none improves.

    Ties (within ``SCORE_EPS``) go to the earliest move in :func:`legal_moves`
    order, or to a seeded random choice when ``cfg.random_ties`` is set.
    """
    n = len(d.variables)
    if d.row_count == 0:
        raise EmptyDatasetError("cannot learn structure from an empty dataset")
    c.validate(n)
    if cfg.start == "empty" and c.required:
        raise ConstraintError("an empty start graph cannot satisfy required edges")
    cache = ScoreCache() if cache is None else cache
    rng = np.random.default_rng(cfg.seed) if cfg.random_ties else None
    cap = cfg.max_iterations if cfg.max_iterations is not None else 10 * n * n

    g = start_graph(n, c, cfg.start)
    score = total_bic(d, g, cache)
    trace = SearchTrace(initial_score=score)
    for _ in range(cap):
        best: Move | None = None
        best_delta = -np.inf
        ties = 0
        for move in _moves(g, c):
            delta = move_delta(d, g, move, cache)
            if delta > best_delta + SCORE_EPS:
                best, best_delta, ties = move, delta, 1
            elif rng is not None and delta >= best_delta - SCORE_EPS:
                ties += 1
                if rng.random() * ties < 1:
                    best = move
        if best is None or best_delta <= SCORE_EPS:
            break
        apply_move(g, best)
        score += best_delta
        trace.steps.append(TraceStep(best, best_delta, score))
    else:
        trace.hit_iteration_cap = True
        msg = f"hill climbing stopped at the iteration cap ({cap}) before converging"
        trace.warnings.append(msg)
        logger.warning(msg)
    trace.final_score = total_bic(d, g, cache)
    return g, trace


def enumerate_dags(n: int, c: ConstraintSet | None = None) -> Iterator[Dag]:
    """Yield every labeled DAG on ``n`` nodes that satisfies ``c``.

    Each unordered pair is absent, forward or backward; cyclic combinations
    are skipped.
    """
    c = c or ConstraintSet()
    pairs = list(itertools.combinations(range(n), 2))
    options = []
    for u, v in pairs:
        opts = []
        for choice in (None, (u, v), (v, u)):
            if choice is None:
                if (u, v) in c.required or (v, u) in c.required:
                    continue
            elif choice in c.forbidden:
                continue
            elif (choice[1], choice[0]) in c.required:
                continue
            opts.append(choice)
        options.append(opts)
    for combo in itertools.product(*options):
        edges = [e for e in combo if e is not None]
        if has_cycle(n, edges):
            continue
        yield Dag(n, edges)


def exhaustive_search(d: Dataset, c: ConstraintSet | None = None,
                      max_vars: int = EXHAUSTIVE_MAX_VARS,
                      cache: ScoreCache | None = None) -> tuple[Dag, float]:
    """Globally optimal DAG by brute force; ties go to the smallest sorted edge list."""
    n = len(d.variables)
    limit = min(max_vars, EXHAUSTIVE_MAX_VARS)
    if n > limit:
        raise ValidationError(f"exhaustive search refuses {n} variables (limit {limit})")
    c = c or ConstraintSet()
    c.validate(n)
    cache = ScoreCache() if cache is None else cache
    best: Dag | None = None
    best_score = -np.inf
    best_edges: list[Edge] = []
    for g in enumerate_dags(n, c):
        s = total_bic(d, g, cache)
        edges = g.edges
        if s > best_score or (s == best_score and edges < best_edges):
            best, best_score, best_edges = g, s, edges
    if best is None:
        raise ConstraintError("no DAG satisfies the constraints")
    return best, best_score


def is_local_optimum(d: Dataset, g: Dag, c: ConstraintSet, tol: float = SCORE_EPS) -> bool:
    """Check by full rescoring that no legal move improves ``g`` by more than ``tol``."""
    base = total_bic(d, g)
    for move in legal_moves(g, c):
        h = g.copy()
        apply_move(h, move)
        if total_bic(d, h) - base > tol:
            return False
    return True

