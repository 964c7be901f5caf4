"""Bootstrap ensembles of hill-climbing runs and frequency-thresholded averaging."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

from .dataset import Dataset, bootstrap_sample
from .errors import EnsembleRunError, ValidationError
from .graph import Dag, Edge
from .search import ConstraintSet, SearchConfig, hill_climb

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnsembleConfig:
    runs: int = 100
    threshold: float = 0.9
    seed: int = 0
    workers: int = 1
    max_iterations: int | None = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if not 0 < self.threshold <= 1:
            raise ValidationError("threshold must lie in (0, 1]")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


@dataclass(frozen=True)
class RunSummary:
    index: int
    seed: int
    score: float
    edge_count: int
    iterations: int
    hit_iteration_cap: bool


@dataclass
class EdgeFrequencyTable:
    """How many of ``runs`` learned graphs contain each directed edge."""

    runs: int
    counts: dict[Edge, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.runs < 1:
            raise ValidationError("an edge-frequency table needs runs >= 1")
        for edge, n in self.counts.items():
            if not 0 <= n <= self.runs:
                raise ValidationError(f"count {n} for edge {edge} outside [0, {self.runs}]")

    def frequency(self, edge: Edge) -> float:
        return self.counts.get(edge, 0) / self.runs

    def frequencies(self) -> dict[Edge, float]:
        return {e: n / self.runs for e, n in sorted(self.counts.items())}


@dataclass
class EnsembleResult:
    table: EdgeFrequencyTable
    summaries: list[RunSummary]
    graphs: list[Dag]


@dataclass
class AveragedGraph:
    dag: Dag
    frequencies: dict[Edge, float]
    dropped: list[Edge] = field(default_factory=list)


def _single_run(d: Dataset, c: ConstraintSet, seed: int, max_iterations: int | None):
    sample = bootstrap_sample(d, seed)
    g, trace = hill_climb(d=sample, c=c, cfg=SearchConfig(seed=seed, max_iterations=max_iterations))
    return g, trace


def _run_chunk(d: Dataset, c: ConstraintSet, jobs: list[tuple[int, int]], max_iterations):
    out = []
    for index, seed in jobs:
        try:
            g, trace = _single_run(d, c, seed, max_iterations)
        except Exception as exc:  # reported with its run index by the caller
            return out, (index, exc)
        out.append((index, seed, g.edges, trace.final_score, len(trace), trace.hit_iteration_cap))
    return out, None


def learn_ensemble(d: Dataset, c: ConstraintSet, cfg: EnsembleConfig = EnsembleConfig()) -> EnsembleResult:
    """Learn one graph per bootstrap resample and count directed edges.

    Run ``i`` resamples with seed ``cfg.seed + i``.  Results are reduced in
    run order, so the table does not depend on how runs were scheduled.
    """
    c.validate(len(d.variables))
    jobs = [(i, cfg.seed + i) for i in range(cfg.runs)]
    workers = min(cfg.workers, cfg.runs)
    if workers == 1:
        results, failure = _run_chunk(d, c, jobs, cfg.max_iterations)
        failures = [failure] if failure else []
    else:
        chunks = [jobs[k::workers] for k in range(workers)]
        results, failures = [], []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, d, c, chunk, cfg.max_iterations) for chunk in chunks]
            for fut in futures:
                part, failure = fut.result()
                results.extend(part)
                if failure:
                    failures.append(failure)
    if failures:
        index, exc = min(failures, key=lambda f: f[0])
        raise EnsembleRunError(index, exc) from exc

    results.sort(key=lambda r: r[0])
    counts: Counter[Edge] = Counter()
    summaries, graphs = [], []
    n = len(d.variables)
    for index, seed, edges, score, iterations, capped in results:
        counts.update(edges)
        graphs.append(Dag(n, edges))
        summaries.append(RunSummary(index, seed, score, len(edges), iterations, capped))
        if capped:
            logger.warning("run %d hit the iteration cap", index)
    table = EdgeFrequencyTable(cfg.runs, dict(sorted(counts.items())))
    return EnsembleResult(table, summaries, graphs)


def _find_cycle(node_count: int, edges: list[Edge]) -> list[Edge] | None:
    children: dict[int, list[int]] = {}
    for u, v in edges:
        children.setdefault(u, []).append(v)
    for nbrs in children.values():
        nbrs.sort()
    state = [0] * node_count  # 0 unvisited, 1 on stack, 2 done
    stack_path: list[int] = []

    def visit(u: int) -> list[Edge] | None:
        state[u] = 1
        stack_path.append(u)
        for w in children.get(u, ()):
            if state[w] == 1:
                cyc = stack_path[stack_path.index(w):] + [w]
                return list(zip(cyc, cyc[1:]))
            if state[w] == 0:
                found = visit(w)
                if found:
                    return found
        stack_path.pop()
        state[u] = 2
        return None

    for s in range(node_count):
        if state[s] == 0:
            found = visit(s)
            if found:
                return found
    return None


def average_graph(table: EdgeFrequencyTable, threshold: float, node_count: int | None = None) -> AveragedGraph:
    """Keep directed edges whose frequency is at least ``threshold``.

    Cycles among retained edges are broken by removing the least frequent
    edge of each cycle found (lexicographically smallest on ties).
    """
    if not 0 < threshold <= 1:
        raise ValidationError("threshold must lie in (0, 1]")
    if node_count is None:
        node_count = 1 + max((max(e) for e in table.counts), default=-1)
    kept = sorted(e for e, n in table.counts.items() if n / table.runs >= threshold)
    freqs = {e: table.counts[e] / table.runs for e in kept}
    dropped: list[Edge] = []
    while True:
        cycle = _find_cycle(node_count, kept)
        if cycle is None:
            break
        victim = min(cycle, key=lambda e: (freqs[e], e))
        kept.remove(victim)
        dropped.append(victim)
        logger.warning("dropped edge %s->%s to break a cycle in the averaged graph", *victim)
    return AveragedGraph(Dag(node_count, kept), {e: freqs[e] for e in kept}, dropped)


def frequency_table_from_mapping(runs: int, counts: Mapping[Edge, int]) -> EdgeFrequencyTable:
    return EdgeFrequencyTable(runs, {tuple(e): int(n) for e, n in sorted(counts.items()) if n})
