"""Config-driven end-to-end pipeline.

Stages: ingest (load, drop, discretize) -> constraints (tiers plus explicit
edges) -> learn (bootstrap ensemble) -> average -> Markov-blanket subgraph.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import __version__
from .dataset import (
    Dataset,
    DiscretizationRule,
    apply_discretization,
    drop_columns,
    drop_constant,
    load_csv,
)
from .documents import (
    SCHEMA,
    GraphDocument,
    Node,
    export_dot,
    export_frequencies,
    export_json,
    write_atomic,
)
from .ensemble import AveragedGraph, EnsembleConfig, EnsembleResult, average_graph, learn_ensemble
from .errors import CgforgeError, ConfigError, StageError
from .graph import mb_subgraph
from .search import ConstraintSet, tiers_to_constraints

logger = logging.getLogger(__name__)

CONFIG_KEYS = {
    "data", "drop", "discretize", "tiers", "targets", "runs", "threshold", "seed",
    "workers", "out", "required", "forbidden", "colors", "max_iterations",
}


@dataclass
class PipelineConfig:
    data: Path
    tiers: dict[str, int]
    targets: list[str]
    drop: list[str] = field(default_factory=list)
    discretize: list[DiscretizationRule] = field(default_factory=list)
    required: list[tuple[str, str]] = field(default_factory=list)
    forbidden: list[tuple[str, str]] = field(default_factory=list)
    runs: int = 100
    threshold: float = 0.9
    seed: int = 0
    workers: int = 1
    max_iterations: int | None = None
    out: Path = Path("out")
    colors: dict[int, str] | None = None
    digest: str = ""

    @property
    def ensemble(self) -> EnsembleConfig:
        return EnsembleConfig(self.runs, self.threshold, self.seed, self.workers, self.max_iterations)

    def with_overrides(self, **overrides) -> PipelineConfig:
        cfg = replace(self, **{k: v for k, v in overrides.items() if v is not None})
        cfg.ensemble  # validates
        return cfg


def _parse_tiers(raw) -> dict[str, int]:
    # {column: tier} or [[tier-1 columns], [tier-2 columns], ...]
    if isinstance(raw, Mapping):
        tiers = {}
        for k, v in raw.items():
            if isinstance(v, list):
                for name in v:
                    tiers[str(name)] = int(k)
            else:
                tiers[str(k)] = int(v)
        return tiers
    if isinstance(raw, list):
        return {str(name): i + 1 for i, group in enumerate(raw) for name in group}
    raise ConfigError("tiers must be a mapping or a list of column groups")


def _edge_list(raw, key: str) -> list[tuple[str, str]]:
    out = []
    for item in raw or []:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ConfigError(f"{key}: every edge must be a [from, to] pair, got {item!r}")
        out.append((str(item[0]), str(item[1])))
    return out


def parse_config(text: str | bytes, base_dir: Path | None = None) -> PipelineConfig:
    raw_bytes = text.encode("utf-8") if isinstance(text, str) else text
    try:
        raw = yaml.safe_load(raw_bytes)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    for key in ("data", "tiers", "targets"):
        if key not in raw:
            raise ConfigError(f"config lacks required key {key!r}")
    base_dir = base_dir or Path(".")
    targets = raw["targets"]
    if isinstance(targets, str):
        targets = [targets]
    try:
        return PipelineConfig(
            data=base_dir / str(raw["data"]),
            tiers=_parse_tiers(raw["tiers"]),
            targets=[str(t) for t in targets],
            drop=[str(x) for x in raw.get("drop") or []],
            discretize=[DiscretizationRule.from_mapping(r) for r in raw.get("discretize") or []],
            required=_edge_list(raw.get("required"), "required"),
            forbidden=_edge_list(raw.get("forbidden"), "forbidden"),
            runs=int(raw.get("runs", 100)),
            threshold=float(raw.get("threshold", 0.9)),
            seed=int(raw.get("seed", 0)),
            workers=int(raw.get("workers", 1)),
            max_iterations=raw.get("max_iterations"),
            out=base_dir / str(raw.get("out", "out")),
            colors={int(k): str(v) for k, v in raw["colors"].items()} if raw.get("colors") else None,
            digest=hashlib.sha256(raw_bytes).hexdigest(),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CgforgeError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data, base_dir=path.parent)


def validate_names(cfg: PipelineConfig, columns: list[str]) -> None:
    """Check every name the config references against the data header."""
    present = set(columns)
    unknown_drops = set(cfg.drop) - present
    if unknown_drops:
        raise ConfigError(f"drop references unknown column(s): {sorted(unknown_drops)}")
    remaining = present - set(cfg.drop)
    problems = []
    for section, names in (
        ("tiers", cfg.tiers),
        ("targets", cfg.targets),
        ("discretize", [r.variable for r in cfg.discretize]),
        ("required", [n for e in cfg.required for n in e]),
        ("forbidden", [n for e in cfg.forbidden for n in e]),
    ):
        for name in names:
            if name not in remaining:
                why = "was dropped" if name in cfg.drop else "is not a column"
                problems.append(f"{section}: {name!r} {why}")
    untiered = sorted(remaining - set(cfg.tiers))
    if untiered:
        problems.append(f"tiers: no tier assigned to {untiered}")
    if not cfg.targets:
        problems.append("targets: at least one target is required")
    elif cfg.tiers:
        top = max(cfg.tiers.values())
        low = [t for t in cfg.targets if t in cfg.tiers and cfg.tiers[t] != top]
        if low:
            problems.append(f"targets: {low} are not in the highest tier ({top})")
    if any(t < 1 for t in cfg.tiers.values()):
        problems.append("tiers: tier numbers must be >= 1")
    if problems:
        raise ConfigError("; ".join(problems))


def ingest(cfg: PipelineConfig) -> Dataset:
    try:
        with open(cfg.data, "rb") as fh:
            d = load_csv(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read data file {cfg.data}: {exc}") from None
    validate_names(cfg, d.names)
    d = drop_columns(d, cfg.drop)
    for rule in cfg.discretize:
        d = apply_discretization(d, rule)
    d = d.with_tiers(cfg.tiers)
    d, constant = drop_constant(d)
    lost = [t for t in cfg.targets if t in constant]
    if lost:
        raise ConfigError(f"target(s) {lost} have a single state after preprocessing")
    return d


def build_constraints(cfg: PipelineConfig, d: Dataset) -> ConstraintSet:
    c = tiers_to_constraints(d.tiers)
    names = set(d.names)

    def edges(pairs):
        return frozenset((d.index(u), d.index(v)) for u, v in pairs if u in names and v in names)

    c = c.merge(ConstraintSet(forbidden=edges(cfg.forbidden), required=edges(cfg.required)))
    c.validate(len(d.variables))
    return c


def nodes_of(d: Dataset) -> list[Node]:
    return [Node(v.name, v.tier, v.states) for v in d.variables]


def provenance(cfg: PipelineConfig, data_digest: str, **extra) -> dict[str, Any]:
    prov = {
        "schema": SCHEMA,
        "generator": f"cgforge {__version__}",
        "config_sha256": cfg.digest,
        "data_sha256": data_digest,
        "seed": cfg.seed,
        "runs": cfg.runs,
        "threshold": cfg.threshold,
    }
    if cfg.colors:
        prov["tier_colors"] = {str(k): v for k, v in sorted(cfg.colors.items())}
    prov.update(extra)
    return prov


def mb_document(full: GraphDocument, targets: list[str]) -> GraphDocument:
    idx = full.index()
    missing = [t for t in targets if t not in idx]
    if missing:
        raise ConfigError(f"unknown target(s): {missing}")
    dag = full.to_dag()
    sub, mapping = mb_subgraph(dag, [idx[t] for t in targets])
    freqs = full.frequencies()
    sub_freqs = {
        (i, j): freqs[(mapping[i], mapping[j])]
        for i, j in sub.edges if (mapping[i], mapping[j]) in freqs
    }
    nodes = [full.nodes[k] for k in mapping]
    prov = dict(full.provenance, targets=list(targets))
    return GraphDocument.from_dag(sub, nodes, sub_freqs, kind="markov-blanket", provenance=prov)


@dataclass
class PipelineResult:
    dataset: Dataset
    ensemble: EnsembleResult
    averaged: AveragedGraph
    full: GraphDocument
    blanket: GraphDocument
    paths: dict[str, Path]


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig, write: bool = True) -> PipelineResult:
    try:
        data_digest = hashlib.sha256(Path(cfg.data).read_bytes()).hexdigest()
    except OSError as exc:
        raise StageError("ingest", ConfigError(f"cannot read data file {cfg.data}: {exc}")) from exc
    d = _stage("ingest", ingest, cfg)
    c = _stage("constraints", build_constraints, cfg, d)
    logger.info("learning %d graphs over %d variables, %d rows", cfg.runs, len(d.variables), d.row_count)
    ens = _stage("learn", learn_ensemble, d, c, cfg.ensemble)
    avg = _stage("average", average_graph, ens.table, cfg.threshold, len(d.variables))
    prov = provenance(cfg, data_digest, dropped_in_repair=[
        [d.variables[u].name, d.variables[v].name] for u, v in avg.dropped
    ])
    full = GraphDocument.from_dag(avg.dag, nodes_of(d), avg.frequencies, kind="averaged", provenance=prov)
    blanket = _stage("mb", mb_document, full, cfg.targets)

    out = Path(cfg.out)
    paths = {
        "frequencies": out / "frequencies.json",
        "graph": out / "graph.json",
        "graph_dot": out / "graph.dot",
        "mb": out / "mb.json",
        "mb_dot": out / "mb.dot",
    }
    if write:
        def _write():
            write_atomic(paths["frequencies"], export_frequencies(ens.table, nodes_of(d), provenance(cfg, data_digest)))
            write_atomic(paths["graph"], export_json(full))
            write_atomic(paths["graph_dot"], export_dot(full))
            write_atomic(paths["mb"], export_json(blanket))
            write_atomic(paths["mb_dot"], export_dot(blanket))
        _stage("export", _write)
    return PipelineResult(d, ens, avg, full, blanket, paths)
