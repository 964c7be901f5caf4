"""Serialized graph documents (JSON, schema ``cgforge/1``) and DOT export."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .ensemble import EdgeFrequencyTable
from .errors import CycleError, DocumentError
from .graph import Dag, has_cycle

SCHEMA = "cgforge/1"

# Fill colours per tier; tiers not listed are left unfilled.
DEFAULT_TIER_COLORS = {1: "lightblue", 2: "lightgreen", 3: "lightcoral", 4: "lightcoral"}


@dataclass(frozen=True)
class Node:
    name: str
    tier: int = 1
    states: tuple[str, ...] = ()


@dataclass(frozen=True)
class DocEdge:
    source: str
    target: str
    frequency: float | None = None


@dataclass
class GraphDocument:
    nodes: list[Node]
    edges: list[DocEdge]
    kind: str = "graph"
    provenance: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dag(cls, dag: Dag, nodes: Sequence[Node], frequencies: Mapping | None = None,
                 kind: str = "graph", provenance: Mapping | None = None) -> GraphDocument:
        frequencies = frequencies or {}
        edges = [
            DocEdge(nodes[u].name, nodes[v].name, frequencies.get((u, v)))
            for u, v in dag.edges
        ]
        return cls(list(nodes), edges, kind, dict(provenance or {}))

    def index(self) -> dict[str, int]:
        return {n.name: i for i, n in enumerate(self.nodes)}

    def to_dag(self) -> Dag:
        idx = self.index()
        return Dag(len(self.nodes), [(idx[e.source], idx[e.target]) for e in self.edges])

    def frequencies(self) -> dict[tuple[int, int], float]:
        idx = self.index()
        return {
            (idx[e.source], idx[e.target]): e.frequency
            for e in self.edges if e.frequency is not None
        }

    def validate(self) -> None:
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise DocumentError("duplicate node names")
        idx = self.index()
        seen = set()
        for e in self.edges:
            for end in (e.source, e.target):
                if end not in idx:
                    raise DocumentError(f"edge {e.source}->{e.target} references unknown node {end!r}")
            if e.source == e.target:
                raise CycleError(f"self-loop on {e.source!r}")
            if (e.source, e.target) in seen:
                raise DocumentError(f"duplicate edge {e.source}->{e.target}")
            seen.add((e.source, e.target))
            if e.frequency is not None and not 0 <= e.frequency <= 1:
                raise DocumentError(f"edge {e.source}->{e.target} frequency outside [0, 1]")
        if has_cycle(len(self.nodes), [(idx[e.source], idx[e.target]) for e in self.edges]):
            raise CycleError("edge list contains a directed cycle")


def _dump(obj: Mapping) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def _node_json(n: Node) -> dict:
    return {"name": n.name, "tier": n.tier, "states": list(n.states)}


def export_json(doc: GraphDocument) -> str:
    doc.validate()
    edges = []
    for e in doc.edges:
        item = {"from": e.source, "to": e.target}
        if e.frequency is not None:
            item["frequency"] = e.frequency
        edges.append(item)
    return _dump({
        "schema": SCHEMA,
        "kind": doc.kind,
        "nodes": [_node_json(n) for n in doc.nodes],
        "edges": edges,
        "provenance": doc.provenance,
    })


def _load(text: str) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DocumentError("document root must be an object")
    if obj.get("schema") != SCHEMA:
        raise DocumentError(f"unsupported schema {obj.get('schema')!r}; expected {SCHEMA!r}")
    return obj


def _nodes(obj: dict) -> list[Node]:
    try:
        return [Node(str(n["name"]), int(n.get("tier", 1)), tuple(n.get("states", ())))
                for n in obj["nodes"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed node list: {exc}") from None


def import_json(text: str) -> GraphDocument:
    obj = _load(text)
    if obj.get("kind") == "edge-frequencies":
        raise DocumentError("this is an edge-frequency document, not a graph document")
    nodes = _nodes(obj)
    try:
        edges = [DocEdge(str(e["from"]), str(e["to"]),
                         None if e.get("frequency") is None else float(e["frequency"]))
                 for e in obj.get("edges", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed edge list: {exc}") from None
    doc = GraphDocument(nodes, edges, str(obj.get("kind", "graph")), dict(obj.get("provenance", {})))
    doc.validate()
    return doc


def export_frequencies(table: EdgeFrequencyTable, nodes: Sequence[Node],
                       provenance: Mapping | None = None) -> str:
    return _dump({
        "schema": SCHEMA,
        "kind": "edge-frequencies",
        "runs": table.runs,
        "nodes": [_node_json(n) for n in nodes],
        "edges": [
            {"from": nodes[u].name, "to": nodes[v].name, "count": n}
            for (u, v), n in sorted(table.counts.items())
        ],
        "provenance": dict(provenance or {}),
    })


def import_frequencies(text: str) -> tuple[EdgeFrequencyTable, list[Node], dict]:
    obj = _load(text)
    if obj.get("kind") != "edge-frequencies":
        raise DocumentError("not an edge-frequency document")
    nodes = _nodes(obj)
    idx = {n.name: i for i, n in enumerate(nodes)}
    counts = {}
    try:
        for e in obj["edges"]:
            if e["from"] not in idx or e["to"] not in idx:
                raise DocumentError(f"edge {e['from']}->{e['to']} references an unknown node")
            counts[(idx[e["from"]], idx[e["to"]])] = int(e["count"])
        table = EdgeFrequencyTable(int(obj["runs"]), counts)
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed frequency document: {exc}") from None
    return table, nodes, dict(obj.get("provenance", {}))


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(doc: GraphDocument, tier_colors: Mapping[int, str] | None = None) -> str:
    """Render ``doc`` as a Graphviz digraph; nodes filled by tier colour.

    Colours come from ``tier_colors``, else the document's provenance, else
    the defaults; with the defaults the highest tier present stays unfilled.
    """
    if tier_colors is None:
        tier_colors = doc.provenance.get("tier_colors")
    if tier_colors is None:
        colors = dict(DEFAULT_TIER_COLORS)
        if doc.nodes:
            colors.pop(max(n.tier for n in doc.nodes), None)
    else:
        colors = {int(k): v for k, v in tier_colors.items()}
    lines = ["digraph cgforge {", "  rankdir=LR;"]
    for n in doc.nodes:
        color = colors.get(n.tier)
        attrs = [f"tier={n.tier}"]
        if color:
            attrs += ["style=filled", f"fillcolor={_dot_id(color)}"]
        lines.append(f"  {_dot_id(n.name)} [{', '.join(attrs)}];")
    for e in sorted(doc.edges, key=lambda e: (e.source, e.target)):
        stmt = f"  {_dot_id(e.source)} -> {_dot_id(e.target)}"
        if e.frequency is not None:
            stmt += f' [label="{e.frequency:.2f}"]'
        lines.append(stmt + ";")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
