import json

import pydot
import pytest

from cgforge.documents import (
    DocEdge,
    GraphDocument,
    Node,
    export_dot,
    export_frequencies,
    export_json,
    import_frequencies,
    import_json,
    write_atomic,
)
from cgforge.ensemble import EdgeFrequencyTable
from cgforge.errors import CycleError, DocumentError
from cgforge.graph import Dag


@pytest.fixture
def doc():
    nodes = [Node("user_active", 1, ("lo", "hi")), Node("tab", 2, ("a", "b")),
             Node("duration", 3, ("short", "long")), Node("is_click", 5, ("0", "1"))]
    dag = Dag(4, [(0, 3), (1, 3), (2, 3)])
    return GraphDocument.from_dag(dag, nodes, {(0, 3): 0.92, (2, 3): 1.0},
                                  provenance={"seed": 1, "runs": 100, "threshold": 0.9})


class TestJson:
    def test_round_trip(self, doc):
        back = import_json(export_json(doc))
        assert back == doc
        assert export_json(back) == export_json(doc)

    def test_empty_graph(self):
        doc = GraphDocument([Node("a"), Node("b")], [])
        assert import_json(export_json(doc)) == doc

    def test_schema_tag(self, doc):
        assert json.loads(export_json(doc))["schema"] == "cgforge/1"

    def test_unknown_node(self, doc):
        obj = json.loads(export_json(doc))
        obj["edges"].append({"from": "ghost", "to": "tab"})
        with pytest.raises(DocumentError, match="ghost"):
            import_json(json.dumps(obj))

    def test_cycle_rejected(self, doc):
        obj = json.loads(export_json(doc))
        obj["edges"].append({"from": "is_click", "to": "user_active"})
        with pytest.raises(CycleError):
            import_json(json.dumps(obj))

    def test_malformed_location(self):
        with pytest.raises(DocumentError, match="line 2"):
            import_json('{"schema": "cgforge/1",\n  "nodes": [}')

    def test_wrong_schema(self, doc):
        obj = json.loads(export_json(doc))
        obj["schema"] = "other/9"
        with pytest.raises(DocumentError, match="schema"):
            import_json(json.dumps(obj))

    def test_bad_frequency(self):
        doc = GraphDocument([Node("a"), Node("b")], [DocEdge("a", "b", 1.5)])
        with pytest.raises(DocumentError):
            export_json(doc)


class TestFrequencies:
    def test_round_trip(self):
        nodes = [Node("a"), Node("b"), Node("c")]
        table = EdgeFrequencyTable(10, {(0, 1): 7, (1, 0): 3, (1, 2): 10})
        back, back_nodes, prov = import_frequencies(export_frequencies(table, nodes, {"seed": 4}))
        assert back == table and back_nodes == nodes and prov == {"seed": 4}

    def test_not_a_graph(self):
        nodes = [Node("a"), Node("b")]
        with pytest.raises(DocumentError):
            import_json(export_frequencies(EdgeFrequencyTable(2, {(0, 1): 1, (1, 0): 1}), nodes))


class TestDot:
    def test_single_edge(self):
        doc = GraphDocument([Node("a"), Node("b")], [DocEdge("a", "b")])
        text = export_dot(doc)
        assert text.count("->") == 1

    def test_frequency_label(self, doc):
        assert 'label="0.92"' in export_dot(doc)

    def test_deterministic(self, doc):
        assert export_dot(doc) == export_dot(doc)

    def test_default_colours(self, doc):
        text = export_dot(doc)
        lines = {line.split(" [")[0].strip(): line for line in text.splitlines() if "tier=" in line}
        assert "lightblue" in lines['"user_active"']
        assert "lightgreen" in lines['"tab"']
        assert "lightcoral" in lines['"duration"']
        assert "fillcolor" not in lines['"is_click"']

    def test_colour_override(self, doc):
        text = export_dot(doc, {5: "gold"})
        assert '"gold"' in text and "lightblue" not in text

    def test_parses_as_dot(self, doc):
        weird = GraphDocument([Node('say "hi"', 1), Node("back\\slash", 2), Node("é", 3)],
                              [DocEdge('say "hi"', "back\\slash", 0.5), DocEdge("back\\slash", "é")])
        for d in (doc, weird):
            graphs = pydot.graph_from_dot_data(export_dot(d))
            assert graphs and len(graphs) == 1
            g = graphs[0]
            assert g.get_type() == "digraph"
            assert len(g.get_edges()) == len(d.edges)


def test_write_atomic(tmp_path):
    target = tmp_path / "sub" / "x.json"
    write_atomic(target, "one")
    write_atomic(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["x.json"]
