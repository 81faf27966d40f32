"""In-memory heterogeneous text-attributed graph.

Graph files are JSON objects keyed by node-type section (``"paper_nodes"``),
each mapping node id to ``{"features": {...}, "neighbors": {...}}``.  An
optional sidecar manifest (``<stem>.manifest.json``) declares node types,
their typed edges, reciprocal edge pairs and the natural-language graph
description used in prompts.
"""
from __future__ import annotations

import json
import logging
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence, Union

logger = logging.getLogger(__name__)

FeatureValue = Union[str, list]

_BAD_ID = re.compile(r"[\s,\[\]]")
SECTION_SUFFIX = "_nodes"


class GraphError(Exception):
    """Base class for graph loading and lookup failures."""


class GraphFormatError(GraphError):
    pass


class DuplicateNodeError(GraphFormatError):
    def __init__(self, node_id: str):
        super().__init__(f"duplicate node id {node_id!r}")
        self.node_id = node_id


class UnknownSectionError(GraphFormatError):
    def __init__(self, section: str):
        super().__init__(f"unknown node-type section {section!r}")
        self.section = section


class DanglingReferenceError(GraphFormatError):
    def __init__(self, node_id: str, target: str, edge_type: str):
        super().__init__(
            f"node {node_id!r} lists neighbor {target!r} via {edge_type!r}, "
            f"but {target!r} is not in the graph"
        )
        self.node_id = node_id
        self.target = target
        self.edge_type = edge_type


class ReciprocityError(GraphFormatError):
    pass


class UnknownNodeError(GraphError, KeyError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node {node_id!r}")
        self.node_id = node_id

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0]


class UnknownFeatureError(GraphError, KeyError):
    def __init__(self, node_id: str, feature: str, available: Sequence[str] = ()):
        hint = f" (available: {', '.join(available)})" if available else ""
        super().__init__(f"node {node_id!r} has no feature {feature!r}{hint}")
        self.node_id = node_id
        self.feature = feature

    def __str__(self) -> str:
        return self.args[0]


class UnknownEdgeTypeError(GraphError, KeyError):
    def __init__(self, node_id: str, node_type: str, edge_type: str, available: Sequence[str] = ()):
        hint = f" (available: {', '.join(available)})" if available else ""
        super().__init__(f"{node_type} node {node_id!r} has no neighbor type {edge_type!r}{hint}")
        self.node_id = node_id
        self.edge_type = edge_type

    def __str__(self) -> str:
        return self.args[0]


def valid_node_id(node_id: Any) -> bool:
    return isinstance(node_id, str) and bool(node_id) and not _BAD_ID.search(node_id)


def section_name(node_type: str) -> str:
    return node_type.replace(" ", "_") + SECTION_SUFFIX


@dataclass(slots=True)
class Node:
    id: str
    node_type: str
    # Values are str or tuple[str, ...]; tuples keep the graph immutable.
    features: dict[str, Any]
    neighbors: dict[str, tuple[str, ...]]


@dataclass(frozen=True)
class NodeTypeSpec:
    section: str
    features: tuple[str, ...] = ()
    # edge name -> target node type
    edges: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Manifest:
    graph_id: str = ""
    description: str = ""
    node_types: Mapping[str, NodeTypeSpec] = field(default_factory=dict)
    # (node_type, edge_type, reverse_edge_type)
    reciprocity: tuple[tuple[str, str, str], ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Manifest":
        types = {}
        for name, spec in (data.get("node_types") or {}).items():
            types[name] = NodeTypeSpec(
                section=spec.get("section") or section_name(name),
                features=tuple(spec.get("features") or ()),
                edges=dict(spec.get("edges") or {}),
            )
        recip = tuple(tuple(r) for r in data.get("reciprocity") or ())
        for r in recip:
            if len(r) != 3:
                raise GraphFormatError(f"reciprocity entry must be [node_type, edge, reverse]: {list(r)}")
        return cls(
            graph_id=data.get("graph_id", ""),
            description=data.get("description", ""),
            node_types=types,
            reciprocity=recip,  # type: ignore[arg-type]
        )

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "description": self.description,
            "node_types": {
                name: {"section": s.section, "features": list(s.features), "edges": dict(s.edges)}
                for name, s in self.node_types.items()
            },
            "reciprocity": [list(r) for r in self.reciprocity],
        }


class Graph:
    """Immutable typed graph.  Build with :func:`load_graph` or :meth:`Graph.build`."""

    def __init__(
        self,
        nodes: dict[str, Node],
        sections: dict[str, str],
        manifest: Manifest,
        dropped_edges: int = 0,
    ):
        self.nodes = nodes
        self.manifest = manifest
        self.sections = sections  # node_type -> section name, in file order
        self.dropped_edges = dropped_edges
        self._order = {nid: i for i, nid in enumerate(nodes)}
        self._by_type: dict[str, list[str]] = {}
        seen_edges: dict[str, set[str]] = {}
        for node in nodes.values():
            self._by_type.setdefault(node.node_type, []).append(node.id)
            seen_edges.setdefault(node.node_type, set()).update(node.neighbors)
        self._type_edges: dict[str, tuple[str, ...]] = {}
        for t in set(self._by_type) | set(manifest.node_types):
            declared = manifest.node_types[t].edges if t in manifest.node_types else {}
            self._type_edges[t] = tuple(sorted(set(declared) | seen_edges.get(t, set())))

    # -- construction -------------------------------------------------

    @classmethod
    def build(
        cls,
        nodes: Iterable[Node],
        manifest: Manifest | None = None,
        strict: bool = True,
    ) -> "Graph":
        """Assemble a graph from Node objects, validating like :func:`load_graph`."""
        manifest = manifest or Manifest()
        table: dict[str, Node] = {}
        sections: dict[str, str] = {}
        for node in nodes:
            if node.id in table:
                raise DuplicateNodeError(node.id)
            table[node.id] = Node(
                node.id,
                node.node_type,
                {k: _freeze_value(node.id, k, v) for k, v in node.features.items()},
                {k: tuple(v) for k, v in node.neighbors.items()},
            )
            if node.node_type not in sections:
                spec = manifest.node_types.get(node.node_type)
                sections[node.node_type] = spec.section if spec else section_name(node.node_type)
        dropped = _validate(table, manifest, strict)
        return cls(table, sections, manifest, dropped)

    # -- basic properties ---------------------------------------------

    @property
    def graph_id(self) -> str:
        return self.manifest.graph_id

    @property
    def description(self) -> str:
        return self.manifest.description

    @property
    def node_types(self) -> set[str]:
        return set(self._type_edges)

    @property
    def edge_types(self) -> set[str]:
        return {e for edges in self._type_edges.values() for e in edges}

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.nodes

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except (KeyError, TypeError):
            raise UnknownNodeError(str(node_id)) from None

    def nodes_of_type(self, node_type: str) -> list[str]:
        return list(self._by_type.get(node_type, ()))

    def edge_types_of(self, node_type: str) -> tuple[str, ...]:
        return self._type_edges.get(node_type, ())

    def ordinal(self, node_id: str) -> int:
        """Position of the node in stored (file) order."""
        return self._order[node_id]

    # -- the interaction primitives -----------------------------------

    def node_feature(self, node_id: str, feature: str) -> FeatureValue:
        node = self.node(node_id)
        try:
            value = node.features[feature]
        except KeyError:
            raise UnknownFeatureError(node_id, feature, sorted(node.features)) from None
        return list(value) if isinstance(value, tuple) else value

    def neighbor_check(self, node_id: str, edge_type: str) -> list[str]:
        return list(self._adjacency(node_id, edge_type))

    def node_degree(self, node_id: str, edge_type: str) -> int:
        return len(self._adjacency(node_id, edge_type))

    def _adjacency(self, node_id: str, edge_type: str) -> tuple[str, ...]:
        node = self.node(node_id)
        found = node.neighbors.get(edge_type)
        if found is not None:
            return found
        if edge_type in self._type_edges.get(node.node_type, ()):
            return ()
        raise UnknownEdgeTypeError(node_id, node.node_type, edge_type, self._type_edges.get(node.node_type, ()))


def node_feature(g: Graph, node_id: str, feature: str) -> FeatureValue:
    return g.node_feature(node_id, feature)


def neighbor_check(g: Graph, node_id: str, edge_type: str) -> list[str]:
    return g.neighbor_check(node_id, edge_type)


def node_degree(g: Graph, node_id: str, edge_type: str) -> int:
    return g.node_degree(node_id, edge_type)


# -- ego graphs -------------------------------------------------------


@dataclass(frozen=True)
class EgoGraph:
    center: str
    hops: int
    nodes: tuple[str, ...]  # BFS order, center first
    truncated: bool = False

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.nodes


def ego_graph(
    g: Graph,
    center: str,
    hops: int,
    node_cap: int = 500,
    edge_types: Iterable[str] | None = None,
) -> EgoGraph:
    """Breadth-first ``hops``-ball around ``center``.

    Expansion visits edge types in name order and neighbors in stored order,
    so the node order is reproducible.  When ``node_cap`` would be exceeded
    the expansion stops and the result is flagged truncated.
    """
    if hops < 0:
        raise ValueError("hops must be >= 0")
    if node_cap < 1:
        raise ValueError("node_cap must be >= 1")
    g.node(center)
    allowed = set(edge_types) if edge_types is not None else None
    order = [center]
    seen = {center}
    frontier = [center]
    for _ in range(hops):
        nxt = []
        for nid in frontier:
            nbrs = g.nodes[nid].neighbors
            for etype in sorted(nbrs):
                if allowed is not None and etype not in allowed:
                    continue
                for other in nbrs[etype]:
                    if other in seen:
                        continue
                    if len(order) >= node_cap:
                        return EgoGraph(center, hops, tuple(order), truncated=True)
                    seen.add(other)
                    order.append(other)
                    nxt.append(other)
        if not nxt:
            break
        frontier = nxt
    return EgoGraph(center, hops, tuple(order), truncated=False)


# -- loading and saving -----------------------------------------------


def _freeze_value(node_id: str, name: str, value: Any) -> Any:
    if not name:
        raise GraphFormatError(f"node {node_id!r} has an empty feature name")
    if isinstance(value, list):
        return tuple(_scalar_text(node_id, name, v) for v in value)
    return _scalar_text(node_id, name, value)


def _scalar_text(node_id: str, name: str, value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    raise GraphFormatError(
        f"feature {name!r} of node {node_id!r} must be text or a list of text, got {type(value).__name__}"
    )


def _no_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict:
    out: dict = {}
    for k, v in pairs:
        if k in out:
            raise _DupKey(k)
        out[k] = v
    return out


class _DupKey(Exception):
    pass


def _parse_json(text: str, what: str) -> Any:
    try:
        # numbers are kept as their literal text: features are text
        return json.loads(text, object_pairs_hook=_no_duplicate_keys, parse_int=str, parse_float=str)
    except _DupKey as exc:
        raise DuplicateNodeError(exc.args[0]) from None
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"malformed JSON in {what}: {exc}") from None


def _read(source: Union[str, bytes, IO]) -> str:
    data = source.read() if hasattr(source, "read") else source
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def load_manifest(source: Union[str, bytes, IO, Path]) -> Manifest:
    if isinstance(source, Path):
        source = source.read_bytes()
    text = _read(source)
    try:
        return Manifest.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"malformed JSON in manifest: {exc}") from None


def load_graph(
    source: Union[str, bytes, IO],
    strict: bool = True,
    manifest: Manifest | None = None,
) -> Graph:
    """Parse the graph JSON format from a byte/text stream (or a string).

    Strict mode raises on dangling references, duplicate neighbor entries and
    reciprocity violations.  Lenient mode drops dangling edges and duplicate
    entries and records the number dropped in ``Graph.dropped_edges``.
    """
    manifest = manifest or Manifest()
    raw = _parse_json(_read(source), "graph")
    if not isinstance(raw, dict):
        raise GraphFormatError("graph file must be a JSON object keyed by node-type section")
    by_section = {spec.section: name for name, spec in manifest.node_types.items()}
    table: dict[str, Node] = {}
    sections: dict[str, str] = {}
    for section, entries in raw.items():
        if manifest.node_types:
            if section not in by_section:
                raise UnknownSectionError(section)
            node_type = by_section[section]
        else:
            if not section.endswith(SECTION_SUFFIX) or section == SECTION_SUFFIX:
                raise UnknownSectionError(section)
            node_type = section[: -len(SECTION_SUFFIX)].replace("_", " ")
        if not isinstance(entries, dict):
            raise GraphFormatError(f"section {section!r} must map node ids to node objects")
        sections[node_type] = section
        for nid, body in entries.items():
            if nid in table:
                raise DuplicateNodeError(nid)
            if not valid_node_id(nid):
                raise GraphFormatError(f"invalid node id {nid!r}: ids are non-empty and contain no whitespace, commas or brackets")
            if not isinstance(body, dict):
                raise GraphFormatError(f"node {nid!r} must be an object")
            feats = body.get("features") or {}
            nbrs = body.get("neighbors") or {}
            if not isinstance(feats, dict) or not isinstance(nbrs, dict):
                raise GraphFormatError(f"node {nid!r}: 'features' and 'neighbors' must be objects")
            features = {k: _freeze_value(nid, k, v) for k, v in feats.items()}
            neighbors = {}
            for etype, lst in nbrs.items():
                if not isinstance(lst, list) or not all(isinstance(x, str) for x in lst):
                    raise GraphFormatError(f"node {nid!r}: neighbors[{etype!r}] must be a list of node ids")
                neighbors[etype] = tuple(lst)
            table[nid] = Node(nid, node_type, features, neighbors)
    dropped = _validate(table, manifest, strict)
    if dropped:
        logger.warning("dropped %d dangling or duplicate edge entries", dropped)
    return Graph(table, sections, manifest, dropped)


def _validate(table: dict[str, Node], manifest: Manifest, strict: bool) -> int:
    dropped = 0
    for node in table.values():
        spec = manifest.node_types.get(node.node_type)
        for etype, lst in list(node.neighbors.items()):
            clean = []
            seen = set()
            for target in lst:
                if target in seen:
                    if strict:
                        raise GraphFormatError(f"node {node.id!r} lists {target!r} twice under {etype!r}")
                    dropped += 1
                    continue
                if target not in table:
                    if strict:
                        raise DanglingReferenceError(node.id, target, etype)
                    dropped += 1
                    continue
                seen.add(target)
                clean.append(target)
            if len(clean) != len(lst):
                node.neighbors[etype] = tuple(clean)
            if strict and spec is not None and etype in spec.edges:
                want = spec.edges[etype]
                for target in clean:
                    if table[target].node_type != want:
                        raise GraphFormatError(
                            f"node {node.id!r} edge {etype!r} points at {table[target].node_type} "
                            f"node {target!r}, expected {want}"
                        )
    if strict:
        for node_type, edge, reverse in manifest.reciprocity:
            check_reciprocity(table, node_type, edge, reverse, manifest)
    return dropped


def check_reciprocity(
    table: Mapping[str, Node], node_type: str, edge: str, reverse: str, manifest: Manifest | None = None
) -> None:
    """Verify v in N(u, edge) <=> u in N(v, reverse) for u of ``node_type``."""
    target_type = None
    if manifest is not None and node_type in manifest.node_types:
        target_type = manifest.node_types[node_type].edges.get(edge)
    forward = 0
    for node in table.values():
        if node.node_type != node_type:
            continue
        for v in node.neighbors.get(edge, ()):
            forward += 1
            if node.id not in table[v].neighbors.get(reverse, ()):
                raise ReciprocityError(
                    f"{v!r} in {edge}({node.id!r}) but {node.id!r} not in {reverse}({v!r})"
                )
    backward = 0
    for node in table.values():
        if target_type is not None and node.node_type != target_type:
            continue
        for u in node.neighbors.get(reverse, ()):
            if table[u].node_type != node_type:
                continue
            backward += 1
    if target_type is not None and forward != backward:
        raise ReciprocityError(
            f"{node_type}.{edge} has {forward} entries but the reverse {reverse} has {backward}"
        )


def graph_to_dict(g: Graph) -> dict:
    out: dict[str, dict] = {section: {} for section in g.sections.values()}
    for node in g.nodes.values():
        out[g.sections[node.node_type]][node.id] = {
            "features": {k: list(v) if isinstance(v, tuple) else v for k, v in node.features.items()},
            "neighbors": {k: list(v) for k, v in node.neighbors.items()},
        }
    return out


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def save_graph(g: Graph, sink: Union[IO, None] = None) -> str:
    """Serialize in canonical form (sorted keys, compact).  Returns the text."""
    text = canonical_json(graph_to_dict(g))
    if sink is not None:
        if "b" in getattr(sink, "mode", ""):
            sink.write(text.encode("utf-8"))
        else:
            sink.write(text)
    return text


def canonicalize(source: Union[str, bytes, IO]) -> str:
    """Canonical form of a graph file without building a Graph."""
    return canonical_json(_normalize_scalars(_parse_json(_read(source), "graph")))


def _normalize_scalars(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _normalize_scalars(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_normalize_scalars(v) for v in obj]
    if isinstance(obj, bool):
        return "true" if obj else "false"
    return obj


def manifest_path_for(graph_path: Union[str, Path]) -> Path:
    p = Path(graph_path)
    name = p.name[: -len(".json")] if p.name.endswith(".json") else p.name
    return p.with_name(name + ".manifest.json")


def load_graph_file(path: Union[str, Path], strict: bool = True, manifest_path: Union[str, Path, None] = None) -> Graph:
    """Load a graph file plus its sidecar manifest when one exists."""
    path = Path(path)
    mpath = Path(manifest_path) if manifest_path else manifest_path_for(path)
    manifest = load_manifest(mpath) if mpath.exists() else None
    with open(path, "rb") as fh:
        return load_graph(fh, strict=strict, manifest=manifest)


def save_graph_file(g: Graph, path: Union[str, Path]) -> None:
    path = Path(path)
    path.write_text(save_graph(g), encoding="utf-8")
    manifest_path_for(path).write_text(
        json.dumps(g.manifest.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
