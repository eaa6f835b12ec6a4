"""Hierarchical candidate label set and structural queries over it.

The label set is a rooted forest. A node is identified by the normalized
names along its root-to-node path joined with ``/`` (normalization maps ``/``
to a space, so the separator cannot occur inside a segment). Two labels named
alike under different parents are therefore distinct nodes.

JSON cache format (``Taxonomy.to_json``)::

    {
      "format": "htcprompt.taxonomy/1",
      "max_depth": 2,
      "roots": ["computer science", ...],
      "nodes": [
        {"id": "computer science", "name": "Computer Science", "depth": 1,
         "parent": null, "children": ["computer science/machine learning", ...]},
        ...
      ]
    }
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import (
    ConflictingParent,
    EmptyPath,
    EmptyString,
    InvalidLabel,
    SchemaMismatch,
    UnknownNode,
)
from .normalize import ResolvedLabel, normalize_text, resolve_label

__all__ = [
    "PATH_SEPARATOR",
    "LabelNode",
    "LabelPath",
    "ParsedPath",
    "SegmentMatch",
    "Taxonomy",
    "build_taxonomy",
]

PATH_SEPARATOR = " > "
JSON_FORMAT = "htcprompt.taxonomy/1"
_ID_SEP = "/"
_SPLIT = re.compile(r"\s*>\s*")

LabelPath = tuple[str, ...]  # node ids, root first


@dataclass(frozen=True)
class LabelNode:
    id: str
    name: str
    depth: int
    parent: str | None
    children: tuple[str, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def norm(self) -> str:
        return self.id.rsplit(_ID_SEP, 1)[-1]


@dataclass(frozen=True)
class SegmentMatch:
    """How one ``" > "``-separated segment was matched to a node.

    ``verbatim`` is true only when the segment equals the node name exactly;
    a match that needed normalization or edit distance is fuzzy.
    """

    text: str
    node: str
    resolved: ResolvedLabel

    @property
    def verbatim(self) -> bool:
        return self.text == self.resolved.label


@dataclass(frozen=True)
class ParsedPath:
    path: LabelPath
    segments: tuple[SegmentMatch, ...]
    unresolved: tuple[str, ...] = ()

    @property
    def all_verbatim(self) -> bool:
        return not self.unresolved and all(s.verbatim for s in self.segments)

    @property
    def flags(self) -> tuple[bool, ...]:
        return tuple(s.verbatim for s in self.segments)


class Taxonomy:
    """Immutable rooted label forest."""

    def __init__(self, nodes: Mapping[str, LabelNode], roots: Sequence[str]):
        self._nodes = MappingProxyType(dict(nodes))
        self._roots = tuple(roots)
        self._max_depth = max((n.depth for n in self._nodes.values()), default=0)
        self._leaves = tuple(
            sorted(
                (n for n in self._nodes.values() if n.is_leaf),
                key=lambda n: (normalize_text(n.name), n.name, n.id),
            )
        )
        self._validate()

    def _validate(self) -> None:
        for node in self._nodes.values():
            if node.parent is None:
                if node.depth != 1 or node.id not in self._roots:
                    raise ConflictingParent(f"node {node.id!r} has no parent but is not a root")
            else:
                parent = self._nodes.get(node.parent)
                if parent is None:
                    raise UnknownNode(f"parent {node.parent!r} of {node.id!r} is missing")
                if node.id not in parent.children:
                    raise ConflictingParent(
                        f"{node.id!r} names {node.parent!r} as parent but is not among its children"
                    )
                if node.depth != parent.depth + 1:
                    raise ConflictingParent(f"depth of {node.id!r} does not follow its parent")
            for child in node.children:
                c = self._nodes.get(child)
                if c is None:
                    raise UnknownNode(f"child {child!r} of {node.id!r} is missing")
                if c.parent != node.id:
                    raise ConflictingParent(
                        f"{child!r} is listed under {node.id!r} but its parent is {c.parent!r}"
                    )
            if len(set(node.children)) != len(node.children):
                raise ConflictingParent(f"duplicate children under {node.id!r}")

    # -- basic accessors -------------------------------------------------
    @property
    def nodes(self) -> Mapping[str, LabelNode]:
        return self._nodes

    @property
    def roots(self) -> tuple[str, ...]:
        return self._roots

    @property
    def max_depth(self) -> int:
        return self._max_depth

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._nodes

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return self._roots == other._roots and dict(self._nodes) == dict(other._nodes)

    def __repr__(self) -> str:
        return f"Taxonomy(nodes={len(self)}, max_depth={self.max_depth}, counts={self.counts_by_depth()})"

    def node(self, node_id: str) -> LabelNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def counts_by_depth(self) -> dict[int, int]:
        counts = Counter(n.depth for n in self._nodes.values())
        return {d: counts[d] for d in sorted(counts)}

    def nodes_at_depth(self, depth: int) -> list[LabelNode]:
        return sorted(
            (n for n in self._nodes.values() if n.depth == depth),
            key=lambda n: n.id,
        )

    # -- structural queries ----------------------------------------------
    def root_nodes(self) -> list[LabelNode]:
        return [self._nodes[r] for r in self._roots]

    def leaves(self) -> list[LabelNode]:
        return list(self._leaves)

    def children(self, node_id: str) -> list[LabelNode]:
        return [self._nodes[c] for c in self.node(node_id).children]

    def ancestor_path(self, node_id: str) -> LabelPath:
        chain = []
        current: str | None = node_id
        while current is not None:
            chain.append(current)
            current = self.node(current).parent
        return tuple(reversed(chain))

    def names(self, path: Iterable[str]) -> list[str]:
        return [self.node(n).name for n in path]

    def format_path(self, path: Iterable[str]) -> str:
        return PATH_SEPARATOR.join(self.names(path))

    def is_path(self, path: Sequence[str]) -> bool:
        """True when ``path`` starts at a root and follows parent/child edges."""
        if not path or path[0] not in self._roots:
            return False
        for parent, child in zip(path, path[1:]):
            if child not in self._nodes or self._nodes[child].parent != parent:
                return False
        return all(p in self._nodes for p in path)

    def leaf_paths(self) -> list[LabelPath]:
        return [self.ancestor_path(leaf.id) for leaf in self._leaves]

    def path_for_names(self, names: Sequence[str]) -> LabelPath:
        """Look up the node path for a sequence of label names (normalized match)."""
        ids = []
        for i in range(len(names)):
            node_id = _node_id(names[: i + 1])
            if node_id not in self._nodes:
                raise UnknownNode(f"no node for path {list(names[: i + 1])!r}")
            ids.append(node_id)
        return tuple(ids)

    def parse_path(self, s: str) -> ParsedPath:
        """Resolve a ``" > "``-joined string level by level.

        Each segment is snapped onto the children of the previously resolved
        node (the roots for the first segment). Segments left over once a leaf
        is reached are returned as ``unresolved``.
        """
        segments = [seg.strip() for seg in _SPLIT.split(s.strip())]
        segments = [seg for seg in segments if seg]
        if not segments:
            raise EmptyString("cannot parse an empty label path")
        matches: list[SegmentMatch] = []
        candidates = self.root_nodes()
        path: list[str] = []
        for i, seg in enumerate(segments):
            if not candidates:
                return ParsedPath(tuple(path), tuple(matches), tuple(segments[i:]))
            resolved = resolve_label(seg, [c.name for c in candidates])
            chosen = next(c for c in candidates if c.name == resolved.label)
            matches.append(SegmentMatch(seg, chosen.id, resolved))
            path.append(chosen.id)
            candidates = self.children(chosen.id)
        return ParsedPath(tuple(path), tuple(matches))

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": JSON_FORMAT,
            "max_depth": self.max_depth,
            "roots": list(self._roots),
            "nodes": [
                {
                    "id": n.id,
                    "name": n.name,
                    "depth": n.depth,
                    "parent": n.parent,
                    "children": list(n.children),
                }
                for n in sorted(self._nodes.values(), key=lambda n: (n.depth, n.id))
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, **kwargs)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Taxonomy":
        if doc.get("format") != JSON_FORMAT:
            raise SchemaMismatch(f"expected taxonomy format {JSON_FORMAT!r}, got {doc.get('format')!r}")
        nodes = {}
        for raw in doc["nodes"]:
            node = LabelNode(
                id=raw["id"],
                name=raw["name"],
                depth=int(raw["depth"]),
                parent=raw.get("parent"),
                children=tuple(raw.get("children", ())),
            )
            if node.id in nodes:
                raise ConflictingParent(f"node {node.id!r} appears twice")
            nodes[node.id] = node
        return cls(nodes, doc["roots"])

    @classmethod
    def from_json(cls, text: str) -> "Taxonomy":
        return cls.from_dict(json.loads(text))


def _node_id(names: Sequence[str]) -> str:
    return _ID_SEP.join(normalize_text(n) for n in names)


def build_taxonomy(paths: Iterable[Sequence[str]]) -> Taxonomy:
    """Build the forest holding exactly the union of ``paths``.

    The display name of a node is the first spelling seen for it (stripped of
    surrounding whitespace). Repeating a path is a no-op.
    """
    names: dict[str, str] = {}
    parents: dict[str, str | None] = {}
    depths: dict[str, int] = {}
    kids: dict[str, set[str]] = {}
    for row, path in enumerate(paths):
        path = list(path)
        if not path:
            raise EmptyPath(f"label path #{row} is empty")
        parent = None
        prefix: list[str] = []
        for depth, raw in enumerate(path, 1):
            name = str(raw).strip()
            norm = normalize_text(name)
            if not norm:
                raise InvalidLabel(f"label path #{row}: segment {depth} is empty after normalization")
            if ">" in name:
                raise InvalidLabel(f"label path #{row}: {name!r} contains the path separator '>'")
            prefix.append(norm)
            node_id = _ID_SEP.join(prefix)
            if node_id not in names:
                names[node_id] = name
                parents[node_id] = parent
                depths[node_id] = depth
                kids[node_id] = set()
                if parent is not None:
                    kids[parent].add(node_id)
            parent = node_id

    def order(node_id: str) -> tuple:
        return (node_id.rsplit(_ID_SEP, 1)[-1], names[node_id])

    nodes = {
        node_id: LabelNode(
            id=node_id,
            name=names[node_id],
            depth=depths[node_id],
            parent=parents[node_id],
            children=tuple(sorted(kids[node_id], key=order)),
        )
        for node_id in names
    }
    roots = sorted((n for n in names if parents[n] is None), key=order)
    return Taxonomy(nodes, roots)
