"""Skip-graph overlay: sorted multi-level lists keyed by identifier.

Level-0 is the full doubly linked list sorted by numeric id.  A vertex
joins the level-l list of every vertex sharing the first l bits of its
membership vector (the identifier bits read least-significant first), so
higher lists are sparse random subsequences with long-range links.  Searches descend levels
greedily and return the floor vertex (greatest id <= target), falling
back to the global minimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .identity import Address, Identifier, membership_prefix_len

KIND_CONTROLLER = "controller"
KIND_DATA = "data-object"

LEFT = 0
RIGHT = 1


class OverlayError(Exception):
    pass


class EmptyOverlay(OverlayError):
    pass


class DuplicateAnnouncement(OverlayError):
    def __init__(self, identifier: Identifier, owner: Address):
        super().__init__(f"{identifier.hex()[:12]} already announced by node {owner.node_index}")


class NotFound(OverlayError):
    def __init__(self, identifier: Identifier):
        super().__init__(f"identifier not announced: {identifier.hex()[:12]}")
        self.identifier = identifier


class Vertex:
    __slots__ = ("identifier", "owner", "kind", "announcers", "neighbors")

    def __init__(self, identifier: Identifier, owner: Address, kind: str, levels: int):
        self.identifier = identifier
        self.owner = owner
        self.kind = kind
        self.announcers: list[Address] = [owner]
        self.neighbors: list[list[Vertex | None]] = [[None, None] for _ in range(levels)]


@dataclass
class SearchResult:
    identifier: Identifier
    terminal: Address
    holders: list[Address]
    hop_count: int
    path: list[Address]


class SkipGraph:
    def __init__(self, max_vertices: int):
        self.levels = max(1, math.ceil(math.log2(max(2, max_vertices)))) + 2
        self.by_id: dict[Identifier, Vertex] = {}
        self.introducer: Vertex | None = None
        self.controller_by_owner: dict[Address, Vertex] = {}

    def __len__(self) -> int:
        return len(self.by_id)

    # -- announcement ---------------------------------------------------

    def announce(self, identifier: Identifier, owner: Address, kind: str) -> list[Address]:
        """Insert (or join as replica announcer) and return the message path."""
        existing = self.by_id.get(identifier)
        if existing is not None:
            if owner in existing.announcers and existing.kind == kind:
                raise DuplicateAnnouncement(identifier, owner)
            _, path = self._search(self.introducer, identifier)
            existing.announcers.append(owner)
            return _prepend_owner(owner, path)
        vertex = Vertex(identifier, owner, kind, self.levels)
        if kind == KIND_CONTROLLER:
            if owner in self.controller_by_owner:
                raise DuplicateAnnouncement(identifier, owner)
            self.controller_by_owner[owner] = vertex
        if self.introducer is None:
            self.by_id[identifier] = vertex
            self.introducer = vertex
            return []
        path = self._insert(vertex)
        self.by_id[identifier] = vertex
        return _prepend_owner(owner, path)

    def _insert(self, vertex: Vertex) -> list[Address]:
        floor, path = self._search(self.introducer, vertex.identifier)
        if floor.identifier < vertex.identifier:
            left, right = floor, floor.neighbors[0][RIGHT]
        else:  # floor is the global minimum and the new vertex precedes it
            left, right = None, floor
        self._splice(vertex, 0, left, right)
        for level in range(1, self.levels):
            left, path = self._scan_for_level(vertex, level, LEFT, path)
            right, path = self._scan_for_level(vertex, level, RIGHT, path)
            if left is None and right is None:
                break
            self._splice(vertex, level, left, right)
        return path

    def _scan_for_level(self, vertex: Vertex, level: int, side: int,
                        path: list[Address]) -> tuple[Vertex | None, list[Address]]:
        # walk the level-(l-1) list away from the new vertex until a member
        # sharing >= l membership-vector bits appears
        cur = vertex.neighbors[level - 1][side]
        while cur is not None and membership_prefix_len(cur.identifier, vertex.identifier) < level:
            path = path + [cur.owner]
            cur = cur.neighbors[level - 1][side]
        if cur is not None:
            path = path + [cur.owner]
        return cur, path

    @staticmethod
    def _splice(vertex: Vertex, level: int, left: Vertex | None, right: Vertex | None):
        vertex.neighbors[level][LEFT] = left
        vertex.neighbors[level][RIGHT] = right
        if left is not None:
            left.neighbors[level][RIGHT] = vertex
        if right is not None:
            right.neighbors[level][LEFT] = vertex

    # -- search ---------------------------------------------------------

    def _search(self, start: Vertex, target: Identifier) -> tuple[Vertex, list[Address]]:
        cur = start
        path = [start.owner]
        for level in range(self.levels - 1, -1, -1):
            if cur.identifier <= target:
                nxt = cur.neighbors[level][RIGHT]
                while nxt is not None and nxt.identifier <= target:
                    cur = nxt
                    path.append(cur.owner)
                    nxt = cur.neighbors[level][RIGHT]
            else:
                nxt = cur.neighbors[level][LEFT]
                while cur.identifier > target and nxt is not None:
                    cur = nxt
                    path.append(cur.owner)
                    nxt = cur.neighbors[level][LEFT]
        return cur, _compress(path)

    def search_num_id(self, start: Address, target: Identifier) -> SearchResult:
        if not self.by_id:
            raise EmptyOverlay()
        start_vertex = self.controller_by_owner.get(start)
        if start_vertex is None:
            raise UnknownStart(start)
        vertex, path = self._search(start_vertex, target)
        return SearchResult(
            identifier=vertex.identifier,
            terminal=vertex.owner,
            holders=sorted(vertex.announcers, key=lambda a: a.node_index),
            hop_count=len(path) - 1,
            path=path,
        )

    def resolve_holders(self, start: Address, identifier: Identifier) -> SearchResult:
        result = self.search_num_id(start, identifier)
        if result.identifier != identifier:
            raise NotFound(identifier)
        return result

    # -- inspection -----------------------------------------------------

    def min_vertex(self) -> Vertex:
        if self.introducer is None:
            raise EmptyOverlay()
        cur = self.introducer
        for level in range(self.levels - 1, -1, -1):
            while cur.neighbors[level][LEFT] is not None:
                cur = cur.neighbors[level][LEFT]
        return cur

    def in_order(self) -> list[Vertex]:
        if not self.by_id:
            return []
        out = []
        cur = self.min_vertex()
        while cur is not None:
            out.append(cur)
            cur = cur.neighbors[0][RIGHT]
        return out

    def check_invariants(self) -> None:
        ordered = self.in_order()
        assert len(ordered) == len(self.by_id), "level-0 traversal misses vertices"
        for a, b in zip(ordered, ordered[1:]):
            assert a.identifier < b.identifier, "level-0 list not strictly increasing"
        for vertex in self.by_id.values():
            for level in range(self.levels):
                left, right = vertex.neighbors[level]
                if left is not None:
                    assert left.identifier < vertex.identifier
                    assert membership_prefix_len(left.identifier, vertex.identifier) >= level
                    assert left.neighbors[level][RIGHT] is vertex
                if right is not None:
                    assert right.identifier > vertex.identifier
                    assert membership_prefix_len(right.identifier, vertex.identifier) >= level
                    assert right.neighbors[level][LEFT] is vertex

    def dump_lines(self) -> list[str]:
        lines = []
        for vertex in self.in_order():
            left, right = vertex.neighbors[0]
            lines.append(",".join([
                vertex.identifier.hex(),
                vertex.kind,
                str(vertex.owner.node_index),
                left.identifier.hex() if left is not None else "",
                right.identifier.hex() if right is not None else "",
            ]))
        return lines


class UnknownStart(OverlayError):
    def __init__(self, address: Address):
        super().__init__(f"no controller vertex registered for {address}")


def _compress(path: list[Address]) -> list[Address]:
    """Drop consecutive same-owner entries; hops are inter-owner traversals."""
    out: list[Address] = []
    for addr in path:
        if not out or out[-1] != addr:
            out.append(addr)
    return out


def _prepend_owner(owner: Address, path: list[Address]) -> list[Address]:
    return _compress([owner] + path)
