"""The model manifold and its fixed maximal sphere system.

The manifold here is the connected sum of n copies of S^1 x S^2.  A
maximal sphere system cuts it into 3-holed 3-spheres, and the dual graph
of that decomposition is a connected trivalent multigraph with first
Betti number n: vertices are the complementary pieces, edges are the
spheres of the maximal system.  A :class:`Scaffold` stores exactly that
graph; every slot (piece, local boundary index) has a stable identity so
loops are unproblematic.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import Disconnected, EmptySubsystem, NotTrivalent, WrongRank

Slot = tuple[str, int]  # (piece id, local boundary index 0..2)


@dataclass(frozen=True)
class Scaffold:
    """Connected trivalent multigraph: pieces = vertices, spheres = edges."""

    n: int
    pieces: tuple[str, ...]
    spheres: tuple[str, ...]
    # sphere id -> (end0, end1); each end is a (piece, slot) pair.
    ends: dict[str, tuple[Slot, Slot]] = field(compare=False)

    def end(self, sphere: str, k: int) -> Slot:
        return self.ends[sphere][k]

    def slot_map(self) -> dict[Slot, tuple[str, int]]:
        """Map (piece, slot) -> (sphere id, end index)."""
        out: dict[Slot, tuple[str, int]] = {}
        for sid, (e0, e1) in self.ends.items():
            out[e0] = (sid, 0)
            out[e1] = (sid, 1)
        return out

    def spheres_at(self, piece: str) -> list[str]:
        return [sid for sid, (e0, e1) in self.ends.items() if e0[0] == piece or e1[0] == piece]

    def is_loop(self, sphere: str) -> bool:
        e0, e1 = self.ends[sphere]
        return e0[0] == e1[0]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "pieces": list(self.pieces),
            "spheres": [
                {"id": sid, "ends": [list(self.ends[sid][0]), list(self.ends[sid][1])]}
                for sid in self.spheres
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "Scaffold":
        edges = []
        for rec in data["spheres"]:
            (p0, s0), (p1, s1) = rec["ends"]
            edges.append((p0, s0, p1, s1))
        return build_scaffold(data["n"], edges, piece_ids=data.get("pieces"), sphere_ids=[r["id"] for r in data["spheres"]])

    def key(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def build_scaffold(n: int, edges: list[tuple[str, int, str, int]], piece_ids=None, sphere_ids=None) -> Scaffold:
    """Build and validate a scaffold from an edge list.

    Each edge is (piece, slot, piece, slot).  A loop occupies two distinct
    slots of one piece.  Raises NotTrivalent / Disconnected / WrongRank when
    the graph is not a connected trivalent multigraph of the right size.
    """
    pieces: list[str] = []
    seen = set()
    for p0, s0, p1, s1 in edges:
        for p in (p0, p1):
            if p not in seen:
                seen.add(p)
                pieces.append(p)
    if piece_ids is not None:
        extra = [p for p in piece_ids if p not in seen]
        pieces = list(piece_ids) if not extra else list(piece_ids)
        if extra:
            # isolated pieces can never be trivalent
            raise NotTrivalent(f"pieces with no incident spheres: {extra}")
    used_slots: set[Slot] = set()
    for p0, s0, p1, s1 in edges:
        for p, s in ((p0, s0), (p1, s1)):
            if s not in (0, 1, 2):
                raise NotTrivalent(f"slot index {s} out of range at piece {p}")
            if (p, s) in used_slots:
                raise NotTrivalent(f"slot {(p, s)} used twice")
            used_slots.add((p, s))
        if (p0, s0) == (p1, s1):
            raise NotTrivalent(f"edge glues slot {(p0, s0)} to itself")
    for p in pieces:
        missing = [s for s in range(3) if (p, s) not in used_slots]
        if missing:
            raise NotTrivalent(f"piece {p} has unfilled slots {missing}")

    if sphere_ids is None:
        sphere_ids = [f"s{i}" for i in range(len(edges))]
    if len(sphere_ids) != len(edges) or len(set(sphere_ids)) != len(edges):
        raise NotTrivalent("sphere id list does not match edge list")
    ends = {sid: ((p0, s0), (p1, s1)) for sid, (p0, s0, p1, s1) in zip(sphere_ids, edges)}

    # connectivity
    if pieces:
        adj: dict[str, set[str]] = {p: set() for p in pieces}
        for (p0, _), (p1, _) in ends.values():
            adj[p0].add(p1)
            adj[p1].add(p0)
        stack, reach = [pieces[0]], {pieces[0]}
        while stack:
            for q in adj[stack.pop()]:
                if q not in reach:
                    reach.add(q)
                    stack.append(q)
        if len(reach) != len(pieces):
            raise Disconnected("scaffold graph is not connected")

    if len(pieces) != 2 * n - 2 or len(edges) != 3 * n - 3:
        raise WrongRank(
            f"rank {n} needs {2 * n - 2} pieces and {3 * n - 3} spheres, "
            f"got {len(pieces)} and {len(edges)}"
        )
    return Scaffold(n=n, pieces=tuple(pieces), spheres=tuple(sphere_ids), ends=ends)


def theta_scaffold() -> Scaffold:
    """Rank 2: two pieces joined by three parallel edges."""
    return build_scaffold(2, [("P0", 0, "P1", 0), ("P0", 1, "P1", 1), ("P0", 2, "P1", 2)])


def dumbbell_scaffold() -> Scaffold:
    """Rank 2: a loop at each piece plus a connecting bridge."""
    return build_scaffold(2, [("P0", 0, "P0", 1), ("P0", 2, "P1", 2), ("P1", 0, "P1", 1)])


def _canonical_multigraph_key(degseq_edges: list[tuple[int, int]], nv: int) -> str:
    """Canonical key of a multigraph (with loops) on vertices 0..nv-1.

    Exhaustive minimisation over vertex relabellings; the graphs involved
    have at most 2n-2 vertices so brute force is fine.
    """
    best = None
    for perm in itertools.permutations(range(nv)):
        relabelled = sorted(tuple(sorted((perm[a], perm[b]))) for a, b in degseq_edges)
        key = tuple(relabelled)
        if best is None or key < best:
            best = key
    return repr(best)


def enumerate_scaffolds(n: int) -> list[Scaffold]:
    """All isomorphism classes of scaffolds of rank n, each exactly once.

    Generates perfect matchings on the 3*(2n-2) half-edge stubs, rejects
    disconnected graphs, and dedups by canonical multigraph key.
    """
    if n < 2:
        raise WrongRank("rank must be at least 2")
    nv = 2 * n - 2
    stubs = [(v, s) for v in range(nv) for s in range(3)]

    matchings: list[list[tuple[int, int]]] = []

    def rec(remaining: list[Slot], acc: list[tuple[int, int]]):
        if not remaining:
            matchings.append(list(acc))
            return
        a = remaining[0]
        rest = remaining[1:]
        for i, b in enumerate(rest):
            acc.append((stub_index[a], stub_index[b]))
            rec(rest[:i] + rest[i + 1:], acc)
            acc.pop()

    stub_index = {st: i for i, st in enumerate(stubs)}
    rec(stubs, [])

    seen: set[str] = set()
    out: list[Scaffold] = []
    for m in matchings:
        edges_v = [(stubs[i][0], stubs[j][0]) for i, j in m]
        key = _canonical_multigraph_key(edges_v, nv)
        if key in seen:
            continue
        # connectivity check on the vertex graph
        adj: dict[int, set[int]] = {v: set() for v in range(nv)}
        for a, b in edges_v:
            adj[a].add(b)
            adj[b].add(a)
        stack, reach = [0], {0}
        while stack:
            for q in adj[stack.pop()]:
                if q not in reach:
                    reach.add(q)
                    stack.append(q)
        if len(reach) != nv:
            continue
        seen.add(key)
        edge_list = [
            (f"P{stubs[i][0]}", stubs[i][1], f"P{stubs[j][0]}", stubs[j][1]) for i, j in m
        ]
        out.append(build_scaffold(n, edge_list))
    return out
