"""Sphere systems in normal coordinates relative to a scaffold.

A system is stored as a labelled combinatorial complex:

* per scaffold sphere, the pattern of intersection circles, kept as an
  unrooted tree whose vertices are the complementary *faces* and whose
  edges are the circles (re-rooting invariance is automatic);
* per complement piece, the *normal pieces* (disk, cylinder, pants --
  classified by the set of boundary slots they touch), each boundary
  circle matched to a circle of the corresponding scaffold sphere;
* per complement piece, the *regions* cut out by the normal pieces,
  together with the assignment of every face side to the region it
  bounds.  The region data pins down the isotopy class: circle trees and
  matchings alone do not distinguish, say, the separating from the
  non-separating one-circle sphere over a theta scaffold.

Scaffold-parallel spheres carry no circles and are stored as `copies`.

All mutating operations live on the class but external callers should
treat systems as values: operations used by the rest of the package
(`canonicalize`, surgery, restrictions) copy first.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import (
    BadChi,
    BadMatching,
    BoundaryParallelDisk,
    IncompatiblePieces,
    NestingInconsistent,
    ScaffoldMismatch,
)
from .scaffold import Scaffold

PIECE_TYPE_NAMES = {1: "disk", 2: "cylinder", 3: "pants"}


@dataclass
class System:
    scaffold: Scaffold
    # circle id -> scaffold sphere id
    circle_sigma: dict[int, str] = field(default_factory=dict)
    # face id -> scaffold sphere id
    face_sigma: dict[int, str] = field(default_factory=dict)
    # circle id -> (face, face); unordered pair
    circle_faces: dict[int, tuple[int, int]] = field(default_factory=dict)
    # (circle id, end 0|1) -> normal piece id on that side
    circle_piece: dict[tuple[int, int], int] = field(default_factory=dict)
    # normal piece id -> complement piece (graph vertex)
    piece_vertex: dict[int, str] = field(default_factory=dict)
    # normal piece id -> {slot: circle id}
    piece_slots: dict[int, dict[int, int]] = field(default_factory=dict)
    # region id -> complement piece (graph vertex)
    region_vertex: dict[int, str] = field(default_factory=dict)
    # (face id, end 0|1) -> region id
    face_region: dict[tuple[int, int], int] = field(default_factory=dict)
    # scaffold-parallel components: sphere id -> multiplicity
    copies: dict[str, int] = field(default_factory=dict)
    _next_id: int = 0
    # optional provenance relative to the start of a surgery path: circles
    # only ever die along a path, so each live circle points back to an
    # original one and each face knows which original faces it swallowed.
    # Ignored by equality, keys and serialisation.
    circle_origin: dict[int, int] | None = None
    face_origin: dict[int, frozenset] | None = None

    # ------------------------------------------------------------------ basics

    def fresh_id(self) -> int:
        self._next_id += 1
        return self._next_id - 1

    def copy(self) -> "System":
        return System(
            scaffold=self.scaffold,
            circle_sigma=dict(self.circle_sigma),
            face_sigma=dict(self.face_sigma),
            circle_faces=dict(self.circle_faces),
            circle_piece=dict(self.circle_piece),
            piece_vertex=dict(self.piece_vertex),
            piece_slots={q: dict(s) for q, s in self.piece_slots.items()},
            region_vertex=dict(self.region_vertex),
            face_region=dict(self.face_region),
            copies=dict(self.copies),
            _next_id=self._next_id,
            circle_origin=None if self.circle_origin is None else dict(self.circle_origin),
            face_origin=None if self.face_origin is None else dict(self.face_origin),
        )

    def enable_origin_tracking(self) -> None:
        self.circle_origin = {c: c for c in self.circle_sigma}
        self.face_origin = {f: frozenset([f]) for f in self.face_sigma}

    def circles_on(self, sigma: str) -> list[int]:
        return [c for c, s in self.circle_sigma.items() if s == sigma]

    def faces_on(self, sigma: str) -> list[int]:
        return [f for f, s in self.face_sigma.items() if s == sigma]

    def face_degree(self, f: int) -> int:
        return sum(1 for fp in self.circle_faces.values() if f in fp)

    def face_circles(self, f: int) -> list[int]:
        return [c for c, fp in self.circle_faces.items() if f in fp]

    def other_face(self, c: int, f: int) -> int:
        a, b = self.circle_faces[c]
        return b if f == a else a

    def piece_type(self, q: int) -> str:
        return PIECE_TYPE_NAMES[len(self.piece_slots[q])]

    def piece_sides(self, q: int) -> tuple[int, int]:
        """The two regions a normal piece separates, derived from face data."""
        sides: set[int] | None = None
        for slot, c in self.piece_slots[q].items():
            k = self._end_of(q, slot)
            fa, fb = self.circle_faces[c]
            pair = {self.face_region[(fa, k)], self.face_region[(fb, k)]}
            if sides is None:
                sides = pair
            elif sides != pair:
                raise NestingInconsistent(f"piece {q} has inconsistent side regions")
        if sides is None or len(sides) != 2:
            raise NestingInconsistent(f"piece {q} does not separate two regions")
        a, b = sorted(sides)
        return a, b

    def _end_of(self, q: int, slot: int) -> int:
        """Which end (0/1) of the scaffold sphere at (vertex, slot) faces piece q."""
        vertex = self.piece_vertex[q]
        sid, k = self.scaffold.slot_map()[(vertex, slot)]
        return k

    def slot_end(self, vertex: str, slot: int) -> tuple[str, int]:
        return self.scaffold.slot_map()[(vertex, slot)]

    def total_circles(self) -> int:
        return len(self.circle_sigma)

    # ------------------------------------------------------------- components

    def components(self) -> list[dict]:
        """Assembled spheres: each a dict with pieces, circles and sigma counts.

        Scaffold-parallel copies are listed separately via `copies`.
        """
        parent = {q: q for q in self.piece_slots}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for c in self.circle_sigma:
            q0 = self.circle_piece[(c, 0)]
            q1 = self.circle_piece[(c, 1)]
            parent[find(q0)] = find(q1)
        groups: dict[int, dict] = {}
        for q in self.piece_slots:
            r = find(q)
            groups.setdefault(r, {"pieces": [], "circles": []})["pieces"].append(q)
        for c in self.circle_sigma:
            groups[find(self.circle_piece[(c, 0)])]["circles"].append(c)
        out = []
        for rec in groups.values():
            rec["pieces"].sort()
            rec["circles"].sort()
            out.append(rec)
        out.sort(key=lambda r: r["pieces"][0])
        return out

    def component_of_circle(self, c: int) -> dict:
        for comp in self.components():
            if c in comp["circles"]:
                return comp
        raise KeyError(c)

    # -------------------------------------------------------------- validation

    def validate(self) -> None:
        """Raise a package error when the coordinate record is inconsistent.

        Checks referential integrity, the tree structure of every circle
        pattern and region decomposition, matching consistency, piece-type
        separation (which subsumes the pairwise compatibility table and the
        essential-disk condition), sphere assembly, and a global folding
        test on the region graph.
        """
        sc = self.scaffold
        slot_map = sc.slot_map()
        # referential integrity
        for c, sigma in self.circle_sigma.items():
            if sigma not in sc.spheres:
                raise BadMatching(f"circle {c} on unknown sphere {sigma}")
            fa, fb = self.circle_faces[c]
            if fa == fb:
                raise NestingInconsistent(f"circle {c} has equal faces")
            for f in (fa, fb):
                if self.face_sigma.get(f) != sigma:
                    raise NestingInconsistent(f"circle {c} face {f} on wrong sphere")
            for k in (0, 1):
                q = self.circle_piece.get((c, k))
                if q is None:
                    raise BadMatching(f"circle {c} missing side {k} piece")
                vertex, slot = sc.end(sigma, k)
                if self.piece_vertex.get(q) != vertex:
                    raise BadMatching(f"circle {c} side {k} piece in wrong complement piece")
                if self.piece_slots[q].get(slot) != c:
                    raise BadMatching(f"circle {c} not matched at slot {slot} of piece {q}")
        for q, slots in self.piece_slots.items():
            if not slots or len(slots) > 3:
                raise IncompatiblePieces(f"piece {q} touches {len(slots)} slots")
            vertex = self.piece_vertex[q]
            for slot, c in slots.items():
                sid, k = slot_map[(vertex, slot)]
                if self.circle_sigma.get(c) != sid:
                    raise BadMatching(f"piece {q} slot {slot} circle {c} on wrong sphere")
                if self.circle_piece.get((c, k)) != q:
                    raise BadMatching(f"piece {q} slot {slot} not registered for circle {c}")
        # every scaffold sphere has a face tree
        for sigma in sc.spheres:
            faces = self.faces_on(sigma)
            circles = self.circles_on(sigma)
            if len(faces) != len(circles) + 1:
                raise NestingInconsistent(f"sphere {sigma}: {len(faces)} faces, {len(circles)} circles")
            if faces:
                adj: dict[int, set[int]] = {f: set() for f in faces}
                for c in circles:
                    fa, fb = self.circle_faces[c]
                    adj[fa].add(fb)
                    adj[fb].add(fa)
                stack, reach = [faces[0]], {faces[0]}
                while stack:
                    for g in adj[stack.pop()]:
                        if g not in reach:
                            reach.add(g)
                            stack.append(g)
                if len(reach) != len(faces):
                    raise NestingInconsistent(f"sphere {sigma}: circle pattern not a tree")
        for (f, k), r in self.face_region.items():
            sigma = self.face_sigma[f]
            vertex, _ = sc.end(sigma, k)
            if self.region_vertex.get(r) != vertex:
                raise NestingInconsistent(f"face {f} end {k} assigned region in wrong piece")
        for f in self.face_sigma:
            for k in (0, 1):
                if (f, k) not in self.face_region:
                    raise NestingInconsistent(f"face {f} missing region on end {k}")
        # copies sit on clean spheres
        for sigma, mult in self.copies.items():
            if mult < 1:
                raise BadMatching(f"copy multiplicity {mult} on {sigma}")
            if self.circles_on(sigma):
                raise BadMatching(f"parallel copy on {sigma} which carries circles")
        # per complement piece: region tree, injective face assignment
        for vertex in sc.pieces:
            regions = [r for r, v in self.region_vertex.items() if v == vertex]
            pieces = [q for q, v in self.piece_vertex.items() if v == vertex]
            if not regions:
                raise NestingInconsistent(f"complement piece {vertex} has no region")
            edges = []
            for q in pieces:
                a, b = self.piece_sides(q)
                if self.region_vertex[a] != vertex or self.region_vertex[b] != vertex:
                    raise NestingInconsistent(f"piece {q} sides leave its complement piece")
                edges.append((a, b))
            if len(regions) != len(pieces) + 1:
                raise NestingInconsistent(f"complement piece {vertex}: region count mismatch")
            adj2: dict[int, set[tuple[int, int]]] = {r: set() for r in regions}
            for i, (a, b) in enumerate(edges):
                adj2[a].add((b, i))
                adj2[b].add((a, i))
            stack2, reach2, used = [regions[0]], {regions[0]}, set()
            while stack2:
                x = stack2.pop()
                for y, i in adj2[x]:
                    if y not in reach2:
                        reach2.add(y)
                        used.add(i)
                        stack2.append(y)
            if len(reach2) != len(regions):
                raise NestingInconsistent(f"complement piece {vertex}: region graph not a tree")
            # injectivity of face assignments per sphere end
            for slot in range(3):
                sid, k = slot_map[(vertex, slot)]
                seen_regions: set[int] = set()
                for f in self.faces_on(sid):
                    r = self.face_region[(f, k)]
                    if r in seen_regions:
                        raise NestingInconsistent(
                            f"two faces of {sid} share a region at {vertex} slot {slot}")
                    seen_regions.add(r)
            # every region touches the boundary
            touched = set(self.face_region.values())
            for r in regions:
                if r not in touched:
                    raise NestingInconsistent(f"region {r} touches no boundary face")
        self._validate_piece_separation()
        self._validate_components()
        self._validate_region_boundaries()
        self._validate_global_position()

    def _region_tree_sides(self, vertex: str, q: int) -> tuple[set[int], set[int]]:
        """Regions of `vertex` on the two sides of normal piece q."""
        regions = [r for r, v in self.region_vertex.items() if v == vertex]
        pieces = [p for p, v in self.piece_vertex.items() if v == vertex]
        adj: dict[int, set[tuple[int, int]]] = {r: set() for r in regions}
        for p in pieces:
            a, b = self.piece_sides(p)
            adj[a].add((b, p))
            adj[b].add((a, p))
        a0, b0 = self.piece_sides(q)
        side_a: set[int] = {a0}
        stack = [a0]
        while stack:
            x = stack.pop()
            for y, p in adj[x]:
                if p == q or y in side_a:
                    continue
                side_a.add(y)
                stack.append(y)
        side_b = set(regions) - side_a
        return side_a, side_b

    def _slot_stuff(self, vertex: str, slot: int) -> set[int]:
        """Regions of `vertex` carrying faces of the sphere at (vertex, slot)."""
        sid, k = self.scaffold.slot_map()[(vertex, slot)]
        return {self.face_region[(f, k)] for f in self.faces_on(sid)}

    def _validate_piece_separation(self) -> None:
        for q, slots in self.piece_slots.items():
            if len(slots) != 1:
                continue
            vertex = self.piece_vertex[q]
            (slot,) = slots.keys()
            others = [s for s in range(3) if s != slot]
            side_a, side_b = self._region_tree_sides(vertex, q)
            stuff = [self._slot_stuff(vertex, s) for s in others]
            ok = (stuff[0] <= side_a and stuff[1] <= side_b) or (
                stuff[0] <= side_b and stuff[1] <= side_a
            )
            if not ok:
                # distinguish a boundary-parallel disk from a mismatched table
                if stuff[0] | stuff[1] <= side_a or stuff[0] | stuff[1] <= side_b:
                    raise BoundaryParallelDisk(f"piece {q} is a boundary-parallel disk")
                raise IncompatiblePieces(f"disk piece {q} fails to separate the other slots")

    def _validate_components(self) -> None:
        for comp in self.components():
            chi = sum(2 - len(self.piece_slots[q]) for q in comp["pieces"])
            if len(comp["circles"]) != len(comp["pieces"]) - 1 or chi != 2:
                raise BadChi(f"component {comp['pieces']} has chi={chi}")
            # gluing graph must be a tree (no self-gluing, no cycles)
            seen_pairs = set()
            for c in comp["circles"]:
                q0, q1 = self.circle_piece[(c, 0)], self.circle_piece[(c, 1)]
                if q0 == q1:
                    raise BadChi(f"circle {c} glues piece {q0} to itself")
                seen_pairs.add((min(q0, q1), max(q0, q1), c))
            adj: dict[int, list[tuple[int, int]]] = {q: [] for q in comp["pieces"]}
            for q0, q1, c in seen_pairs:
                adj[q0].append((q1, c))
                adj[q1].append((q0, c))
            stack = [(comp["pieces"][0], -1)]
            reach = {comp["pieces"][0]}
            while stack:
                x, via = stack.pop()
                for y, c in adj[x]:
                    if c == via:
                        continue
                    if y in reach:
                        raise BadChi(f"component {comp['pieces']} is not simply connected")
                    reach.add(y)
                    stack.append((y, c))

    def _validate_region_boundaries(self) -> None:
        """Assemble each region's boundary and check it is a union of spheres,
        allowing the single higher-genus component of a product region."""
        for r in self.region_vertex:
            elements: list[tuple] = []
            for (f, k), rr in self.face_region.items():
                if rr == r:
                    elements.append(("f", f, k))
            for q in self.piece_slots:
                try:
                    sides = self.piece_sides(q)
                except NestingInconsistent:
                    raise
                if r in sides:
                    elements.append(("q", q))
            idx = {e: i for i, e in enumerate(elements)}
            parent = list(range(len(elements)))

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            for c in self.circle_sigma:
                for k in (0, 1):
                    q = self.circle_piece[(c, k)]
                    if ("q", q) not in idx:
                        continue
                    fa, fb = self.circle_faces[c]
                    fr = fa if self.face_region[(fa, k)] == r else fb
                    if self.face_region[(fr, k)] != r:
                        continue
                    parent[find(idx[("q", q)])] = find(idx[("f", fr, k)])
            chi: dict[int, int] = {}
            for e in elements:
                if e[0] == "f":
                    val = 2 - self.face_degree(e[1])
                else:
                    val = 2 - len(self.piece_slots[e[1]])
                root = find(idx[e])
                chi[root] = chi.get(root, 0) + val
            nonsphere = [v for v in chi.values() if v != 2]
            if any(v > 2 or v % 2 for v in chi.values()):
                raise NestingInconsistent(f"region {r} has a malformed boundary component")
            if len(nonsphere) > 1:
                raise NestingInconsistent(f"region {r} has several non-sphere boundary components")

    def region_graph_edges(self, cut_pieces: set[int] | None = None):
        """Edges of the dual region graph.

        Faces join their two end regions; a normal piece joins its two sides
        when its component is *not* being cut along.  Labels carry the kind.
        """
        cut_pieces = cut_pieces or set()
        edges = []
        for f in self.face_sigma:
            edges.append((self.face_region[(f, 0)], self.face_region[(f, 1)], ("face", f)))
        for q in self.piece_slots:
            if q in cut_pieces:
                continue
            a, b = self.piece_sides(q)
            edges.append((a, b, ("piece", q)))
        return edges

    def circle_link_relator(self, c: int) -> list[tuple[str, int, int, int]]:
        """The boundary walk of the 2-cell dual to circle c.

        Walking once around the circle crosses, in order: its sphere face on
        one side, the normal piece on end 1, the other face, the piece on
        end 0.  Entries are (kind, id, from_region, to_region).
        """
        fa, fb = self.circle_faces[c]
        r1 = self.face_region[(fa, 0)]
        r2 = self.face_region[(fa, 1)]
        r3 = self.face_region[(fb, 1)]
        r4 = self.face_region[(fb, 0)]
        return [
            ("face", fa, r1, r2),
            ("piece", self.circle_piece[(c, 1)], r2, r3),
            ("face", fb, r3, r4),
            ("piece", self.circle_piece[(c, 0)], r4, r1),
        ]

    def _validate_global_position(self) -> None:
        """The dual complex (region graph plus one 2-cell per intersection
        circle) must have H_1 of rank n: circles bound disks through the
        scaffold spheres, and a coordinate record whose dual complex carries
        the wrong homology cannot come from an embedded system."""
        verts = sorted(self.region_vertex)
        vpos = {v: i for i, v in enumerate(verts)}
        edges: list[tuple[str, int, int, int]] = []
        for f in self.face_sigma:
            edges.append(("face", f, self.face_region[(f, 0)], self.face_region[(f, 1)]))
        for q in self.piece_slots:
            a, b = self.piece_sides(q)
            edges.append(("piece", q, a, b))
        epos = {(kind, i): j for j, (kind, i, _, _) in enumerate(edges)}
        if _count_components(set(verts), [(a, b, None) for _, _, a, b in edges]) != 1:
            raise NestingInconsistent("region graph is disconnected")
        b1 = len(edges) - len(verts) + 1
        rows = []
        for c in self.circle_sigma:
            row = [0] * len(edges)
            for kind, i, u, v in self.circle_link_relator(c):
                j = epos[(kind, i)]
                _, _, a, b = edges[j]
                if (u, v) == (a, b):
                    row[j] += 1
                elif (u, v) == (b, a):
                    row[j] -= 1
                else:
                    raise NestingInconsistent(f"circle {c} link does not close up")
            rows.append(row)
        rank2 = _int_matrix_rank(rows)
        if b1 - rank2 != self.scaffold.n:
            raise NestingInconsistent(
                f"dual complex has H1 rank {b1 - rank2}, expected {self.scaffold.n}")

    # ------------------------------------------------------- canonical labels

    def _object_nodes(self):
        nodes = {}
        for c, s in self.circle_sigma.items():
            nodes[("c", c)] = ("C", s)
        for f, s in self.face_sigma.items():
            nodes[("f", f)] = ("F", s)
        for q in self.piece_slots:
            nodes[("q", q)] = ("Q", self.piece_vertex[q], tuple(sorted(self.piece_slots[q])))
        for r, v in self.region_vertex.items():
            nodes[("r", r)] = ("R", v)
        return nodes

    def _object_edges(self):
        edges = []
        for c, (fa, fb) in self.circle_faces.items():
            edges.append((("c", c), ("f", fa), "cf"))
            edges.append((("c", c), ("f", fb), "cf"))
        for q, slots in self.piece_slots.items():
            for slot, c in slots.items():
                edges.append((("q", q), ("c", c), ("qc", slot)))
        for (f, k), r in self.face_region.items():
            edges.append((("f", f), ("r", r), ("fr", k)))
        for q in self.piece_slots:
            a, b = self.piece_sides(q)
            edges.append((("q", q), ("r", a), "qr"))
            edges.append((("q", q), ("r", b), "qr"))
        return edges

    def canonical_certificate(self) -> str:
        """Canonical string: equal iff the systems are equal as labelled
        complexes over the same scaffold (normal isotopy classes)."""
        nodes = self._object_nodes()
        edges = self._object_edges()
        order = _canonical_order(nodes, edges)
        pos = {obj: i for i, obj in enumerate(order)}
        edge_repr = sorted(
            (repr(tag), min(pos[a], pos[b]), max(pos[a], pos[b])) for a, b, tag in edges
        )
        node_repr = [repr(nodes[obj]) for obj in order]
        copies_repr = sorted(self.copies.items())
        return json.dumps({"nodes": node_repr, "edges": edge_repr, "copies": copies_repr})

    def system_key(self) -> str:
        return self.canonical_certificate()

    # ------------------------------------------------------------ sphere keys

    def component_restriction(self, comp: dict) -> "System":
        """The single-sphere system carved out of one component."""
        keep_pieces = set(comp["pieces"])
        drop_pieces = set(self.piece_slots) - keep_pieces
        out = self.copy()
        out.copies = {}
        out._delete_pieces(drop_pieces)
        return out

    def sphere_keys(self) -> list[str]:
        keys = [f"copy:{sigma}" for sigma, m in sorted(self.copies.items()) for _ in range(m)]
        for comp in self.components():
            keys.append(self.component_restriction(comp).canonical_certificate())
        return sorted(keys)

    def sphere_key_of_component(self, comp: dict) -> str:
        return self.component_restriction(comp).canonical_certificate()

    def key_set(self) -> frozenset[str]:
        return frozenset(self.sphere_keys())

    def num_spheres(self) -> int:
        return len(self.components()) + sum(self.copies.values())

    # -------------------------------------------------------------- mutations

    def _delete_pieces(self, drop: set[int]) -> None:
        """Remove whole components' pieces (set must be circle-closed)."""
        drop_circles = set()
        for c in self.circle_sigma:
            q0, q1 = self.circle_piece[(c, 0)], self.circle_piece[(c, 1)]
            if q0 in drop or q1 in drop:
                if not (q0 in drop and q1 in drop):
                    raise BadMatching("piece deletion set is not component-closed")
                drop_circles.add(c)
        # merge regions across dropped pieces
        rparent = {r: r for r in self.region_vertex}

        def rfind(x):
            while rparent[x] != x:
                rparent[x] = rparent[rparent[x]]
                x = rparent[x]
            return x

        for q in drop:
            a, b = self.piece_sides(q)
            rparent[rfind(a)] = rfind(b)
        # merge faces across dropped circles
        fparent = {f: f for f in self.face_sigma}

        def ffind(x):
            while fparent[x] != x:
                fparent[x] = fparent[fparent[x]]
                x = fparent[x]
            return x

        for c in drop_circles:
            fa, fb = self.circle_faces[c]
            fparent[ffind(fa)] = ffind(fb)
        new_face_region = {}
        for f in self.face_sigma:
            for k in (0, 1):
                root = ffind(f)
                val = rfind(self.face_region[(f, k)])
                prev = new_face_region.get((root, k))
                if prev is not None and prev != val:
                    raise NestingInconsistent("face merge produced ambiguous regions")
                new_face_region[(root, k)] = val
        if self.face_origin is not None:
            merged: dict[int, frozenset] = {}
            for f in self.face_sigma:
                root = ffind(f)
                merged[root] = merged.get(root, frozenset()) | self.face_origin[f]
            self.face_origin = merged
        if self.circle_origin is not None:
            for c in drop_circles:
                self.circle_origin.pop(c, None)
        for c in drop_circles:
            del self.circle_sigma[c]
            del self.circle_faces[c]
            del self.circle_piece[(c, 0)]
            del self.circle_piece[(c, 1)]
        for q in drop:
            del self.piece_slots[q]
            del self.piece_vertex[q]
        self.face_sigma = {f: s for f, s in self.face_sigma.items() if ffind(f) == f}
        self.region_vertex = {r: v for r, v in self.region_vertex.items() if rfind(r) == r}
        self.face_region = {
            (f, k): r for (f, k), r in new_face_region.items() if f in self.face_sigma
        }
        self.circle_faces = {c: (ffind(a), ffind(b)) for c, (a, b) in self.circle_faces.items()}
        # piece side caches are derived, nothing else to fix

    def delete_component(self, comp: dict) -> None:
        self._delete_pieces(set(comp["pieces"]))

    def restrict_to_keys(self, keys) -> "System":
        """Subsystem consisting of the named spheres (keys may repeat copies)."""
        want = dict()
        for k in keys:
            want[k] = want.get(k, 0) + 1
        out = self.copy()
        for comp in self.components():
            key = self.sphere_key_of_component(comp)
            if want.get(key, 0) > 0:
                want[key] -= 1
            else:
                out._delete_pieces(set(comp["pieces"]))
        new_copies = {}
        for sigma, m in self.copies.items():
            key = f"copy:{sigma}"
            take = min(m, want.get(key, 0))
            if take:
                new_copies[sigma] = take
                want[key] -= take
        out.copies = new_copies
        missing = {k: v for k, v in want.items() if v > 0}
        if missing:
            raise ScaffoldMismatch(f"keys not present in system: {sorted(missing)}")
        return out

    # ----------------------------------------------------------- construction

    @staticmethod
    def scaffold_subsystem(sc: Scaffold, sigmas) -> "System":
        from .errors import EmptySubsystem

        sigmas = list(sigmas)
        if not sigmas:
            raise EmptySubsystem("scaffold subsystem needs at least one sphere")
        for s in sigmas:
            if s not in sc.spheres:
                raise ScaffoldMismatch(f"unknown scaffold sphere {s}")
        sys = System.empty(sc)
        for s in sorted(set(sigmas)):
            sys.copies[s] = 1
        return sys

    @staticmethod
    def empty(sc: Scaffold) -> "System":
        """Coordinate chart with no spheres: one face per scaffold sphere and
        one region per complement piece."""
        sys = System(scaffold=sc)
        region_of = {}
        for vertex in sc.pieces:
            r = sys.fresh_id()
            sys.region_vertex[r] = vertex
            region_of[vertex] = r
        for sigma in sc.spheres:
            f = sys.fresh_id()
            sys.face_sigma[f] = sigma
            for k in (0, 1):
                vertex, _ = sc.end(sigma, k)
                sys.face_region[(f, k)] = region_of[vertex]
        return sys

    # ------------------------------------------------------------- insertion

    def component_orientation(self, comp: dict, anchor_circle: int, anchor_face: int) -> dict[int, int]:
        """For each circle of the component, the face on the side of the sphere
        that contains `anchor_face` at `anchor_circle`."""
        side_face = {anchor_circle: anchor_face}
        todo = [anchor_circle]
        seen_pieces = set()
        while todo:
            c = todo.pop()
            for k in (0, 1):
                q = self.circle_piece[(c, k)]
                if q in seen_pieces:
                    continue
                seen_pieces.add(q)
                fa, fb = self.circle_faces[c]
                f0 = side_face[c]
                r0 = self.face_region[(f0, k)]
                for slot, c2 in self.piece_slots[q].items():
                    if c2 == c:
                        continue
                    k2 = self._end_of(q, slot)
                    ga, gb = self.circle_faces[c2]
                    if self.face_region[(ga, k2)] == r0:
                        side_face[c2] = ga
                    elif self.face_region[(gb, k2)] == r0:
                        side_face[c2] = gb
                    else:
                        raise NestingInconsistent("orientation propagation failed")
                    if c2 not in [t for t in todo] and c2 != c:
                        todo.append(c2)
        return side_face

    def insert_parallel_copy(self, comp: dict, anchor: tuple[int, int]) -> dict[int, int]:
        """Insert a parallel copy of a component, pushed off toward the side
        of `anchor` = (circle, face).  Returns {original circle: copy circle}.
        """
        c0, f0 = anchor
        side_face = self.component_orientation(comp, c0, f0)
        slab: dict[int, int] = {}
        piece_copy: dict[int, int] = {}
        for q in comp["pieces"]:
            slab_q = self.fresh_id()
            self.region_vertex[slab_q] = self.piece_vertex[q]
            slab[q] = slab_q
            qc = self.fresh_id()
            piece_copy[q] = qc
            self.piece_vertex[qc] = self.piece_vertex[q]
            self.piece_slots[qc] = {}
        circle_copy: dict[int, int] = {}
        for c in comp["circles"]:
            sigma = self.circle_sigma[c]
            cc = self.fresh_id()
            circle_copy[c] = cc
            mid = self.fresh_id()
            if self.circle_origin is not None:
                self.circle_origin[cc] = self.circle_origin[c]
            if self.face_origin is not None:
                self.face_origin[mid] = frozenset()
            self.face_sigma[mid] = sigma
            F0 = side_face[c]
            F1 = self.other_face(c, F0)
            self.circle_sigma[cc] = sigma
            self.circle_faces[cc] = (mid, F0)
            self.circle_faces[c] = (F1, mid)
            for k in (0, 1):
                q = self.circle_piece[(c, k)]
                qc = piece_copy[q]
                self.circle_piece[(cc, k)] = qc
                self.face_region[(mid, k)] = slab[q]
        for q in comp["pieces"]:
            qc = piece_copy[q]
            for slot, c in self.piece_slots[q].items():
                self.piece_slots[qc][slot] = circle_copy[c]
        return circle_copy

    # -------------------------------------------------- capping (surgery core)

    def cap_circle(self, c: int, f: int) -> list[dict]:
        """Remove circle c, capping both side pieces with push-offs of the
        empty disk face f; renormalise by vanishing-disk pushes.  Returns the
        log of vanishing disks, trivial spheres and parallel copies produced.
        """
        if f not in self.circle_faces[c]:
            raise BadMatching("face not adjacent to circle")
        if self.face_degree(f) != 1:
            raise BadMatching("cap face must be innermost (a leaf)")
        log: list[dict] = []
        g = self.other_face(c, f)
        jobs = []
        for k in (0, 1):
            q = self.circle_piece[(c, k)]
            r_f = self.face_region[(f, k)]
            r_other = self.face_region[(g, k)]
            jobs.append((q, r_f, r_other))
        self._remove_circle_leaf_face(c, f)
        for q, r_f, r_other in jobs:
            self._cascade(q, r_f, r_other, log)
        return log

    def _remove_circle_leaf_face(self, c: int, f: int) -> None:
        """Delete circle c and its leaf face f; the face across c absorbs f's
        territory and keeps its own region assignments (the push-off copies
        hover over f on both sides)."""
        g = self.other_face(c, f)
        if self.face_origin is not None:
            self.face_origin[g] = self.face_origin[g] | self.face_origin.pop(f)
        if self.circle_origin is not None:
            self.circle_origin.pop(c, None)
        for k in (0, 1):
            q = self.circle_piece[(c, k)]
            slots = self.piece_slots[q]
            for slot in [s for s, cc in slots.items() if cc == c]:
                del slots[slot]
            del self.circle_piece[(c, k)]
        del self.circle_sigma[c]
        del self.circle_faces[c]
        del self.face_sigma[f]
        del self.face_region[(f, 0)]
        del self.face_region[(f, 1)]

    def _merge_regions(self, keep: int, gone: int) -> None:
        if keep == gone:
            return
        for key, r in list(self.face_region.items()):
            if r == gone:
                self.face_region[key] = keep
        del self.region_vertex[gone]

    def _cascade(self, q: int, r_f: int, r_other: int, log: list[dict]) -> None:
        """Renormalise the freshly capped piece q whose dome side is r_f."""
        slots = self.piece_slots[q]
        if len(slots) >= 2:
            return  # pants became a cylinder (or nothing was lost): done
        if len(slots) == 1:
            (slot_b,) = slots.keys()
            c_b = slots[slot_b]
            k_b = self._end_of(q, slot_b)
            fa, fb = self.circle_faces[c_b]
            f_b = fa if self.face_region[(fa, k_b)] == r_f else fb
            if self.face_region[(f_b, k_b)] != r_f:
                raise NestingInconsistent("cascade lost track of the dome side")
            g_b = self.other_face(c_b, f_b)
            trivial = (
                self.face_degree(f_b) == 1
                and all(r != r_f or key == (f_b, k_b)
                        for key, r in self.face_region.items())
                and all(p == q or not self.piece_slots[p]
                        or r_f not in self.piece_sides(p) for p in self.piece_slots)
            )
            if not trivial:
                return  # an essential disk piece; nothing more to do
            sigma_b = self.circle_sigma[c_b]
            entry = {
                "kind": "vanishing",
                "sphere": sigma_b,
                "circles_before": len(self.circles_on(sigma_b)),
            }
            if self.circle_origin is not None:
                entry["orig_circle"] = self.circle_origin.get(c_b)
                entry["footprint"] = self.face_origin.get(f_b, frozenset())
            log.append(entry)
            q_next = self.circle_piece[(c_b, 1 - k_b)]
            r_f_next = self.face_region[(f_b, 1 - k_b)]
            r_other_next = self.face_region[(g_b, 1 - k_b)]
            self._remove_circle_leaf_face(c_b, f_b)
            del self.piece_slots[q]
            del self.piece_vertex[q]
            self._merge_regions(r_other, r_f)
            if r_f_next == r_f:  # can only happen for loops; keep ids coherent
                r_f_next = r_other
            if r_other_next == r_f:
                r_other_next = r_other
            self._cascade(q_next, r_f_next, r_other_next, log)
            return
        # no slots left: the capped piece closed up inside its complement piece
        faces_here = [key for key, r in self.face_region.items() if r == r_f]
        others = [p for p in self.piece_slots
                  if p != q and self.piece_slots[p] and r_f in self.piece_sides(p)]
        if others:
            raise NestingInconsistent("closed surgery sphere traps other pieces")
        del self.piece_slots[q]
        del self.piece_vertex[q]
        if not faces_here:
            log.append({"kind": "trivial_sphere"})
            self._merge_regions(r_other, r_f)
            return
        if len(faces_here) == 1:
            (f_x, k_x) = faces_here[0]
            sigma_x = self.face_sigma[f_x]
            if self.face_degree(f_x) == 0:
                log.append({"kind": "parallel_copy", "sphere": sigma_x})
                self.copies[sigma_x] = self.copies.get(sigma_x, 0) + 1
                self._merge_regions(r_other, r_f)
                return
        raise NestingInconsistent("closed surgery sphere encloses unexpected boundary")

    # ------------------------------------------------------------- utilities

    def intersection_number(self, target) -> int:
        target = set(target)
        return sum(1 for c, s in self.circle_sigma.items() if s in target)

    def is_empty(self) -> bool:
        return not self.piece_slots and not self.copies

    def to_json(self) -> dict:
        forests = []
        for sigma in self.scaffold.spheres:
            circles = sorted(self.circles_on(sigma))
            faces = sorted(self.faces_on(sigma))
            if not faces:
                continue
            root = faces[0]
            parent_of: dict[int, int | None] = {}
            inner_face: dict[int, int] = {}
            # orient the face tree away from the root
            todo = [(root, None)]
            seen = {root}
            while todo:
                fcur, via = todo.pop()
                for cadj in self.face_circles(fcur):
                    if cadj == via:
                        continue
                    fnext = self.other_face(cadj, fcur)
                    if fnext in seen:
                        continue
                    seen.add(fnext)
                    inner_face[cadj] = fnext
                    todo.append((fnext, cadj))
            for cadj in circles:
                fin = inner_face[cadj]
                parent = None
                outer = self.other_face(cadj, fin)
                for c2 in self.face_circles(outer):
                    if c2 != cadj and inner_face.get(c2) == outer:
                        parent = c2
                parent_of[cadj] = parent
            forests.append({
                "sphere": sigma,
                "root": root,
                "faces": faces,
                "parentOf": {str(c): parent_of[c] for c in circles},
                "innerFace": {str(c): inner_face[c] for c in circles},
                "circleFaces": {str(c): list(self.circle_faces[c]) for c in circles},
                "matches": {str(c): [self.circle_piece[(c, 0)], self.circle_piece[(c, 1)]]
                            for c in circles},
            })
        return {
            "scaffold": self.scaffold.to_json(),
            "copies": dict(sorted(self.copies.items())),
            "forests": forests,
            "pieces": [
                {"id": q, "piece": self.piece_vertex[q], "type": self.piece_type(q),
                 "circleRefs": {str(slot): c for slot, c in sorted(self.piece_slots[q].items())}}
                for q in sorted(self.piece_slots)
            ],
            "regions": [
                {"id": r, "piece": v} for r, v in sorted(self.region_vertex.items())
            ],
            "faceRegions": sorted([f, k, r] for (f, k), r in self.face_region.items()),
        }

    @staticmethod
    def from_json(data: dict, scaffold: Scaffold | None = None) -> "System":
        sc = scaffold or Scaffold.from_json(data["scaffold"])
        sys = System(scaffold=sc)
        max_id = -1
        for rec in data["regions"]:
            sys.region_vertex[rec["id"]] = rec["piece"]
            max_id = max(max_id, rec["id"])
        for rec in data["pieces"]:
            sys.piece_vertex[rec["id"]] = rec["piece"]
            sys.piece_slots[rec["id"]] = {int(s): c for s, c in rec["circleRefs"].items()}
            max_id = max(max_id, rec["id"])
        for forest in data["forests"]:
            sigma = forest["sphere"]
            for f in forest["faces"]:
                sys.face_sigma[f] = sigma
                max_id = max(max_id, f)
            for cstr, pair in forest["circleFaces"].items():
                c = int(cstr)
                sys.circle_sigma[c] = sigma
                sys.circle_faces[c] = (pair[0], pair[1])
                max_id = max(max_id, c, pair[0], pair[1])
            for cstr, (q0, q1) in forest["matches"].items():
                c = int(cstr)
                sys.circle_piece[(c, 0)] = q0
                sys.circle_piece[(c, 1)] = q1
        for f, k, r in data["faceRegions"]:
            sys.face_region[(f, k)] = r
        sys.copies = {s: int(m) for s, m in data.get("copies", {}).items()}
        sys._next_id = max_id + 1
        sys.validate()
        return sys


# --------------------------------------------------------------------- helpers


def _count_components(verts, edges) -> int:
    parent = {v: v for v in verts}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, _ in edges:
        parent[find(a)] = find(b)
    return len({find(v) for v in verts})


def _int_matrix_rank(rows: list[list[int]]) -> int:
    """Rank of an integer matrix (exact, fraction-free elimination)."""
    rows = [list(r) for r in rows if any(r)]
    rank = 0
    col = 0
    ncols = len(rows[0]) if rows else 0
    while rank < len(rows) and col < ncols:
        pivot = next((i for i in range(rank, len(rows)) if rows[i][col]), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        pv = rows[rank][col]
        for i in range(rank + 1, len(rows)):
            if rows[i][col]:
                m = rows[i][col]
                rows[i] = [pv * a - m * b for a, b in zip(rows[i], rows[rank])]
        rank += 1
        col += 1
    return rank


def _canonical_order(nodes: dict, edges: list) -> list:
    """Deterministic canonical ordering of the objects of a tagged graph.

    Colour refinement followed by individualisation with minimal-certificate
    backtracking.  The instances are small (tens of objects).
    """
    adj: dict = {obj: [] for obj in nodes}
    for a, b, tag in edges:
        adj[a].append((repr(tag), b))
        adj[b].append((repr(tag), a))

    def refine(colors: dict) -> dict:
        # signatures include the old colour, so each pass refines the
        # partition; stop when the class count stops growing
        while True:
            sig = {
                obj: (colors[obj], tuple(sorted((t, colors[o]) for t, o in adj[obj])))
                for obj in nodes
            }
            ranks = {s: i for i, s in enumerate(sorted(set(sig.values()), key=repr))}
            new = {obj: ranks[sig[obj]] for obj in nodes}
            if len(set(new.values())) == len(set(colors.values())):
                return new
            colors = new

    base = {obj: 0 for obj in nodes}
    init_ranks = {s: i for i, s in enumerate(sorted({repr(v) for v in nodes.values()}))}
    for obj in nodes:
        base[obj] = init_ranks[repr(nodes[obj])]
    base = refine(base)

    best: list = [None]

    def certificate(order: list) -> tuple:
        pos = {obj: i for i, obj in enumerate(order)}
        return tuple(sorted((t, min(pos[a], pos[b]), max(pos[a], pos[b]))
                            for a, b, t in [(a, b, repr(tag)) for a, b, tag in edges]))

    def search(colors: dict, prefix: list):
        cells: dict[int, list] = {}
        for obj, cval in colors.items():
            cells.setdefault(cval, []).append(obj)
        multi = [c for c, objs in sorted(cells.items()) if len(objs) > 1]
        if not multi:
            order = [obj for _, obj in sorted((colors[o], o) for o in nodes)]
            cert = (tuple(repr(nodes[o]) for o in order), certificate(order))
            if best[0] is None or cert < best[0][0]:
                best[0] = (cert, order)
            return
        cell = sorted(cells[multi[0]], key=repr)
        for obj in cell:
            forked = dict(colors)
            forked[obj] = -1 - len(prefix)
            forked = refine(forked)
            search(forked, prefix + [obj])

    search(base, [])
    return best[0][1]


def chi_of_type(nslots: int) -> int:
    return 2 - nslots
