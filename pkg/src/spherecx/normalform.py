"""Canonicalisation of systems: parallel identification, deterministic
relabelling, and the scan-based renormalisation safety net."""

from __future__ import annotations

from .system import System, _canonical_order


def renormalize(sys: System) -> list[dict]:
    """Push any remaining boundary-parallel disk pieces through the scaffold.

    The surgery cascade handles the generic case inline; this scan covers
    rare interleavings (loops) where the two cascades of one step block each
    other transiently.  Each push strictly decreases the circle count, so the
    scan terminates.
    """
    log: list[dict] = []
    changed = True
    while changed:
        changed = False
        for q in list(sys.piece_slots):
            if q not in sys.piece_slots or len(sys.piece_slots[q]) != 1:
                continue
            (slot_b,) = sys.piece_slots[q].keys()
            c_b = sys.piece_slots[q][slot_b]
            k_b = sys._end_of(q, slot_b)
            fa, fb = sys.circle_faces[c_b]
            for f_b in (fa, fb):
                r_f = sys.face_region[(f_b, k_b)]
                g_b = sys.other_face(c_b, f_b)
                r_other = sys.face_region[(g_b, k_b)]
                trivial = (
                    sys.face_degree(f_b) == 1
                    and all(r != r_f or key == (f_b, k_b)
                            for key, r in sys.face_region.items())
                    and all(p == q or r_f not in sys.piece_sides(p)
                            for p in sys.piece_slots)
                )
                if trivial:
                    sys._cascade(q, r_f, r_other, log)
                    changed = True
                    break
            if changed:
                break
    return log


def canonicalize(sys: System, mode: str = "identify-parallel") -> tuple[System, list[dict]]:
    """Deterministically relabelled system; in identify-parallel mode merge
    isotopic components down to one representative each.

    Returns (system, merge log).  Idempotent in both modes.
    """
    if mode not in ("identify-parallel", "keep-copies"):
        raise ValueError(f"unknown mode {mode}")
    out = sys.copy()
    merges: list[dict] = []
    if mode == "identify-parallel":
        seen: set[str] = set()
        for comp in out.components():
            key = out.sphere_key_of_component(comp)
            if key in seen:
                merges.append({"kind": "parallel_merge", "key": key})
                out.delete_component(comp)
            else:
                seen.add(key)
        for sigma, m in list(out.copies.items()):
            if m > 1:
                merges.append({"kind": "parallel_merge", "key": f"copy:{sigma}", "count": m - 1})
                out.copies[sigma] = 1
    return relabel(out), merges


def relabel(sys: System) -> System:
    """Renumber all objects in canonical order (0, 1, 2, ...)."""
    nodes = sys._object_nodes()
    edges = sys._object_edges()
    order = _canonical_order(nodes, edges)
    new_id = {obj: i for i, obj in enumerate(order)}
    out = System(scaffold=sys.scaffold)
    out._next_id = len(order)
    cmap = {old: new_id[("c", old)] for old in sys.circle_sigma}
    fmap = {old: new_id[("f", old)] for old in sys.face_sigma}
    qmap = {old: new_id[("q", old)] for old in sys.piece_slots}
    rmap = {old: new_id[("r", old)] for old in sys.region_vertex}
    out.circle_sigma = {cmap[c]: s for c, s in sys.circle_sigma.items()}
    out.face_sigma = {fmap[f]: s for f, s in sys.face_sigma.items()}
    out.circle_faces = {cmap[c]: (fmap[a], fmap[b]) for c, (a, b) in sys.circle_faces.items()}
    out.circle_piece = {(cmap[c], k): qmap[q] for (c, k), q in sys.circle_piece.items()}
    out.piece_vertex = {qmap[q]: v for q, v in sys.piece_vertex.items()}
    out.piece_slots = {qmap[q]: {slot: cmap[c] for slot, c in slots.items()}
                       for q, slots in sys.piece_slots.items()}
    out.region_vertex = {rmap[r]: v for r, v in sys.region_vertex.items()}
    out.face_region = {(fmap[f], k): rmap[r] for (f, k), r in sys.face_region.items()}
    out.copies = dict(sorted(sys.copies.items()))
    if sys.circle_origin is not None:
        out.circle_origin = {cmap[c]: o for c, o in sys.circle_origin.items()}
    if sys.face_origin is not None:
        out.face_origin = {fmap[f]: o for f, o in sys.face_origin.items()}
    return out
