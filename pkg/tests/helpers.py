"""Hand-built fixtures used across the test suite."""

from spherecx.scaffold import theta_scaffold, dumbbell_scaffold
from spherecx.system import System


def one_circle_sphere(sc, sigma, separating=False):
    """Sphere made of two essential disks glued along one circle on `sigma`.

    Over the theta scaffold the non-separating flavour is the standard
    one-circle normal sphere; the separating flavour is the connected-sum
    sphere.  `sigma` must not be a loop.
    """
    e0, e1 = sc.ends[sigma]
    (v0, s0), (v1, s1) = e0, e1
    assert v0 != v1, "one_circle_sphere needs a non-loop sphere"
    sys = System(scaffold=sc)
    c = sys.fresh_id()
    f = sys.fresh_id()
    g = sys.fresh_id()
    qA = sys.fresh_id()
    qB = sys.fresh_id()
    sys.circle_sigma[c] = sigma
    sys.face_sigma[f] = sigma
    sys.face_sigma[g] = sigma
    sys.circle_faces[c] = (f, g)
    sys.circle_piece[(c, 0)] = qA
    sys.circle_piece[(c, 1)] = qB
    sys.piece_vertex[qA] = v0
    sys.piece_vertex[qB] = v1
    sys.piece_slots[qA] = {s0: c}
    sys.piece_slots[qB] = {s1: c}
    # regions: two per end vertex, split by the disks
    rA_f, rA_g = sys.fresh_id(), sys.fresh_id()
    rB_f, rB_g = sys.fresh_id(), sys.fresh_id()
    for r, v in ((rA_f, v0), (rA_g, v0), (rB_f, v1), (rB_g, v1)):
        sys.region_vertex[r] = v
    sys.face_region[(f, 0)] = rA_f
    sys.face_region[(g, 0)] = rA_g
    sys.face_region[(f, 1)] = rB_f
    sys.face_region[(g, 1)] = rB_g
    # the other scaffold spheres get bare faces; distribute them so the two
    # disks separate the remaining slots of their pieces
    slot_map = sc.slot_map()
    other_slots_A = sorted(s for s in range(3) if s != s0)
    other_slots_B = sorted(s for s in range(3) if s != s1)
    # on the A side: first remaining slot on the f side, second on the g side
    assign = {}
    assign[(v0, other_slots_A[0])] = rA_f
    assign[(v0, other_slots_A[1])] = rA_g
    # on the B side the choice encodes the twist: aligning the remaining
    # spheres across sigma gives the separating (connected-sum) sphere,
    # crossing them gives the non-separating one
    sidesB = (rB_g, rB_f) if not separating else (rB_f, rB_g)
    # align: the sphere at (v0, other_slots_A[0]) should land on the same side
    # across sigma for the separating flavour, opposite for non-separating
    assign[(v1, other_slots_B[0])] = sidesB[0]
    assign[(v1, other_slots_B[1])] = sidesB[1]
    for sid in sc.spheres:
        if sid == sigma:
            continue
        fb = sys.fresh_id()
        sys.face_sigma[fb] = sigma_face = sid
        for k in (0, 1):
            vertex, slot = sc.end(sid, k)
            key = (vertex, slot)
            if key in assign:
                sys.face_region[(fb, k)] = assign[key]
            else:
                # a vertex not adjacent to the disks: single region
                r = next((r for r, vv in sys.region_vertex.items() if vv == vertex), None)
                if r is None:
                    r = sys.fresh_id()
                    sys.region_vertex[r] = vertex
                sys.face_region[(fb, k)] = r
    return sys
