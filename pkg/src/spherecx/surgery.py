"""Surgery steps and (generalized) surgery paths toward scaffold targets.

A single step picks an innermost disk on a target sphere, replaces the
sphere through it by its two children (each a complementary disk plus a
push-off of the innermost disk), renormalises through vanishing disks,
and identifies parallel spheres.  Each step also retains the union of the
old and new systems as a distance-two witness.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import EmptySubsystem, IndexOutOfRange, NotInnermost, BadAlignment, ScaffoldMismatch
from .normalform import canonicalize, relabel, renormalize
from .system import System

WAIT = "wait"


@dataclass
class SurgeryStep:
    """Record of one non-wait step."""

    target: tuple[str, ...]
    circle_sigma: str
    # position of the chosen circle and disk side in the canonical labelling
    # of the pre-step system
    circle: int
    disk_face: int
    parent_key: str
    child_keys: list[str]
    vanishing: list[dict] = field(default_factory=list)
    parallel_merges: list[dict] = field(default_factory=list)
    # keep-copies union of pre- and post-systems (distance <= 2 witness)
    union_witness: System | None = None
    # original-pattern disk reference (circle id and face id at path start)
    origin_disk: tuple[int, int] | None = None


@dataclass
class GeneralizedSurgeryPath:
    target: tuple[str, ...]
    entries: list[System]
    steps: list  # SurgeryStep | WAIT, length len(entries) - 1
    mode: str = "identify-parallel"
    # descendant bookkeeping: per index t, a map sphere-key -> list of
    # sphere-keys of its children in entry t+1 (identity for untouched)
    child_maps: list[dict] = field(default_factory=list)
    policy: str = "lexicographic-deterministic"
    seed: int | None = None

    def __len__(self):
        return len(self.entries)

    @property
    def K(self) -> int:
        return len(self.entries) - 1

    def entry_keys(self, t: int) -> frozenset:
        return self.entries[t].key_set()

    def is_wait(self, t: int) -> bool:
        return self.steps[t] == WAIT

    def pure(self) -> "GeneralizedSurgeryPath":
        return strip_waits(self)


def innermost_candidates(sys: System, target) -> list[tuple[int, int]]:
    """All (circle, disk face) choices: leaf faces of target-sphere patterns.

    Deterministic order: systems are relabelled canonically first, so the
    ordering is (sphere id, canonical circle id, canonical face id).
    """
    target = [s for s in sys.scaffold.spheres if s in set(target)]
    out = []
    for sigma in target:
        for f in sorted(sys.faces_on(sigma)):
            adj = sys.face_circles(f)
            if len(adj) == 1:
                out.append((adj[0], f))
    out.sort(key=lambda cf: (sys.circle_sigma[cf[0]], cf[0], cf[1]))
    return out


def single_surgery_step(sys: System, target, choice: tuple[int, int],
                        mode: str = "identify-parallel") -> tuple[System, SurgeryStep]:
    """Perform one surgery step; returns (new canonical system, record).

    `sys` must be canonically labelled; `choice` must come from
    `innermost_candidates`.
    """
    c, f = choice
    if (c, f) not in [(c2, f2) for c2, f2 in innermost_candidates(sys, target)]:
        raise NotInnermost(f"choice {choice} is not an innermost disk for the target")
    work = sys.copy()
    comp = work.component_of_circle(c)
    parent_key = work.sphere_key_of_component(comp)
    dup = work.insert_parallel_copy(comp, anchor=(c, f))
    vanishing = work.cap_circle(dup[c], f)
    vanishing += renormalize(work)
    union_keep = relabel(work)

    after = work.copy()
    # remove the original sphere: its pieces kept their identity
    comp_after = next(cc for cc in after.components() if set(comp["pieces"]) <= set(cc["pieces"]))
    assert set(comp_after["pieces"]) == set(comp["pieces"])
    after.delete_component(comp_after)
    child_keys = sorted(set(after.sphere_keys()) - (set(sys.sphere_keys()) - {parent_key}))
    result, merges = canonicalize(after, mode)
    if mode == "keep-copies":
        result = relabel(after)
    step = SurgeryStep(
        target=tuple(sorted(set(target))),
        circle_sigma=sys.circle_sigma[c],
        circle=c,
        disk_face=f,
        parent_key=parent_key,
        child_keys=sorted(child_keys),
        vanishing=vanishing,
        parallel_merges=merges,
        union_witness=union_keep,
    )
    return result, step


def _child_map_for_step(pre: System, post: System, step: SurgeryStep) -> dict:
    """sphere-key -> list of child keys (identity unless surgered)."""
    out: dict[str, list[str]] = {}
    post_keys = set(post.sphere_keys())
    for key in pre.sphere_keys():
        if key == step.parent_key:
            out[key] = [k for k in step.child_keys if k in post_keys]
        elif key in post_keys:
            out[key] = [key]
        else:
            out[key] = []
    return out


def target_system(scaffold, target) -> System:
    return System.scaffold_subsystem(scaffold, sorted(set(target)))


def surgery_path(sys: System, target, policy: str = "lexicographic-deterministic",
                 seed: int | None = None, mode: str = "identify-parallel",
                 collect_witnesses: bool = True) -> GeneralizedSurgeryPath:
    """A surgery path from `sys` to the scaffold subsystem spanned by `target`.

    Terminates because the intersection number with the target strictly
    decreases.  The last entry is the target itself; the second-to-last is
    disjoint from it.
    """
    target = tuple(sorted(set(target)))
    if not target:
        raise EmptySubsystem("surgery target is empty")
    rng = random.Random(seed) if policy == "seeded-random" else None
    cur, _ = canonicalize(sys, mode)
    tgt = canonicalize(target_system(sys.scaffold, target))[0]
    entries = [cur]
    steps: list = []
    child_maps: list[dict] = []
    while cur.intersection_number(target) > 0:
        cands = innermost_candidates(cur, target)
        choice = cands[0] if rng is None else rng.choice(cands)
        nxt, step = single_surgery_step(cur, target, choice, mode)
        if not collect_witnesses:
            step.union_witness = None
        child_maps.append(_child_map_for_step(cur, nxt, step))
        entries.append(nxt)
        steps.append(step)
        cur = nxt
    if cur.system_key() != tgt.system_key():
        entries.append(tgt)
        steps.append("arrival")
        child_maps.append({k: [k] for k in cur.sphere_keys()})
    return GeneralizedSurgeryPath(
        target=target, entries=entries, steps=steps, child_maps=child_maps,
        mode=mode, policy=policy, seed=seed,
    )


def descendants_at(path: GeneralizedSurgeryPath, subsystem_keys, t: int) -> frozenset:
    """Keys of the descendants at index t of a set of sphere keys of entry 0.

    At the terminal index the arrival convention maps everything to the
    target system.
    """
    if t < 0 or t > path.K:
        raise IndexOutOfRange(f"index {t} outside path of length {path.K}")
    start = set(subsystem_keys)
    missing = start - set(path.entries[0].sphere_keys())
    if missing:
        raise IndexOutOfRange(f"keys not in the initial entry: {sorted(missing)[:2]}")
    cur = start
    for i in range(t):
        step = path.steps[i]
        if step == WAIT:
            continue
        cmap = path.child_maps[i]
        cur = {k2 for k in cur for k2 in cmap.get(k, [k])}
    return frozenset(cur)


def common_descendant_time(path: GeneralizedSurgeryPath, keys1, keys2,
                           from_t: int = 0):
    """Earliest index t >= from_t at which the descendant subsystems share a
    sphere; None if they never do before the terminal entry."""
    cur1 = set(descendants_at(path, keys1, from_t))
    cur2 = set(descendants_at(path, keys2, from_t))
    for t in range(from_t, path.K + 1):
        if cur1 & cur2:
            return t
        if t == path.K:
            break
        step = path.steps[t]
        if step != WAIT and step != "arrival":
            cmap = path.child_maps[t]
            cur1 = {k2 for k in cur1 for k2 in cmap.get(k, [k])}
            cur2 = {k2 for k in cur2 for k2 in cmap.get(k, [k])}
    return None


def fellow_travels_after(path_a: GeneralizedSurgeryPath,
                         path_b: GeneralizedSurgeryPath, t: int):
    """Check the common-sphere condition for all k in {t..K} with the usual
    end alignment; returns (ok, certificates)."""
    if path_a.target != path_b.target:
        raise BadAlignment("paths have different targets")
    Ka, Kb = path_a.K, path_b.K
    offset = Kb - Ka
    if t < 0 or t > Ka or t + offset < 0:
        raise BadAlignment(f"time {t} invalid for offset {offset}")
    certs = []
    for k in range(t, Ka + 1):
        shared = path_a.entry_keys(k) & path_b.entry_keys(k + offset)
        if not shared:
            return False, certs
        certs.append({"index": k, "sphere": min(shared)})
    return True, certs


def insert_waits(path: GeneralizedSurgeryPath, positions) -> GeneralizedSurgeryPath:
    """New path with a wait inserted before each listed index (with
    multiplicity); positions refer to entries of the input path."""
    positions = sorted(positions)
    entries = []
    steps: list = []
    child_maps: list[dict] = []
    for i, ent in enumerate(path.entries):
        for p in positions:
            if p == i:
                entries.append(ent)
                steps.append(WAIT)
                child_maps.append({k: [k] for k in ent.sphere_keys()})
        entries.append(ent)
        if i < len(path.entries) - 1:
            steps.append(path.steps[i])
            child_maps.append(path.child_maps[i])
    return GeneralizedSurgeryPath(
        target=path.target, entries=entries, steps=steps, child_maps=child_maps,
        mode=path.mode, policy=path.policy, seed=path.seed,
    )


def strip_waits(path: GeneralizedSurgeryPath) -> GeneralizedSurgeryPath:
    entries = [path.entries[0]]
    steps: list = []
    child_maps: list[dict] = []
    for i, step in enumerate(path.steps):
        if step == WAIT:
            continue
        entries.append(path.entries[i + 1])
        steps.append(step)
        child_maps.append(path.child_maps[i])
    return GeneralizedSurgeryPath(
        target=path.target, entries=entries, steps=steps, child_maps=child_maps,
        mode=path.mode, policy=path.policy, seed=path.seed,
    )


def paths_equivalent(a: GeneralizedSurgeryPath, b: GeneralizedSurgeryPath) -> bool:
    pa, pb = strip_waits(a), strip_waits(b)
    if len(pa.entries) != len(pb.entries):
        return False
    return all(x.system_key() == y.system_key() for x, y in zip(pa.entries, pb.entries))
