"""Deduplicate movable parts, carve the static background, compose the scene.

Dedup runs two stages: pairwise pruning removes near-identical parts
(keeping the one with more points), then subdivision pruning removes any
part explainable as the union of smaller overlapping parts. Removed parts
take their inner boxes with them. The background is carved by deleting all
vertices inside any kept part's OBB.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .articulate import ValidatedPart
from .cavity import InnerBox
from .geom import TriMesh, points_in_obb


class AssemblyError(RuntimeError):
    """Scene invariants violated during assembly."""


@dataclass
class InteractiveObject:
    object_id: str
    part: ValidatedPart
    inner_box: InnerBox

    def point_set(self) -> np.ndarray:
        """Scene-mesh vertex indices of the movable part."""
        return self.part.candidate.provenance_vertices


@dataclass
class InteractiveScene:
    background: TriMesh
    objects: list[InteractiveObject]
    provenance: dict = field(default_factory=dict)


def index_iou(a, b) -> float:
    """IoU of two index sets (exact intersection over union)."""
    sa = a if isinstance(a, (set, frozenset)) else set(int(x) for x in a)
    sb = b if isinstance(b, (set, frozenset)) else set(int(x) for x in b)
    union = len(sa | sb)
    if union == 0:
        return 0.0
    return len(sa & sb) / union


def pointset_iou(a, b, match_radius: float = 0.0) -> float:
    """IoU of two point sets.

    Index arrays (1-D ints) over the same source mesh intersect exactly.
    Coordinate arrays (N, 3) match greedily, nearest pair first, one-to-one,
    within match_radius. Two empty sets have IoU 0 by definition.
    """
    if match_radius < 0:
        raise ValueError("match_radius must be >= 0")
    a_arr = np.asarray(a)
    b_arr = np.asarray(b)
    if a_arr.size == 0 and b_arr.size == 0:
        return 0.0
    if a_arr.ndim == 1 and b_arr.ndim == 1:
        return index_iou(a_arr, b_arr)
    if a_arr.size == 0 or b_arr.size == 0:
        return 0.0
    a_pts = a_arr.reshape(-1, 3).astype(float)
    b_pts = b_arr.reshape(-1, 3).astype(float)
    tree = cKDTree(b_pts)
    pairs = []
    for i, neighbors in enumerate(tree.query_ball_point(a_pts, match_radius)):
        for j in neighbors:
            d = float(np.linalg.norm(a_pts[i] - b_pts[j]))
            pairs.append((d, i, j))
    pairs.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    matched = 0
    for _, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matched += 1
    return matched / (len(a_pts) + len(b_pts) - matched)


def dedup_index_sets(items: list[tuple[str, frozenset]], tau_dup: float,
                     tau_low: float, max_subset: int = 4):
    """Two-stage dedup on (id, index set) pairs; returns (kept ids, log).

    Stage 1 removes one of every pair with IoU >= tau_dup (the smaller point
    count loses; ties keep the earlier id). Stage 2 walks survivors largest
    first and removes any whose candidate subset union (subsets of size
    <= max_subset of smaller parts with IoU >= tau_low) reaches tau_dup.
    Deterministic and independent of input order.
    """
    if not (0.0 < tau_low < tau_dup <= 1.0):
        raise ValueError("need 0 < tau_low < tau_dup <= 1")
    if max_subset < 1:
        raise ValueError("max_subset must be >= 1")
    order = sorted(range(len(items)), key=lambda i: (-len(items[i][1]), items[i][0]))
    removed: dict[str, dict] = {}
    log: list[dict] = []

    # stage 1: pairwise pruning
    for pos_a in range(len(order)):
        ia = order[pos_a]
        id_a, set_a = items[ia]
        if id_a in removed:
            continue
        for pos_b in range(pos_a + 1, len(order)):
            ib = order[pos_b]
            id_b, set_b = items[ib]
            if id_b in removed or id_a in removed:
                continue
            iou = index_iou(set_a, set_b)
            if iou < tau_dup:
                continue
            if len(set_a) > len(set_b):
                loser, winner = id_b, id_a
            elif len(set_b) > len(set_a):
                loser, winner = id_a, id_b
            else:
                loser, winner = max(id_a, id_b), min(id_a, id_b)
            removed[loser] = {"stage": 1, "kept": winner, "iou": iou}
            log.append({"stage": 1, "removed": loser, "kept": winner, "iou": iou})

    # stage 2: subdivision pruning, largest parts first
    survivors = [i for i in order if items[i][0] not in removed]
    for pos, ia in enumerate(survivors):
        id_a, set_a = items[ia]
        if id_a in removed:
            continue
        cands = []
        for ib in survivors:
            id_b, set_b = items[ib]
            if id_b == id_a or id_b in removed:
                continue
            if len(set_b) >= len(set_a):
                continue
            if index_iou(set_a, set_b) >= tau_low:
                cands.append(ib)
        found = None
        for size in range(1, min(max_subset, len(cands)) + 1):
            for combo in combinations(cands, size):
                union = frozenset().union(*(items[ib][1] for ib in combo))
                iou = index_iou(set_a, union)
                if iou >= tau_dup:
                    found = (combo, iou)
                    break
            if found:
                break
        if found:
            combo, iou = found
            explained_by = sorted(items[ib][0] for ib in combo)
            removed[id_a] = {"stage": 2, "explained_by": explained_by, "iou": iou}
            log.append({"stage": 2, "removed": id_a,
                        "explained_by": explained_by, "iou": iou})
    kept = sorted(item[0] for item in items if item[0] not in removed)
    return kept, log


def dedup(objects: list[InteractiveObject], tau_dup: float = 0.7,
          tau_low: float = 0.1, max_subset: int = 4):
    """Deduplicate interactive objects; removed parts drop their inner boxes too."""
    items = [(o.object_id, frozenset(int(v) for v in o.point_set())) for o in objects]
    kept_ids, log = dedup_index_sets(items, tau_dup, tau_low, max_subset)
    kept_set = set(kept_ids)
    kept = sorted((o for o in objects if o.object_id in kept_set),
                  key=lambda o: o.object_id)
    return kept, log


def carve_background(scene: TriMesh, objects: list[InteractiveObject],
                     margin: float = 0.002) -> TriMesh:
    """Delete scene vertices inside any kept object's part OBB (+margin)."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    drop = np.zeros(scene.n_vertices, bool)
    for obj in objects:
        drop |= points_in_obb(scene.vertices, obj.part.obb, margin)
    return scene.drop_vertices(drop)


def assemble_scene(background: TriMesh, objects: list[InteractiveObject],
                   tau_dup: float = 0.7, carve_margin: float = 0.002,
                   removal_log: list | None = None) -> InteractiveScene:
    """Compose the final scene, asserting its two invariants."""
    ids = [o.object_id for o in objects]
    if len(set(ids)) != len(ids):
        raise AssemblyError("duplicate object ids")
    for a, b in combinations(objects, 2):
        iou = index_iou(a.point_set(), b.point_set())
        if iou >= tau_dup:
            raise AssemblyError(
                f"objects {a.object_id} and {b.object_id} overlap (IoU {iou:.3f})")
    for obj in objects:
        inside = points_in_obb(background.vertices, obj.part.obb, carve_margin)
        if inside.any():
            raise AssemblyError(
                f"background vertices remain inside OBB of {obj.object_id}")
    ordered = sorted(objects, key=lambda o: o.object_id)
    provenance = {
        "removals": removal_log or [],
        "objects": [o.object_id for o in ordered],
    }
    return InteractiveScene(background, ordered, provenance)
