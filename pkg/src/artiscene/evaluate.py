"""Scoring predicted interactive scenes against ground truth.

Detection uses vertex-level point-set IoU with greedy one-to-one matching.
Joint metrics follow a three-way taxonomy (prismatic / horizontal revolute /
vertical revolute): a revolute axis is horizontal when it forms less than 45
degrees with the ground plane. MD is the distance between joint lines
(revolute only, prismatic motion is origin-invariant), OE the sign-invariant
angle between axes; both are computed only over type-correct matches. The
cumulative MOD staging is PDet, +M (type), +MO (OE < 10 deg), +MOD
(additionally MD < 0.25 m, skipped for prismatic).

Point sets are either vertex-index arrays over a shared scene mesh (exact
intersection) or (N, 3) world coordinates (greedy radius matching).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .articulate import PRISMATIC, REVOLUTE, Articulation
from .assemble import pointset_iou
from .geom import Obb, line_line_distance, points_in_obb

OE_CUTOFF_DEG = 10.0
MD_CUTOFF_M = 0.25
HORIZONTAL_CUTOFF_DEG = 45.0


@dataclass
class MatchResult:
    pred_to_gt: list[int | None]   # index into gts, or None
    pred_iou: list[float]
    gt_matched: list[bool]

    def tp_pairs(self) -> list[tuple[int, int]]:
        return [(p, g) for p, g in enumerate(self.pred_to_gt) if g is not None]


def match_detections(pred_sets: list, gt_sets: list, tau: float,
                     match_radius: float = 0.0) -> MatchResult:
    """Greedy one-to-one matching by descending IoU; TP iff matched IoU >= tau."""
    pairs = []
    for pi, p in enumerate(pred_sets):
        for gi, g in enumerate(gt_sets):
            iou = pointset_iou(p, g, match_radius)
            if iou >= tau:
                pairs.append((-iou, pi, gi))
    pairs.sort()
    pred_to_gt: list[int | None] = [None] * len(pred_sets)
    pred_iou = [0.0] * len(pred_sets)
    gt_matched = [False] * len(gt_sets)
    for neg, pi, gi in pairs:
        if pred_to_gt[pi] is not None or gt_matched[gi]:
            continue
        pred_to_gt[pi] = gi
        pred_iou[pi] = -neg
        gt_matched[gi] = True
    return MatchResult(pred_to_gt, pred_iou, gt_matched)


def joint_class(art: Articulation) -> str:
    """prismatic | revolute_horizontal | revolute_vertical (up = +z).

    A revolute joint is horizontal iff its axis forms strictly less than 45
    degrees with the ground plane; the 45-degree boundary is vertical.
    """
    if art.joint_type == PRISMATIC:
        return "prismatic"
    elevation = math.degrees(math.asin(min(1.0, abs(float(art.axis[2])))))
    return "revolute_horizontal" if elevation < HORIZONTAL_CUTOFF_DEG \
        else "revolute_vertical"


def orientation_error_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between axes in degrees, sign-invariant."""
    d = abs(float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))))
    return math.degrees(math.acos(min(1.0, d)))


def articulation_metrics(tp_pairs: list[tuple[Articulation, Articulation]]):
    """(joint_acc, md_mean_by_class, oe_mean_by_class) over true-positive pairs.

    MD and OE are evaluated only where the predicted class matches; MD is
    reported only for revolute joints. An empty input reports (None, {}, {}).
    """
    if not tp_pairs:
        return None, {}, {}
    raw = _articulation_raw(tp_pairs)
    acc = raw["acc_num"] / raw["acc_den"]
    md_mean = {k: float(np.mean(v)) for k, v in raw["md"].items() if v}
    oe_mean = {k: float(np.mean(v)) for k, v in raw["oe"].items() if v}
    if raw["md_all"]:
        md_mean["pooled"] = float(np.mean(raw["md_all"]))
    if raw["oe_all"]:
        oe_mean["pooled"] = float(np.mean(raw["oe_all"]))
    return acc, md_mean, oe_mean


def _articulation_raw(tp_pairs) -> dict:
    md: dict[str, list[float]] = {}
    oe: dict[str, list[float]] = {}
    correct = 0
    for pred, gt in tp_pairs:
        cls_p, cls_g = joint_class(pred), joint_class(gt)
        if cls_p != cls_g:
            continue
        correct += 1
        oe.setdefault(cls_g, []).append(orientation_error_deg(pred.axis, gt.axis))
        if gt.joint_type == REVOLUTE:
            md.setdefault(cls_g, []).append(
                line_line_distance(pred.origin, pred.axis, gt.origin, gt.axis))
    return {"acc_num": correct, "acc_den": len(tp_pairs), "md": md, "oe": oe,
            "md_all": [x for v in md.values() for x in v],
            "oe_all": [x for v in oe.values() for x in v]}


def _mod_counts(tp_art_pairs, n_gt: int,
                oe_cutoff: float = OE_CUTOFF_DEG,
                md_cutoff: float = MD_CUTOFF_M) -> dict[str, int]:
    n_det = n_m = n_mo = n_mod = 0
    for pred, gt in tp_art_pairs:
        n_det += 1
        if joint_class(pred) != joint_class(gt):
            continue
        n_m += 1
        if orientation_error_deg(pred.axis, gt.axis) >= oe_cutoff:
            continue
        n_mo += 1
        if gt.joint_type == REVOLUTE:
            if line_line_distance(pred.origin, pred.axis, gt.origin, gt.axis) >= md_cutoff:
                continue
        n_mod += 1
    return {"PDet": n_det, "+M": n_m, "+MO": n_mo, "+MOD": n_mod, "n_gt": n_gt}


def mod_table(pred_sets: list, pred_arts: list[Articulation],
              gt_sets: list, gt_arts: list[Articulation], tau: float,
              match_radius: float = 0.0,
              oe_cutoff: float = OE_CUTOFF_DEG,
              md_cutoff: float = MD_CUTOFF_M) -> dict[str, float]:
    """Cumulative staging percentages over ground-truth parts.

    Each stage counts a ground-truth part only if all preceding conditions
    hold: detected (PDet), correct motion type (+M), OE < 10 deg (+MO), and
    MD < 0.25 m (+MOD; prismatic joints skip the MD condition).
    """
    if len(pred_sets) != len(pred_arts) or len(gt_sets) != len(gt_arts):
        raise ValueError("point sets and articulations must align")
    match = match_detections(pred_sets, gt_sets, tau, match_radius)
    pairs = [(pred_arts[pi], gt_arts[gi]) for pi, gi in match.tp_pairs()]
    counts = _mod_counts(pairs, len(gt_sets), oe_cutoff, md_cutoff)
    if counts["n_gt"] == 0:
        return {"PDet": 0.0, "+M": 0.0, "+MO": 0.0, "+MOD": 0.0}
    pct = 100.0 / counts["n_gt"]
    return {k: counts[k] * pct for k in ("PDet", "+M", "+MO", "+MOD")}


def box_coverage(boxes: list[Obb], gt_points: list[np.ndarray],
                 taus: list[float]) -> dict:
    """Coverage protocol for unscaled predictions: cov(B, M) = |V(M) in B| / |V(M)|.

    gt_points holds each part's world-coordinate vertices. A part is
    detected at threshold tau when its best box coverage reaches tau.
    """
    coverages = []
    for pts in gt_points:
        best = 0.0
        if len(pts):
            for box in boxes:
                frac = float(points_in_obb(np.asarray(pts, float), box, 0.0).mean())
                best = max(best, frac)
        coverages.append(best)
    out = {"coverage": coverages, "detection_rate": {}}
    for tau in taus:
        detected = sum(1 for c in coverages if c >= tau)
        out["detection_rate"][tau] = detected / len(gt_points) if gt_points else 0.0
    return out


@dataclass
class EvalReport:
    per_tau: dict[float, dict] = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            return x
        return json.dumps(clean({"per_tau": self.per_tau, "counts": self.counts}),
                          indent=1, sort_keys=True)

    def to_text(self) -> str:
        cols = ["tau", "P", "R", "F1", "JointAcc", "MD[m]", "OE[deg]",
                "PDet", "+M", "+MO", "+MOD"]
        rows = [cols]
        for tau in sorted(self.per_tau):
            m = self.per_tau[tau]
            acc = m.get("joint_acc")
            md = (m.get("md") or {}).get("pooled")
            oe = (m.get("oe") or {}).get("pooled")
            mod = m.get("mod", {})
            rows.append([
                f"{tau:.2f}", f"{m['precision']:.3f}", f"{m['recall']:.3f}",
                f"{m['f1']:.3f}",
                "n/a" if acc is None else f"{100 * acc:.1f}",
                "n/a" if md is None else f"{md:.3f}",
                "n/a" if oe is None else f"{oe:.3f}",
                f"{mod.get('PDet', 0):.1f}", f"{mod.get('+M', 0):.1f}",
                f"{mod.get('+MO', 0):.1f}", f"{mod.get('+MOD', 0):.1f}",
            ])
        widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
        return "\n".join("  ".join(r[i].rjust(widths[i]) for i in range(len(cols)))
                         for r in rows)

    def to_csv(self) -> str:
        lines = ["tau,precision,recall,f1,joint_acc,md_pooled,oe_pooled,pdet,m,mo,mod"]
        for tau in sorted(self.per_tau):
            m = self.per_tau[tau]
            acc = m.get("joint_acc")
            md = (m.get("md") or {}).get("pooled")
            oe = (m.get("oe") or {}).get("pooled")
            mod = m.get("mod", {})
            lines.append(",".join([
                f"{tau}", f"{m['precision']}", f"{m['recall']}", f"{m['f1']}",
                "" if acc is None else f"{acc}",
                "" if md is None else f"{md}",
                "" if oe is None else f"{oe}",
                f"{mod.get('PDet', '')}", f"{mod.get('+M', '')}",
                f"{mod.get('+MO', '')}", f"{mod.get('+MOD', '')}",
            ]))
        return "\n".join(lines)


def evaluate_scene(pred_sets: list, pred_arts: list[Articulation],
                   gt_sets: list, gt_arts: list[Articulation],
                   taus: list[float], match_radius: float = 0.0,
                   oe_cutoff: float = OE_CUTOFF_DEG,
                   md_cutoff: float = MD_CUTOFF_M) -> EvalReport:
    """Full metric suite at each tau; raw counts kept for pooling."""
    report = EvalReport()
    report.counts = {"predictions": len(pred_sets), "ground_truth": len(gt_sets)}
    for tau in taus:
        match = match_detections(pred_sets, gt_sets, tau, match_radius)
        tp = len(match.tp_pairs())
        precision = tp / len(pred_sets) if pred_sets else 0.0
        recall = tp / len(gt_sets) if gt_sets else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        pairs = [(pred_arts[pi], gt_arts[gi]) for pi, gi in match.tp_pairs()]
        acc, md, oe = articulation_metrics(pairs)
        raw = _articulation_raw(pairs) if pairs else None
        mod_counts = _mod_counts(pairs, len(gt_sets), oe_cutoff, md_cutoff)
        pct = 100.0 / len(gt_sets) if gt_sets else 0.0
        report.per_tau[tau] = {
            "precision": precision, "recall": recall, "f1": f1, "tp": tp,
            "joint_acc": acc, "md": md or None, "oe": oe or None,
            "mod": {k: mod_counts[k] * pct for k in ("PDet", "+M", "+MO", "+MOD")},
            "raw": {
                "tp": tp, "n_pred": len(pred_sets), "n_gt": len(gt_sets),
                "acc_num": raw["acc_num"] if raw else 0,
                "acc_den": raw["acc_den"] if raw else 0,
                "md_all": raw["md_all"] if raw else [],
                "oe_all": raw["oe_all"] if raw else [],
                "mod": mod_counts,
            },
        }
    return report


def pool_reports(reports: list[EvalReport], macro: bool = False) -> EvalReport:
    """Combine per-scene reports.

    Micro-averaging (default) sums raw counts across scenes; macro averages
    each scene's derived metrics with equal weight.
    """
    if not reports:
        return EvalReport()
    taus = sorted({t for r in reports for t in r.per_tau})
    pooled = EvalReport()
    pooled.counts = {
        "predictions": sum(r.counts.get("predictions", 0) for r in reports),
        "ground_truth": sum(r.counts.get("ground_truth", 0) for r in reports),
        "scenes": len(reports),
    }
    for tau in taus:
        if macro:
            per = [r.per_tau[tau] for r in reports if tau in r.per_tau]
            accs = [m["joint_acc"] for m in per if m["joint_acc"] is not None]
            mds = [(m["md"] or {}).get("pooled") for m in per]
            mds = [x for x in mds if x is not None]
            oes = [(m["oe"] or {}).get("pooled") for m in per]
            oes = [x for x in oes if x is not None]
            pooled.per_tau[tau] = {
                "precision": float(np.mean([m["precision"] for m in per])),
                "recall": float(np.mean([m["recall"] for m in per])),
                "f1": float(np.mean([m["f1"] for m in per])),
                "tp": sum(m["tp"] for m in per),
                "joint_acc": float(np.mean(accs)) if accs else None,
                "md": {"pooled": float(np.mean(mds))} if mds else None,
                "oe": {"pooled": float(np.mean(oes))} if oes else None,
                "mod": {k: float(np.mean([m["mod"][k] for m in per]))
                        for k in ("PDet", "+M", "+MO", "+MOD")},
            }
            continue
        tp = n_pred = n_gt = acc_num = acc_den = 0
        md_all: list[float] = []
        oe_all: list[float] = []
        mod = {"PDet": 0, "+M": 0, "+MO": 0, "+MOD": 0}
        for r in reports:
            if tau not in r.per_tau:
                continue
            raw = r.per_tau[tau]["raw"]
            tp += raw["tp"]
            n_pred += raw["n_pred"]
            n_gt += raw["n_gt"]
            acc_num += raw["acc_num"]
            acc_den += raw["acc_den"]
            md_all.extend(raw["md_all"])
            oe_all.extend(raw["oe_all"])
            for k in mod:
                mod[k] += raw["mod"][k]
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_gt if n_gt else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        pct = 100.0 / n_gt if n_gt else 0.0
        pooled.per_tau[tau] = {
            "precision": precision, "recall": recall, "f1": f1, "tp": tp,
            "joint_acc": acc_num / acc_den if acc_den else None,
            "md": {"pooled": float(np.mean(md_all))} if md_all else None,
            "oe": {"pooled": float(np.mean(oe_all))} if oe_all else None,
            "mod": {k: mod[k] * pct for k in ("PDet", "+M", "+MO", "+MOD")},
        }
    return pooled
