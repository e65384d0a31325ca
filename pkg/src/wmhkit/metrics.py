"""Segmentation quality metrics: voxel Dice, lesion Dice, volume difference,
and the precision-recall curve with its trapezoidal area."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import wmh_volume_ml
from .errors import NoPositives, ZeroReference
from .lesions import LesionMatching, label_components, match_lesions
from .volume import Volume3D, require_binary, require_same_dims


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray  # distinct posterior values, descending
    precision: np.ndarray
    recall: np.ndarray
    auc: float


@dataclass(frozen=True)
class MetricReport:
    dice_pixel: float
    dice_lesion: float
    avd_percent: float
    auc_pr: float | None
    counts: dict[str, int]

    def to_dict(self) -> dict:
        out = {
            "dice_pixel": self.dice_pixel,
            "dice_lesion": self.dice_lesion,
            "avd_percent": self.avd_percent,
            "counts": dict(self.counts),
        }
        if self.auc_pr is not None:
            out["auc_pr"] = self.auc_pr
        return out


def dice_pixel(pred: Volume3D, gt: Volume3D) -> float:
    """2|P∩G| / (|P|+|G|), with the both-empty case defined as 1.0."""
    require_same_dims(pred, gt, "masks")
    require_binary(pred, "pred mask")
    require_binary(gt, "gt mask")
    p = pred.data > 0
    g = gt.data > 0
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def dice_lesion(matching: LesionMatching) -> float:
    """Detection Dice over lesions: 2·TP / (2·TP + FP + FN); 1.0 if all zero."""
    tp, fp, fn = matching.tp_lesions, matching.fp_lesions, matching.fn_lesions
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def abs_volume_diff_pct(pred_ml: float, gt_ml: float) -> float:
    """Absolute volume difference as a percentage of the reference volume."""
    if gt_ml <= 0:
        raise ZeroReference(f"reference volume must be positive, got {gt_ml}")
    return 100.0 * abs(pred_ml - gt_ml) / gt_ml


def pr_curve_auc(post: Volume3D, gt: Volume3D, mask: Volume3D) -> PRCurve:
    """Precision-recall curve over in-mask voxels.

    One operating point per distinct in-mask posterior value v (descending),
    predicting positive where posterior >= v. The area is the trapezoid over
    recall, anchored at (recall 0, precision of the first operating point).
    """
    require_same_dims(post, gt, "posterior and gt")
    require_same_dims(post, mask, "posterior and mask")
    require_binary(gt, "gt mask")
    require_binary(mask, "brain mask")
    inside = mask.data > 0
    scores = post.data[inside].astype(np.float64)
    labels = gt.data[inside] > 0
    npos = int(labels.sum())
    if npos == 0:
        raise NoPositives("reference mask holds no in-mask positive voxel")

    order = np.argsort(-scores, kind="stable")
    scores_sorted = scores[order]
    labels_sorted = labels[order]

    tp_cum = np.cumsum(labels_sorted)
    # last index of each distinct value in the sorted order
    distinct_last = np.nonzero(np.diff(scores_sorted, append=-np.inf))[0]
    thresholds = scores_sorted[distinct_last]
    tp = tp_cum[distinct_last].astype(np.float64)
    npred = (distinct_last + 1).astype(np.float64)

    precision = tp / npred
    recall = tp / npos

    r = np.concatenate(([0.0], recall))
    p = np.concatenate(([precision[0]], precision))
    auc = float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))
    return PRCurve(thresholds=thresholds, precision=precision, recall=recall, auc=auc)


def pr_curve_tsv(curve: PRCurve) -> str:
    lines = ["threshold\tprecision\trecall"]
    for t, p, r in zip(curve.thresholds, curve.precision, curve.recall):
        lines.append(f"{t:.9g}\t{p:.9g}\t{r:.9g}")
    return "\n".join(lines) + "\n"


def metric_report(
    pred: Volume3D,
    gt: Volume3D,
    posterior: Volume3D | None = None,
    mask: Volume3D | None = None,
    connectivity: int = 26,
) -> MetricReport:
    """All Results-style metrics for one subject.

    PR-AUC is computed only when a posterior map is supplied (with a brain
    mask); otherwise it is absent from the report, not zero.
    """
    pred_set = label_components(pred, connectivity)
    gt_set = label_components(gt, connectivity)
    matching = match_lesions(pred_set, gt_set)

    p = pred.data > 0
    g = gt.data > 0
    counts = {
        "tp_voxels": int((p & g).sum()),
        "fp_voxels": int((p & ~g).sum()),
        "fn_voxels": int((~p & g).sum()),
        "tp_lesions": matching.tp_lesions,
        "fp_lesions": matching.fp_lesions,
        "fn_lesions": matching.fn_lesions,
    }

    auc = None
    if posterior is not None:
        if mask is None:
            raise ValueError("PR metrics need a brain mask alongside the posterior")
        auc = pr_curve_auc(posterior, gt, mask).auc

    return MetricReport(
        dice_pixel=dice_pixel(pred, gt),
        dice_lesion=dice_lesion(matching),
        avd_percent=abs_volume_diff_pct(wmh_volume_ml(pred), wmh_volume_ml(gt)),
        auc_pr=auc,
        counts=counts,
    )
