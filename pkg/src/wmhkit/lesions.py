"""Connected-component lesion extraction and pred/reference lesion matching."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Volume3D, require_binary, require_same_dims

CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}
DEFAULT_CONNECTIVITY = 26


@dataclass(frozen=True)
class Lesion:
    id: int
    voxel_count: int
    volume_ml: float
    bbox: tuple[int, int, int, int, int, int]  # (x0, y0, z0, x1, y1, z1) inclusive


@dataclass(frozen=True)
class LesionSet:
    labels: Volume3D  # integer labels stored as float32; 0 = background
    lesions: tuple[Lesion, ...]
    connectivity: int

    @property
    def count(self) -> int:
        return len(self.lesions)

    @property
    def foreground_voxels(self) -> int:
        return sum(l.voxel_count for l in self.lesions)


@dataclass(frozen=True)
class LesionMatching:
    pairs: tuple[tuple[int, int], ...]  # (pred_id, gt_id), overlap >= 1 voxel
    unmatched_pred: tuple[int, ...]  # predictions with zero reference overlap
    unmatched_gt: tuple[int, ...]  # reference lesions with zero prediction overlap
    n_pred: int
    n_gt: int

    @property
    def tp_lesions(self) -> int:
        """Reference lesions touched by at least one predicted voxel."""
        return self.n_gt - len(self.unmatched_gt)

    @property
    def fp_lesions(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn_lesions(self) -> int:
        return len(self.unmatched_gt)


def label_components(mask: Volume3D, connectivity: int = DEFAULT_CONNECTIVITY) -> LesionSet:
    """Label connected foreground components under 6/18/26-connectivity.

    Lesion ids are 1..K, assigned by descending voxel count with ties broken
    by the lowest x-fastest linear index.
    """
    require_binary(mask, "lesion mask")
    if connectivity not in CONNECTIVITY_RANK:
        raise ValueError(f"connectivity must be 6, 18, or 26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, CONNECTIVITY_RANK[connectivity])
    raw_labels, n = ndimage.label(mask.data > 0, structure=structure)

    relabeled = np.zeros_like(raw_labels)
    lesions: list[Lesion] = []
    if n > 0:
        flat = raw_labels.ravel(order="F")
        present, first_idx, counts = np.unique(flat, return_index=True, return_counts=True)
        fg = present != 0
        order = sorted(
            zip(present[fg], counts[fg], first_idx[fg]),
            key=lambda t: (-t[1], t[2]),
        )
        voxel_ml = mask.voxel_volume_mm3 / 1000.0
        remap = np.zeros(n + 1, dtype=raw_labels.dtype)
        for new_id, (old, cnt, _) in enumerate(order, start=1):
            remap[old] = new_id
            xs, ys, zs = np.nonzero(raw_labels == old)
            lesions.append(
                Lesion(
                    id=new_id,
                    voxel_count=int(cnt),
                    volume_ml=float(cnt) * voxel_ml,
                    bbox=(
                        int(xs.min()), int(ys.min()), int(zs.min()),
                        int(xs.max()), int(ys.max()), int(zs.max()),
                    ),
                )
            )
        relabeled = remap[raw_labels]

    labels_vol = mask.with_data(relabeled.astype(np.float32))
    return LesionSet(labels=labels_vol, lesions=tuple(lesions), connectivity=connectivity)


def match_lesions(pred: LesionSet, gt: LesionSet) -> LesionMatching:
    """Detection-style matching between predicted and reference lesions.

    A reference lesion counts as detected when any predicted voxel overlaps
    it; a predicted lesion is a false positive only when it overlaps no
    reference voxel at all. Pairs are formed greedily by descending overlap
    (ties to the smaller reference id, then smaller predicted id); extra
    predictions collapsing onto an already-paired reference lesion are
    neither paired nor counted as false positives.
    """
    require_same_dims(pred.labels, gt.labels, "label maps")
    p = pred.labels.data.astype(np.int64)
    g = gt.labels.data.astype(np.int64)

    both = (p > 0) & (g > 0)
    overlaps: dict[tuple[int, int], int] = {}
    if both.any():
        keys = p[both] * (g.max() + 1) + g[both]
        uniq, cnt = np.unique(keys, return_counts=True)
        for k, c in zip(uniq, cnt):
            overlaps[(int(k) // (int(g.max()) + 1), int(k) % (int(g.max()) + 1))] = int(c)

    pred_hit = {pid for pid, _ in overlaps}
    gt_hit = {gid for _, gid in overlaps}

    pairs: list[tuple[int, int]] = []
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    for (pid, gid), _ in sorted(overlaps.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0])):
        if pid in used_pred or gid in used_gt:
            continue
        pairs.append((pid, gid))
        used_pred.add(pid)
        used_gt.add(gid)

    unmatched_pred = tuple(l.id for l in pred.lesions if l.id not in pred_hit)
    unmatched_gt = tuple(l.id for l in gt.lesions if l.id not in gt_hit)
    return LesionMatching(
        pairs=tuple(sorted(pairs, key=lambda t: t[1])),
        unmatched_pred=unmatched_pred,
        unmatched_gt=unmatched_gt,
        n_pred=pred.count,
        n_gt=gt.count,
    )


def lesion_table_csv(lesions: LesionSet) -> str:
    """Per-lesion table as CSV text: id, voxels, ml, bbox bounds."""
    buf = io.StringIO()
    buf.write("id,voxels,ml,x0,y0,z0,x1,y1,z1\n")
    for l in lesions.lesions:
        buf.write(f"{l.id},{l.voxel_count},{l.volume_ml:.6f},{','.join(str(b) for b in l.bbox)}\n")
    return buf.getvalue()
