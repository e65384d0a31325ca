"""Deterministic axis reorientation between canonical RAS and processing planes.

Every operation here is a pure signed index permutation: no interpolation,
no resampling. Per-plane posteriors computed on reformatted volumes can
therefore be mapped back voxel-aligned into the canonical frame and fused.

Plane permutation table (canonical axes -> output axes, slice axis last):

* axial:    (x, y, z)  identity; axial slices are xy-planes
* coronal:  (x, z, y)  slices advance along y
* sagittal: (y, z, x)  slices advance along x
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .volume import AXIS_OF_CODE, CANONICAL_ORIENTATION, NEGATIVE_CODES, Volume3D


class PlaneOrientation(Enum):
    AXIAL = "axial"
    CORONAL = "coronal"
    SAGITTAL = "sagittal"


# out axis i takes canonical axis PERM[plane][i]
_PLANE_PERM = {
    PlaneOrientation.AXIAL: (0, 1, 2),
    PlaneOrientation.CORONAL: (0, 2, 1),
    PlaneOrientation.SAGITTAL: (1, 2, 0),
}


def plane_permutation(plane: PlaneOrientation) -> tuple[int, int, int]:
    """Axis permutation applied by ``reformat_to`` for this plane."""
    return _PLANE_PERM[plane]


def plane_permutation_matrix(plane: PlaneOrientation) -> np.ndarray:
    """The signed-permutation matrix form of the plane mapping (all signs +1)."""
    perm = _PLANE_PERM[plane]
    mat = np.zeros((3, 3), dtype=int)
    for out_axis, in_axis in enumerate(perm):
        mat[out_axis, in_axis] = 1
    return mat


def _permute(v: Volume3D, perm: tuple[int, int, int]) -> Volume3D:
    data = np.ascontiguousarray(v.data.transpose(perm))
    spacing = tuple(v.spacing[p] for p in perm)
    orientation = tuple(v.orientation[p] for p in perm)
    return Volume3D(data, spacing, orientation)


def to_canonical(v: Volume3D) -> Volume3D:
    """Permute/flip axes so the volume is in RAS order, values untouched."""
    flip = [code in NEGATIVE_CODES for code in v.orientation]
    perm = [0, 0, 0]
    for axis, code in enumerate(v.orientation):
        perm[AXIS_OF_CODE[code]] = axis
    data = v.data
    if any(flip):
        slicer = tuple(slice(None, None, -1) if f else slice(None) for f in flip)
        data = data[slicer]
    data = np.ascontiguousarray(data.transpose(perm))
    spacing = tuple(v.spacing[p] for p in perm)
    return Volume3D(data, spacing, CANONICAL_ORIENTATION)


def reformat_to(v: Volume3D, plane: PlaneOrientation) -> Volume3D:
    """Reformat a canonical RAS volume so the plane's slice axis comes last."""
    if v.orientation != CANONICAL_ORIENTATION:
        raise ValueError(f"reformat_to expects a canonical RAS volume, got {v.orientation}")
    return _permute(v, _PLANE_PERM[plane])


def reformat_from(v: Volume3D, plane: PlaneOrientation) -> Volume3D:
    """Exact inverse of ``reformat_to`` for the same plane."""
    perm = _PLANE_PERM[plane]
    inverse = tuple(int(i) for i in np.argsort(perm))
    return _permute(v, inverse)
