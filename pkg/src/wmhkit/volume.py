"""Voxel grid container and in-mask intensity normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMask, NonBinaryInput, OrientationMismatch, ShapeMismatch

CANONICAL_ORIENTATION = ("R", "A", "S")

# Anatomical axis (0=left/right, 1=posterior/anterior, 2=inferior/superior)
# named by each code, and whether the code points along the negative direction.
AXIS_OF_CODE = {"R": 0, "L": 0, "A": 1, "P": 1, "S": 2, "I": 2}
NEGATIVE_CODES = frozenset({"L", "P", "I"})


@dataclass(frozen=True)
class Volume3D:
    """A 3D scalar field with voxel spacing (mm) and anatomical orientation.

    ``data`` is stored as float32 with shape (nx, ny, nz). ``orientation``
    names the anatomical direction of each *increasing* index axis, e.g.
    ("R", "A", "S") for a canonical RAS volume. The same container carries
    intensities, posterior probabilities, binary masks, and label maps.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    orientation: tuple[str, str, str] = CANONICAL_ORIENTATION

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"volume data must be 3D, got ndim={arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"volume dims must be positive, got {arr.shape}")
        object.__setattr__(self, "data", arr)

        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        object.__setattr__(self, "spacing", spacing)

        ori = tuple(str(c) for c in self.orientation)
        if len(ori) != 3 or any(c not in AXIS_OF_CODE for c in ori):
            raise ValueError(f"bad orientation codes {self.orientation}")
        if len({AXIS_OF_CODE[c] for c in ori}) != 3:
            raise ValueError(f"orientation axes must be mutually orthogonal, got {ori}")
        object.__setattr__(self, "orientation", ori)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def with_data(self, data: np.ndarray) -> "Volume3D":
        """New volume on the same grid with replaced voxel values."""
        return Volume3D(data, self.spacing, self.orientation)


def is_binary(v: Volume3D) -> bool:
    return bool(np.isin(v.data, (0.0, 1.0)).all())


def require_binary(v: Volume3D, name: str = "mask") -> None:
    if not is_binary(v):
        raise NonBinaryInput(f"{name} must contain only 0/1 values")


def require_same_dims(a: Volume3D, b: Volume3D, what: str = "volumes") -> None:
    if a.dims != b.dims:
        raise ShapeMismatch(f"{what} have different dims: {a.dims} vs {b.dims}")


def require_same_grid(a: Volume3D, b: Volume3D, what: str = "volumes") -> None:
    require_same_dims(a, b, what)
    if a.orientation != b.orientation:
        raise OrientationMismatch(
            f"{what} have different orientations: {a.orientation} vs {b.orientation}"
        )
    if not np.allclose(a.spacing, b.spacing, rtol=0, atol=1e-5):
        raise OrientationMismatch(
            f"{what} have different spacing: {a.spacing} vs {b.spacing}"
        )


def normalize_intensity(v: Volume3D, mask: Volume3D) -> Volume3D:
    """Z-score intensities inside the brain mask; zero everything outside.

    Uses the in-mask mean and *population* standard deviation, so downstream
    networks see a stable intensity scale regardless of scanner units.

    Raises DegenerateMask when the mask selects fewer than two voxels or the
    in-mask intensities have zero variance.
    """
    require_same_dims(v, mask, "volume and mask")
    require_binary(mask, "brain mask")
    inside = mask.data > 0
    n = int(inside.sum())
    if n < 2:
        raise DegenerateMask(f"mask selects {n} voxels; need at least 2")
    vals = v.data[inside].astype(np.float64)
    mu = vals.mean()
    sigma = vals.std()  # population SD
    if sigma == 0.0:
        raise DegenerateMask("in-mask intensity variance is zero")
    out = np.zeros_like(v.data)
    out[inside] = ((vals - mu) / sigma).astype(np.float32)
    return v.with_data(out)
