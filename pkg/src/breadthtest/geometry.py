"""Unit-sphere normalization, mean directions and Householder alignment.

A cloud is an ``(N, d)`` float array whose rows are unit vectors. The
reflection ``H = I - 2 u u^T`` is never formed; it is applied as one
matrix-vector product followed by a rank-1 update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMean, DimensionMismatch, InputError, ZeroVector

ZERO_NORM_TOL = 1e-12
IDENTITY_TOL = 1e-9


def as_cloud(data, dtype=np.float64) -> np.ndarray:
    """Validate shape and return ``data`` as a 2-D array of ``dtype``."""
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim != 2:
        raise InputError(f"expected a 2-D (rows, dim) array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InputError("cloud must contain at least one row")
    if arr.shape[1] < 2:
        raise InputError(f"cloud dimension must be >= 2, got {arr.shape[1]}")
    return arr


def normalize_rows(raw, dtype=np.float64) -> np.ndarray:
    """Project every row onto the unit sphere.

    Norms are computed in float64 whatever ``dtype`` the result is stored in.

    Raises
    ------
    ZeroVector
        If some row has norm below 1e-12.
    """
    arr = as_cloud(raw, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1)
    bad = np.flatnonzero(~(norms >= ZERO_NORM_TOL))
    if bad.size:
        raise ZeroVector(int(bad[0]))
    return (arr / norms[:, None]).astype(dtype, copy=False)


def mean_direction(cloud) -> tuple[np.ndarray, float]:
    """Return the unit mean direction of ``cloud`` and the norm of its mean."""
    arr = as_cloud(cloud)
    mean = arr.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < ZERO_NORM_TOL:
        raise DegenerateMean(f"mean resultant norm {norm:.3g} is below {ZERO_NORM_TOL:g}")
    return mean / norm, norm


@dataclass(frozen=True)
class HouseholderAlignment:
    """Reflection across the hyperplane normal to ``axis``.

    ``is_identity`` is set when the two mean directions coincide, in which
    case ``axis`` is all zeros and applying the alignment is a no-op.
    """

    axis: np.ndarray
    is_identity: bool

    @property
    def dim(self) -> int:
        return self.axis.shape[0]

    def matrix(self) -> np.ndarray:
        """Dense ``d x d`` reflection. For diagnostics only."""
        if self.is_identity:
            return np.eye(self.dim)
        return np.eye(self.dim) - 2.0 * np.outer(self.axis, self.axis)


def build_alignment(x_dir, y_dir) -> HouseholderAlignment:
    """Householder reflection mapping unit vector ``x_dir`` onto ``y_dir``."""
    x_dir = np.asarray(x_dir, dtype=np.float64)
    y_dir = np.asarray(y_dir, dtype=np.float64)
    if x_dir.shape != y_dir.shape or x_dir.ndim != 1:
        raise DimensionMismatch(f"direction shapes differ: {x_dir.shape} vs {y_dir.shape}")
    diff = x_dir - y_dir
    dist = float(np.linalg.norm(diff))
    if dist < IDENTITY_TOL:
        return HouseholderAlignment(axis=np.zeros_like(x_dir), is_identity=True)
    return HouseholderAlignment(axis=diff / dist, is_identity=False)


def apply_alignment(cloud, alignment: HouseholderAlignment) -> np.ndarray:
    """Reflect every row: ``X' = X - 2 (X u) u^T``."""
    arr = as_cloud(cloud, dtype=np.float64)
    if arr.shape[1] != alignment.dim:
        raise DimensionMismatch(
            f"cloud dimension {arr.shape[1]} != alignment dimension {alignment.dim}"
        )
    if alignment.is_identity:
        return arr
    u = alignment.axis
    return arr - 2.0 * np.outer(arr @ u, u)


def align_to(x_cloud, y_cloud) -> tuple[np.ndarray, HouseholderAlignment]:
    """Reflect ``x_cloud`` so its mean direction matches ``y_cloud``'s."""
    x_dir, _ = mean_direction(x_cloud)
    y_dir, _ = mean_direction(y_cloud)
    if x_dir.shape != y_dir.shape:
        raise DimensionMismatch(f"clouds have dimensions {x_dir.size} and {y_dir.size}")
    alignment = build_alignment(x_dir, y_dir)
    return apply_alignment(x_cloud, alignment), alignment
