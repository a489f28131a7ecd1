"""Rigid camera poses and the distance used to compare them.

Poses are camera-to-world homogeneous 4x4 matrices. The camera frame follows
the x-right, y-down, z-forward convention, so the third rotation column is the
viewing direction in world coordinates.

Numerical policy: validation tolerances are fixed module constants; computed
products (relative transforms, compositions) are trusted as-is and never
re-orthogonalized, so downstream consumers see exactly the arithmetic result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadBottomRow, NotRigid, ValidationError

# Frobenius tolerance for R^T R = I and for |det R - 1| at validation time.
RIGIDITY_TOLERANCE = 1e-6

_BOTTOM_ROW = np.array([0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Pose4:
    """A 4x4 camera-to-world transform.

    Construction normalizes to a read-only float64 array but performs no
    rigidity checks; ``validate_pose`` is the checked entry point for
    untrusted data.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError(f"pose must be 4x4, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @property
    def viewing_axis(self) -> np.ndarray:
        """World-frame direction the camera looks along (third rotation column)."""
        return self.matrix[:3, 2]


def validate_pose(matrix: object) -> Pose4:
    """Check an untrusted 4x4 (or flat 16-entry) matrix and wrap it.

    The bottom row must equal [0, 0, 0, 1] exactly; the rotation block must
    satisfy ||R^T R - I||_F <= 1e-6 and |det R - 1| <= 1e-6.
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape == (16,):
        m = m.reshape(4, 4)
    if m.shape != (4, 4):
        raise ValidationError(f"pose must be 4x4 or flat 16, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("pose contains non-finite entries")
    if not np.array_equal(m[3], _BOTTOM_ROW):
        raise BadBottomRow(f"bottom row {m[3].tolist()} != [0, 0, 0, 1]")
    r = m[:3, :3]
    ortho_defect = np.linalg.norm(r.T @ r - np.eye(3))
    if ortho_defect > RIGIDITY_TOLERANCE:
        raise NotRigid(f"R^T R deviates from I by {ortho_defect:.3e}")
    det = np.linalg.det(r)
    if abs(det - 1.0) > RIGIDITY_TOLERANCE:
        raise NotRigid(f"det R = {det:.9f}, expected 1 within {RIGIDITY_TOLERANCE}")
    return Pose4(m)


def identity_pose() -> Pose4:
    return Pose4(np.eye(4))


def pose_from_parts(rotation: np.ndarray, translation: np.ndarray) -> Pose4:
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    return Pose4(m)


def translation_pose(offset: np.ndarray) -> Pose4:
    return pose_from_parts(np.eye(3), np.asarray(offset, dtype=float))


def rotation_pose(axis: str | np.ndarray, angle: float) -> Pose4:
    """Pure rotation about a camera axis ('x' | 'y' | 'z') or arbitrary unit vector."""
    if isinstance(axis, str):
        try:
            u = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}[axis]
        except KeyError:
            raise ValidationError(f"unknown axis name {axis!r}") from None
        u = np.array(u)
    else:
        u = np.asarray(axis, dtype=float)
        n = np.linalg.norm(u)
        if n == 0:
            raise ValidationError("rotation axis must be nonzero")
        u = u / n
    # Rodrigues formula.
    k = np.array([
        [0.0, -u[2], u[1]],
        [u[2], 0.0, -u[0]],
        [-u[1], u[0], 0.0],
    ])
    r = np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)
    return pose_from_parts(r, np.zeros(3))


def compose(a: Pose4, b: Pose4) -> Pose4:
    return Pose4(a.matrix @ b.matrix)


def inverse_pose(pose: Pose4) -> Pose4:
    """Closed-form rigid inverse [R^T, -R^T p]; no matrix solve."""
    r = pose.rotation
    m = np.eye(4)
    m[:3, :3] = r.T
    m[:3, 3] = -r.T @ pose.translation
    return Pose4(m)


def relative_transform(current: Pose4, target: Pose4) -> Pose4:
    """Transform taking ``current`` to ``target``: inverse(current) @ target.

    The raw product is returned untouched, so current @ result reproduces
    target to machine precision but not bit-exactly.
    """
    return Pose4(inverse_pose(current).matrix @ target.matrix)


def rotation_geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle on SO(3): arccos((trace(r1^T r2) - 1) / 2), clamped.

    Clamping keeps roundoff from pushing the cosine outside [-1, 1]; values
    land in [0, pi].
    """
    cos = (float(np.trace(np.asarray(r1).T @ np.asarray(r2))) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, cos)))


@dataclass(frozen=True)
class Se3DistanceWeights:
    """Non-negative weights mixing translational and rotational distance."""

    translation: float = 1.0
    rotation: float = 1.0

    def __post_init__(self) -> None:
        if self.translation < 0 or self.rotation < 0:
            raise ValidationError("distance weights must be non-negative")
        if self.translation == 0 and self.rotation == 0:
            raise ValidationError("at least one distance weight must be positive")


DEFAULT_WEIGHTS = Se3DistanceWeights(1.0, 1.0)


def se3_distance(a: Pose4, b: Pose4, weights: Se3DistanceWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted sum of translation Euclidean distance and rotation geodesic angle.

    Left-invariant: premultiplying both arguments by a common rigid transform
    leaves the value unchanged (up to roundoff), because the translation gap
    rotates rigidly and the relative rotation is conjugated.
    """
    dt = float(np.linalg.norm(a.translation - b.translation))
    dr = rotation_geodesic_angle(a.rotation, b.rotation)
    return weights.translation * dt + weights.rotation * dr


def batch_se3_distances(
    rels: np.ndarray, references: np.ndarray, weights: Se3DistanceWeights = DEFAULT_WEIGHTS
) -> np.ndarray:
    """Pairwise se3_distance between stacks of matrices, shape (M,4,4) x (K,4,4) -> (M,K).

    Matches the scalar routine to roundoff; used where per-pair Python calls
    would dominate runtime.
    """
    rels = np.asarray(rels, dtype=float)
    references = np.asarray(references, dtype=float)
    dt = np.linalg.norm(
        rels[:, None, :3, 3] - references[None, :, :3, 3], axis=-1
    )
    traces = np.einsum("mji,kji->mk", rels[:, :3, :3], references[:, :3, :3])
    cos = np.clip((traces - 1.0) / 2.0, -1.0, 1.0)
    return weights.translation * dt + weights.rotation * np.arccos(cos)
