"""SE(3) rigid transforms and their least-squares estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


class DegenerateCorrespondenceError(ValueError):
    """Too few or rank-deficient correspondences for a unique transform."""


@dataclass(frozen=True)
class RigidTransform:
    """Rotation R and translation t, applied as p' = R @ p + t."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def about_z(angle_rad: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return RigidTransform(R, np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def rotation_angle_deg(self) -> float:
        """Geodesic rotation angle away from identity, in degrees."""
        trace = np.clip((np.trace(self.rotation) - 1.0) / 2.0, -1.0, 1.0)
        return float(np.degrees(np.arccos(trace)))

    def is_orthonormal(self, tol: float = ORTHONORMAL_TOL) -> bool:
        R = self.rotation
        return (
            np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "RigidTransform":
        return RigidTransform(np.asarray(d["rotation"]), np.asarray(d["translation"]))


def estimate_rigid_transform(src_pts: np.ndarray, dst_pts: np.ndarray) -> RigidTransform:
    """Least-squares R, t minimizing sum ||R src_i + t - dst_i||^2.

    Cross-covariance SVD (Kabsch) with reflection correction. Requires at
    least 3 non-collinear pairs.
    """
    src = np.asarray(src_pts, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst_pts, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise DegenerateCorrespondenceError("source/destination lengths differ")
    if len(src) < 3:
        raise DegenerateCorrespondenceError(f"need >= 3 pairs, got {len(src)}")

    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    H = (src - src_c).T @ (dst - dst_c)
    U, S, Vt = np.linalg.svd(H)
    # collinear points leave the rotation about the line undetermined
    scale = max(S[0], 1e-30)
    if S[1] / scale < 1e-9:
        raise DegenerateCorrespondenceError("correspondences are collinear")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = dst_c - R @ src_c
    return RigidTransform(R, t)


def estimate_rigid_transform_batch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized Kabsch over (b, n, 3) correspondence batches.

    Returns (rotations (b,3,3), translations (b,3), ok (b,) bool); entries
    with collinear configurations are flagged not-ok instead of raising.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    src_c = src.mean(axis=1, keepdims=True)
    dst_c = dst.mean(axis=1, keepdims=True)
    H = np.matmul((src - src_c).transpose(0, 2, 1), dst - dst_c)
    U, S, Vt = np.linalg.svd(H)
    ok = S[:, 1] > 1e-9 * np.maximum(S[:, 0], 1e-30)
    det = np.linalg.det(np.matmul(Vt.transpose(0, 2, 1), U.transpose(0, 2, 1)))
    diag = np.zeros_like(H)
    diag[:, 0, 0] = 1.0
    diag[:, 1, 1] = 1.0
    diag[:, 2, 2] = np.sign(det)
    R = np.matmul(np.matmul(Vt.transpose(0, 2, 1), diag), U.transpose(0, 2, 1))
    t = dst_c[:, 0, :] - np.einsum("bij,bj->bi", R, src_c[:, 0, :])
    return R, t, ok
