"""Orthographic camera, landmark loss, pose estimation, fitting-error metric.

Pixel coordinates use a top-left origin with y pointing down.  The camera
maps a 3D point p to s * (R p)_{xy} + t, with R built from intrinsic
pitch-yaw-roll Euler angles (rotate about x, then y, then z).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mesh import LandmarkSpec, TriangleMesh
from .rotations import polar_decompose


def euler_matrix(pitch, yaw, roll):
    """Rotation from intrinsic pitch (x), yaw (y), roll (z) angles in radians."""
    ca, sa = np.cos(pitch), np.sin(pitch)
    cb, sb = np.cos(yaw), np.sin(yaw)
    cc, sc = np.cos(roll), np.sin(roll)
    Rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    Rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return Rx @ Ry @ Rz


def euler_from_matrix(R):
    """Inverse of :func:`euler_matrix`; falls back to roll = 0 at gimbal lock."""
    sb = float(np.clip(R[0, 2], -1.0, 1.0))
    yaw = np.arcsin(sb)
    if abs(sb) < 1.0 - 1e-12:
        pitch = np.arctan2(-R[1, 2], R[2, 2])
        roll = np.arctan2(-R[0, 1], R[0, 0])
    else:
        pitch = np.arctan2(R[2, 1], R[1, 1])
        roll = 0.0
    return float(pitch), float(yaw), float(roll)


@dataclass(frozen=True)
class ProjectionParams:
    """Orthographic camera: pixel scale, pitch/yaw/roll rotation, 2D translation."""

    s: float
    euler: tuple
    t: np.ndarray

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"scale must be positive, got {self.s}")
        object.__setattr__(self, "euler", tuple(float(a) for a in self.euler))
        if len(self.euler) != 3:
            raise ValueError("euler must be (pitch, yaw, roll)")
        t = np.ascontiguousarray(self.t, dtype=np.float64).reshape(2)
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(1.0, (0.0, 0.0, 0.0), np.zeros(2))

    @property
    def rotation(self):
        return euler_matrix(*self.euler)

    def pi_matrix(self):
        """The 2x3 scaled axis-dropping projector s * [I2 | 0]."""
        return self.s * np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

    def to_document(self):
        pitch, yaw, roll = self.euler
        return {
            "s": float(self.s), "pitch": pitch, "yaw": yaw, "roll": roll,
            "tx": float(self.t[0]), "ty": float(self.t[1]),
        }

    @classmethod
    def from_document(cls, doc):
        return cls(doc["s"], (doc["pitch"], doc["yaw"], doc["roll"]),
                   np.array([doc["tx"], doc["ty"]]))


def write_camera(path, params: ProjectionParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params.to_document(), fh, indent=1)
        fh.write("\n")


def read_camera(path) -> ProjectionParams:
    with open(path, "r", encoding="utf-8") as fh:
        return ProjectionParams.from_document(json.load(fh))


def project(params: ProjectionParams, p):
    """Image position(s) of 3D point(s): s * (R p)_{xy} + t.  Accepts (3,) or (k, 3)."""
    p = np.asarray(p, dtype=np.float64)
    rotated = p @ params.rotation.T
    return params.s * rotated[..., :2] + params.t


def landmark_loss(params: ProjectionParams, mesh: TriangleMesh, lms: LandmarkSpec) -> float:
    """Summed squared pixel distance between projected landmarks and targets."""
    lms.validate_for(mesh)
    q = project(params, mesh.vertices[lms.indices])
    d = q - lms.points2d
    return float((d * d).sum())


def fitting_error(e_lan: float, count: int = 68) -> float:
    """Root-mean-square landmark fitting error sqrt(E_lan / count)."""
    if e_lan < 0:
        raise ValueError("landmark loss cannot be negative")
    return float(np.sqrt(e_lan / count))


def estimate_params(mesh: TriangleMesh, lms: LandmarkSpec) -> ProjectionParams:
    """Orthographic pose from 3D-2D landmark pairs.

    Stage 1 solves the unconstrained linear least squares for a 2x3 matrix M
    and translation t; stage 2 projects M onto scaled-rotation rows: its rows
    are completed to a 3x3 via their cross product, the rotation factor of the
    polar decomposition is kept, and the scale is the mean of M's two singular
    values.  The translation is then re-fit for the projected camera.  Exact
    (up to the Euler chart) whenever the targets come from a noiseless
    orthographic camera.
    """
    lms.validate_for(mesh)
    P = mesh.vertices[lms.indices]
    Q = lms.points2d
    k = len(P)
    if k < 4:
        raise ValueError("pose estimation needs at least 4 landmarks")
    design = np.concatenate([P, np.ones((k, 1))], axis=1)
    if np.linalg.matrix_rank(design, tol=1e-9 * max(1.0, float(np.abs(design).max()))) < 4:
        raise ValueError("landmark configuration is rank-deficient for pose estimation")
    sol, *_ = np.linalg.lstsq(design, Q, rcond=None)
    M = sol[:3].T  # (2, 3)
    r3 = np.cross(M[0], M[1])
    M3 = np.vstack([M, r3])
    R, _ = polar_decompose(M3)
    sigma = np.linalg.svd(M, compute_uv=False)
    s = float((sigma[0] + sigma[1]) / 2.0)
    if not s > 0:
        raise ValueError("degenerate pose: zero projection scale")
    t = (Q - s * (P @ R.T)[:, :2]).mean(axis=0)
    return ProjectionParams(s, euler_from_matrix(R), t)
