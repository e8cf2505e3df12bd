"""Dense 3x3 rotation algebra: polar decomposition, rotation log/exp, axis-angle.

All functions accept plain (3, 3) arrays; the batched variants accept
(..., 3, 3) stacks and are what the hot paths use.  Rotations are proper
(det +1); angles live in [0, pi], and the log refuses the numerically
ambiguous neighborhood of pi, which face deformations never reach.
"""

from __future__ import annotations

import numpy as np

ANGLE_CAP_MARGIN = 1e-6  # log/axis-angle refuse angles within this margin of pi


class AxisAmbiguityError(ValueError):
    """Rotation angle too close to pi; the axis is numerically ill-conditioned."""


def _check_finite(T):
    T = np.asarray(T, dtype=np.float64)
    if not np.all(np.isfinite(T)):
        raise ValueError("matrix has non-finite entries")
    return T


def polar_decompose(T):
    """Split T into a proper rotation R and symmetric scale/shear S with T = R S.

    Uses the SVD.  For det(T) < 0 the reflection is absorbed into S by
    negating the direction of the smallest singular value, keeping R proper.

    Returns
    -------
    (R, S) : tuple of (3, 3) ndarrays
    """
    T = _check_finite(T)
    R, S = polar_decompose_many(T.reshape(1, 3, 3))
    return R[0], S[0]


def polar_decompose_many(T):
    """Batched :func:`polar_decompose` on a (..., 3, 3) stack."""
    T = np.asarray(T, dtype=np.float64)
    U, sigma, Vt = np.linalg.svd(T)
    # flip the smallest singular direction when U Vt is a reflection
    det_uv = np.linalg.det(U @ Vt)
    flip = np.ones(T.shape[:-2] + (3,))
    flip[..., 2] = det_uv  # +1 or -1; sigma is sorted descending
    R = (U * flip[..., None, :]) @ Vt
    V = np.swapaxes(Vt, -1, -2)
    S = (V * (sigma * flip)[..., None, :]) @ Vt
    S = (S + np.swapaxes(S, -1, -2)) / 2.0
    return R, S


def skew(v):
    """Antisymmetric matrix of the 3-vector v: skew(v) @ x == cross(v, x)."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def unskew(L):
    """Dual 3-vector of an antisymmetric matrix (inverse of :func:`skew`)."""
    L = np.asarray(L, dtype=np.float64)
    return np.stack([L[..., 2, 1], L[..., 0, 2], L[..., 1, 0]], axis=-1)


def exp_skew(L):
    """Rotation matrix exp(L) of an antisymmetric L, by the closed Rodrigues form."""
    L = _check_finite(L)
    return exp_rotvec(unskew(L))


def exp_rotvec(rho):
    """Rodrigues map of rotation vectors rho = theta * axis, batched over (..., 3)."""
    rho = np.asarray(rho, dtype=np.float64)
    theta = np.linalg.norm(rho, axis=-1)
    theta2 = theta * theta
    small = theta < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, np.sin(theta) / theta)
        b = np.where(
            small, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            (1.0 - np.cos(theta)) / np.where(small, 1.0, theta2),
        )
    K = skew(rho)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def log_rotation(R):
    """Antisymmetric log of a rotation, theta in [0, pi - margin].

    Raises
    ------
    AxisAmbiguityError
        If the rotation angle is within ``ANGLE_CAP_MARGIN`` of pi, where the
        axis cannot be recovered stably ("axis ambiguous near pi").
    """
    R = _check_finite(R)
    return skew(log_rotvec_many(R.reshape(1, 3, 3))[0])


def log_rotvec_many(R):
    """Rotation vectors theta * axis for a (..., 3, 3) stack of rotations."""
    R = np.asarray(R, dtype=np.float64)
    W = (R - np.swapaxes(R, -1, -2)) / 2.0
    w = unskew(W)  # sin(theta) * axis
    sin_theta = np.linalg.norm(w, axis=-1)
    cos_theta = (np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0
    theta = np.arctan2(sin_theta, cos_theta)
    if np.any(theta > np.pi - ANGLE_CAP_MARGIN):
        raise AxisAmbiguityError("axis ambiguous near pi")
    theta2 = theta * theta
    small = theta < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(
            small,
            1.0 + theta2 / 6.0 + 7.0 * theta2 * theta2 / 360.0,
            theta / np.where(small, 1.0, sin_theta),
        )
    return w * factor[..., None]


def axis_angle(R):
    """(unit axis, angle) of a rotation; the identity reports axis e_x, angle 0."""
    rho = log_rotvec_many(np.asarray(R, dtype=np.float64).reshape(1, 3, 3))[0]
    theta = float(np.linalg.norm(rho))
    if theta < 1e-300:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return rho / theta, theta


def rotation_about(axis, angle):
    """Rotation by ``angle`` radians about the (not necessarily unit) ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise ValueError("zero rotation axis")
    return exp_rotvec(axis / n * angle)


def is_rotation(R, tol=1e-9):
    """Orthogonality and det +1 check within ``tol``."""
    R = np.asarray(R, dtype=np.float64)
    return (
        np.allclose(R.T @ R, np.eye(3), atol=tol)
        and abs(float(np.linalg.det(R)) - 1.0) <= tol
    )


def random_rotations(count, rng, max_angle=np.pi - 1e-3):
    """Deterministic random rotation stack for tests: uniform axis, uniform angle."""
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.uniform(0.0, max_angle, size=count)
    return exp_rotvec(axes * angles[:, None])
