"""SO(3) and quaternion utilities.

Quaternions are stored scalar-first [w, x, y, z] as float64 arrays of shape
(4,). Rotation vectors (so(3) tangent elements) are (3,) arrays in radians.
All small-angle branches switch below 1e-6 rad to series expansions so the
functions stay smooth and deterministic near the identity.
"""

from __future__ import annotations

import numpy as np

_SMALL_ANGLE = 1e-6


def hat(v) -> np.ndarray:
    """Skew-symmetric 3x3 matrix such that hat(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(phi) -> np.ndarray:
    """Rotation matrix of a rotation vector (Rodrigues)."""
    phi = np.asarray(phi, dtype=np.float64)
    angle = np.sqrt(phi @ phi)
    k = hat(phi)
    if angle < _SMALL_ANGLE:
        # exp(K) = I + K + K^2/2 to O(angle^3)
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / (angle * angle)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r) -> np.ndarray:
    """Rotation vector of a rotation matrix; inverse of so3_exp."""
    r = np.asarray(r, dtype=np.float64)
    trace = np.clip((np.trace(r) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(trace)
    if angle < _SMALL_ANGLE:
        # log(R) ~ (R - R^T)/2 for small angles
        return vee(0.5 * (r - r.T))
    if angle > np.pi - 1e-6:
        # near pi the antisymmetric part vanishes; recover axis from diagonal
        d = np.diag(r)
        axis_sq = np.maximum((d - trace) / (1.0 - trace), 0.0)
        axis = np.sqrt(axis_sq / max(axis_sq.sum(), 1e-300))
        off = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        axis = np.where(off < 0.0, -axis, axis) if np.any(off != 0.0) else axis
        return angle * axis
    return angle / (2.0 * np.sin(angle)) * np.array(
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]
    )


def so3_right_jacobian(phi) -> np.ndarray:
    """Right Jacobian J_r of SO(3): Exp(phi + d) ~ Exp(phi) Exp(J_r d)."""
    phi = np.asarray(phi, dtype=np.float64)
    angle = np.sqrt(phi @ phi)
    k = hat(phi)
    if angle < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        - (1.0 - np.cos(angle)) / a2 * k
        + (angle - np.sin(angle)) / (a2 * angle) * (k @ k)
    )


def so3_right_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    angle = np.sqrt(phi @ phi)
    k = hat(phi)
    if angle < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 12.0
    half = 0.5 * angle
    cot_term = (1.0 / (angle * angle)) - (1.0 + np.cos(angle)) / (
        2.0 * angle * np.sin(angle)
    )
    return np.eye(3) + 0.5 * k + cot_term * (k @ k)


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.sqrt(q @ q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    # canonical sign: w >= 0 keeps round trips deterministic
    return -q if q[0] < 0.0 else q


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(r) -> np.ndarray:
    """Shepperd's method; returns the canonical (w >= 0) unit quaternion."""
    r = np.asarray(r, dtype=np.float64)
    t = np.trace(r)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        if i == 0:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            q = np.array(
                [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
            q = np.array(
                [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
            q = np.array(
                [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
            )
    return quat_normalize(q)


def quat_exp(phi) -> np.ndarray:
    """Unit quaternion of a rotation vector."""
    phi = np.asarray(phi, dtype=np.float64)
    angle = np.sqrt(phi @ phi)
    if angle < _SMALL_ANGLE:
        half = 0.5 * phi
        return quat_normalize(np.array([1.0, half[0], half[1], half[2]]))
    axis = phi / angle
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([np.cos(half), s * axis[0], s * axis[1], s * axis[2]])


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


def quat_boxplus(q, delta_theta) -> np.ndarray:
    """Right-perturbation update: R <- R * Exp(delta_theta)."""
    return quat_normalize(quat_mul(q, quat_exp(delta_theta)))
