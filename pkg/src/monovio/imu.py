"""On-manifold IMU pre-integration between keyframes.

One `PreintegratedImu` summarizes all gyro/accel samples between two
keyframes as a relative-motion constraint (delta rotation, velocity,
position) with a 9x9 covariance over [rot, vel, pos] and first-order bias
Jacobians. Integration is midpoint (trapezoidal) per sample interval.

Residuals follow the classic formulation: with R, v, p the body states in
the world frame, g the gravity vector and dt the total interval,

    r_R = Log(dR^T R_k^T R_k1)
    r_v = R_k^T (v_k1 - v_k - g dt) - dv
    r_p = R_k^T (p_k1 - p_k - v_k dt - 0.5 g dt^2) - dp

where (dR, dv, dp) are the pre-integrated measurements corrected to first
order for the difference between the current bias estimate and the bias the
integration was run with.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotation as rot
from .errors import DataGap, ReintegrationRequired

NS_PER_S = 1_000_000_000
MAX_SAMPLE_GAP_S = 0.1
BIAS_CORRECTION_BOUND = 0.1


@dataclass
class ImuSample:
    timestamp: int  # nanoseconds
    gyro: np.ndarray  # rad/s
    accel: np.ndarray  # m/s^2

    def __post_init__(self):
        self.gyro = np.asarray(self.gyro, dtype=np.float64).reshape(3)
        self.accel = np.asarray(self.accel, dtype=np.float64).reshape(3)


@dataclass
class ImuNoiseModel:
    gyro_noise_density: float = 1.6968e-4  # rad/s/sqrt(Hz)
    accel_noise_density: float = 2.0e-3  # m/s^2/sqrt(Hz)
    gyro_bias_walk: float = 1.9393e-5  # rad/s^2/sqrt(Hz)
    accel_bias_walk: float = 3.0e-3  # m/s^3/sqrt(Hz)

    def __post_init__(self):
        for name in ("gyro_noise_density", "accel_noise_density", "gyro_bias_walk", "accel_bias_walk"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class PreintegratedImu:
    delta_q: np.ndarray  # unit quaternion, body_k <- body_k1
    delta_v: np.ndarray
    delta_p: np.ndarray
    delta_t: float
    covariance: np.ndarray  # 9x9 over [rot, vel, pos]
    jac_bias: np.ndarray  # 9x6, d[rot, vel, pos] / d[bias_gyro, bias_accel]
    bias_gyro_ref: np.ndarray
    bias_accel_ref: np.ndarray
    t_start: int = 0
    t_end: int = 0

    def delta_r(self) -> np.ndarray:
        return rot.quat_to_matrix(self.delta_q)

    def copy(self) -> "PreintegratedImu":
        return PreintegratedImu(
            delta_q=self.delta_q.copy(),
            delta_v=self.delta_v.copy(),
            delta_p=self.delta_p.copy(),
            delta_t=self.delta_t,
            covariance=self.covariance.copy(),
            jac_bias=self.jac_bias.copy(),
            bias_gyro_ref=self.bias_gyro_ref.copy(),
            bias_accel_ref=self.bias_accel_ref.copy(),
            t_start=self.t_start,
            t_end=self.t_end,
        )


class ImuPreintegrator:
    """Accumulator: feed samples in timestamp order, seal at a keyframe.

    The first interval after `t_start_ns` holds the first sample's values;
    later intervals integrate the midpoint of consecutive samples.
    """

    def __init__(self, t_start_ns: int, bias_gyro, bias_accel, noise: ImuNoiseModel):
        self.noise = noise
        self.t_start = int(t_start_ns)
        self.t_last = int(t_start_ns)
        self.bias_gyro = np.asarray(bias_gyro, dtype=np.float64).reshape(3).copy()
        self.bias_accel = np.asarray(bias_accel, dtype=np.float64).reshape(3).copy()
        self.last_gyro = None
        self.last_accel = None
        self.delta_q = rot.quat_identity()
        self.delta_v = np.zeros(3)
        self.delta_p = np.zeros(3)
        self.delta_t = 0.0
        self.cov = np.zeros((9, 9))
        self.jac = np.zeros((9, 6))
        self.n_samples = 0

    def add(self, sample: ImuSample) -> None:
        if sample.timestamp <= self.t_last and self.n_samples > 0:
            raise ValueError(
                f"IMU timestamps must be strictly increasing "
                f"({sample.timestamp} after {self.t_last})"
            )
        if sample.timestamp < self.t_last:
            raise ValueError("IMU sample predates the integration start")
        dt = (sample.timestamp - self.t_last) / NS_PER_S
        if dt > MAX_SAMPLE_GAP_S:
            raise DataGap(f"IMU gap of {dt:.3f} s exceeds {MAX_SAMPLE_GAP_S} s")
        if self.last_gyro is None:
            w0, a0 = sample.gyro, sample.accel
        else:
            w0, a0 = self.last_gyro, self.last_accel
        if dt > 0.0:
            self._step(dt, w0, a0, sample.gyro, sample.accel)
        self.last_gyro = sample.gyro
        self.last_accel = sample.accel
        self.t_last = int(sample.timestamp)
        self.n_samples += 1

    def extend_to(self, t_ns: int) -> None:
        """Integrate up to a frame boundary holding the last sample's values."""
        if t_ns < self.t_last:
            raise ValueError("cannot extend backwards")
        dt = (t_ns - self.t_last) / NS_PER_S
        if dt > MAX_SAMPLE_GAP_S:
            raise DataGap(f"IMU gap of {dt:.3f} s exceeds {MAX_SAMPLE_GAP_S} s")
        if dt > 0.0 and self.last_gyro is not None:
            self._step(dt, self.last_gyro, self.last_accel, self.last_gyro, self.last_accel)
        self.t_last = int(t_ns)

    def _step(self, dt, w0, a0, w1, a1) -> None:
        w_mid = 0.5 * (w0 + w1) - self.bias_gyro
        a0c = a0 - self.bias_accel
        a1c = a1 - self.bias_accel
        a_mid = 0.5 * (a0c + a1c)

        r_k = rot.quat_to_matrix(self.delta_q)
        step_phi = w_mid * dt
        step_r = rot.so3_exp(step_phi)
        q_new = rot.quat_mul(self.delta_q, rot.quat_exp(step_phi))
        r_k1 = rot.quat_to_matrix(q_new)
        r_mid = r_k @ rot.so3_exp(0.5 * step_phi)

        a_world = 0.5 * (r_k @ a0c + r_k1 @ a1c)

        # first-order transition over [rot, vel, pos]
        a_hat = rot.hat(a_mid)
        jr = rot.so3_right_jacobian(step_phi)
        a_mat = np.eye(9)
        a_mat[0:3, 0:3] = step_r.T
        a_mat[3:6, 0:3] = -r_mid @ a_hat * dt
        a_mat[6:9, 0:3] = -0.5 * r_mid @ a_hat * dt * dt
        a_mat[6:9, 3:6] = np.eye(3) * dt

        b_mat = np.zeros((9, 6))
        b_mat[0:3, 0:3] = jr * dt
        b_mat[3:6, 3:6] = r_mid * dt
        b_mat[6:9, 3:6] = 0.5 * r_mid * dt * dt

        q = np.zeros((6, 6))
        q[0:3, 0:3] = (self.noise.gyro_noise_density**2 / dt) * np.eye(3)
        q[3:6, 3:6] = (self.noise.accel_noise_density**2 / dt) * np.eye(3)

        cov = a_mat @ self.cov @ a_mat.T + b_mat @ q @ b_mat.T
        self.cov = 0.5 * (cov + cov.T)

        # bias Jacobian accumulation (first order, same transition)
        j_old = self.jac
        j_new = a_mat @ j_old
        j_new[0:3, 0:3] += -jr * dt
        j_new[3:6, 3:6] += -r_mid * dt
        j_new[6:9, 3:6] += -0.5 * r_mid * dt * dt
        self.jac = j_new

        self.delta_p = self.delta_p + self.delta_v * dt + 0.5 * a_world * dt * dt
        self.delta_v = self.delta_v + a_world * dt
        self.delta_q = rot.quat_normalize(q_new)
        self.delta_t += dt

    def seal(self) -> PreintegratedImu:
        return PreintegratedImu(
            delta_q=self.delta_q.copy(),
            delta_v=self.delta_v.copy(),
            delta_p=self.delta_p.copy(),
            delta_t=self.delta_t,
            covariance=self.cov.copy(),
            jac_bias=self.jac.copy(),
            bias_gyro_ref=self.bias_gyro.copy(),
            bias_accel_ref=self.bias_accel.copy(),
            t_start=self.t_start,
            t_end=self.t_last,
        )


def preintegrate(
    samples,
    bias_gyro,
    bias_accel,
    noise: ImuNoiseModel,
    t_start_ns=None,
    t_end_ns=None,
) -> PreintegratedImu:
    """Pre-integrate an ordered sample list into one relative-motion constraint.

    `t_start_ns` defaults to the first sample's timestamp (zero-length first
    interval); `t_end_ns` extends the integration past the last sample by
    holding its values.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("preintegrate needs at least one sample")
    start = samples[0].timestamp if t_start_ns is None else int(t_start_ns)
    acc = ImuPreintegrator(start, bias_gyro, bias_accel, noise)
    for s in samples:
        acc.add(s)
    if t_end_ns is not None:
        acc.extend_to(int(t_end_ns))
    return acc.seal()


def compose(first: PreintegratedImu, second: PreintegratedImu) -> PreintegratedImu:
    """Chain two adjacent pre-integrations (state only; covariance and bias
    Jacobians are re-propagated through the transition of the second leg)."""
    r1 = first.delta_r()
    dt2 = second.delta_t
    out = first.copy()
    out.delta_p = first.delta_p + first.delta_v * dt2 + r1 @ second.delta_p
    out.delta_v = first.delta_v + r1 @ second.delta_v
    out.delta_q = rot.quat_normalize(rot.quat_mul(first.delta_q, second.delta_q))
    out.delta_t = first.delta_t + second.delta_t
    out.t_end = second.t_end
    out.covariance = np.full((9, 9), np.nan)  # not composed; re-integrate if needed
    out.jac_bias = np.full((9, 6), np.nan)
    return out


def bias_correct(pre: PreintegratedImu, new_bias_gyro, new_bias_accel) -> PreintegratedImu:
    """First-order update of the deltas to a new bias reference.

    Raises ReintegrationRequired when either bias moves more than 0.1 in its
    own units; a zero delta returns a bitwise-identical copy.
    """
    new_bg = np.asarray(new_bias_gyro, dtype=np.float64).reshape(3)
    new_ba = np.asarray(new_bias_accel, dtype=np.float64).reshape(3)
    dbg = new_bg - pre.bias_gyro_ref
    dba = new_ba - pre.bias_accel_ref
    if np.all(dbg == 0.0) and np.all(dba == 0.0):
        return pre.copy()
    if np.sqrt(dbg @ dbg) >= BIAS_CORRECTION_BOUND or np.sqrt(dba @ dba) >= BIAS_CORRECTION_BOUND:
        raise ReintegrationRequired("bias delta exceeds first-order validity bound")
    out = pre.copy()
    db = np.concatenate([dbg, dba])
    out.delta_q = rot.quat_normalize(
        rot.quat_mul(pre.delta_q, rot.quat_exp(pre.jac_bias[0:3] @ db))
    )
    out.delta_v = pre.delta_v + pre.jac_bias[3:6] @ db
    out.delta_p = pre.delta_p + pre.jac_bias[6:9] @ db
    out.bias_gyro_ref = new_bg.copy()
    out.bias_accel_ref = new_ba.copy()
    return out


def _corrected_deltas(pre: PreintegratedImu, bias_gyro, bias_accel):
    """First-order corrected (dR, dv, dp) at the given bias estimate."""
    dbg = np.asarray(bias_gyro, dtype=np.float64) - pre.bias_gyro_ref
    dba = np.asarray(bias_accel, dtype=np.float64) - pre.bias_accel_ref
    db = np.concatenate([dbg, dba])
    theta = pre.jac_bias[0:3, 0:3] @ dbg
    dr = pre.delta_r() @ rot.so3_exp(theta)
    dv = pre.delta_v + pre.jac_bias[3:6] @ db
    dp = pre.delta_p + pre.jac_bias[6:9] @ db
    return dr, dv, dp, theta


def imu_residuals(pre: PreintegratedImu, state_k, state_k1, gravity) -> tuple:
    """Residuals (r_R, r_v, r_p) of the pre-integrated constraint.

    `state_k`/`state_k1` need `.pose` (world <- body), `.velocity`,
    `.gyro_bias`, `.accel_bias`. The deltas are first-order corrected from
    the integration bias to state_k's bias.
    """
    g = np.asarray(gravity, dtype=np.float64).reshape(3)
    dt = pre.delta_t
    dr, dv, dp, _ = _corrected_deltas(pre, state_k.gyro_bias, state_k.accel_bias)

    r_k = state_k.pose.matrix()
    r_k1 = state_k1.pose.matrix()
    p_k, p_k1 = state_k.pose.t, state_k1.pose.t
    v_k, v_k1 = state_k.velocity, state_k1.velocity

    r_rot = rot.so3_log(dr.T @ r_k.T @ r_k1)
    r_vel = r_k.T @ (v_k1 - v_k - g * dt) - dv
    r_pos = r_k.T @ (p_k1 - p_k - v_k * dt - 0.5 * g * dt * dt) - dp
    return r_rot, r_vel, r_pos


def imu_residual_jacobians(pre: PreintegratedImu, state_k, state_k1, gravity,
                           gravity_basis=None):
    """Residual stack (9,) and its Jacobians wrt both 15-dim keyframe states
    [rot, pos, vel, bias_gyro, bias_accel] and optionally a 2-dof gravity
    direction tangent basis (3x2).

    Analytic expressions; verified against central finite differences.
    """
    g = np.asarray(gravity, dtype=np.float64).reshape(3)
    dt = pre.delta_t
    dbg = state_k.gyro_bias - pre.bias_gyro_ref
    dr, dv, dp, theta = _corrected_deltas(pre, state_k.gyro_bias, state_k.accel_bias)

    r_k = state_k.pose.matrix()
    r_k1 = state_k1.pose.matrix()
    p_k, p_k1 = state_k.pose.t, state_k1.pose.t
    v_k, v_k1 = state_k.velocity, state_k1.velocity

    m = dr.T @ r_k.T @ r_k1
    phi = rot.so3_log(m)
    jri = rot.so3_right_jacobian_inv(phi)
    y_v = r_k.T @ (v_k1 - v_k - g * dt)
    y_p = r_k.T @ (p_k1 - p_k - v_k * dt - 0.5 * g * dt * dt)

    r = np.concatenate([phi, y_v - dv, y_p - dp])

    j_k = np.zeros((9, 15))
    j_k1 = np.zeros((9, 15))

    # rotation residual rows
    j_k[0:3, 0:3] = -jri @ (r_k1.T @ r_k)
    j_k1[0:3, 0:3] = jri
    j_k[0:3, 9:12] = -jri @ m.T @ rot.so3_right_jacobian(theta) @ pre.jac_bias[0:3, 0:3]

    # velocity residual rows
    j_k[3:6, 0:3] = rot.hat(y_v)
    j_k[3:6, 6:9] = -r_k.T
    j_k1[3:6, 6:9] = r_k.T
    j_k[3:6, 9:12] = -pre.jac_bias[3:6, 0:3]
    j_k[3:6, 12:15] = -pre.jac_bias[3:6, 3:6]

    # position residual rows
    j_k[6:9, 0:3] = rot.hat(y_p)
    j_k[6:9, 3:6] = -r_k.T
    j_k1[6:9, 3:6] = r_k.T
    j_k[6:9, 6:9] = -r_k.T * dt
    j_k[6:9, 9:12] = -pre.jac_bias[6:9, 0:3]
    j_k[6:9, 12:15] = -pre.jac_bias[6:9, 3:6]

    j_g = None
    if gravity_basis is not None:
        b = np.asarray(gravity_basis, dtype=np.float64).reshape(3, 2)
        dg = -rot.hat(g) @ b  # d g / d delta for g <- Exp(B delta) g
        j_g = np.zeros((9, 2))
        j_g[3:6] = r_k.T @ (-dt * dg)
        j_g[6:9] = r_k.T @ (-0.5 * dt * dt * dg)
    return r, j_k, j_k1, j_g
