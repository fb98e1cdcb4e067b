"""Sliding-window tightly-coupled pose-graph optimization.

The window holds at most 8 keyframes (15 state dims each: rotation,
position, velocity, gyro bias, accel bias) and at most 1000 landmarks
(3 dims each). Reprojection terms are Huber-weighted; IMU edges use the
inverse pre-integration covariance as information; consecutive keyframes are
additionally tied by a bias random-walk term, and the oldest keyframe is
anchored by a quadratic prior that fixes the gauge.

Levenberg-Marquardt steps solve the damped normal equations with the
landmark block eliminated by the Schur complement:

    (H_pp - H_pl H_ll^-1 H_lp) dp = b_p - H_pl H_ll^-1 b_l

followed by back-substitution for the landmark increments. When gravity
updates are enabled the 2-dof gravity direction joins the pose partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rotation as rot
from .errors import NotPositiveDefinite, OptimizerAbort
from .geometry import Landmark, Pose
from .imu import ImuNoiseModel, PreintegratedImu, imu_residual_jacobians
from .linalg import inv_spd, solve_spd

WINDOW_SIZE = 8
MAX_LANDMARKS = 1000
STATE_DIM = 15

ANCHOR_POSE_INFO = 1e6
ANCHOR_VEL_BIAS_INFO = 1e2
GRAVITY_MAGNITUDE = 9.81

LAMBDA_MIN = 1e-9
LAMBDA_MAX = 1e9


class IncreaseDamping(Exception):
    """Schur system not positive definite at the current damping."""


@dataclass
class KeyframeState:
    id: int
    timestamp: int
    pose: Pose  # world <- body
    velocity: np.ndarray
    gyro_bias: np.ndarray
    accel_bias: np.ndarray

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=np.float64).reshape(3).copy()
        self.gyro_bias = np.asarray(self.gyro_bias, dtype=np.float64).reshape(3).copy()
        self.accel_bias = np.asarray(self.accel_bias, dtype=np.float64).reshape(3).copy()

    def copy(self) -> "KeyframeState":
        return KeyframeState(
            self.id, self.timestamp, Pose(self.pose.q.copy(), self.pose.t.copy()),
            self.velocity, self.gyro_bias, self.accel_bias,
        )

    def boxplus(self, d: np.ndarray) -> "KeyframeState":
        """Right-perturbed state: d = [rot, pos, vel, bias_g, bias_a]."""
        return KeyframeState(
            self.id,
            self.timestamp,
            Pose(rot.quat_boxplus(self.pose.q, d[0:3]), self.pose.t + d[3:6]),
            self.velocity + d[6:9],
            self.gyro_bias + d[9:12],
            self.accel_bias + d[12:15],
        )


@dataclass
class Observation:
    keyframe_id: int
    landmark_id: int
    point: np.ndarray  # normalized 2-D measurement
    sigma: float  # measurement std dev in normalized units

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64).reshape(2).copy()


@dataclass
class PoseGraph:
    window_size: int = WINDOW_SIZE
    max_landmarks: int = MAX_LANDMARKS
    keyframes: list = field(default_factory=list)
    landmarks: dict = field(default_factory=dict)  # id -> Landmark, insertion order
    observations: list = field(default_factory=list)
    imu_edges: list = field(default_factory=list)  # one per consecutive pair
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -GRAVITY_MAGNITUDE]))
    optimize_gravity: bool = False
    t_bc: Pose = field(default_factory=Pose.identity)  # body <- camera
    anchor_ref: KeyframeState | None = None

    def __post_init__(self):
        if self.window_size > WINDOW_SIZE:
            raise ValueError(f"window_size capped at {WINDOW_SIZE}")
        if self.max_landmarks > MAX_LANDMARKS:
            raise ValueError(f"max_landmarks capped at {MAX_LANDMARKS}")

    def keyframe_index(self, kf_id: int) -> int:
        for i, kf in enumerate(self.keyframes):
            if kf.id == kf_id:
                return i
        raise KeyError(f"keyframe {kf_id} not in window")

    def add_keyframe(self, kf: KeyframeState) -> None:
        self.keyframes.append(kf)
        if self.anchor_ref is None:
            self.anchor_ref = kf.copy()

    def add_landmark(self, lm: Landmark) -> None:
        self.landmarks[lm.id] = lm

    def add_observation(self, obs: Observation) -> None:
        if obs.landmark_id not in self.landmarks:
            raise ValueError(f"observation references unknown landmark {obs.landmark_id}")
        self.keyframe_index(obs.keyframe_id)
        self.observations.append(obs)
        self.landmarks[obs.landmark_id].observations.append(
            (obs.keyframe_id, obs.point)
        )


# ---------------------------------------------------------------------------
# residuals


def reprojection_residual(state: KeyframeState, lm: Landmark, obs: Observation,
                          t_bc: Pose | None = None):
    """Residual (observed - projected) and analytic Jacobians.

    Returns (residual (2,), J_pose (2,6) over [rot, pos], J_landmark (2,3)),
    or (None, None, None) when the landmark sits behind the camera (the
    caller skips and flags such observations).
    """
    if t_bc is None:
        t_bc = Pose.identity()
    r_wb = state.pose.matrix()
    r_bc = t_bc.matrix()
    x_b = r_wb.T @ (lm.position - state.pose.t)
    x_c = r_bc.T @ (x_b - t_bc.t)
    z = x_c[2]
    if z <= 1e-6:
        return None, None, None
    u, v = x_c[0] / z, x_c[1] / z
    residual = obs.point - np.array([u, v])
    dpi = np.array([[1.0 / z, 0.0, -u / z], [0.0, 1.0 / z, -v / z]])
    r_cw = r_bc.T @ r_wb.T
    j_lm = -dpi @ r_cw
    j_pose = np.zeros((2, 6))
    j_pose[:, 0:3] = -dpi @ (r_bc.T @ rot.hat(x_b))
    j_pose[:, 3:6] = dpi @ r_cw
    return residual, j_pose, j_lm


def _huber_weight(r_norm: np.ndarray, delta: float) -> np.ndarray:
    return np.minimum(1.0, delta / np.maximum(r_norm, 1e-300))


def _huber_cost(r_sq: np.ndarray, delta: float) -> np.ndarray:
    r = np.sqrt(r_sq)
    quad = r <= delta
    return np.where(quad, 0.5 * r_sq, delta * (r - 0.5 * delta))


def _gravity_basis(g: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal 3x2 basis of the plane orthogonal to g."""
    gn = g / np.sqrt(g @ g)
    e = np.zeros(3)
    e[int(np.argmin(np.abs(gn)))] = 1.0
    b1 = np.cross(gn, e)
    b1 = b1 / np.sqrt(b1 @ b1)
    b2 = np.cross(gn, b1)
    return np.column_stack([b1, b2])


def _bias_walk_info(noise: ImuNoiseModel, dt: float) -> np.ndarray:
    dt = max(dt, 1e-6)
    info = np.zeros(6)
    info[0:3] = 1.0 / (noise.gyro_bias_walk**2 * dt)
    info[3:6] = 1.0 / (noise.accel_bias_walk**2 * dt)
    return np.diag(info)


def anchor_constraints(graph: PoseGraph):
    """Prior residual and information anchoring the oldest keyframe.

    Residual is the boxminus of the current oldest state from the anchor
    reference; information is diag(1e6) on the 6 pose dims and diag(1e2) on
    velocity and biases.
    """
    if not graph.keyframes:
        raise ValueError("anchor_constraints: empty window")
    kf = graph.keyframes[0]
    ref = graph.anchor_ref
    r = np.zeros(STATE_DIM)
    r[0:3] = rot.so3_log(ref.pose.matrix().T @ kf.pose.matrix())
    r[3:6] = kf.pose.t - ref.pose.t
    r[6:9] = kf.velocity - ref.velocity
    r[9:12] = kf.gyro_bias - ref.gyro_bias
    r[12:15] = kf.accel_bias - ref.accel_bias
    info = np.diag(
        [ANCHOR_POSE_INFO] * 6 + [ANCHOR_VEL_BIAS_INFO] * 9
    )
    jac = np.eye(STATE_DIM)
    jac[0:3, 0:3] = rot.so3_right_jacobian_inv(r[0:3])
    return r, jac, info


# ---------------------------------------------------------------------------
# normal equations


@dataclass
class NormalEquations:
    h_pp: np.ndarray  # (P, P)
    h_pl: np.ndarray  # (P, 3L)
    h_ll: np.ndarray  # (L, 3, 3) block diagonal
    b_p: np.ndarray  # (P,)
    b_l: np.ndarray  # (3L,)
    landmark_ids: list
    pose_dim: int
    gravity_cols: slice | None = None


def _observation_arrays(graph: PoseGraph, lm_index: dict):
    per_kf = {i: [] for i in range(len(graph.keyframes))}
    kf_index = {kf.id: i for i, kf in enumerate(graph.keyframes)}
    for obs in graph.observations:
        ki = kf_index.get(obs.keyframe_id)
        li = lm_index.get(obs.landmark_id)
        if ki is None or li is None:
            continue
        per_kf[ki].append((li, obs.point, obs.sigma))
    return per_kf


def _batched_reprojection(graph: PoseGraph, ki: int, entries, lm_pos: np.ndarray):
    """Vectorized residuals/Jacobians of all observations of one keyframe."""
    kf = graph.keyframes[ki]
    r_wb = kf.pose.matrix()
    r_bc = graph.t_bc.matrix()
    li = np.array([e[0] for e in entries], dtype=np.int64)
    pts = np.array([e[1] for e in entries])
    sig = np.array([e[2] for e in entries])
    xw = lm_pos[li]
    xb = (xw - kf.pose.t) @ r_wb
    xc = (xb - graph.t_bc.t) @ r_bc
    z = xc[:, 2]
    valid = z > 1e-6
    z_safe = np.where(valid, z, 1.0)
    u = xc[:, 0] / z_safe
    v = xc[:, 1] / z_safe
    res = pts - np.stack([u, v], axis=1)

    n = len(entries)
    dpi = np.zeros((n, 2, 3))
    dpi[:, 0, 0] = 1.0 / z_safe
    dpi[:, 1, 1] = 1.0 / z_safe
    dpi[:, 0, 2] = -u / z_safe
    dpi[:, 1, 2] = -v / z_safe

    r_cw = r_bc.T @ r_wb.T
    j_lm = -dpi @ r_cw
    hat_xb = np.zeros((n, 3, 3))
    hat_xb[:, 0, 1] = -xb[:, 2]
    hat_xb[:, 0, 2] = xb[:, 1]
    hat_xb[:, 1, 0] = xb[:, 2]
    hat_xb[:, 1, 2] = -xb[:, 0]
    hat_xb[:, 2, 0] = -xb[:, 1]
    hat_xb[:, 2, 1] = xb[:, 0]
    j_th = -np.einsum("nij,njk->nik", dpi, np.einsum("ij,njk->nik", r_bc.T, hat_xb))
    j_dp = dpi @ r_cw
    return li, res, j_th, j_dp, j_lm, sig, valid


def assemble(graph: PoseGraph, noise: ImuNoiseModel, pixel_sigma: float,
             huber_delta: float = 0.0087) -> NormalEquations:
    """Gauss-Newton normal equations of the whole window.

    Includes Huber-weighted reprojection terms, IMU edges weighted by the
    inverse pre-integration covariance, bias random-walk ties between
    consecutive keyframes, and the anchor prior. Damping is added at solve
    time, not here.
    """
    k = len(graph.keyframes)
    if k == 0:
        raise ValueError("assemble: empty window")
    lm_ids = list(graph.landmarks.keys())
    lm_index = {lid: i for i, lid in enumerate(lm_ids)}
    nl = len(lm_ids)
    grav = graph.optimize_gravity
    p_dim = STATE_DIM * k + (2 if grav else 0)
    g_cols = slice(STATE_DIM * k, STATE_DIM * k + 2) if grav else None

    h_pp = np.zeros((p_dim, p_dim))
    b_p = np.zeros(p_dim)
    h_pl4 = np.zeros((p_dim, nl, 3))
    h_ll = np.zeros((nl, 3, 3))
    b_l3 = np.zeros((nl, 3))

    if nl:
        lm_pos = np.array([graph.landmarks[lid].position for lid in lm_ids])
        per_kf = _observation_arrays(graph, lm_index)
        for ki in range(k):
            entries = per_kf[ki]
            if not entries:
                continue
            li, res, j_th, j_dp, j_lm, sig, valid = _batched_reprojection(
                graph, ki, entries, lm_pos
            )
            if not valid.any():
                continue
            li, res, j_th, j_dp, j_lm, sig = (
                li[valid], res[valid], j_th[valid], j_dp[valid], j_lm[valid], sig[valid]
            )
            w = _huber_weight(np.sqrt((res * res).sum(axis=1)), huber_delta)
            info = w / (sig * sig)  # scalar information per observation
            j_pose = np.concatenate([j_th, j_dp], axis=2)  # (n, 2, 6)

            jtw_j_pose = np.einsum("nia,n,nib->nab", j_pose, info, j_pose)
            jtw_r_pose = np.einsum("nia,n,ni->na", j_pose, info, res)
            s0 = STATE_DIM * ki
            h_pp[s0 : s0 + 6, s0 : s0 + 6] += jtw_j_pose.sum(axis=0)
            b_p[s0 : s0 + 6] += -jtw_r_pose.sum(axis=0)

            jtw_j_lm = np.einsum("nia,n,nib->nab", j_lm, info, j_lm)
            jtw_r_lm = np.einsum("nia,n,ni->na", j_lm, info, res)
            np.add.at(h_ll, li, jtw_j_lm)
            np.add.at(b_l3, li, -jtw_r_lm)

            cross = np.einsum("nia,n,nib->nab", j_pose, info, j_lm)  # (n, 6, 3)
            # one observation per (keyframe, landmark): direct scatter works
            h_pl4[s0 : s0 + 6, li, :] += cross.transpose(1, 0, 2)

    g_basis = _gravity_basis(graph.gravity) if grav else None
    for ei, edge in enumerate(graph.imu_edges):
        s0 = STATE_DIM * ei
        s1 = STATE_DIM * (ei + 1)
        kf0, kf1 = graph.keyframes[ei], graph.keyframes[ei + 1]
        r, j0, j1, jg = imu_residual_jacobians(edge, kf0, kf1, graph.gravity, g_basis)
        info = inv_spd(edge.covariance + 1e-16 * np.eye(9))
        _add_edge(h_pp, b_p, [(s0, j0), (s1, j1)] + ([(g_cols.start, jg)] if grav else []),
                  r, info)

        # bias random walk between consecutive keyframes
        rb = np.concatenate(
            [kf1.gyro_bias - kf0.gyro_bias, kf1.accel_bias - kf0.accel_bias]
        )
        jb0 = np.zeros((6, STATE_DIM))
        jb0[:, 9:15] = -np.eye(6)
        jb1 = np.zeros((6, STATE_DIM))
        jb1[:, 9:15] = np.eye(6)
        winfo = _bias_walk_info(noise, edge.delta_t)
        _add_edge(h_pp, b_p, [(s0, jb0), (s1, jb1)], rb, winfo)

    r_a, j_a, info_a = anchor_constraints(graph)
    _add_edge(h_pp, b_p, [(0, j_a)], r_a, info_a)

    return NormalEquations(
        h_pp=h_pp,
        h_pl=h_pl4.reshape(p_dim, 3 * nl),
        h_ll=h_ll,
        b_p=b_p,
        b_l=b_l3.reshape(3 * nl),
        landmark_ids=lm_ids,
        pose_dim=p_dim,
        gravity_cols=g_cols,
    )


def _add_edge(h_pp, b_p, blocks, r, info):
    """Accumulate J^T W J and -J^T W r for an edge touching several blocks."""
    wr = info @ r
    for s, j in blocks:
        if j is None:
            continue
        d = j.shape[1]
        b_p[s : s + d] += -(j.T @ wr)
        for s2, j2 in blocks:
            if j2 is None:
                continue
            d2 = j2.shape[1]
            h_pp[s : s + d, s2 : s2 + d2] += j.T @ info @ j2


# ---------------------------------------------------------------------------
# Schur solve


def _invert_blocks(h_ll: np.ndarray, lam: float) -> np.ndarray:
    """Batched inverse of damped 3x3 landmark blocks (adjugate formula)."""
    a = h_ll + lam * np.eye(3)
    c00 = a[:, 1, 1] * a[:, 2, 2] - a[:, 1, 2] * a[:, 2, 1]
    c01 = a[:, 0, 2] * a[:, 2, 1] - a[:, 0, 1] * a[:, 2, 2]
    c02 = a[:, 0, 1] * a[:, 1, 2] - a[:, 0, 2] * a[:, 1, 1]
    c10 = a[:, 1, 2] * a[:, 2, 0] - a[:, 1, 0] * a[:, 2, 2]
    c11 = a[:, 0, 0] * a[:, 2, 2] - a[:, 0, 2] * a[:, 2, 0]
    c12 = a[:, 0, 2] * a[:, 1, 0] - a[:, 0, 0] * a[:, 1, 2]
    c20 = a[:, 1, 0] * a[:, 2, 1] - a[:, 1, 1] * a[:, 2, 0]
    c21 = a[:, 0, 1] * a[:, 2, 0] - a[:, 0, 0] * a[:, 2, 1]
    c22 = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
    det = a[:, 0, 0] * c00 + a[:, 0, 1] * c10 + a[:, 0, 2] * c20
    if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
        raise IncreaseDamping("landmark block not positive definite")
    inv = np.empty_like(a)
    inv[:, 0, 0], inv[:, 0, 1], inv[:, 0, 2] = c00, c01, c02
    inv[:, 1, 0], inv[:, 1, 1], inv[:, 1, 2] = c10, c11, c12
    inv[:, 2, 0], inv[:, 2, 1], inv[:, 2, 2] = c20, c21, c22
    return inv / det[:, None, None]


def schur_solve(ne: NormalEquations, lam: float):
    """Solve the damped normal equations by landmark marginalization.

    Returns (delta_p (P,), delta_l (L, 3)). Raises IncreaseDamping when the
    reduced system is not positive definite at this damping level.
    """
    p = ne.pose_dim
    nl = ne.h_ll.shape[0]
    hpp = ne.h_pp + lam * np.eye(p)
    if nl == 0:
        try:
            return solve_spd(hpp, ne.b_p), np.zeros((0, 3))
        except NotPositiveDefinite as e:
            raise IncreaseDamping(str(e)) from e

    inv_ll = _invert_blocks(ne.h_ll, lam)
    hpl3 = ne.h_pl.reshape(p, nl, 3)
    b_l3 = ne.b_l.reshape(nl, 3)
    tmp = np.einsum("plk,lkj->plj", hpl3, inv_ll)
    s = hpp - np.einsum("pli,qli->pq", tmp, hpl3)
    rhs = ne.b_p - np.einsum("pli,li->p", tmp, b_l3)
    s = 0.5 * (s + s.T)
    try:
        delta_p = solve_spd(s, rhs)
    except NotPositiveDefinite as e:
        raise IncreaseDamping(str(e)) from e
    hlp_dp = np.einsum("pli,p->li", hpl3, delta_p)
    delta_l = np.einsum("lij,lj->li", inv_ll, b_l3 - hlp_dp)
    return delta_p, delta_l


# ---------------------------------------------------------------------------
# cost and LM loop


def total_cost(graph: PoseGraph, noise: ImuNoiseModel, pixel_sigma: float,
               huber_delta: float = 0.0087):
    """Robust cost of the window; returns (cost, n_valid_reprojections)."""
    cost = 0.0
    n_valid = 0
    lm_ids = list(graph.landmarks.keys())
    lm_index = {lid: i for i, lid in enumerate(lm_ids)}
    if lm_ids:
        lm_pos = np.array([graph.landmarks[lid].position for lid in lm_ids])
        per_kf = _observation_arrays(graph, lm_index)
        for ki in range(len(graph.keyframes)):
            entries = per_kf[ki]
            if not entries:
                continue
            _, res, _, _, _, sig, valid = _batched_reprojection(
                graph, ki, entries, lm_pos
            )
            r_sq = (res[valid] ** 2).sum(axis=1)
            cost += float((_huber_cost(r_sq, huber_delta) / sig[valid] ** 2).sum())
            n_valid += int(valid.sum())

    g_basis = _gravity_basis(graph.gravity) if graph.optimize_gravity else None
    for ei, edge in enumerate(graph.imu_edges):
        kf0, kf1 = graph.keyframes[ei], graph.keyframes[ei + 1]
        r, _, _, _ = imu_residual_jacobians(edge, kf0, kf1, graph.gravity, g_basis)
        info = inv_spd(edge.covariance + 1e-16 * np.eye(9))
        cost += 0.5 * float(r @ info @ r)
        rb = np.concatenate(
            [kf1.gyro_bias - kf0.gyro_bias, kf1.accel_bias - kf0.accel_bias]
        )
        cost += 0.5 * float(rb @ _bias_walk_info(noise, edge.delta_t) @ rb)

    if graph.keyframes:
        r_a, _, info_a = anchor_constraints(graph)
        cost += 0.5 * float(r_a @ info_a @ r_a)
    return cost, n_valid


def _apply_step(graph: PoseGraph, ne: NormalEquations, delta_p, delta_l):
    """New keyframe/landmark/gravity states after a boxplus step."""
    new_kfs = [
        kf.boxplus(delta_p[STATE_DIM * i : STATE_DIM * (i + 1)])
        for i, kf in enumerate(graph.keyframes)
    ]
    new_lms = {}
    for i, lid in enumerate(ne.landmark_ids):
        lm = graph.landmarks[lid]
        new_lms[lid] = replace(lm, position=lm.position + delta_l[i])
    gravity = graph.gravity
    if ne.gravity_cols is not None:
        dg = delta_p[ne.gravity_cols]
        basis = _gravity_basis(graph.gravity)
        g_rot = rot.so3_exp(basis @ dg) @ graph.gravity
        gravity = GRAVITY_MAGNITUDE * g_rot / np.sqrt(g_rot @ g_rot)
    return new_kfs, new_lms, gravity


@dataclass
class OptimizeReport:
    initial_cost: float
    final_cost: float
    iterations_run: int
    accepted_steps: int
    lambda_final: float


def lm_optimize(graph: PoseGraph, iterations: int, noise: ImuNoiseModel,
                pixel_sigma: float = 0.0087, huber_delta: float = 0.0087,
                lambda_init: float = 1e-4) -> OptimizeReport:
    """Levenberg-Marquardt on the window, in place; cost never increases.

    Each iteration assembles (when the state changed), solves the damped
    Schur system, and accepts the step only if the robust cost decreases
    (lambda /2 on accept, x10 on reject, clamped to [1e-9, 1e9]).
    """
    lam = float(np.clip(lambda_init, LAMBDA_MIN, LAMBDA_MAX))
    cost, n_valid = total_cost(graph, noise, pixel_sigma, huber_delta)
    if not np.isfinite(cost):
        raise OptimizerAbort(f"non-finite initial cost {cost}")
    initial_cost = cost
    ne = None
    accepted = 0
    it = 0
    while it < iterations:
        it += 1
        if ne is None:
            ne = assemble(graph, noise, pixel_sigma, huber_delta)
        try:
            delta_p, delta_l = schur_solve(ne, lam)
        except IncreaseDamping:
            lam = min(lam * 10.0, LAMBDA_MAX)
            continue
        if not (np.all(np.isfinite(delta_p)) and np.all(np.isfinite(delta_l))):
            lam = min(lam * 10.0, LAMBDA_MAX)
            continue
        new_kfs, new_lms, new_g = _apply_step(graph, ne, delta_p, delta_l)
        trial = replace(
            graph,
            keyframes=new_kfs,
            landmarks={**graph.landmarks, **new_lms},
            gravity=new_g,
        )
        new_cost, new_valid = total_cost(trial, noise, pixel_sigma, huber_delta)
        if not np.isfinite(new_cost):
            raise OptimizerAbort(f"non-finite cost {new_cost} during optimization")
        if new_cost < cost and new_valid >= n_valid:
            graph.keyframes = trial.keyframes
            graph.landmarks = trial.landmarks
            graph.gravity = trial.gravity
            cost, n_valid = new_cost, new_valid
            lam = max(lam * 0.5, LAMBDA_MIN)
            accepted += 1
            ne = None
        else:
            lam = min(lam * 10.0, LAMBDA_MAX)
    return OptimizeReport(
        initial_cost=initial_cost,
        final_cost=cost,
        iterations_run=it,
        accepted_steps=accepted,
        lambda_final=lam,
    )


# ---------------------------------------------------------------------------
# window maintenance


def slide_window(graph: PoseGraph, new_kf: KeyframeState,
                 edge: PreintegratedImu | None) -> PoseGraph:
    """Append a keyframe (with its IMU edge) and enforce the window caps.

    Drops the oldest keyframe, its observations and IMU edge when the window
    exceeds its size, removes landmarks left with fewer than 2 observations,
    and evicts oldest landmarks beyond the landmark cap.
    """
    if graph.keyframes:
        if edge is None:
            raise ValueError("slide_window: IMU edge required between keyframes")
        last = graph.keyframes[-1]
        if edge.t_start != last.timestamp or edge.t_end != new_kf.timestamp:
            raise ValueError(
                "slide_window: edge timestamps do not span (last, new) keyframes"
            )
        graph.imu_edges.append(edge)
    graph.add_keyframe(new_kf)

    if len(graph.keyframes) > graph.window_size:
        dropped = graph.keyframes.pop(0)
        graph.imu_edges.pop(0)
        graph.observations = [
            o for o in graph.observations if o.keyframe_id != dropped.id
        ]
        for lm in graph.landmarks.values():
            lm.observations = [
                (kid, pt) for kid, pt in lm.observations if kid != dropped.id
            ]
        starved = [
            lid for lid, lm in graph.landmarks.items() if len(lm.observations) < 2
        ]
        if starved:
            starved_set = set(starved)
            for lid in starved:
                del graph.landmarks[lid]
            graph.observations = [
                o for o in graph.observations if o.landmark_id not in starved_set
            ]
        graph.anchor_ref = graph.keyframes[0].copy()

    if len(graph.landmarks) > graph.max_landmarks:
        extra = len(graph.landmarks) - graph.max_landmarks
        evict = list(graph.landmarks.keys())[:extra]  # insertion order = age
        evict_set = set(evict)
        for lid in evict:
            del graph.landmarks[lid]
        graph.observations = [
            o for o in graph.observations if o.landmark_id not in evict_set
        ]
    return graph


def update_gravity(graph: PoseGraph, enabled: bool) -> PoseGraph:
    """Toggle gravity-direction optimization (2 dof, fixed 9.81 magnitude)."""
    graph.optimize_gravity = bool(enabled)
    return graph
