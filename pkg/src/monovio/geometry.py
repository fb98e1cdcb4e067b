"""Multi-view geometry: camera model, 8-point essential estimation and
decomposition, EPnP absolute pose, DLT triangulation, and a deterministic
RANSAC engine.

Conventions
-----------
Image measurements are undistorted, normalized coordinates (x, y) with
z = 1 implied. A `Pose` is the rigid map X_out = R @ X_in + t. Two-view
functions treat correspondences (xa, xb) as observations of the same point
from cameras A and B; the recovered relative pose maps A-frame coordinates
into the B frame (X_b = R X_a + t). Poses handed to `triangulate_dlt` and
`epnp` are world-to-camera projections.

The epipolar constraint used throughout: xb^T E xa = 0 with E = [t]x R.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotation as rot
from .errors import (
    CheiralityFailure,
    ConsensusFailure,
    DegenerateConfiguration,
    NumericalFailure,
)
from .linalg import jacobi_eigen, solve_general, svd_square


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")


@dataclass
class Pose:
    """Rigid transform X_out = R @ X_in + t, rotation stored as a unit
    quaternion [w, x, y, z]."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.q = rot.quat_normalize(np.asarray(self.q, dtype=np.float64))
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(self.t)):
            raise ValueError("non-finite translation")

    @staticmethod
    def identity() -> "Pose":
        return Pose(rot.quat_identity(), np.zeros(3))

    @staticmethod
    def from_rt(r: np.ndarray, t) -> "Pose":
        return Pose(rot.matrix_to_quat(r), t)

    def matrix(self) -> np.ndarray:
        return rot.quat_to_matrix(self.q)

    def inverse(self) -> "Pose":
        r = self.matrix()
        return Pose.from_rt(r.T, -r.T @ self.t)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self * other)(X) = self(other(X))."""
        return Pose(
            rot.quat_mul(self.q, other.q), self.matrix() @ other.t + self.t
        )

    def transform(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix().T + self.t


@dataclass
class EssentialMatrix:
    e: np.ndarray

    def singular_values(self) -> np.ndarray:
        return svd_square(self.e).sigma


@dataclass
class Landmark:
    id: int
    position: np.ndarray
    descriptor: np.ndarray
    observations: list = field(default_factory=list)  # (keyframe_id, xy)


# ---------------------------------------------------------------------------
# camera model


def distort_normalized(pts, intr: CameraIntrinsics) -> np.ndarray:
    """Forward radial-tangential distortion of normalized points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    x, y = pts[:, 0], pts[:, 1]
    r2 = x * x + y * y
    radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    return np.stack([xd, yd], axis=1)


def project_to_pixels(pts_norm, intr: CameraIntrinsics) -> np.ndarray:
    d = distort_normalized(pts_norm, intr)
    return np.stack([d[:, 0] * intr.fx + intr.cx, d[:, 1] * intr.fy + intr.cy], axis=1)


def undistort_normalize(pts_px, intr: CameraIntrinsics, max_iter: int = 10) -> np.ndarray:
    """Pixel coordinates -> undistorted normalized coordinates.

    Fixed-point inversion of the radial-tangential model; the round trip
    through the forward model must land within 0.05 px or NumericalFailure
    is raised.
    """
    pts_px = np.atleast_2d(np.asarray(pts_px, dtype=np.float64))
    xd = (pts_px[:, 0] - intr.cx) / intr.fx
    yd = (pts_px[:, 1] - intr.cy) / intr.fy
    x, y = xd.copy(), yd.copy()
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
        dx = 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
        dy = intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
        x = (xd - dx) / radial
        y = (yd - dy) / radial
    out = np.stack([x, y], axis=1)
    back = project_to_pixels(out, intr)
    err = np.abs(back - pts_px).max()
    if not np.isfinite(err) or err > 0.05:
        raise NumericalFailure(f"undistortion round-trip error {err:.3g} px")
    return out


# ---------------------------------------------------------------------------
# essential matrix


def eight_point(xa, xb) -> EssentialMatrix:
    """Least-squares essential matrix from >= 8 normalized correspondences.

    Minimizes sum (xb^T E xa)^2 via the eigenvector of the smallest
    eigenvalue of the 9x9 normal matrix, then projects to rank 2 with the
    two leading singular values averaged. The result is scaled to unit
    Frobenius norm.
    """
    xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    n = xa.shape[0]
    if n < 8 or xb.shape[0] != n:
        raise ValueError("eight_point needs >= 8 correspondences on both sides")

    ha = np.column_stack([xa, np.ones(n)])
    hb = np.column_stack([xb, np.ones(n)])
    # row = kron(hb_i, ha_i) for E flattened row-major
    a = (hb[:, :, None] * ha[:, None, :]).reshape(n, 9)
    normal = a.T @ a
    lam, v = jacobi_eigen(normal)
    if lam[-2] <= 1e-12 * max(lam[0], 1e-300):
        raise DegenerateConfiguration("eight_point: rank-deficient design matrix")
    e = v[:, -1].reshape(3, 3)

    r = svd_square(e)
    s = 0.5 * (r.sigma[0] + r.sigma[1])
    e2 = (r.u * np.array([s, s, 0.0])) @ r.v.T
    e2 = e2 / np.sqrt((e2 * e2).sum())
    return EssentialMatrix(e=e2)


def sampson_squared(e: np.ndarray, xa, xb) -> np.ndarray:
    """Squared first-order (Sampson) epipolar distances."""
    xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    ha = np.column_stack([xa, np.ones(xa.shape[0])])
    hb = np.column_stack([xb, np.ones(xb.shape[0])])
    e_xa = ha @ e.T  # rows: E @ xa_i
    et_xb = hb @ e  # rows: E^T @ xb_i
    num = (hb * e_xa).sum(axis=1) ** 2
    den = e_xa[:, 0] ** 2 + e_xa[:, 1] ** 2 + et_xb[:, 0] ** 2 + et_xb[:, 1] ** 2
    return num / np.maximum(den, 1e-300)


def _two_view_depths(r: np.ndarray, t: np.ndarray, xa, xb):
    """Depths of correspondences in both views for X_b = R X_a + t."""
    da = np.column_stack([xa, np.ones(len(xa))])
    db = np.column_stack([xb, np.ones(len(xb))])
    rda = da @ r.T
    cross_rd_db = np.cross(rda, db)
    cross_t_db = np.cross(np.broadcast_to(t, db.shape), db)
    denom = (cross_rd_db * cross_rd_db).sum(axis=1)
    za = -(cross_t_db * cross_rd_db).sum(axis=1) / np.maximum(denom, 1e-300)
    zb = za * rda[:, 2] + t[2]
    return za, zb


def decompose_essential(e: EssentialMatrix, xa, xb) -> Pose:
    """Relative pose (X_b = R X_a + t, ||t|| = 1) from an essential matrix.

    Among the four (R, +-t) candidates, returns the one that places the most
    correspondences in front of both cameras; fails unless more than half of
    the points pass that cheirality test.
    """
    xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    if xa.shape[0] < 1:
        raise ValueError("decompose_essential needs at least one correspondence")

    res = svd_square(e.e)
    u, v = res.u, res.v
    if np.linalg.det(u) < 0.0:
        u = -u
    if np.linalg.det(v) < 0.0:
        v = -v
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r1 = u @ w @ v.T
    r2 = u @ w.T @ v.T
    t = u[:, 2]
    t = t / np.sqrt(t @ t)

    best = None
    for r_cand in (r1, r2):
        for t_cand in (t, -t):
            za, zb = _two_view_depths(r_cand, t_cand, xa, xb)
            count = int(np.count_nonzero((za > 0.0) & (zb > 0.0)))
            if best is None or count > best[0]:
                best = (count, r_cand, t_cand)
    count, r_best, t_best = best
    if count <= 0.5 * xa.shape[0]:
        raise CheiralityFailure(
            f"only {count}/{xa.shape[0]} points in front of both cameras"
        )
    return Pose.from_rt(r_best, t_best)


def essential_from_pose(pose_ab: Pose) -> np.ndarray:
    """E = [t]x R for X_b = R X_a + t, scaled to unit Frobenius norm."""
    r = pose_ab.matrix()
    e = rot.hat(pose_ab.t) @ r
    return e / np.sqrt((e * e).sum())


# ---------------------------------------------------------------------------
# EPnP


def _control_points(world: np.ndarray):
    """Centroid + principal-axis control points; detects the planar case."""
    n = world.shape[0]
    c0 = world.mean(axis=0)
    centered = world - c0
    cov = centered.T @ centered / n
    lam, axes = jacobi_eigen(cov)
    lam = np.maximum(lam, 0.0)
    if lam[1] <= 1e-12 * max(lam[0], 1e-300):
        raise DegenerateConfiguration("epnp: world points are collinear")
    planar = lam[2] <= 1e-9 * lam[0]
    ctrl = [c0]
    count = 2 if planar else 3
    for i in range(count):
        ctrl.append(c0 + np.sqrt(lam[i]) * axes[:, i])
    return np.asarray(ctrl), planar


def _barycentric(world: np.ndarray, ctrl: np.ndarray) -> np.ndarray:
    m = ctrl.shape[0]
    a = np.vstack([ctrl.T, np.ones(m)])  # 4 x m
    alphas = np.empty((world.shape[0], m))
    if m == 4:
        for i, p in enumerate(world):
            alphas[i] = solve_general(a, np.array([p[0], p[1], p[2], 1.0]))
    else:
        # planar: least-squares through the 3x3 normal system
        at_a = a.T @ a
        for i, p in enumerate(world):
            rhs = a.T @ np.array([p[0], p[1], p[2], 1.0])
            alphas[i] = solve_general(at_a, rhs)
    return alphas


def _gauss_newton_betas(vs_mats, dist_w, pairs, betas, iters: int = 10):
    """Refine betas so control-point distances match the world distances."""
    nb = betas.shape[0]
    for _ in range(iters):
        jac = np.zeros((len(pairs), nb))
        res = np.zeros(len(pairs))
        for r, (a, b) in enumerate(pairs):
            dv = vs_mats[:, a, :] - vs_mats[:, b, :]  # (nb, 3)
            diff = betas @ dv
            res[r] = diff @ diff - dist_w[r]
            jac[r] = 2.0 * (dv @ diff)
        jtj = jac.T @ jac + 1e-12 * np.eye(nb)
        try:
            step = solve_general(jtj, -(jac.T @ res))
        except Exception:
            break
        betas = betas + step
        if np.abs(step).max() < 1e-14:
            break
    return betas


def _pose_from_betas(betas, vs_mats, alphas, world, image):
    """Camera control points from betas -> rigid alignment -> reprojection."""
    cc = np.tensordot(betas, vs_mats, axes=1)  # (m, 3)
    pc = alphas @ cc
    if pc[:, 2].sum() < 0.0:
        pc = -pc
    s, r, t = rigid_align(world, pc, with_scale=False)
    proj = world @ r.T + t
    depths = proj[:, 2]
    if np.any(depths <= 1e-12):
        return None
    uv = proj[:, :2] / depths[:, None]
    err = uv - image
    rms = float(np.sqrt((err * err).sum() / err.shape[0]))
    return rms, r, t


def epnp(world, image):
    """EPnP absolute pose from >= 4 world-image correspondences.

    Returns (pose, reprojection_rms) with pose the world-to-camera transform.
    Handles the planar configuration with three control points; collinear
    points raise DegenerateConfiguration, and a majority of negative depths
    raises CheiralityFailure.
    """
    world = np.atleast_2d(np.asarray(world, dtype=np.float64))
    image = np.atleast_2d(np.asarray(image, dtype=np.float64))
    n = world.shape[0]
    if n < 4 or image.shape[0] != n:
        raise ValueError("epnp needs >= 4 correspondences on both sides")

    ctrl, planar = _control_points(world)
    m = ctrl.shape[0]
    alphas = _barycentric(world, ctrl)

    # M x = 0 with x the stacked camera-frame control points
    mm = np.zeros((2 * n, 3 * m))
    for j in range(m):
        mm[0::2, 3 * j] = alphas[:, j]
        mm[0::2, 3 * j + 2] = -alphas[:, j] * image[:, 0]
        mm[1::2, 3 * j + 1] = alphas[:, j]
        mm[1::2, 3 * j + 2] = -alphas[:, j] * image[:, 1]
    _, vecs = jacobi_eigen(mm.T @ mm)

    n_null = 3 if planar else 4
    vs_mats = np.stack(
        [vecs[:, -(k + 1)].reshape(m, 3) for k in range(n_null)], axis=0
    )  # (n_null, m, 3), index 0 = smallest eigenvalue

    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    dist_w = np.array([(ctrl[a] - ctrl[b]) @ (ctrl[a] - ctrl[b]) for a, b in pairs])

    candidates = []
    # case N=1: scale on the dominant null vector
    dv1 = np.array([vs_mats[0, a] - vs_mats[0, b] for a, b in pairs])
    denom = (dv1 * dv1).sum()
    if denom > 0.0:
        beta = np.sqrt(np.abs(dist_w.sum() / denom)) if denom > 0 else 0.0
        b = np.zeros(n_null)
        b[0] = beta
        candidates.append(b)

    # case N=2: linear system in (b11, b12, b22)
    dv = np.stack(
        [np.array([vs_mats[k, a] - vs_mats[k, b] for a, b in pairs]) for k in range(2)]
    )
    l2 = np.column_stack(
        [
            (dv[0] * dv[0]).sum(axis=1),
            2.0 * (dv[0] * dv[1]).sum(axis=1),
            (dv[1] * dv[1]).sum(axis=1),
        ]
    )
    sol = _lstsq(l2, dist_w)
    if sol is not None:
        b11, b12, b22 = sol
        beta1 = np.sqrt(abs(b11))
        beta2 = np.sqrt(abs(b22)) * (1.0 if b12 >= 0.0 else -1.0)
        if b11 < 0.0:
            beta1, beta2 = 0.0, np.sqrt(abs(b22))
        b = np.zeros(n_null)
        b[0], b[1] = beta1, beta2
        candidates.append(b)

    # case N=3: full quadratic-product solve when enough distance equations
    if not planar and len(pairs) >= 6:
        dv3 = np.stack(
            [
                np.array([vs_mats[k, a] - vs_mats[k, b] for a, b in pairs])
                for k in range(3)
            ]
        )
        l3 = np.column_stack(
            [
                (dv3[0] * dv3[0]).sum(axis=1),
                2.0 * (dv3[0] * dv3[1]).sum(axis=1),
                2.0 * (dv3[0] * dv3[2]).sum(axis=1),
                (dv3[1] * dv3[1]).sum(axis=1),
                2.0 * (dv3[1] * dv3[2]).sum(axis=1),
                (dv3[2] * dv3[2]).sum(axis=1),
            ]
        )
        sol = _lstsq(l3, dist_w)
        if sol is not None:
            b11, b12, b13 = sol[0], sol[1], sol[2]
            beta1 = np.sqrt(abs(b11))
            if beta1 > 0.0:
                b = np.zeros(n_null)
                b[0] = beta1
                b[1] = b12 / beta1
                b[2] = b13 / beta1
                candidates.append(b)

    best = None
    for betas0 in candidates:
        betas = _gauss_newton_betas(vs_mats, dist_w, pairs, betas0.copy())
        out = _pose_from_betas(betas, vs_mats, alphas, world, image)
        if out is None:
            continue
        rms, r, t = out
        if best is None or rms < best[0]:
            best = (rms, r, t)
    if best is None:
        raise CheiralityFailure("epnp: no candidate produced positive depths")
    rms, r, t = best
    return Pose.from_rt(r, t), rms


def _lstsq(a: np.ndarray, b: np.ndarray):
    """Least squares via the normal equations; None when singular."""
    try:
        return solve_general(a.T @ a, a.T @ b)
    except Exception:
        return None


def reprojection_residuals_sq(pose: Pose, world, image) -> np.ndarray:
    """Squared normalized-image reprojection errors; +inf behind the camera."""
    world = np.atleast_2d(np.asarray(world, dtype=np.float64))
    image = np.atleast_2d(np.asarray(image, dtype=np.float64))
    pc = pose.transform(world)
    bad = pc[:, 2] <= 1e-12
    z = np.where(bad, 1.0, pc[:, 2])
    uv = pc[:, :2] / z[:, None]
    err = ((uv - image) ** 2).sum(axis=1)
    return np.where(bad, np.inf, err)


# ---------------------------------------------------------------------------
# triangulation


def triangulate_dlt(
    pose_a: Pose,
    pose_b: Pose,
    xa,
    xb,
    min_parallax_deg: float = 1.0,
):
    """Linear two-view triangulation of one correspondence.

    pose_a/pose_b are world-to-camera transforms. Raises
    DegenerateConfiguration for near-zero baseline, near-parallel rays, or
    parallax below the minimum; CheiralityFailure for a point behind either
    camera. Returns the world point.
    """
    xa = np.asarray(xa, dtype=np.float64).reshape(2)
    xb = np.asarray(xb, dtype=np.float64).reshape(2)
    ra, ta = pose_a.matrix(), pose_a.t
    rb, tb = pose_b.matrix(), pose_b.t

    ca = -ra.T @ ta  # camera centers in world coordinates
    cb = -rb.T @ tb
    baseline = cb - ca
    if baseline @ baseline < 1e-24:
        raise DegenerateConfiguration("triangulate_dlt: zero baseline")

    da = ra.T @ np.array([xa[0], xa[1], 1.0])
    db = rb.T @ np.array([xb[0], xb[1], 1.0])
    da = da / np.sqrt(da @ da)
    db = db / np.sqrt(db @ db)
    cos_ang = float(np.clip(da @ db, -1.0, 1.0))
    angle = np.arccos(cos_ang)
    if angle < 1e-6:
        raise DegenerateConfiguration("triangulate_dlt: parallel rays")
    if np.degrees(angle) < min_parallax_deg:
        raise DegenerateConfiguration(
            f"triangulate_dlt: parallax {np.degrees(angle):.3f} deg below minimum"
        )

    pa = np.hstack([ra, ta[:, None]])
    pb = np.hstack([rb, tb[:, None]])
    a = np.vstack(
        [
            xa[0] * pa[2] - pa[0],
            xa[1] * pa[2] - pa[1],
            xb[0] * pb[2] - pb[0],
            xb[1] * pb[2] - pb[1],
        ]
    )
    res = svd_square(a)
    xh = res.v[:, -1]
    if abs(xh[3]) < 1e-12 * np.abs(xh).max():
        raise DegenerateConfiguration("triangulate_dlt: point at infinity")
    x = xh[:3] / xh[3]

    za = (ra @ x + ta)[2]
    zb = (rb @ x + tb)[2]
    if za <= 0.0 or zb <= 0.0:
        raise CheiralityFailure("triangulated point behind a camera")
    return x


# ---------------------------------------------------------------------------
# rigid / similarity alignment (Umeyama)


def rigid_align(src, dst, with_scale: bool = False):
    """Least-squares (s, R, t) with dst ~ s R src + t (Umeyama's method)."""
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
    n = src.shape[0]
    if n < 3 or dst.shape[0] != n:
        raise ValueError("rigid_align needs >= 3 paired points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    cov = dc.T @ sc / n
    res = svd_square(cov)
    d = np.ones(3)
    if np.linalg.det(res.u) * np.linalg.det(res.v) < 0.0:
        d[2] = -1.0
    r = (res.u * d) @ res.v.T
    if with_scale:
        var_src = (sc * sc).sum() / n
        s = float((res.sigma * d).sum() / max(var_src, 1e-300))
    else:
        s = 1.0
    t = mu_d - s * (r @ mu_s)
    return s, r, t


# ---------------------------------------------------------------------------
# RANSAC


@dataclass
class RansacParams:
    iterations: int = 100
    inlier_threshold: float = 3.0e-4  # squared normalized units, ~2 px at f=115
    min_inliers: int = 15
    seed: int = 0


_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_indices(seed: int, iteration: int, k: int, n: int) -> np.ndarray:
    """k distinct indices in [0, n) from a counter-based generator keyed by
    (seed, iteration); identical for serial and split execution."""
    state = _splitmix64(((seed & _MASK64) << 1) ^ _splitmix64(iteration + 0x9E37))
    out = []
    seen = set()
    while len(out) < k:
        state = _splitmix64(state)
        idx = state % n
        if idx not in seen:
            seen.add(idx)
            out.append(idx)
    return np.asarray(out, dtype=np.int64)


class EssentialModel:
    """8-point minimal fit with squared-Sampson inlier residuals."""

    min_samples = 8

    def __init__(self, xa, xb):
        self.xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
        self.xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
        self.size = self.xa.shape[0]

    def fit(self, idx) -> EssentialMatrix:
        return eight_point(self.xa[idx], self.xb[idx])

    def residuals(self, model: EssentialMatrix) -> np.ndarray:
        return sampson_squared(model.e, self.xa, self.xb)


class EpnpModel:
    """EPnP minimal fit with squared reprojection residuals."""

    min_samples = 4

    def __init__(self, world, image):
        self.world = np.atleast_2d(np.asarray(world, dtype=np.float64))
        self.image = np.atleast_2d(np.asarray(image, dtype=np.float64))
        self.size = self.world.shape[0]

    def fit(self, idx) -> Pose:
        pose, _ = epnp(self.world[idx], self.image[idx])
        return pose

    def residuals(self, pose: Pose) -> np.ndarray:
        return reprojection_residuals_sq(pose, self.world, self.image)


def ransac(model, params: RansacParams, n_chunks: int = 1):
    """Deterministic RANSAC over a model adapter (EssentialModel/EpnpModel).

    Iterations are keyed by (seed, iteration index), so splitting the
    iteration range into chunks and merging (inliers desc, residual asc,
    iteration asc) reproduces the serial result exactly. The best model is
    re-estimated on its full inlier set before returning (model, mask).
    """
    n = model.size
    if n < model.min_samples:
        raise ValueError(
            f"ransac needs at least {model.min_samples} samples, got {n}"
        )

    chunk_edges = np.linspace(0, params.iterations, max(1, n_chunks) + 1).astype(int)
    best = None  # (count, total_residual, iteration, fitted, mask)
    for c in range(len(chunk_edges) - 1):
        cand = _ransac_range(
            model, params, int(chunk_edges[c]), int(chunk_edges[c + 1])
        )
        best = _merge_best(best, cand)

    if best is None or best[0] < params.min_inliers:
        raise ConsensusFailure(0 if best is None else best[0], params.min_inliers)

    count, _, _, fitted, mask = best
    idx = np.nonzero(mask)[0]
    try:
        refit = model.fit(idx)
    except (DegenerateConfiguration, CheiralityFailure, NumericalFailure):
        refit = fitted
    return refit, mask


def _ransac_range(model, params: RansacParams, start: int, stop: int):
    best = None
    for it in range(start, stop):
        idx = sample_indices(params.seed, it, model.min_samples, model.size)
        try:
            fitted = model.fit(idx)
        except (DegenerateConfiguration, CheiralityFailure, NumericalFailure):
            continue
        res = model.residuals(fitted)
        mask = res < params.inlier_threshold
        count = int(np.count_nonzero(mask))
        if count == 0:
            continue
        total = float(res[mask].sum())
        cand = (count, total, it, fitted, mask)
        best = _merge_best(best, cand)
    return best


def _merge_best(a, b):
    if a is None:
        return b
    if b is None:
        return a
    # more inliers first, then lower residual, then earlier iteration
    ka = (-a[0], a[1], a[2])
    kb = (-b[0], b[1], b[2])
    return a if ka <= kb else b
