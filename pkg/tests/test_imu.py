from dataclasses import dataclass

import numpy as np
import pytest

from monovio import rotation as rot
from monovio.errors import DataGap, ReintegrationRequired
from monovio.geometry import Pose
from monovio.imu import (
    ImuNoiseModel,
    ImuPreintegrator,
    ImuSample,
    bias_correct,
    imu_residual_jacobians,
    imu_residuals,
    preintegrate,
)
from monovio.linalg import jacobi_eigen

NS = 1_000_000_000
NOISE = ImuNoiseModel()
GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class State:
    pose: Pose
    velocity: np.ndarray
    gyro_bias: np.ndarray
    accel_bias: np.ndarray


def make_samples(gyro, accel, duration=1.0, rate=200.0, t0=0):
    n = int(round(duration * rate))
    dt_ns = int(round(NS / rate))
    return [
        ImuSample(timestamp=t0 + k * dt_ns, gyro=np.asarray(gyro, float), accel=np.asarray(accel, float))
        for k in range(n + 1)
    ]


def random_samples(rng, n=40, t0=0, rate=200.0):
    dt_ns = int(round(NS / rate))
    return [
        ImuSample(
            timestamp=t0 + k * dt_ns,
            gyro=rng.normal(scale=0.5, size=3),
            accel=rng.normal(scale=2.0, size=3) + [0, 0, 9.81],
        )
        for k in range(n)
    ]


def propagate(state: State, pre, g=GRAVITY) -> State:
    """States implied by the pre-integrated deltas (the defining identities)."""
    r0 = state.pose.matrix()
    dt = pre.delta_t
    r1 = r0 @ pre.delta_r()
    v1 = state.velocity + g * dt + r0 @ pre.delta_v
    p1 = state.pose.t + state.velocity * dt + 0.5 * g * dt * dt + r0 @ pre.delta_p
    return State(Pose.from_rt(r1, p1), v1, state.gyro_bias.copy(), state.accel_bias.copy())


def random_state(rng) -> State:
    return State(
        pose=Pose.from_rt(rot.so3_exp(rng.normal(size=3)), rng.normal(size=3)),
        velocity=rng.normal(size=3),
        gyro_bias=rng.normal(scale=0.01, size=3),
        accel_bias=rng.normal(scale=0.05, size=3),
    )


class TestPreintegrate:
    def test_rest_with_zero_corrected_accel(self):
        samples = make_samples([0, 0, 0], [0, 0, 0], duration=0.05, rate=200.0)[1:]
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE, t_start_ns=0)
        assert pre.delta_t == pytest.approx(0.05)
        assert np.allclose(pre.delta_r(), np.eye(3))
        assert np.allclose(pre.delta_v, 0.0)
        assert np.allclose(pre.delta_p, 0.0)

    def test_constant_yaw_rate(self):
        samples = make_samples([0, 0, 1.0], [0, 0, 0], duration=1.0)
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        # oracle: closed-form SO(3) exponential
        expected = rot.so3_exp(np.array([0.0, 0.0, 1.0]))
        assert np.abs(pre.delta_r() - expected).max() < 1e-6

    def test_constant_acceleration_kinematics(self):
        samples = make_samples([0, 0, 0], [1.0, 0, 0], duration=1.0)
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        assert np.allclose(pre.delta_v, [1.0, 0, 0], atol=1e-6)
        assert np.allclose(pre.delta_p, [0.5, 0, 0], atol=1e-6)
        assert pre.delta_t == pytest.approx(1.0)

    def test_composition_matches_concatenation(self):
        rng = np.random.default_rng(0)
        samples = random_samples(rng, n=41)
        full = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        first = preintegrate(samples[:21], np.zeros(3), np.zeros(3), NOISE)
        second = preintegrate(samples[20:], np.zeros(3), np.zeros(3), NOISE)
        r1 = first.delta_r()
        dq = rot.quat_mul(first.delta_q, second.delta_q)
        dv = first.delta_v + r1 @ second.delta_v
        dp = first.delta_p + first.delta_v * second.delta_t + r1 @ second.delta_p
        assert np.abs(rot.quat_to_matrix(dq) - full.delta_r()).max() < 1e-9
        assert np.abs(dv - full.delta_v).max() < 1e-9
        assert np.abs(dp - full.delta_p).max() < 1e-9
        assert first.delta_t + second.delta_t == pytest.approx(full.delta_t)

    def test_covariance_psd_every_step(self):
        rng = np.random.default_rng(1)
        acc = ImuPreintegrator(0, np.zeros(3), np.zeros(3), NOISE)
        for s in random_samples(rng, n=30):
            acc.add(s)
            lam, _ = jacobi_eigen(acc.cov)
            assert lam[-1] >= -1e-12
            assert np.abs(acc.cov - acc.cov.T).max() < 1e-15

    def test_timestamp_disorder_rejected(self):
        s = make_samples([0, 0, 0], [0, 0, 0], duration=0.1)
        s[3], s[4] = s[4], s[3]
        with pytest.raises(ValueError):
            preintegrate(s, np.zeros(3), np.zeros(3), NOISE)

    def test_gap_rejected(self):
        s = [
            ImuSample(0, np.zeros(3), np.zeros(3)),
            ImuSample(int(0.2 * NS), np.zeros(3), np.zeros(3)),
        ]
        with pytest.raises(DataGap):
            preintegrate(s, np.zeros(3), np.zeros(3), NOISE)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            preintegrate([], np.zeros(3), np.zeros(3), NOISE)


class TestResiduals:
    def test_zero_at_exactly_integrated_states(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            samples = random_samples(rng, n=25)
            bg = rng.normal(scale=0.01, size=3)
            ba = rng.normal(scale=0.05, size=3)
            pre = preintegrate(samples, bg, ba, NOISE)
            s0 = random_state(rng)
            s0.gyro_bias, s0.accel_bias = bg, ba
            s1 = propagate(s0, pre)
            r_r, r_v, r_p = imu_residuals(pre, s0, s1, GRAVITY)
            assert np.abs(r_r).max() < 1e-9
            assert np.abs(r_v).max() < 1e-9
            assert np.abs(r_p).max() < 1e-9

    def test_position_linearity(self):
        rng = np.random.default_rng(3)
        samples = random_samples(rng, n=20)
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        s0 = State(Pose.identity(), np.zeros(3), np.zeros(3), np.zeros(3))
        s1 = propagate(s0, pre)
        _, _, r_p0 = imu_residuals(pre, s0, s1, GRAVITY)
        s1b = State(
            Pose(s1.pose.q, s1.pose.t + np.array([0.1, 0.0, 0.0])),
            s1.velocity, s1.gyro_bias, s1.accel_bias,
        )
        _, _, r_p1 = imu_residuals(pre, s0, s1b, GRAVITY)
        # R_k = I so the shift passes straight through Eq-style linearity
        assert np.allclose(r_p1 - r_p0, [0.1, 0.0, 0.0], atol=1e-12)

    def test_direct_formula_oracle(self):
        rng = np.random.default_rng(4)
        samples = random_samples(rng, n=30)
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        s0 = random_state(rng)
        s0.gyro_bias = pre.bias_gyro_ref.copy()
        s0.accel_bias = pre.bias_accel_ref.copy()
        s1 = random_state(rng)
        r_r, r_v, r_p = imu_residuals(pre, s0, s1, GRAVITY)
        # independent transcription of the residual definitions
        rk = s0.pose.matrix()
        rk1 = s1.pose.matrix()
        dt = pre.delta_t
        exp_r = rot.so3_log(pre.delta_r().T @ rk.T @ rk1)
        exp_v = rk.T @ (s1.velocity - s0.velocity - GRAVITY * dt) - pre.delta_v
        exp_p = (
            rk.T @ (s1.pose.t - s0.pose.t - s0.velocity * dt - 0.5 * GRAVITY * dt * dt)
            - pre.delta_p
        )
        assert np.allclose(r_r, exp_r, atol=1e-12)
        assert np.allclose(r_v, exp_v, atol=1e-12)
        assert np.allclose(r_p, exp_p, atol=1e-12)

    def test_velocity_linearity_jacobian(self):
        rng = np.random.default_rng(5)
        samples = random_samples(rng, n=20)
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        s0 = random_state(rng)
        s0.gyro_bias = np.zeros(3)
        s0.accel_bias = np.zeros(3)
        s1 = propagate(s0, pre)
        rk = s0.pose.matrix()
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = 1e-4
            s1p = State(s1.pose, s1.velocity + e, s1.gyro_bias, s1.accel_bias)
            s1m = State(s1.pose, s1.velocity - e, s1.gyro_bias, s1.accel_bias)
            _, rvp, _ = imu_residuals(pre, s0, s1p, GRAVITY)
            _, rvm, _ = imu_residuals(pre, s0, s1m, GRAVITY)
            slope = (rvp - rvm) / 2e-4
            assert np.allclose(slope, rk.T[:, axis], atol=1e-9)


class TestBiasCorrect:
    def test_zero_delta_bitwise(self):
        rng = np.random.default_rng(6)
        pre = preintegrate(random_samples(rng), np.zeros(3), np.zeros(3), NOISE)
        out = bias_correct(pre, np.zeros(3), np.zeros(3))
        assert np.array_equal(out.delta_q, pre.delta_q)
        assert np.array_equal(out.delta_v, pre.delta_v)
        assert np.array_equal(out.delta_p, pre.delta_p)

    def test_gyro_delta_matches_reintegration(self):
        rng = np.random.default_rng(7)
        samples = random_samples(rng, n=30)
        db = np.array([1e-3, -1e-3, 5e-4])
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        corrected = bias_correct(pre, db, np.zeros(3))
        # oracle: full re-integration at the new bias
        exact = preintegrate(samples, db, np.zeros(3), NOISE)
        assert np.abs(corrected.delta_r() - exact.delta_r()).max() < 1e-5
        assert np.abs(corrected.delta_v - exact.delta_v).max() < 1e-5
        assert np.abs(corrected.delta_p - exact.delta_p).max() < 1e-5

    def test_accel_delta_matches_reintegration(self):
        rng = np.random.default_rng(8)
        samples = random_samples(rng, n=30)
        db = np.array([1e-3, 2e-3, -1e-3])
        pre = preintegrate(samples, np.zeros(3), np.zeros(3), NOISE)
        corrected = bias_correct(pre, np.zeros(3), db)
        exact = preintegrate(samples, np.zeros(3), db, NOISE)
        assert np.abs(corrected.delta_p - exact.delta_p).max() < 1e-5
        assert np.abs(corrected.delta_v - exact.delta_v).max() < 1e-5

    def test_large_delta_requires_reintegration(self):
        rng = np.random.default_rng(9)
        pre = preintegrate(random_samples(rng), np.zeros(3), np.zeros(3), NOISE)
        with pytest.raises(ReintegrationRequired):
            bias_correct(pre, np.array([0.2, 0.0, 0.0]), np.zeros(3))


def boxplus_state(s: State, d: np.ndarray) -> State:
    return State(
        pose=Pose(rot.quat_boxplus(s.pose.q, d[0:3]), s.pose.t + d[3:6]),
        velocity=s.velocity + d[6:9],
        gyro_bias=s.gyro_bias + d[9:12],
        accel_bias=s.accel_bias + d[12:15],
    )


class TestResidualJacobians:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        basis = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        g = GRAVITY
        for _ in range(5):
            samples = random_samples(rng, n=25)
            bg = rng.normal(scale=0.005, size=3)
            ba = rng.normal(scale=0.02, size=3)
            pre = preintegrate(samples, bg, ba, NOISE)
            s0 = random_state(rng)
            s1 = random_state(rng)
            r, j_k, j_k1, j_g = imu_residual_jacobians(pre, s0, s1, g, basis)

            def stack(a, b, gg):
                rr, rv, rp = imu_residuals(pre, a, b, gg)
                return np.concatenate([rr, rv, rp])

            assert np.allclose(r, stack(s0, s1, g), atol=1e-12)

            eps = 1e-6
            for col in range(15):
                d = np.zeros(15)
                d[col] = eps
                fd_k = (stack(boxplus_state(s0, d), s1, g) - stack(boxplus_state(s0, -d), s1, g)) / (2 * eps)
                fd_k1 = (stack(s0, boxplus_state(s1, d), g) - stack(s0, boxplus_state(s1, -d), g)) / (2 * eps)
                scale = max(1.0, np.abs(j_k[:, col]).max())
                assert np.abs(fd_k - j_k[:, col]).max() < 1e-4 * scale
                scale = max(1.0, np.abs(j_k1[:, col]).max())
                assert np.abs(fd_k1 - j_k1[:, col]).max() < 1e-4 * scale
            for col in range(2):
                d = np.zeros(2)
                d[col] = eps
                gp = rot.so3_exp(basis @ d) @ g
                gm = rot.so3_exp(-(basis @ d)) @ g
                fd_g = (stack(s0, s1, gp) - stack(s0, s1, gm)) / (2 * eps)
                scale = max(1.0, np.abs(j_g[:, col]).max())
                assert np.abs(fd_g - j_g[:, col]).max() < 1e-4 * scale


class TestNoiseModel:
    def test_positive_required(self):
        with pytest.raises(ValueError):
            ImuNoiseModel(gyro_noise_density=0.0)
