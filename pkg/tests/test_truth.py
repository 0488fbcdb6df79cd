import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from statda import (ContractError, DivergenceError, EnsembleState, InsufficientSamplesError,
                    ModelSpec, REGIMES, build_triad_spec, empirical_moments, run_truth, step_rk4_em)

Z3 = np.zeros((3, 3, 3))


def linear_spec(Lambda, sigma=(0, 0, 0), F=(0, 0, 0)):
    return ModelSpec(Lambda=np.asarray(Lambda, float), gamma=Z3, F=np.asarray(F, float),
                     sigma=np.asarray(sigma, float))


def test_zero_dynamics_is_identity(rng):
    spec = linear_spec(np.zeros((3, 3)))
    U = rng.standard_normal((10, 3))
    out = step_rk4_em(spec, EnsembleState(0.0, U), 1e-3, rng)
    assert np.array_equal(out.samples, U)
    assert out.t == pytest.approx(1e-3)


def test_rk4_linear_decay():
    spec = linear_spec(-np.eye(3))
    out = step_rk4_em(spec, EnsembleState(0.0, np.array([[1.0, 0, 0]])), 1e-3,
                      np.random.default_rng(0))
    assert abs(out.samples[0, 0] - np.exp(-1e-3)) < 1e-12


def test_brownian_variance_growth():
    N, dt = 100_000, 1e-3
    spec = linear_spec(np.zeros((3, 3)), sigma=(1, 0, 0))
    out = step_rk4_em(spec, EnsembleState(0.0, np.zeros((N, 3))), dt, np.random.default_rng(3))
    assert abs(out.samples[:, 0].var() / dt - 1) <= 5 * np.sqrt(2 / N)
    assert np.all(out.samples[:, 1:] == 0)


def test_step_rejects_bad_dt(rng):
    with pytest.raises(ContractError):
        step_rk4_em(linear_spec(np.eye(3)), EnsembleState(0.0, np.zeros((2, 3))), 0.0, rng)


def test_step_divergence_reports_particle():
    spec = linear_spec(np.zeros((3, 3)))
    U = np.array([[0.0, 0, 0], [np.inf, 0, 0]])
    with pytest.raises(DivergenceError) as info:
        step_rk4_em(spec, EnsembleState(0.0, U), 1e-3, np.random.default_rng(0))
    assert info.value.index == 1


def test_run_truth_deterministic_decay():
    spec = linear_spec(-np.eye(3))
    tr = run_truth(spec, [1.0, -2.0, 0.5], [0.1, 0.1, 0.1], 1e-2, 2.0, 200, 7, snapshot_times=())
    expected = np.exp(-tr.times)[:, None] * tr.mean[0]
    np.testing.assert_allclose(tr.mean, expected, atol=1e-8)


def test_run_truth_reproducible(specs):
    a = run_truth(specs[1], REGIMES[1].u0_mean, REGIMES[1].r0_var, 1e-3, 0.2, 500, 11,
                  snapshot_times=(0.1,))
    b = run_truth(specs[1], REGIMES[1].u0_mean, REGIMES[1].r0_var, 1e-3, 0.2, 500, 11,
                  snapshot_times=(0.1,))
    for name in ("times", "mean", "cov", "m3"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.snapshots[0.1], b.snapshots[0.1])
    assert a.snapshots[0.1].shape == (500, 3)


def test_run_truth_cov_symmetric_psd(specs):
    tr = run_truth(specs[3], REGIMES[3].u0_mean, REGIMES[3].r0_var, 1e-3, 0.5, 1000, 2,
                   snapshot_times=())
    assert np.all(np.diff(tr.times) > 0)
    assert np.array_equal(tr.cov, np.swapaxes(tr.cov, 1, 2))
    assert np.min(np.linalg.eigvalsh(tr.cov)) >= -1e-10


def test_run_truth_raw_m3_flag(specs):
    kw = dict(snapshot_times=(0.05,))
    a = run_truth(specs[1], REGIMES[1].u0_mean, REGIMES[1].r0_var, 1e-3, 0.05, 300, 1, **kw)
    b = run_truth(specs[1], REGIMES[1].u0_mean, REGIMES[1].r0_var, 1e-3, 0.05, 300, 1,
                  raw_m3=True, **kw)
    X = a.snapshots[0.05]
    assert a.m3[-1] == pytest.approx(empirical_moments(X)[2], rel=1e-10)
    assert b.m3[-1] == pytest.approx(np.mean(X.prod(axis=1)), rel=1e-10)


def test_run_truth_preconditions(specs):
    with pytest.raises(ContractError):
        run_truth(specs[1], (0, 0, 0), (1, 1, 1), 1e-3, 1.0, 50, 0)
    with pytest.raises(ContractError):
        run_truth(specs[1], (0, 0, 0), (1, 1, 1), 3.0, 1.0, 100, 0)


def test_run_truth_divergence():
    spec = ModelSpec(Lambda=np.eye(3), gamma=build_triad_spec(REGIMES[3]).gamma * 50,
                     F=np.zeros(3), sigma=np.zeros(3))
    with np.errstate(all="ignore"), pytest.raises(DivergenceError) as info:
        run_truth(spec, (50, 50, 50), (1, 1, 1), 0.1, 20.0, 100, 0, snapshot_times=())
    assert info.value.t is not None


def test_linear_gaussian_matches_lyapunov():
    # gamma = 0: covariance obeys dR/dt = Lambda R + R Lambda^T + Q exactly
    p = REGIMES[1]
    lin = build_triad_spec(p).with_(gamma=Z3)
    N, T = 20_000, 2.0
    tr = run_truth(lin, p.u0_mean, p.r0_var, 1e-3, T, N, 5, snapshot_times=())
    A, Q = lin.Lambda, lin.Q_sigma

    def rhs(t, r):
        R = r.reshape(3, 3)
        return (A @ R + R @ A.T + Q).ravel()

    sol = solve_ivp(rhs, (0, T), np.diag(p.r0_var).ravel(), method="RK45", rtol=1e-10, atol=1e-12)
    R_T = sol.y[:, -1].reshape(3, 3)
    rel = np.linalg.norm(tr.cov[-1] - R_T) / np.linalg.norm(R_T)
    assert rel <= 5 * np.sqrt(2 / N)


def test_empirical_moments_hand_example():
    mean, cov, m3, skew, kurt = empirical_moments(np.array([[0.0, 0, 0], [2.0, 0, 0]]))
    np.testing.assert_array_equal(mean, [1, 0, 0])
    assert cov[0, 0] == 1.0
    assert m3 == 0.0
    assert kurt[0] == pytest.approx(1.0)


def test_empirical_moments_needs_two_samples():
    with pytest.raises(InsufficientSamplesError):
        empirical_moments(np.ones((1, 3)))


def test_gaussian_kurtosis():
    X = np.random.default_rng(1).standard_normal((1_000_000, 3))
    kurt = empirical_moments(X)[4]
    np.testing.assert_allclose(kurt, 3.0, atol=0.05)


@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.just(3)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
@settings(max_examples=100, deadline=None)
def test_empirical_cov_symmetric_psd(X):
    cov = empirical_moments(X)[1]
    assert np.array_equal(cov, cov.T)
    scale = 1 + np.max(np.abs(X)) ** 2
    assert np.min(np.linalg.eigvalsh(cov)) >= -1e-12 * scale


def test_regime3_star_shaped_marginals(truth_store):
    # heavy tails on the two damped modes at t = 5
    _, tr = truth_store(3)
    kurt = empirical_moments(tr.snapshots[5.0])[4]
    assert kurt[1] - 3 > 1 and kurt[2] - 3 > 1
