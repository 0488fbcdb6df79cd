import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from statda import AlignmentError, ContractError, InsufficientSamplesError, RunOutput
from statda.metrics import (RunMetrics, evaluate, gaussian_kl, m3_of_samples, m3_series, pearson,
                            relative_entropy, rmse_series)


def test_rmse_zero_and_offset(rng):
    x = rng.standard_normal((100, 3))
    assert rmse_series(x, x) == 0
    assert rmse_series(x + 0.37, x) == pytest.approx(0.37, rel=1e-12)


def test_rmse_unit_noise(rng):
    x = rng.standard_normal((200_000, 3))
    assert rmse_series(x + rng.standard_normal(x.shape), x) == pytest.approx(1.0, rel=0.05)


def test_rmse_alignment():
    with pytest.raises(AlignmentError):
        rmse_series(np.zeros((5, 3)), np.zeros((6, 3)))
    with pytest.raises(AlignmentError):
        rmse_series(np.zeros(3), np.zeros(3), [0, 1, 2], [0, 1, 2.5])
    with pytest.raises(ContractError):
        rmse_series(np.zeros(0), np.zeros(0))


@given(st.integers(2, 6), st.integers(1, 40))
@settings(max_examples=50, deadline=None)
def test_rmse_grid_refinement(k, n):
    rng = np.random.default_rng(n)
    a, b = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    fine = rmse_series(np.repeat(a, k, axis=0), np.repeat(b, k, axis=0))
    assert fine == pytest.approx(rmse_series(a, b), rel=1e-12)


def test_gaussian_kl_closed_form():
    kl, reg = gaussian_kl(0.0, 1.0, 0.0, 2.0)
    assert kl == pytest.approx(0.5 * (0.5 - 1 + np.log(2)), rel=1e-12)
    assert kl == pytest.approx(0.0966, abs=5e-5)
    assert not reg


def test_gaussian_kl_multivariate_against_formula(rng):
    A, B = rng.standard_normal((2, 3, 3))
    S1, S2 = A @ A.T + np.eye(3), B @ B.T + np.eye(3)
    m1, m2 = rng.standard_normal((2, 3))
    iS2 = np.linalg.inv(S2)
    ref = 0.5 * (np.trace(iS2 @ S1) + (m2 - m1) @ iS2 @ (m2 - m1) - 3
                 + np.log(np.linalg.det(S2) / np.linalg.det(S1)))
    assert gaussian_kl(m1, S1, m2, S2)[0] == pytest.approx(ref, rel=1e-10)


def test_singular_covariance_flagged():
    kl, reg = gaussian_kl(np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.eye(2))
    assert reg and np.isfinite(kl)
    X = np.column_stack([np.zeros(50), np.random.default_rng(0).standard_normal(50)])
    val, flag = relative_entropy(X, X + 1.0, return_flag=True)
    assert flag and np.isfinite(val)


@pytest.mark.parametrize("method", ["gaussian", "histogram"])
def test_identical_samples_zero(method, rng):
    X = rng.standard_normal((500, 3))
    assert relative_entropy(X, X, method) == pytest.approx(0.0, abs=1e-12)


def test_gaussian_relative_entropy_from_samples(rng):
    X = rng.standard_normal((200_000, 1))
    Y = rng.standard_normal((200_000, 1)) * np.sqrt(2)
    assert relative_entropy(X, Y) == pytest.approx(0.0966, abs=5e-3)
    assert relative_entropy(X, Y, "histogram") == pytest.approx(0.0966, abs=0.02)


@given(st.integers(0, 10_000), st.floats(0.2, 5), st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_relative_entropy_nonnegative(seed, scale, shift):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((60, 2))
    Y = rng.standard_normal((40, 2)) * scale + shift
    assert relative_entropy(X, Y, "gaussian") >= 0
    assert relative_entropy(X, Y, "histogram", bins=10) >= 0


def test_relative_entropy_preconditions(rng):
    with pytest.raises(InsufficientSamplesError):
        relative_entropy(rng.standard_normal((9, 3)), rng.standard_normal((50, 3)))
    with pytest.raises(ContractError):
        relative_entropy(rng.standard_normal((20, 3)), rng.standard_normal((20, 2)))
    with pytest.raises(ContractError):
        relative_entropy(rng.standard_normal((20, 3)), rng.standard_normal((20, 3)), "kde")


def test_m3_symmetric_pairs(rng):
    Z = rng.standard_normal((50, 3))
    assert m3_of_samples(np.vstack([Z, -Z])) == pytest.approx(0.0, abs=1e-15)


def test_m3_hand_value():
    # three copies of (1,1,1) and one origin: k(1-k)/(k+1)^3 with k = 3
    X = np.vstack([np.ones((3, 3)), np.zeros((1, 3))])
    assert m3_of_samples(X) == pytest.approx(-0.09375, rel=1e-14)


def test_pearson():
    t = np.linspace(0, 1, 50)
    assert pearson(t, 2 * t + 1) == pytest.approx(1.0)
    assert pearson(t, -t) == pytest.approx(-1.0)
    assert pearson(t, np.ones(50)) == 0.0
    with pytest.raises(AlignmentError):
        pearson(t, t[:-1])


def _series(rng, n=101, shift=0.0):
    t = 0.05 * np.arange(n)
    mean = rng.standard_normal((n, 3))
    A = rng.standard_normal((n, 3, 3))
    cov = A @ np.swapaxes(A, 1, 2)
    return RunOutput(times=t, mean=mean + shift, cov=cov, m3=np.sin(t),
                     snapshots={5.0: rng.standard_normal((200, 3)) + shift})


def test_evaluate_and_json(rng):
    a = _series(rng)
    b = RunOutput(times=a.times, mean=a.mean + 0.1, cov=a.cov, m3=2 * a.m3,
                  snapshots={5.0: a.snapshots[5.0] + 0.1})
    m = evaluate(b, a, run_id="x", regime=1, N=100, dt_obs=1e-3)
    assert m.rmse_mean == pytest.approx(0.1)
    assert m.rmse_var == 0
    assert m.m3_corr == pytest.approx(1.0)
    assert m.rel_entropy_gauss > 0 and m.rel_entropy_hist >= 0
    assert RunMetrics.from_json(m.to_json()) == m
    np.testing.assert_array_equal(m3_series(b), b.m3)


def test_regime2_truth_third_moment_nonzero(truth_store):
    _, tr = truth_store(2)
    # third moment develops during the transient and stands clear of sampling error
    scale = np.sqrt(np.prod(tr.var, axis=1))
    assert np.max(np.abs(tr.m3) / scale) > 0.05
