import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from statda import (REGIMES, ConfigurationError, ContractError, ForecastConfig, H_m, H_v,
                    ModelSpec, NoiseAmplitudes, StatState, TruthSeries, build_triad_spec,
                    calibrate_noise, grad_H, make_observations, run_forecast)
from statda.forecast import stat_tendency

SPEC1 = build_triad_spec(REGIMES[1])
vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5, allow_nan=False))


def test_H_m_zero_and_ones():
    assert np.all(H_m(SPEC1, np.zeros(3), 3) == 0)
    np.testing.assert_allclose(H_m(SPEC1, np.ones(3), 3), [1.0, -0.6, -0.4], atol=1e-15)


def test_H_v_ones():
    Hv = H_v(SPEC1, np.ones(3), 3)
    assert Hv[0, 0] == pytest.approx(2.0)
    assert Hv[0, 1] == pytest.approx(0.4)
    assert Hv[1, 2] == pytest.approx(-1.0)
    np.testing.assert_allclose(Hv, np.add.outer([1, -0.6, -0.4], [1, -0.6, -0.4]), atol=1e-15)
    assert np.all(H_v(SPEC1, np.zeros(3), 3) == 0)


@given(z=vec3, a=st.floats(-3, 3, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_homogeneity(z, a):
    for p in REGIMES.values():
        spec = build_triad_spec(p)
        hm, hv = H_m(spec, z, 3), H_v(spec, z, 3)
        scale = 1 + np.linalg.norm(z) ** 3 * (1 + abs(a)) ** 3
        assert np.max(np.abs(H_m(spec, a * z, 3) - a**2 * hm)) <= 1e-12 * scale
        assert np.max(np.abs(H_v(spec, a * z, 3) - a**3 * hv)) <= 1e-12 * scale
        assert np.array_equal(hv, hv.T)


def test_partial_observation_blocks(rng):
    z = rng.standard_normal(3)
    for s in (1, 2):
        np.testing.assert_allclose(H_m(SPEC1, z, s), H_m(SPEC1, z, 3)[:s], rtol=1e-15)
        np.testing.assert_allclose(H_v(SPEC1, z, s), H_v(SPEC1, z, 3)[:s, :s], rtol=1e-15)
        dHm, dHv = grad_H(SPEC1, z, s)
        assert dHm.shape == (s, 3) and dHv.shape == (s * s, 3)
    with pytest.raises(ContractError):
        H_m(SPEC1, z, 4)


def test_gradient_identities(regime_spec, rng):
    _, spec = regime_spec
    for z in rng.standard_normal((1000, 3)) * rng.uniform(0.1, 5, (1000, 1)):
        dHm, dHv = grad_H(spec, z, 3)
        n = np.linalg.norm(z)
        assert np.max(np.abs(dHm @ z - 2 * H_m(spec, z, 3))) <= 1e-12 * (1 + n**2)
        assert np.max(np.abs(dHv @ z - 3 * H_v(spec, z, 3).ravel())) <= 1e-12 * (1 + n**3)


def test_gradient_finite_differences(regime_spec, rng):
    _, spec = regime_spec
    h = 1e-5
    for z in rng.standard_normal((50, 3)):
        dHm, dHv = grad_H(spec, z, 3)
        fm = np.empty_like(dHm)
        fv = np.empty_like(dHv)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fm[:, j] = (H_m(spec, z + e, 3) - H_m(spec, z - e, 3)) / (2 * h)
            fv[:, j] = (H_v(spec, z + e, 3) - H_v(spec, z - e, 3)).ravel() / (2 * h)
        assert np.linalg.norm(fm - dHm) <= 1e-7 * max(np.linalg.norm(dHm), 1.0)
        assert np.linalg.norm(fv - dHv) <= 1e-7 * max(np.linalg.norm(dHv), 1.0)


def test_gradient_at_zero():
    dHm, dHv = grad_H(SPEC1, np.zeros(3), 3)
    assert np.all(dHm == 0) and np.all(dHv == 0)


def test_ensemble_mean_of_H_m_is_mean_feedback(rng):
    for p in REGIMES.values():
        spec = build_triad_spec(p)
        Z = rng.standard_normal((300, 3)) + 0.5
        B1, B2, B3 = p.B
        expected = [B1 * np.mean(Z[:, 1] * Z[:, 2]), B2 * np.mean(Z[:, 0] * Z[:, 2]),
                    B3 * np.mean(Z[:, 0] * Z[:, 1])]
        np.testing.assert_allclose(H_m(spec, Z, 3).mean(axis=0), expected, atol=1e-12)
        # the same quantity drives the mean tendency
        du, _, _ = stat_tendency(spec, StatState(np.zeros(3), np.eye(3)), Z, 0.0)
        np.testing.assert_allclose(du, expected, atol=1e-12)


def synthetic_truth(mean, cov, dt):
    n = len(mean)
    return TruthSeries(times=dt * np.arange(n), mean=mean, cov=cov, m3=np.zeros(n), dt=dt)


def test_observations_constant_truth():
    n = 101
    tr = synthetic_truth(np.ones((n, 3)), np.tile(np.eye(3), (n, 1, 1)), 1e-3)
    obs = make_observations(tr, 1e-2, 3)
    assert len(obs) == 10
    assert np.all(obs.d_ubar == 0) and np.all(obs.d_R == 0)


def test_observations_telescope(rng):
    n = 501
    mean = np.cumsum(rng.standard_normal((n, 3)), axis=0)
    A = rng.standard_normal((n, 3, 3))
    tr = synthetic_truth(mean, A + np.swapaxes(A, 1, 2), 1e-3)
    obs = make_observations(tr, 1e-3, 3)
    np.testing.assert_allclose(obs.d_ubar.sum(axis=0), mean[-1] - mean[0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(obs.d_R.sum(axis=0), tr.cov[-1] - tr.cov[0], atol=1e-11)
    assert np.array_equal(obs.d_R, np.swapaxes(obs.d_R, 1, 2))
    obs2 = make_observations(tr, 1e-3, 2)
    assert obs2.d_ubar.shape == (500, 2) and obs2.d_R.shape == (500, 2, 2)


def test_observation_count():
    n = 10_001
    tr = synthetic_truth(np.zeros((n, 3)), np.zeros((n, 3, 3)), 1e-3)
    obs = make_observations(tr, 0.05, 3)
    assert len(obs) == 200
    assert obs.times[-1] == pytest.approx(10.0)


def test_observation_misaligned():
    tr = synthetic_truth(np.zeros((11, 3)), np.zeros((11, 3, 3)), 1e-3)
    with pytest.raises(ConfigurationError):
        make_observations(tr, 1.5e-3, 3)


def test_noise_json_roundtrip():
    n = NoiseAmplitudes(0.08, 0.3, N=100, meta={"window": [0.5, 10.0]})
    back = NoiseAmplitudes.from_json(n.to_json())
    assert back == n and back.meta == n.meta
    with pytest.raises(ContractError):
        NoiseAmplitudes(0.0, 1.0)


def test_calibration_deterministic_system_gives_zero():
    A = np.array([[-0.3, 1.0, 0.0], [-1.0, -0.2, 0.0], [0.0, 0.0, -0.1]])
    spec = ModelSpec(Lambda=A, gamma=np.zeros((3, 3, 3)), F=np.zeros(3), sigma=np.zeros(3))
    init = StatState(np.array([1.0, -1.0, 2.0]), np.zeros((3, 3)))
    # the exact moments of a deterministic system are the forecast itself
    ref = run_forecast(spec, init, ForecastConfig(N=2), 2.0, seed=0, snapshot_times=())
    tr = synthetic_truth(ref.mean, ref.cov, 1e-3)
    noise = calibrate_noise(spec, init, 20, 4, 2.0, 1e-3, 5, truth=tr)
    assert noise.gamma_m < 1e-8 and noise.gamma_v < 1e-8


def test_calibration_needs_four_reps(specs):
    init = StatState(REGIMES[1].u0_mean, REGIMES[1].r0_var)
    with pytest.raises(ContractError):
        calibrate_noise(specs[1], init, 10, 3, 1.0, 1e-3, 0)


def test_calibration_regime1_positive(truth_store):
    cfg, tr = truth_store(1)
    init = StatState(cfg.params.u0_mean, cfg.params.r0_var)
    noise = calibrate_noise(cfg.spec, init, 100, 4, 10.0, 1e-3, 1, truth=tr)
    assert 0 < noise.gamma_m < np.inf and 0 < noise.gamma_v < np.inf
    assert noise.meta["n_diverged"] == 0
    assert noise.meta["window"] == [0.5, 10.0]


def test_calibration_window_stops_before_divergence(truth_store):
    cfg, tr = truth_store(3)
    init = StatState(cfg.params.u0_mean, cfg.params.r0_var)
    with np.errstate(all="ignore"):
        noise = calibrate_noise(cfg.spec, init, 100, 4, 10.0, 1e-3, 1, truth=tr)
    assert noise.meta["n_diverged"] > 0
    assert noise.meta["window"][1] < 10.0
    assert np.isfinite(noise.gamma_m) and np.isfinite(noise.gamma_v)
