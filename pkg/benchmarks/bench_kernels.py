"""Time the compiled kernels against the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each row reports the best wall time per call for both backends, the speedup,
and the largest relative difference between their outputs.
"""

import argparse
import time

import numpy as np

from statda import REGIMES, build_triad_spec
from statda.kernels import get_backend


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _reldiff(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def cases(N_truth, N_filter):
    spec = build_triad_spec(REGIMES[1])
    rng = np.random.default_rng(0)
    Lam = np.ascontiguousarray(spec.Lambda)
    gam = np.ascontiguousarray(spec.gamma)
    F = np.ascontiguousarray(spec.F, dtype=float)
    sig = np.ascontiguousarray(spec.sigma, dtype=float)
    U = rng.standard_normal((N_truth, 3))
    xi = rng.standard_normal((N_truth, 3))
    Z = rng.standard_normal((N_filter, 3))
    xz = rng.standard_normal((N_filter, 3))
    R = np.cov(Z.T, bias=True)
    py = get_backend("python")
    Hm, Hv3 = py.obs_values(gam, Z, 3)
    Hv = np.ascontiguousarray(Hv3.reshape(N_filter, 9))
    dm = rng.standard_normal(3) * 1e-2
    dv = rng.standard_normal(9) * 1e-2
    Hm_bar, Hv_bar = Hm.mean(axis=0), Hv.mean(axis=0)
    return {
        f"rk4_em_step (N={N_truth})":
            lambda k: k.rk4_em_step(Lam, gam, F, sig, U, 1e-3, xi),
        f"sample_stats (N={N_truth})":
            lambda k: k.sample_stats(U),
        f"particle_forecast (N={N_filter})":
            lambda k: k.particle_forecast(Lam, gam, R, sig, Z, 1e-3, xz),
        f"obs_values (N={N_filter})":
            lambda k: k.obs_values(gam, Z, 3),
        f"highorder_increment (N={N_filter})":
            lambda k: k.highorder_increment(Z, Hm, Hv, dm, dv, Hm_bar, Hv_bar, 0.5, 0.1, 1e-3,
                                            False, False),
        f"enkf_increment (N={N_filter})":
            lambda k: k.enkf_increment(Z, Hm, Hv, dm, dv, Hm_bar, Hv_bar, 0.5, 0.1, 1e-3),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--n-truth", type=int, default=100_000)
    ap.add_argument("--n-filter", type=int, default=1000)
    args = ap.parse_args(argv)
    py, cy = get_backend("python"), get_backend("compiled")
    print(f"{'kernel':36s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, fn in cases(args.n_truth, args.n_filter).items():
        tp = _best(lambda: fn(py), args.repeat)
        tc = _best(lambda: fn(cy), args.repeat)
        diff = _reldiff(_first(fn(cy)), _first(fn(py)))
        print(f"{name:36s} {1e3 * tp:12.3f} {1e3 * tc:14.3f} {tp / tc:8.2f} {diff:13.2e}")


if __name__ == "__main__":
    main()
