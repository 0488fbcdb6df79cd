"""Truth, observations, calibration and filter runs wired together.

Every random stream derives from the config's master seed, so a pipeline
re-run with the same config writes byte-identical files.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io, kernels
from .config import ExperimentConfig
from .enkf import run_enkf
from .errors import ConfigurationError, DivergenceError
from .forecast import ForecastConfig, StatState, run_forecast
from .highorder import FilterConfig, run_filter
from .metrics import RunMetrics, evaluate
from .observe import NoiseAmplitudes, calibrate_noise, make_observations
from .truth import run_truth

log = logging.getLogger(__name__)

TRUTH_CACHE = "truth_cache.npz"


def initial_state(cfg: ExperimentConfig) -> StatState:
    p = cfg.params
    return StatState(np.array(p.u0_mean), np.array(p.r0_var))


def compute_truth(cfg: ExperimentConfig):
    p = cfg.params
    seed = cfg.seeds()[0]
    return run_truth(cfg.spec, p.u0_mean, p.r0_var, cfg.dt, cfg.T, cfg.mc_size, seed,
                     snapshot_times=cfg.snapshot_times)


def _truth_key(cfg):
    return np.array([cfg.dt, cfg.T, cfg.mc_size, cfg.seed] + list(cfg.snapshot_times), dtype=float)


def load_or_compute_truth(cfg: ExperimentConfig, out: Path | None = None):
    """Truth for ``cfg``; reuses ``out/truth_cache.npz`` when it matches."""
    from .truth import TruthSeries
    cache = out / TRUTH_CACHE if out is not None else None
    if cache is not None and cache.exists():
        z = np.load(cache)
        if np.array_equal(z["key"], _truth_key(cfg)) and z["regime"].tobytes() == _regime_bytes(cfg):
            snaps = {float(t): z[f"snap_{i}"] for i, t in enumerate(z["snap_times"])}
            return TruthSeries(times=z["times"], mean=z["mean"], cov=z["cov"], m3=z["m3"],
                               snapshots=snaps, dt=cfg.dt)
    truth = compute_truth(cfg)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        st = sorted(truth.snapshots)
        io.write_npz(cache, key=_truth_key(cfg),
                     regime=np.frombuffer(_regime_bytes(cfg), dtype=np.uint8),
                     times=truth.times, mean=truth.mean, cov=truth.cov, m3=truth.m3,
                     snap_times=np.array(st, dtype=float),
                     **{f"snap_{i}": truth.snapshots[t] for i, t in enumerate(st)})
    return truth


def _regime_bytes(cfg):
    return repr(cfg.params.to_dict()).encode()


def get_noise(cfg: ExperimentConfig, truth) -> NoiseAmplitudes:
    if cfg.noise is not None:
        return NoiseAmplitudes(cfg.noise[0], cfg.noise[1], N=cfg.N, method="fixed")
    return calibrate_noise(cfg.spec, initial_state(cfg), cfg.N, cfg.calib_reps, cfg.T, cfg.dt,
                           cfg.seeds()[1], truth=truth, epsilon_inv=cfg.epsilon_inv, s=cfg.s)


def run_seed(cfg: ExperimentConfig, index: int = 0):
    """Seed of the ``index``-th run drawn from the config's run stream.

    A single run uses index 0, the same stream as the first point of a sweep.
    """
    return cfg.seeds()[2].spawn(index + 1)[index]


def execute(cfg: ExperimentConfig, truth, noise=None, seed=None):
    """Run ``cfg.method`` against ``truth``; returns ``(run_output, error_message)``."""
    seed = run_seed(cfg) if seed is None else seed
    init = initial_state(cfg)
    spec = cfg.spec
    try:
        if cfg.method == "none":
            fc = ForecastConfig(dt=cfg.dt, epsilon_inv=cfg.epsilon_inv, N=cfg.N, seed=seed)
            return run_forecast(spec, init, fc, cfg.T, snapshot_times=cfg.snapshot_times), None
        obs = make_observations(truth, cfg.dt_obs, cfg.s)
        fcfg = FilterConfig(N=cfg.N, dt=cfg.dt, dt_obs=cfg.dt_obs, T=cfg.T,
                            epsilon_inv=cfg.epsilon_inv, noise=noise, stabilized=cfg.use_stabilized,
                            s=cfg.s, seed=seed)
        runner = run_filter if cfg.method == "highorder" else run_enkf
        return runner(spec, init, obs, fcfg, snapshot_times=cfg.snapshot_times), None
    except DivergenceError as exc:
        return None, str(exc)


def score(cfg, run, truth, run_id=None) -> RunMetrics:
    t_snap = cfg.snapshot_times[0] if cfg.snapshot_times else None
    return evaluate(run, truth, run_id=run_id or f"{cfg.method}-N{cfg.N}-seed{cfg.seed}",
                    regime=cfg.regime_label, N=cfg.N,
                    dt_obs=None if cfg.method == "none" else cfg.dt_obs, t_snap=t_snap)


def manifest(cfg: ExperimentConfig, **extra) -> dict:
    from . import __version__
    return {"config": cfg.to_dict(), "seed": cfg.seed, "git_hash": io.git_hash(),
            "version": __version__, "backend": kernels.BACKEND, **extra}


def _snap_name(prefix, t):
    return f"{prefix}_t{t:g}.csv"


def cmd_truth(cfg: ExperimentConfig):
    out = Path(cfg.output_dir)
    truth = load_or_compute_truth(cfg, out)
    io.write_series(out / "truth.csv", truth)
    for t, X in sorted(truth.snapshots.items()):
        io.write_samples(out / "snapshots" / _snap_name("truth", t), X)
    io.write_json(out / "manifest.json", manifest(cfg, command="truth"))
    return truth


def cmd_calibrate(cfg: ExperimentConfig):
    out = Path(cfg.output_dir)
    truth = load_or_compute_truth(cfg, out)
    noise = get_noise(cfg.with_(noise=None), truth)
    (out / "noise.json").write_text(noise.to_json() + "\n")
    io.write_json(out / "manifest.json", manifest(cfg, command="calibrate"))
    return noise


def cmd_run(cfg: ExperimentConfig):
    """Truth, observations, the configured method and its metrics."""
    out = Path(cfg.output_dir)
    truth = cmd_truth(cfg)
    noise = None
    if cfg.method != "none":
        obs = make_observations(truth, cfg.dt_obs, cfg.s)
        io.write_observations(out / "obs.csv", obs)
        noise = get_noise(cfg, truth)
        (out / "noise.json").write_text(noise.to_json() + "\n")
    run, err = execute(cfg, truth, noise)
    diag = {"method": cfg.method, "diverged": err is not None, "message": err}
    result = None
    if run is not None:
        io.write_series(out / f"run_{cfg.method}.csv", run)
        for t, X in sorted(run.snapshots.items()):
            io.write_samples(out / "snapshots" / _snap_name(f"run_{cfg.method}", t), X)
        diag.update({k: np.asarray(v) for k, v in run.diagnostics.items()})
        result = score(cfg, run, truth)
        (out / "metrics.json").write_text(result.to_json() + "\n")
    io.write_json(out / f"diagnostics_{cfg.method}.json", diag)
    io.write_json(out / "manifest.json", manifest(cfg, command="run"))
    if err is not None:
        log.error("run diverged: %s", err)
    return result, err


def cmd_metrics(out_dir, method=None):
    """Recompute metrics.json from the files of a finished run."""
    out = Path(out_dir)
    cfg = ExperimentConfig.from_dict(io.read_json(out / "manifest.json")["config"])
    method = method or cfg.method
    truth = io.read_series(out / "truth.csv")
    run = io.read_series(out / f"run_{method}.csv", cls=None)
    for t in cfg.snapshot_times:
        for obj, prefix in ((truth, "truth"), (run, f"run_{method}")):
            p = out / "snapshots" / _snap_name(prefix, t)
            if p.exists():
                obj.snapshots[t] = io.read_samples(p)
    result = score(cfg.with_(method=method), run, truth)
    (out / "metrics.json").write_text(result.to_json() + "\n")
    return result


def _sweep_point(args):
    cfg, truth, noise, seed = args
    run, err = execute(cfg, truth, noise, seed=seed)
    if run is None:
        return None, err
    return score(cfg, run, truth), None


SWEEP_COLUMNS = ["axis", "value", "rep", "method", "N", "dt_obs", "rmse_mean", "rmse_var",
                 "rel_entropy_gauss", "rel_entropy_hist", "m3_corr", "diverged"]


def cmd_sweep(cfg: ExperimentConfig, axis: str, values, reps: int = 1, workers: int = 1):
    """Metrics over a list of ``N`` or ``dt_obs`` values.

    Each point gets its own child seed, indexed by position, so the table
    does not depend on ``workers``.
    """
    if axis not in ("N", "dt_obs"):
        raise ConfigurationError("sweep axis must be N or dt_obs")
    out = Path(cfg.output_dir)
    truth = load_or_compute_truth(cfg, out)
    cast = int if axis == "N" else float
    values = [cast(v) for v in values]
    children = cfg.seeds()[2].spawn(len(values) * reps)
    tasks = []
    for i, v in enumerate(values):
        pcfg = cfg.with_(**{axis: v})
        noise = None if pcfg.method == "none" else get_noise(pcfg, truth)
        for r in range(reps):
            tasks.append((pcfg, truth, noise, children[i * reps + r]))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = []
    for (pcfg, _, _, _), (m, err), idx in zip(tasks, results, range(len(tasks))):
        v = getattr(pcfg, axis)
        if m is None:
            rows.append([axis, v, idx % reps, pcfg.method, pcfg.N, pcfg.dt_obs] + [float("nan")] * 5 + [1])
        else:
            rows.append([axis, v, idx % reps, pcfg.method, pcfg.N, pcfg.dt_obs, m.rmse_mean, m.rmse_var,
                         m.rel_entropy_gauss, m.rel_entropy_hist, m.m3_corr, 0])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"sweep_{axis}.csv", "w") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    io.write_json(out / "manifest.json",
                  manifest(cfg, command="sweep", axis=axis, values=values, reps=reps))
    return rows


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return io.FMT % x


def default_workers():
    return max(1, (os.cpu_count() or 1))
