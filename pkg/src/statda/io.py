"""CSV and JSON writers for truth series, runs, observations and manifests.

Floats are written with 17 significant digits so a file round-trips to the
same doubles. No timestamps are written anywhere, which keeps outputs
byte-identical for identical seeds.
"""

from __future__ import annotations

import json
import os
import subprocess
import zipfile
from pathlib import Path

import numpy as np

from .errors import ContractError
from .forecast import RunOutput
from .observe import ObservationSeries
from .truth import TruthSeries

FMT = "%.17g"


def _upper(d):
    return [(k, l) for k in range(d) for l in range(k, d)]


def series_header(d):
    cols = ["t"] + [f"mean_{k + 1}" for k in range(d)]
    cols += [f"cov_{k + 1}{l + 1}" for k, l in _upper(d)]
    return cols + ["M3"]


def series_table(times, mean, cov, m3):
    d = mean.shape[1]
    iu = tuple(np.array(_upper(d)).T)
    return np.column_stack([times, mean, cov[:, iu[0], iu[1]], m3])


def write_series(path, series):
    """Write a :class:`TruthSeries` or :class:`RunOutput` as CSV."""
    tab = series_table(series.times, series.mean, series.cov, series.m3)
    _write_table(path, series_header(series.mean.shape[1]), tab)


def read_series(path, cls=TruthSeries):
    header, tab = _read_table(path)
    d = sum(1 for h in header if h.startswith("mean_"))
    times = tab[:, 0]
    mean = tab[:, 1:1 + d]
    cov = np.empty((len(times), d, d))
    for j, (k, l) in enumerate(_upper(d)):
        cov[:, k, l] = cov[:, l, k] = tab[:, 1 + d + j]
    m3 = tab[:, -1]
    if cls is TruthSeries:
        dt = float(times[1] - times[0]) if len(times) > 1 else None
        return TruthSeries(times=times, mean=mean, cov=cov, m3=m3, dt=dt)
    return RunOutput(times=times, mean=mean, cov=cov, m3=m3)


def write_observations(path, obs: ObservationSeries):
    s = obs.s
    up = _upper(s)
    header = ["t"] + [f"du_{k + 1}" for k in range(s)] + [f"dR_{k + 1}{l + 1}" for k, l in up]
    iu = tuple(np.array(up).T)
    tab = np.column_stack([obs.times, obs.d_ubar, obs.d_R[:, iu[0], iu[1]]])
    _write_table(path, header, tab)


def read_observations(path) -> ObservationSeries:
    header, tab = _read_table(path)
    s = sum(1 for h in header if h.startswith("du_"))
    dR = np.empty((len(tab), s, s))
    for j, (k, l) in enumerate(_upper(s)):
        dR[:, k, l] = dR[:, l, k] = tab[:, 1 + s + j]
    times = tab[:, 0]
    dt_obs = float(times[0]) if len(times) else 0.0
    return ObservationSeries(times=times, d_ubar=tab[:, 1:1 + s], d_R=dR, s=s, dt_obs=dt_obs)


def write_samples(path, samples):
    X = np.asarray(samples, dtype=float)
    _write_table(path, [f"u_{k + 1}" for k in range(X.shape[1])], X)


def read_samples(path):
    return _read_table(path)[1]


def write_json(path, obj):
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_npz(path, **arrays):
    """``numpy.savez`` with fixed entry timestamps, so equal arrays give equal bytes."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(arr), allow_pickle=False)


def git_hash(cwd=None):
    """Commit hash of the checkout containing ``cwd``, or ``None``."""
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=cwd or os.path.dirname(__file__),
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_table(path, header, tab):
    tab = np.atleast_2d(np.asarray(tab, dtype=float))
    if tab.size and tab.shape[1] != len(header):
        raise ContractError(f"{len(header)} columns in header, {tab.shape[1]} in data")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if tab.size:
            np.savetxt(fh, tab, fmt=FMT, delimiter=",")


def _read_table(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    tab = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if tab.size == 0:
        tab = np.empty((0, len(header)))
    return header, tab
