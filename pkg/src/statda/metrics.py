"""Scores for comparing a run against the Monte-Carlo truth."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AlignmentError, ContractError, InsufficientSamplesError

_REG = 1e-10


def rmse_series(pred, truth, times_pred=None, times_truth=None) -> float:
    """Root of the squared error averaged over every time and component.

    ``pred`` and ``truth`` are arrays of the same shape whose first axis is
    time. Optional time grids are compared for alignment.
    """
    P = np.asarray(pred, dtype=float)
    Q = np.asarray(truth, dtype=float)
    if P.shape != Q.shape:
        raise AlignmentError(f"shape mismatch: {P.shape} vs {Q.shape}")
    if times_pred is not None or times_truth is not None:
        tp = np.asarray(times_pred, dtype=float)
        tq = np.asarray(times_truth, dtype=float)
        if tp.shape != tq.shape or not np.allclose(tp, tq, rtol=0, atol=1e-9):
            raise AlignmentError("time grids differ")
    if P.size == 0:
        raise ContractError("empty series")
    return float(np.sqrt(np.mean((P - Q) ** 2)))


def gaussian_kl(mu1, S1, mu2, S2):
    """``KL(N(mu1, S1) || N(mu2, S2))``.

    Returns ``(kl, regularized)``; a singular covariance gets ``1e-10 I``
    added and sets the flag.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    S1 = np.atleast_2d(np.asarray(S1, dtype=float))
    S2 = np.atleast_2d(np.asarray(S2, dtype=float))
    k = mu1.size
    reg = False
    mats = []
    for S in (S1, S2):
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            S = S + _REG * np.eye(k)
            reg = True
        mats.append(S)
    S1, S2 = mats
    L2 = np.linalg.cholesky(S2)
    diff = mu2 - mu1
    A = np.linalg.solve(L2, S1)
    tr = np.trace(np.linalg.solve(L2.T, A))
    y = np.linalg.solve(L2, diff)
    _, ld1 = np.linalg.slogdet(S1)
    ld2 = 2.0 * np.sum(np.log(np.diag(L2)))
    kl = 0.5 * (tr + y @ y - k + ld2 - ld1)
    return max(float(kl), 0.0), reg


def _hist_kl_1d(a, b, bins):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi <= lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(a, edges)[0] / a.size
    q = np.histogram(b, edges)[0] / b.size
    eps = 1.0 / (b.size * bins)
    p = (p + eps) / (1.0 + bins * eps)
    q = (q + eps) / (1.0 + bins * eps)
    return float(np.sum(p * np.log(p / q)))


def relative_entropy(truth_samples, model_samples, method="gaussian", bins=50,
                     return_flag=False):
    """Relative entropy of the truth sample distribution against a model one.

    Both estimators are summed over the 1-D marginals. ``"gaussian"`` uses the
    moment-matched closed form; ``"histogram"`` bins both samples on a shared
    grid with additive regularization ``1/(M bins)``.

    With ``return_flag`` the result is ``(value, regularized)``.
    """
    X = np.asarray(truth_samples, dtype=float)
    Y = np.asarray(model_samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[1] != Y.shape[1]:
        raise ContractError("sample sets have different dimension")
    if X.shape[0] < 10 or Y.shape[0] < 10:
        raise InsufficientSamplesError("relative entropy needs at least 10 samples per set")
    total = 0.0
    flagged = False
    for j in range(X.shape[1]):
        a, b = X[:, j], Y[:, j]
        if method == "gaussian":
            kl, reg = gaussian_kl(a.mean(), a.var(), b.mean(), b.var())
            flagged |= reg
        elif method == "histogram":
            kl = _hist_kl_1d(a, b, bins)
        else:
            raise ContractError(f"unknown method {method!r}")
        total += kl
    return (total, flagged) if return_flag else total


def m3_series(run) -> np.ndarray:
    """Centered triple moment recorded along a run."""
    return np.asarray(run.m3, dtype=float)


def m3_of_samples(samples) -> float:
    X = np.asarray(samples, dtype=float)
    C = X[:, :3] - X[:, :3].mean(axis=0)
    return float(np.mean(C[:, 0] * C[:, 1] * C[:, 2]))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AlignmentError("series differ in shape")
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / den) if den > 0 else 0.0


@dataclass
class RunMetrics:
    run_id: str
    regime: object
    N: int
    dt_obs: float | None
    rmse_mean: float
    rmse_var: float
    rel_entropy_gauss: float | None
    rel_entropy_hist: float | None
    m3_corr: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunMetrics":
        return cls(**json.loads(text))


def evaluate(run, truth, *, run_id="run", regime=None, N=None, dt_obs=None, t_snap=5.0) -> RunMetrics:
    """All scores of ``run`` against ``truth`` on the shared time grid."""
    rm = rmse_series(run.mean, truth.mean, run.times, truth.times)
    rv = rmse_series(run.var, truth.var, run.times, truth.times)
    reg = reh = None
    if t_snap in run.snapshots and t_snap in truth.snapshots:
        reg = relative_entropy(truth.snapshots[t_snap], run.snapshots[t_snap], "gaussian")
        reh = relative_entropy(truth.snapshots[t_snap], run.snapshots[t_snap], "histogram")
    return RunMetrics(run_id=run_id, regime=regime, N=N, dt_obs=dt_obs, rmse_mean=rm, rmse_var=rv,
                      rel_entropy_gauss=reg, rel_entropy_hist=reh,
                      m3_corr=pearson(m3_series(run), truth.m3))
