"""Quadratic energy-conserving SDE models and the stochastic triad.

The general model is

    du = (Lambda u + B(u, u) + F) dt + diag(sigma) dW

with ``B(u, v)_k = sum_{m,n} gamma[k, m, n] u_m v_n``. ``gamma`` is kept
symmetric in its last two indices; every quantity built from it (the mean
coupling matrix, the observation functions) only depends on that symmetric
part.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ContractError, InvalidParametersError, NumericalError


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable description of a quadratic SDE system.

    Parameters
    ----------
    Lambda : (d, d) ndarray
        Linear operator (skew part minus damping).
    gamma : (d, d, d) ndarray
        Interaction coefficients, symmetric in the last two indices.
    F : (d,) ndarray
        Constant deterministic forcing.
    sigma : (d,) ndarray
        Per-mode white-noise amplitudes.
    """

    Lambda: np.ndarray
    gamma: np.ndarray
    F: np.ndarray
    sigma: np.ndarray
    Q_sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        Lam = np.array(self.Lambda, dtype=float)
        d = Lam.shape[0]
        if Lam.shape != (d, d):
            raise ContractError(f"Lambda must be square, got {Lam.shape}")
        gam = np.array(self.gamma, dtype=float)
        if gam.shape != (d, d, d):
            raise ContractError(f"gamma must have shape {(d, d, d)}, got {gam.shape}")
        F = np.array(self.F, dtype=float).reshape(-1)
        sig = np.array(self.sigma, dtype=float).reshape(-1)
        if F.shape != (d,) or sig.shape != (d,):
            raise ContractError("F and sigma must be length-d vectors")
        if np.any(sig < 0):
            raise ContractError("sigma must be nonnegative")
        for name, arr in (("Lambda", Lam), ("gamma", gam), ("F", F), ("sigma", sig)):
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        Q = np.diag(sig) @ np.diag(sig).T
        Q.setflags(write=False)
        object.__setattr__(self, "Q_sigma", Q)

    @property
    def d(self) -> int:
        return self.Lambda.shape[0]

    def with_(self, **changes) -> "ModelSpec":
        """Copy with some fields replaced (``Q_sigma`` is recomputed)."""
        kw = dict(Lambda=self.Lambda, gamma=self.gamma, F=self.F, sigma=self.sigma)
        kw.update(changes)
        return ModelSpec(**kw)

    def to_dict(self) -> dict:
        return {
            "Lambda": self.Lambda.tolist(),
            "gamma": self.gamma.tolist(),
            "F": self.F.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(Lambda=data["Lambda"], gamma=data["gamma"], F=data["F"], sigma=data["sigma"])


@dataclass(frozen=True)
class TriadParams:
    """Parameters of the three-mode stochastic triad."""

    B: tuple
    lam: tuple
    damp: tuple
    sigma: tuple
    u0_mean: tuple
    r0_var: tuple
    F: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("B", "lam", "damp", "sigma", "u0_mean", "r0_var", "F"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 3:
                raise InvalidParametersError(f"{name} must have three entries")
            object.__setattr__(self, name, val)
        if any(s < 0 for s in self.sigma):
            raise InvalidParametersError("sigma must be nonnegative")
        if any(r <= 0 for r in self.r0_var):
            raise InvalidParametersError("initial variances must be positive")

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "TriadParams":
        return cls(**{k: tuple(v) for k, v in data.items()})


# Table of the three test regimes.
REGIMES = {
    1: TriadParams(
        B=(1.0, -0.6, -0.4),
        lam=(3.0, -2.0, -1.0),
        damp=(0.2, 0.1, 0.1),
        sigma=(1.58, 1.12, 1.12),
        u0_mean=(2.0, 1.6, -2.0),
        r0_var=(0.5, 0.5, 1.0),
    ),
    2: TriadParams(
        B=(1.0, -0.6, -0.4),
        lam=(0.0, 0.0, 0.0),
        damp=(0.02, 0.01, 0.01),
        sigma=(0.5, 0.35, 0.35),
        u0_mean=(3.0, -0.1, 0.1),
        r0_var=(0.5, 0.01, 0.01),
    ),
    3: TriadParams(
        B=(2.0, -1.0, -1.0),
        lam=(0.09, 0.06, -0.03),
        damp=(-0.4, 2.0, 2.0),
        sigma=(0.1, 0.32, 0.32),
        u0_mean=(2.0, 1.0, 1.5),
        r0_var=(0.5, 5.0, 10.0),
    ),
}


def triad_gamma(B) -> np.ndarray:
    """Symmetrized interaction tensor of the triad nonlinearity."""
    B1, B2, B3 = B
    g = np.zeros((3, 3, 3))
    g[0, 1, 2] = g[0, 2, 1] = 0.5 * B1
    g[1, 0, 2] = g[1, 2, 0] = 0.5 * B2
    g[2, 0, 1] = g[2, 1, 0] = 0.5 * B3
    return g


def build_triad_spec(p: TriadParams) -> ModelSpec:
    """Assemble the triad as a :class:`ModelSpec`.

    Raises
    ------
    InvalidParametersError
        If the nonlinear coefficients do not sum to zero (energy would not be
        conserved).
    """
    if abs(sum(p.B)) > 1e-12:
        raise InvalidParametersError(f"B1+B2+B3 = {sum(p.B)!r}, must vanish")
    l1, l2, l3 = p.lam
    d1, d2, d3 = p.damp
    Lam = np.array([
        [-d1, -l3, l2],
        [l3, -d2, -l1],
        [-l2, l1, -d3],
    ])
    return ModelSpec(Lambda=Lam, gamma=triad_gamma(p.B), F=np.array(p.F), sigma=np.array(p.sigma))


def _check_vec(spec: ModelSpec, *vecs):
    out = []
    for v in vecs:
        a = np.asarray(v, dtype=float)
        if a.shape[-1] != spec.d:
            raise ContractError(f"expected trailing dimension {spec.d}, got shape {a.shape}")
        out.append(a)
    return out


def bilinear_B(spec: ModelSpec, u, v) -> np.ndarray:
    """``B(u, v)_k = sum gamma[k,m,n] u_m v_n``; broadcasts over leading axes."""
    u, v = _check_vec(spec, u, v)
    return np.einsum("kmn,...m,...n->...k", spec.gamma, u, v)


def mean_coupling_L(spec: ModelSpec, u_bar) -> np.ndarray:
    """Linearization of the drift about the mean, ``L(u_bar)``."""
    (u_bar,) = _check_vec(spec, u_bar)
    g = spec.gamma
    return spec.Lambda + np.einsum("kml,m->kl", g, u_bar) + np.einsum("klm,m->kl", g, u_bar)


def lyapunov_exponents(spec: ModelSpec, u_bar) -> np.ndarray:
    """Real parts of the eigenvalues of ``L(u_bar)``, sorted descending."""
    L = mean_coupling_L(spec, u_bar)
    try:
        ev = np.linalg.eigvals(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue solve failed at u_bar={np.asarray(u_bar).tolist()}") from exc
    return np.sort(ev.real)[::-1]


def drift(spec: ModelSpec, u) -> np.ndarray:
    """Deterministic right-hand side ``Lambda u + B(u, u) + F``."""
    return u @ spec.Lambda.T + bilinear_B(spec, u, u) + spec.F


def equilibrium_variance(p: TriadParams) -> np.ndarray:
    """Per-mode ``sigma_k**2 / (2 d_k)``; all equal under equipartition."""
    s = np.asarray(p.sigma)
    d = np.asarray(p.damp)
    return s**2 / (2.0 * d)
