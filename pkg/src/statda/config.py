"""Experiment configuration with a JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ConfigurationError
from .model import REGIMES, TriadParams, build_triad_spec

METHODS = ("highorder", "enkf", "none")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one truth/observation/filter pipeline.

    ``regime`` is a preset number or an inline :class:`TriadParams`.
    ``stabilized=None`` picks the regime default (on for regime 3 only).
    ``noise`` optionally fixes ``(gamma_m, gamma_v)`` and skips calibration.
    """

    regime: object = 1
    N: int = 100
    dt: float = 1e-3
    dt_obs: float = 1e-3
    T: float = 10.0
    epsilon_inv: float = 0.1
    mc_size: int = 100_000
    seed: int = 0
    method: str = "highorder"
    stabilized: bool | None = None
    s: int = 3
    output_dir: str = "out"
    calib_reps: int = 4
    noise: tuple | None = None
    snapshot_times: tuple = (5.0,)

    def __post_init__(self):
        if isinstance(self.regime, dict):
            object.__setattr__(self, "regime", TriadParams.from_dict(self.regime))
        if not isinstance(self.regime, TriadParams) and self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}")
        if not self.dt > 0 or not self.T > 0:
            raise ConfigurationError("dt and T must be positive")
        k = round(self.dt_obs / self.dt)
        if k < 1 or abs(k * self.dt - self.dt_obs) > 1e-9 * max(1.0, self.dt_obs):
            raise ConfigurationError("dt_obs must be an integer multiple of dt")
        if self.N < 2 or self.mc_size < 100:
            raise ConfigurationError("N must be >= 2 and mc_size >= 100")
        if not 1 <= self.s <= 3:
            raise ConfigurationError("s must lie in [1, 3]")
        if self.epsilon_inv < 0:
            raise ConfigurationError("epsilon_inv must be nonnegative")
        if self.noise is not None:
            object.__setattr__(self, "noise", tuple(float(x) for x in self.noise))
        object.__setattr__(self, "snapshot_times", tuple(float(x) for x in self.snapshot_times))

    @property
    def params(self) -> TriadParams:
        return self.regime if isinstance(self.regime, TriadParams) else REGIMES[self.regime]

    @property
    def spec(self):
        return build_triad_spec(self.params)

    @property
    def regime_label(self):
        return self.regime if not isinstance(self.regime, TriadParams) else "custom"

    @property
    def use_stabilized(self) -> bool:
        if self.stabilized is not None:
            return bool(self.stabilized)
        return self.regime == 3

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        if isinstance(self.regime, TriadParams):
            out["regime"] = self.regime.to_dict()
        for key in ("noise", "snapshot_times"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid config JSON: {exc}") from exc
        return cls.from_dict(data)

    def seeds(self):
        """Independent child seeds for truth, calibration and the filter run."""
        truth, calib, run = np.random.SeedSequence(self.seed).spawn(3)
        return truth, calib, run
