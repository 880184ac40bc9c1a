"""Experiment configuration: flat key=value documents, strict validation.

Unknown keys are hard errors (silent typos invalidate studies); every
constraint violation names the inequality it breaks.  Regularities outside
the admissible range are errors unless allow_inadmissible_alpha is set, in
which case a warning is recorded and the run proceeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .operators import admissible_alpha_range


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    d: int = 1
    p: int = 2
    mu: int = 1
    M: int = 8
    L: float = 2 * math.pi
    alpha: float = 1.0
    xi: float = 0.02
    xi2: float = 0.06
    xi_prime: float = 0.2
    eta: float = 0.3
    N: int = 4
    N_list: list[int] | None = None
    T: float = 0.1
    dt: float = 1e-3
    quadrature: str = "trapezoid"
    solver: str = "both"
    phi0: str = "cosine"
    seed: int = 42
    out_dir: str = "runs"
    ensemble_size: int = 100
    j_max: int = 3
    store_every: int = 1
    save_state: bool = False
    allow_inadmissible_alpha: bool = False
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d < 1:
            raise ConfigError("constraint violated: d >= 1")
        if self.p not in (2, 4):
            raise ConfigError("constraint violated: p in {2, 4}")
        if self.mu not in (-1, 1):
            raise ConfigError("constraint violated: mu in {-1, +1}")
        if self.M < 4:
            raise ConfigError("constraint violated: M >= 4")
        if self.M % 2 != 0:
            raise ConfigError("constraint violated: M even")
        if not self.L > 0:
            raise ConfigError("constraint violated: L > 0")
        if self.alpha < 0:
            raise ConfigError("constraint violated: alpha >= 0")
        if not 0 < self.xi:
            raise ConfigError("constraint violated: xi > 0")
        if not self.xi < self.xi_prime:
            raise ConfigError("constraint violated: xi < xi_prime")
        if not self.xi < self.xi2:
            raise ConfigError("constraint violated: xi < xi2")
        if not self.xi2 < self.xi_prime:
            raise ConfigError("constraint violated: xi2 < xi_prime")
        if not self.xi_prime < 1:
            raise ConfigError("constraint violated: xi_prime < 1")
        if not 0 < self.eta < 1:
            raise ConfigError("constraint violated: 0 < eta < 1")
        if self.N < 1:
            raise ConfigError("constraint violated: N >= 1")
        if self.N_list is not None:
            if len(self.N_list) < 1 or any(n < 1 for n in self.N_list):
                raise ConfigError("constraint violated: N_list entries >= 1")
        if not self.T > 0:
            raise ConfigError("constraint violated: T > 0")
        if not self.dt > 0:
            raise ConfigError("constraint violated: dt > 0")
        S = round(self.T / self.dt)
        if S < 1 or abs(S * self.dt - self.T) > 1e-9 * max(self.T, self.dt):
            raise ConfigError("constraint violated: dt divides T")
        if self.quadrature not in ("trapezoid", "simpson"):
            raise ConfigError("constraint violated: quadrature in {trapezoid, simpson}")
        if self.solver not in ("volterra", "oracle", "both"):
            raise ConfigError("constraint violated: solver in {volterra, oracle, both}")
        if self.ensemble_size < 1:
            raise ConfigError("constraint violated: ensemble_size >= 1")
        if not 1 <= self.j_max <= 4:
            raise ConfigError("constraint violated: 1 <= j_max <= 4")
        if self.store_every < 1:
            raise ConfigError("constraint violated: store_every >= 1")
        rng = admissible_alpha_range(self.d, self.p)
        if self.alpha not in rng:
            msg = f"alpha={self.alpha} outside the admissible range {rng} for (d={self.d}, p={self.p})"
            if not self.allow_inadmissible_alpha:
                raise ConfigError(msg + "; set allow_inadmissible_alpha=true to run anyway")
            if msg not in self.warnings:
                self.warnings.append(msg)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "warnings":
                continue
            out[f.name] = getattr(self, f.name)
        return out


_BOOL_KEYS = {"save_state", "allow_inadmissible_alpha"}
_INT_KEYS = {"d", "p", "mu", "M", "N", "seed", "ensemble_size", "j_max", "store_every"}
_FLOAT_KEYS = {"L", "alpha", "xi", "xi2", "xi_prime", "eta", "T", "dt"}
_STR_KEYS = {"quadrature", "solver", "phi0", "out_dir"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key}: expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError as e:
            raise ConfigError(f"key {key}: expected an integer, got {raw!r}") from e
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError as e:
            raise ConfigError(f"key {key}: expected a number, got {raw!r}") from e
    if key == "N_list":
        try:
            return [int(x) for x in raw.replace(";", ",").split(",") if x.strip()]
        except ValueError as e:
            raise ConfigError(f"key N_list: expected comma-separated integers, got {raw!r}") from e
    if key in _STR_KEYS:
        return raw
    raise ConfigError(f"unknown key: {key}")


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a flat key=value document (# comments, blank lines allowed)."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        values[key] = _parse_value(key, str(raw))
    return ExperimentConfig(**values)
