"""Line-based ``key = value`` experiment configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .cascade import Geometry
from .errors import ConfigurationError

REQUIRED = ("L", "T", "N", "M", "omega", "obs", "omega0")


@dataclass(frozen=True)
class ExperimentConfig:
    L: float = 1.0
    T: float = 0.5
    N: int = 64
    M: int = 128
    theta: float = 0.5
    omega: tuple = (0.45, 0.8)
    obs: tuple = (0.2, 0.6)
    omega0: tuple = (0.48, 0.56)
    s: float = 1.0
    eps: float = 1e-6
    cg_tol: float = 1e-12
    cg_max: int = 5000
    R: float = 1.0
    picard_tol: float = 1e-12
    picard_max: int = 60
    coupling: str = "adjoint"
    outer_max: int = 10
    outer_tol: float = 1e-6
    target_ratio: float = 1e-3
    amplitude: float = 1e-3
    f3_amplitude: float = 1e-2
    decay_margin: float = 1.25
    tau: float = 1e-3
    perturbations: int = 5
    ensemble: int = 20
    seed: int = 0
    kdv_a: float = -0.5
    kdv_bc: str = "left"
    kdv_direction: str = "forward"
    system: str = "state"
    force_zero_control: bool = False

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.omega, self.obs, self.omega0, self.L)

    def validate(self) -> "ExperimentConfig":
        for key in ("L", "T", "s", "eps", "R", "picard_tol", "tau"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key} must be positive, got {getattr(self, key)}")
        if self.N < 8:
            raise ConfigurationError(f"N must be >= 8, got {self.N}")
        if self.M < 1:
            raise ConfigurationError(f"M must be >= 1, got {self.M}")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError(f"theta must lie in [0.5, 1], got {self.theta}")
        if self.coupling not in ("adjoint", "literal"):
            raise ConfigurationError(f"coupling must be 'adjoint' or 'literal', got {self.coupling!r}")
        if self.system not in ("state", "adjoint"):
            raise ConfigurationError(f"system must be 'state' or 'adjoint', got {self.system!r}")
        if self.kdv_bc not in ("left", "right"):
            raise ConfigurationError(f"kdv_bc must be 'left' or 'right', got {self.kdv_bc!r}")
        if self.kdv_direction not in ("forward", "backward"):
            raise ConfigurationError(f"kdv_direction must be 'forward' or 'backward', got {self.kdv_direction!r}")
        self.geometry.validate()
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ", ".join(repr(float(v)) for v in val)
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        parsed = {k: _parse_value(k, str(v)) for k, v in kw.items() if v is not None}
        return replace(self, **parsed).validate()


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "tuple":
            parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
            if len(parts) != 2:
                raise ValueError("expected two comma-separated numbers")
            return (float(parts[0]), float(parts[1]))
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError("expected true or false")
            return low in ("true", "1", "yes")
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"malformed value for {key!r}: {raw!r} ({exc})") from None


def parse_config_text(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    for key in REQUIRED:
        if key not in values:
            raise ConfigurationError(f"missing required key {key!r}")
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config_text(p.read_text())
