"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from ..microsim import IntegratorConfig
from ..model import ModelParams
from ..pde import Grid1D

__all__ = ["ExperimentConfig", "parse_config_text", "load_config", "EXPERIMENTS", "INITIAL_PRESETS"]

EXPERIMENTS = (
    "hydro-stretch",
    "hydro-energy",
    "equipartition",
    "boundary-scalings",
    "mc-vs-oracle",
    "assumptions",
    "generator-identities",
    "energy-balance",
    "spectral-certify",
    "pde-convergence",
)

INITIAL_PRESETS = ("local-gibbs", "equilibrium", "shock", "deterministic", "stationary-stretch", "white-noise")


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Every tunable of the harness. All keys may appear in a config file or as ``--key`` flags."""

    experiment: str = "hydro-stretch"
    # model
    n: int = 16
    gamma: float = 1.0
    gamma_tilde: float = 1.0
    t_minus: float = 1.0
    t_plus: float = 2.0
    tau_plus: float = 1.0
    # initial law
    initial: str = "local-gibbs"
    r_amp: float = 0.5
    p_amp: float = 0.3
    temp_bump: float = 0.5
    # time stepping
    t_end: float = 0.1
    dtau: float = 0.05
    record_stride: int = 16
    # Monte Carlo
    n_traj: int = 2000
    master_seed: int = 20261016
    workers: int = 1
    # PDE
    m: int = 1024
    dt_pde: float = 1e-4
    energy_flux_term: bool = True
    # scaling studies
    n_list: tuple = (32, 64, 128, 256)
    test_function: str = "bump"
    # spectral
    eta_min: float = 1e-2
    eta_max: float = 1e3
    eta_num: int = 121
    nodes: int = 2**16
    # output
    out_dir: str = "out"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "n_list":
                setattr(self, f.name, _ints(v))
            elif f.type in ("int", int):
                setattr(self, f.name, int(v))
            elif f.type in ("float", float):
                setattr(self, f.name, float(v))
            elif f.type in ("bool", bool):
                setattr(self, f.name, _bool(v))
            else:
                setattr(self, f.name, str(v))
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.initial not in INITIAL_PRESETS:
            raise ValueError(f"unknown initial preset {self.initial!r}; choose from {', '.join(INITIAL_PRESETS)}")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be strictly increasing")
        if self.n_traj < 1:
            raise ValueError("n_traj must be positive")

    # ---- derived objects
    def params(self, n: int | None = None) -> ModelParams:
        return ModelParams(n if n is not None else self.n, self.gamma, self.gamma_tilde, self.t_minus, self.t_plus,
                           self.tau_plus)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.dtau, self.t_end, self.record_stride)

    def grid(self) -> Grid1D:
        return Grid1D(self.m, self.dt_pde)

    # ---- serialization
    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_list"] = list(self.n_list)
        return d

    def to_text(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        """SHA-256 of the canonical text form (output directory excluded)."""
        d = self.as_dict()
        d.pop("out_dir")
        canon = "\n".join(f"{k}={d[k]!r}" for k in sorted(d))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.as_dict()
        d.update(changes)
        return ExperimentConfig(**d)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
