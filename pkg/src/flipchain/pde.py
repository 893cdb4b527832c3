"""Crank-Nicolson solvers for the macroscopic stretch and energy equations.

    r_t = r_uu / (2 gamma),                 r(t,0) = 0,   r(t,1) = tau
    e_t = (e + r^2/2)_uu / (4 gamma),       e(t,0) = T-,  e(t,1) = T+ + tau^2/2
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .model import ModelParams

__all__ = [
    "Grid1D",
    "MacroField",
    "FieldPath",
    "TestFunction1D",
    "solve_stretch",
    "solve_energy",
    "stationary_stretch",
    "stationary_energy",
    "pairing",
    "weak_residual",
    "profile_preset",
    "load_profile_csv",
    "write_field_csv",
]


@dataclass(frozen=True)
class Grid1D:
    """Uniform nodes ``u_j = j/m`` on ``[0, 1]`` and a time step."""

    m: int
    dt_pde: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 8:
            raise ValueError("m must be an integer >= 8")
        if not self.dt_pde > 0:
            raise ValueError("dt_pde must be positive")

    @property
    def u(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @property
    def du(self) -> float:
        return 1.0 / self.m

    def n_steps(self, t_end: float) -> tuple[int, float]:
        if t_end <= 0:
            return 0, self.dt_pde
        k = int(np.ceil(t_end / self.dt_pde - 1e-9))
        return k, t_end / k


@dataclass
class MacroField:
    values: np.ndarray
    t: float
    kind: str


@dataclass
class FieldPath:
    """Nodal values at every time level, ``values[time, node]``."""

    times: np.ndarray
    values: np.ndarray
    kind: str
    grid: Grid1D

    def __getitem__(self, i) -> MacroField:
        return MacroField(self.values[i], float(self.times[i]), self.kind)

    def __len__(self):
        return len(self.times)

    def final(self) -> MacroField:
        return self[-1]

    def interpolate(self, i: int, u) -> np.ndarray:
        return np.interp(u, self.grid.u, self.values[i])


def _lap_banded(m: int, coef: float) -> np.ndarray:
    """Banded storage of ``I - coef * D2`` on interior nodes (``coef`` includes dt/du^2)."""
    k = m - 1
    ab = np.zeros((3, k))
    ab[0, 1:] = -coef
    ab[1, :] = 1.0 + 2.0 * coef
    ab[2, :-1] = -coef
    return ab


def _d2(v: np.ndarray) -> np.ndarray:
    """Unscaled second difference at interior nodes."""
    return v[2:] - 2.0 * v[1:-1] + v[:-2]


def _check_finite(v, what):
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite values in {what}")


def solve_stretch(r0, params: ModelParams, t_end: float, grid: Grid1D) -> FieldPath:
    """Crank-Nicolson for ``r_t = r_uu / (2 gamma)``.

    ``r0`` is a callable of ``u`` or an array of nodal values.
    """
    u = grid.u
    r = np.array(r0(u) if callable(r0) else r0, dtype=float)
    if r.shape != u.shape:
        raise ValueError("initial profile does not match the grid")
    tau = params.tau_plus
    if abs(r[0]) > 1e-12 or abs(r[-1] - tau) > 1e-12:
        warnings.warn("initial stretch does not match the boundary values; proceeding", RuntimeWarning, stacklevel=2)
    steps, dt = grid.n_steps(t_end)
    D = 1.0 / (2.0 * params.gamma)
    if dt > params.gamma * grid.du**2:
        warnings.warn("dt exceeds gamma*du^2: the discrete maximum principle may fail", RuntimeWarning, stacklevel=2)
    c = 0.5 * D * dt / grid.du**2
    ab = _lap_banded(grid.m, c)
    out = np.empty((steps + 1, u.size))
    out[0] = r
    r = r.copy()
    r[0], r[-1] = 0.0, tau
    for k in range(1, steps + 1):
        rhs = r[1:-1] + c * _d2(r)
        rhs[-1] += c * tau
        r = r.copy()
        r[1:-1] = solve_banded((1, 1), ab, rhs)
        r[0], r[-1] = 0.0, tau
        out[k] = r
    _check_finite(out, "stretch solution")
    return FieldPath(np.arange(steps + 1) * dt, out, "stretch", grid)


def solve_energy(e0, r_path: FieldPath, params: ModelParams, grid: Grid1D, flux_term: bool = True) -> FieldPath:
    """Crank-Nicolson for ``e_t = (e + r^2/2)_uu / (4 gamma)`` on the time levels of ``r_path``.

    The source ``(r^2/2)_uu`` is averaged over the two time levels of each step.
    ``flux_term=False`` drops it (ablation only).
    """
    if r_path.grid.m != grid.m:
        raise ValueError("stretch path lives on a different grid")
    u = grid.u
    e = np.array(e0(u) if callable(e0) else e0, dtype=float)
    if e.shape != u.shape:
        raise ValueError("initial profile does not match the grid")
    if np.any(e < 0):
        raise ValueError("initial energy must be nonnegative")
    left = params.t_minus
    right = params.t_plus + 0.5 * params.tau_plus**2
    if abs(e[0] - left) > 1e-12 or abs(e[-1] - right) > 1e-12:
        warnings.warn("initial energy does not match the boundary values; proceeding", RuntimeWarning, stacklevel=2)
    times = r_path.times
    steps = len(times) - 1
    dts = np.diff(times)
    if steps and not np.allclose(dts, dts[0], rtol=1e-10):
        raise ValueError("stretch path must be on a uniform time grid")
    dt = dts[0] if steps else grid.dt_pde
    D = 1.0 / (4.0 * params.gamma)
    c = 0.5 * D * dt / grid.du**2
    ab = _lap_banded(grid.m, c)
    out = np.empty((steps + 1, u.size))
    out[0] = e
    e = e.copy()
    e[0], e[-1] = left, right
    half_sq = 0.5 * r_path.values**2 if flux_term else np.zeros_like(r_path.values)
    for k in range(1, steps + 1):
        src = c * (_d2(half_sq[k - 1]) + _d2(half_sq[k]))
        rhs = e[1:-1] + c * _d2(e) + src
        rhs[0] += c * left
        rhs[-1] += c * right
        e = e.copy()
        e[1:-1] = solve_banded((1, 1), ab, rhs)
        e[0], e[-1] = left, right
        out[k] = e
    _check_finite(out, "energy solution")
    return FieldPath(times.copy(), out, "energy", grid)


def stationary_stretch(u, params: ModelParams) -> np.ndarray:
    return params.tau_plus * np.asarray(u, dtype=float)


def stationary_energy(u, params: ModelParams) -> np.ndarray:
    """``T- + (T+ + tau^2 - T-) u - tau^2 u^2 / 2``."""
    u = np.asarray(u, dtype=float)
    tau2 = params.tau_plus**2
    return params.t_minus + (params.t_plus + tau2 - params.t_minus) * u - 0.5 * tau2 * u**2


# --------------------------------------------------------------------------
# weak form


@dataclass
class TestFunction1D:
    """``G`` with ``G(0) = G(1) = 0`` and its first two derivatives."""

    G: Callable
    dG: Callable
    d2G: Callable
    name: str = "custom"

    @classmethod
    def preset(cls, name: str) -> "TestFunction1D":
        if name == "bump":
            return cls(lambda u: u * (1 - u), lambda u: 1 - 2 * u, lambda u: -2.0 + 0 * u, name)
        if name == "sine":
            pi = np.pi
            return cls(lambda u: np.sin(pi * u), lambda u: pi * np.cos(pi * u), lambda u: -pi**2 * np.sin(pi * u), name)
        if name == "cubic":
            return cls(lambda u: u**2 * (1 - u), lambda u: 2 * u - 3 * u**2, lambda u: 2 - 6 * u, name)
        raise KeyError(f"unknown test function {name!r}")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def pairing(values: np.ndarray, f: Callable, u: np.ndarray) -> float:
    """``int_0^1 f(u) v(u) du`` with ``v`` piecewise linear, Gauss-Legendre per cell."""
    a, b = u[:-1], u[1:]
    h = b - a
    s = 0.5 * (_GL_X + 1.0)  # nodes on [0, 1]
    pts = a[:, None] + h[:, None] * s[None, :]
    v = values[:-1, None] * (1 - s[None, :]) + values[1:, None] * s[None, :]
    return float(np.sum(0.5 * h[:, None] * _GL_W[None, :] * f(pts) * v))


def weak_residual(path: FieldPath, G: TestFunction1D, params: ModelParams, r_path: FieldPath | None = None) -> float:
    """Residual of the weak form at the final time.

    Stretch: ``<G, r(t) - r(0)> - (1/2g) int <G'', r> ds + (1/2g) G'(1) tau t``.
    Energy:  ``<G, e(t) - e(0)> - (1/4g) int <G'', e + r^2/2> ds
              + (t/4g) (G'(1)(T+ + tau^2) - G'(0) T-)``.
    Time integrals use the trapezoid rule over the stored levels.
    """
    u = path.grid.u
    t = path.times
    g = params.gamma
    tau = params.tau_plus
    head = pairing(path.values[-1] - path.values[0], G.G, u)
    if path.kind == "stretch":
        inner = np.array([pairing(v, G.d2G, u) for v in path.values])
        return head - np.trapezoid(inner, t) / (2 * g) + G.dG(1.0) * tau * t[-1] / (2 * g)
    if path.kind == "energy":
        if r_path is None:
            raise ValueError("energy residual needs the stretch path")
        f = path.values + 0.5 * r_path.values**2
        inner = np.array([pairing(v, G.d2G, u) for v in f])
        bnd = G.dG(1.0) * (params.t_plus + tau**2) - G.dG(0.0) * params.t_minus
        return head - np.trapezoid(inner, t) / (4 * g) + bnd * t[-1] / (4 * g)
    raise ValueError(f"unknown field kind {path.kind!r}")


# --------------------------------------------------------------------------
# presets and I/O


def profile_preset(name: str, params: ModelParams, kind: str = "stretch", amplitude: float = 1.0) -> Callable:
    """Named initial profiles compatible with the boundary values.

    stretch: ``linear-tension`` (tau u), ``sine`` (tau u + a sin(pi u)), ``constant`` (0, only if tau = 0).
    energy: ``linear`` (boundary interpolation), ``sine`` (linear + a sin(pi u)^2 bump),
    ``constant`` (T-), ``stationary``.
    """
    tau = params.tau_plus
    if kind == "stretch":
        table = {
            "linear-tension": lambda u: tau * np.asarray(u, float),
            "sine": lambda u: tau * np.asarray(u, float) + amplitude * np.sin(np.pi * np.asarray(u, float)),
            "constant": lambda u: np.zeros_like(np.asarray(u, float)),
        }
    elif kind == "energy":
        left, right = params.t_minus, params.t_plus + 0.5 * tau**2
        lin = lambda u: left + (right - left) * np.asarray(u, float)
        table = {
            "linear": lin,
            "sine": lambda u: lin(u) + amplitude * np.sin(np.pi * np.asarray(u, float)) ** 2,
            "constant": lambda u: np.full_like(np.asarray(u, float), left),
            "stationary": lambda u: stationary_energy(u, params),
        }
    else:
        raise ValueError("kind must be 'stretch' or 'energy'")
    if name not in table:
        raise KeyError(f"unknown {kind} preset {name!r}; choose from {sorted(table)}")
    return table[name]


def load_profile_csv(path) -> Callable:
    """Read ``u,value`` rows and return a linear interpolant."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("profile CSV needs two columns u,value")
    order = np.argsort(data[:, 0])
    uu, vv = data[order, 0], data[order, 1]
    return lambda u: np.interp(u, uu, vv)


def write_field_csv(path_obj: FieldPath, path, every: int = 1) -> None:
    """Columns t, u, value."""
    u = path_obj.grid.u
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "value"])
        for i in range(0, len(path_obj), every):
            for uj, v in zip(u, path_obj.values[i]):
                w.writerow([repr(float(path_obj.times[i])), repr(float(uj)), repr(float(v))])
