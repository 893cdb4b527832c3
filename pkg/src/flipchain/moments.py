"""Exact first and second moments of the phase vector.

The dynamics is linear between flips and the flips act linearly on moments,
so the mean ``m`` and the second-moment matrix ``M = E[z z^T]`` obey a closed
linear ODE system.  Everything here runs in microscopic time ``tau = n**2 t``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.linalg
import scipy.sparse as sps

from .model import GibbsSpec, ModelParams, hamiltonian_drift, p_index, r_index

__all__ = [
    "DriftSpec",
    "MomentState",
    "MomentPath",
    "build_drift",
    "flip_term",
    "evolve",
    "evolve_path",
    "evolve_means",
    "means_exact",
    "stationary_mean",
    "energy_profile",
    "fluctuation_cov",
    "write_checkpoint",
    "read_checkpoint",
    "write_moments_csv",
]


@dataclass
class DriftSpec:
    """Linear data of the moment equations (microscopic units).

    Attributes
    ----------
    A0 : scipy.sparse.csr_matrix
        Hamiltonian couplings plus ``-gamma_tilde`` on ``p_0`` and ``p_n``.
    Df : numpy.ndarray
        Diagonal of the flip damping, ``-2 gamma`` on every momentum.
    b : numpy.ndarray
        Constant forcing (the tension at ``p_n``).
    Q : numpy.ndarray
        Diagonal of the diffusion matrix, ``2 gamma_tilde T`` at the thermostats.
    """

    A0: sps.csr_matrix
    Df: np.ndarray
    b: np.ndarray
    Q: np.ndarray
    n: int
    gamma: float

    @property
    def mean_matrix(self) -> np.ndarray:
        return self.A0.toarray() + np.diag(self.Df)


def build_drift(params: ModelParams) -> DriftSpec:
    n, dim = params.n, params.dim
    A = hamiltonian_drift(n)
    i0, i_n = p_index(n, 0), p_index(n, n)
    A[i0, i0] -= params.gamma_tilde
    A[i_n, i_n] -= params.gamma_tilde
    Df = np.zeros(dim)
    Df[n:] = -2.0 * params.gamma
    b = np.zeros(dim)
    b[i_n] = params.tau_plus
    Q = np.zeros(dim)
    Q[i0] = 2.0 * params.gamma_tilde * params.t_minus
    Q[i_n] = 2.0 * params.gamma_tilde * params.t_plus
    return DriftSpec(sps.csr_matrix(A), Df, b, Q, n, params.gamma)


def _flip_weights(n: int, gamma: float) -> np.ndarray:
    dim = 2 * n + 1
    is_p = np.zeros(dim, dtype=bool)
    is_p[n:] = True
    W = np.zeros((dim, dim))
    W[np.ix_(is_p, is_p)] = -4.0 * gamma
    W[np.ix_(is_p, ~is_p)] = -2.0 * gamma
    W[np.ix_(~is_p, is_p)] = -2.0 * gamma
    W[np.arange(n, dim), np.arange(n, dim)] = 0.0
    return W


def flip_term(M, gamma: float) -> np.ndarray:
    """``gamma * sum_x (J_x M J_x - M)`` with ``J_x`` negating ``p_x``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2 == 0:
        raise ValueError("expected a (2n+1) x (2n+1) matrix")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * (1 + np.abs(M).max())):
        raise ValueError("flip_term expects a symmetric matrix")
    n = (M.shape[0] - 1) // 2
    return _flip_weights(n, gamma) * M


@dataclass
class MomentState:
    """Mean ``m`` and second moments ``M = E[z z^T]`` at macroscopic time ``t_macro``.

    ``M`` may be ``None`` when only the means are tracked.
    """

    m: np.ndarray
    M: np.ndarray | None
    t_macro: float = 0.0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        if self.M is not None:
            self.M = np.asarray(self.M, dtype=float)
            if self.M.shape != (self.m.size, self.m.size):
                raise ValueError("M must be square with the size of m")

    @property
    def n(self) -> int:
        return (self.m.size - 1) // 2

    @classmethod
    def from_gibbs(cls, spec: GibbsSpec, params: ModelParams) -> "MomentState":
        mean, var = spec.site_moments(params.n)
        return cls(mean, np.diag(var) + np.outer(mean, mean), 0.0)

    @classmethod
    def from_mean_cov(cls, m, C, t_macro: float = 0.0) -> "MomentState":
        m = np.asarray(m, dtype=float)
        return cls(m, np.asarray(C, dtype=float) + np.outer(m, m), t_macro)

    @classmethod
    def deterministic(cls, z, t_macro: float = 0.0, means_only: bool = False) -> "MomentState":
        z = np.asarray(z, dtype=float)
        return cls(z, None if means_only else np.outer(z, z), t_macro)

    def copy(self) -> "MomentState":
        return MomentState(self.m.copy(), None if self.M is None else self.M.copy(), self.t_macro)

    def check(self, atol: float = 1e-8) -> None:
        """Raise if ``M`` is not symmetric or ``M - m m^T`` is not PSD within ``atol``."""
        if self.M is None:
            return
        if not np.allclose(self.M, self.M.T, rtol=0, atol=1e-12 * (1 + np.abs(self.M).max())):
            raise ValueError("second-moment matrix lost symmetry")
        lam = np.linalg.eigvalsh(fluctuation_cov(self))
        if lam.min() < -atol * max(1.0, lam.max()):
            raise ValueError(f"covariance not PSD: min eigenvalue {lam.min():.3e}")


def fluctuation_cov(ms: MomentState) -> np.ndarray:
    """``C = M - m m^T``."""
    if ms.M is None:
        raise ValueError("moment state carries no second moments")
    return ms.M - np.outer(ms.m, ms.m)


def energy_profile(ms: MomentState) -> np.ndarray:
    """Mean site energies ``(E[p_x^2] + E[r_x^2]) / 2`` for ``x = 0..n``."""
    n = ms.n
    d = np.diag(ms.M)
    rr = np.concatenate(([0.0], d[:n]))
    return 0.5 * (d[n:] + rr)


# --------------------------------------------------------------------------
# integration


def _rhs(drift: DriftSpec, W: np.ndarray | None, m: np.ndarray, M: np.ndarray | None):
    A = drift.A0
    dm = A @ m + drift.Df * m + drift.b
    if M is None:
        return dm, None
    AM = np.asarray(A @ M)
    bm = np.outer(drift.b, m)
    dM = AM + AM.T + bm + bm.T + W * M
    dM[np.diag_indices_from(dM)] += drift.Q
    return dm, dM


def _rk4_step(drift, W, m, M, h):
    k1m, k1M = _rhs(drift, W, m, M)
    if M is None:
        k2m, _ = _rhs(drift, W, m + 0.5 * h * k1m, None)
        k3m, _ = _rhs(drift, W, m + 0.5 * h * k2m, None)
        k4m, _ = _rhs(drift, W, m + h * k3m, None)
        return m + h / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m), None
    k2m, k2M = _rhs(drift, W, m + 0.5 * h * k1m, M + 0.5 * h * k1M)
    k3m, k3M = _rhs(drift, W, m + 0.5 * h * k2m, M + 0.5 * h * k2M)
    k4m, k4M = _rhs(drift, W, m + h * k3m, M + h * k3M)
    m_new = m + h / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
    M_new = M + h / 6.0 * (k1M + 2 * k2M + 2 * k3M + k4M)
    # every stage is symmetric in exact arithmetic; remove rounding asymmetry
    M_new = 0.5 * (M_new + M_new.T)
    return m_new, M_new


@dataclass
class MomentPath:
    """States recorded along an evolution, times in macroscopic units."""

    times: np.ndarray
    states: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    def means(self) -> np.ndarray:
        return np.array([s.m for s in self.states])

    def covs(self) -> np.ndarray:
        return np.array([fluctuation_cov(s) for s in self.states])


def evolve_path(
    ms: MomentState,
    params: ModelParams,
    t_target: float,
    dtau: float = 0.05,
    record_every: int = 1,
    observer: Callable[[MomentState], object] | None = None,
    keep_states: bool = True,
) -> tuple[MomentPath, list]:
    """Integrate to macroscopic time ``t_target`` with classical RK4.

    The step is adjusted down so that an integer number of steps of size
    at most ``dtau`` lands on ``t_target``.  States are recorded every
    ``record_every`` steps (always including both ends).  ``observer`` is
    called on each recorded state and its outputs are returned alongside the
    path; with ``keep_states=False`` only the observer outputs are kept.
    """
    if t_target < ms.t_macro:
        raise ValueError("t_target is earlier than the current time")
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    n = params.n
    if ms.n != n:
        raise ValueError("moment state and params disagree on n")
    drift = build_drift(params)
    W = None if ms.M is None else _flip_weights(n, params.gamma)
    span = (t_target - ms.t_macro) * n**2
    steps = int(np.ceil(span / dtau - 1e-9)) if span > 0 else 0
    h = span / steps if steps else 0.0
    m = ms.m.copy()
    M = None if ms.M is None else ms.M.copy()
    scale0 = 1.0 + np.abs(m).max() + (0.0 if M is None else np.abs(M).max())

    times, states, obs = [], [], []

    def record(k):
        s = MomentState(m, M, ms.t_macro + k * h / n**2)
        times.append(s.t_macro)
        if keep_states:
            states.append(s)
        if observer is not None:
            obs.append(observer(s))

    record(0)
    for k in range(1, steps + 1):
        m, M = _rk4_step(drift, W, m, M, h)
        if k % 256 == 0 or k == steps:
            size = np.abs(m).max() + (0.0 if M is None else np.abs(M).max())
            if not np.isfinite(size) or size > 1e12 * scale0:
                raise FloatingPointError(f"moment evolution blew up at step {k}; reduce dtau (now {h:.3g})")
        if k % record_every == 0 or k == steps:
            record(k)
    return MomentPath(np.array(times), states), obs


def evolve(ms: MomentState, params: ModelParams, t_target: float, dtau: float = 0.05) -> MomentState:
    """Advance ``ms`` to macroscopic time ``t_target``."""
    path, _ = evolve_path(ms, params, t_target, dtau, record_every=10**12)
    return path.states[-1]


def evolve_means(m0, params: ModelParams, t_target: float, dtau: float = 0.05, record_every: int = 1):
    """Means-only evolution; returns ``(times, means)`` arrays."""
    path, _ = evolve_path(MomentState(np.asarray(m0, float), None), params, t_target, dtau, record_every)
    return path.times, path.means()


def means_exact(m0, params: ModelParams, t_macro: float) -> np.ndarray:
    """Mean at ``t_macro`` from the matrix exponential (dense reference)."""
    drift = build_drift(params)
    K = drift.mean_matrix
    tau = t_macro * params.n**2
    m_star = stationary_mean(params)
    return m_star + scipy.linalg.expm(K * tau) @ (np.asarray(m0, float) - m_star)


def stationary_mean(params: ModelParams) -> np.ndarray:
    """Solve ``(A0 + Df) m + b = 0``."""
    drift = build_drift(params)
    K = drift.mean_matrix
    return np.linalg.solve(K, -drift.b)


# --------------------------------------------------------------------------
# I/O

_MAGIC = b"FCMOM001"


def write_checkpoint(ms: MomentState, path) -> None:
    """Binary layout: 8-byte magic, int64 n, float64 t_macro, row-major float64 M, then m."""
    if ms.M is None:
        raise ValueError("checkpoint needs second moments")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qd", ms.n, ms.t_macro))
        fh.write(np.ascontiguousarray(ms.M, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ms.m, dtype="<f8").tobytes())


def read_checkpoint(path) -> MomentState:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a moment checkpoint")
        n, t = struct.unpack("<qd", fh.read(16))
        dim = 2 * n + 1
        M = np.frombuffer(fh.read(8 * dim * dim), dtype="<f8").reshape(dim, dim).copy()
        m = np.frombuffer(fh.read(8 * dim), dtype="<f8").copy()
    return MomentState(m, M, t)


def write_moments_csv(states: Iterable[MomentState], path) -> None:
    """Columns: t, x, mean_r, mean_p, var_r, var_p, energy (``r_0`` reported as 0)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "mean_r", "mean_p", "var_r", "var_p", "energy"])
        for s in states:
            n = s.n
            r = np.concatenate(([0.0], s.m[:n]))
            p = s.m[n:]
            if s.M is not None:
                d = np.diag(fluctuation_cov(s))
                vr, vp = np.concatenate(([0.0], d[:n])), d[n:]
                e = energy_profile(s)
            else:
                vr = vp = e = np.full(n + 1, np.nan)
            for x in range(n + 1):
                w.writerow([repr(s.t_macro), x, repr(r[x]), repr(p[x]), repr(vr[x]), repr(vp[x]), repr(e[x])])
