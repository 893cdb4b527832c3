"""Fourier-Wigner diagnostics of the fluctuation field.

All quantities are built from the fluctuation covariance ``C`` of the phase
vector ``(r_1..r_n, p_0..p_n)``.  The wave function is
``psi_x = r_x + i p_x`` for ``x = 0..n`` with ``r_0 = 0``.  Frequency offsets
``eta`` are integers modulo ``n + 1``; the second index is the integer
``j`` of ``k = j / (n + 1)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import ModelParams
from .moments import MomentPath, MomentState, fluctuation_cov

__all__ = [
    "WignerSet",
    "TestFunction2D",
    "split_cov",
    "wigner_from_cov",
    "energy_functional",
    "energy_functional_cov",
    "dissipation_sum",
    "equipartition_field",
    "equipartition_integrand",
    "equipartition_integrand_wigner",
    "equipartition_functional",
    "balance_terms",
    "wigner_balance_residual",
    "write_wigner_csv",
]


@dataclass
class WignerSet:
    """``W+``, ``W-``, ``Y+``, ``Y-`` on the ``(eta, j)`` lattice, each of shape ``(n+1, n+1)``."""

    Wplus: np.ndarray
    Wminus: np.ndarray
    Yplus: np.ndarray
    Yminus: np.ndarray
    t_macro: float = 0.0

    @property
    def n(self) -> int:
        return self.Wplus.shape[0] - 1


@dataclass
class TestFunction2D:
    """Test function ``G(s, u)`` vanishing at ``u = 0`` and ``u = 1``."""

    func: Callable[[float, np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, s, u):
        return np.asarray(self.func(s, np.asarray(u, dtype=float)))

    def boundary_ok(self, times=(0.0,), atol: float = 1e-12) -> bool:
        return all(np.all(np.abs(self(s, np.array([0.0, 1.0]))) <= atol) for s in times)

    def lattice(self, s: float, n: int) -> np.ndarray:
        """``G_x(s) = G(s, x/n)`` for ``x = 0..n``."""
        return self(s, np.arange(n + 1) / n)

    def fourier(self, s: float, n: int) -> np.ndarray:
        """Averaged coefficients ``(1/(n+1)) sum_x G_x exp(-2 pi i x eta/(n+1))``."""
        return np.fft.fft(self.lattice(s, n)) / (n + 1)

    @classmethod
    def preset(cls, name: str) -> "TestFunction2D":
        presets = {
            "bump": lambda s, u: u * (1 - u),
            "sine": lambda s, u: np.sin(np.pi * u),
            "sine2": lambda s, u: np.sin(2 * np.pi * u),
            "bump-decay": lambda s, u: np.exp(-s) * u * (1 - u),
            # violates the boundary condition; kept to exercise the check
            "constant": lambda s, u: np.ones_like(u),
        }
        if name not in presets:
            raise KeyError(f"unknown test function preset {name!r}; choose from {sorted(presets)}")
        return cls(presets[name], name)


def split_cov(C: np.ndarray, n: int):
    """Return ``(Crr, Cpp, Cpr)`` on the full site range ``0..n`` (``r_0`` rows zero).

    ``Cpr[x, y] = E[p_x r_y]``.
    """
    C = np.asarray(C, dtype=float)
    if C.shape != (2 * n + 1, 2 * n + 1):
        raise ValueError(f"covariance must be {(2 * n + 1,) * 2}, got {C.shape}")
    N = n + 1
    Crr = np.zeros((N, N))
    Crr[1:, 1:] = C[:n, :n]
    Cpp = C[n:, n:].copy()
    Cpr = np.zeros((N, N))
    Cpr[:, 1:] = C[n:, :n]
    return Crr, Cpp, Cpr


def wigner_from_cov(C: np.ndarray, n: int, t_macro: float = 0.0) -> WignerSet:
    """Fourier-Wigner arrays from a fluctuation covariance."""
    Crr, Cpp, Cpr = split_cov(C, n)
    Crp = Cpr.T
    G = (Crr + Cpp) + 1j * (Cpr - Crp)  # E[psi_x conj(psi_y)]
    K = (Crr - Cpp) + 1j * (Cpr + Crp)  # E[psi_x psi_y]
    N = n + 1
    # E[psi_hat(k1) conj psi_hat(k2)] = (F G F^H)[k1, k2]
    Gh = np.fft.fft(np.fft.ifft(G, axis=1) * N, axis=0)
    Kh = np.fft.fft(np.fft.fft(K, axis=1), axis=0)
    eta = np.arange(N)[:, None]
    j = np.arange(N)[None, :]
    Wp = Gh[(j + eta) % N, j] / (2 * N)
    Yp = Kh[(j + eta) % N, (-j) % N] / (2 * N)
    neg_e, neg_j = (-eta) % N, (-j) % N
    Wm = np.conj(Wp[neg_e, neg_j])
    Ym = np.conj(Yp[neg_e, neg_j])
    return WignerSet(Wp, Wm, Yp, Ym, t_macro)


def energy_functional(ws: WignerSet) -> float:
    """Sum over ``eta`` and average over ``k`` of ``|W+|^2 + |W-|^2 + |Y+|^2 + |Y-|^2``."""
    N = ws.n + 1
    tot = sum(np.sum(np.abs(a) ** 2) for a in (ws.Wplus, ws.Wminus, ws.Yplus, ws.Yminus))
    return float(tot / N)


def energy_functional_cov(C: np.ndarray, n: int) -> float:
    """Same functional directly from the covariance: ``||C||_F^2 / (n+1)``."""
    return float(np.sum(np.asarray(C) ** 2) / (n + 1))


def dissipation_sum(ws: WignerSet) -> float:
    """``sum_eta avg_k (|W+ - W-|^2 + |Y+ - Y-|^2)``."""
    N = ws.n + 1
    return float((np.sum(np.abs(ws.Wplus - ws.Wminus) ** 2) + np.sum(np.abs(ws.Yplus - ws.Yminus) ** 2)) / N)


# --------------------------------------------------------------------------
# equipartition


def equipartition_field(C: np.ndarray, n: int) -> np.ndarray:
    """``E[r_x^2] - E[p_x^2]`` (fluctuations) for ``x = 0..n``."""
    Crr, Cpp, _ = split_cov(C, n)
    return np.diag(Crr) - np.diag(Cpp)


def equipartition_integrand(C: np.ndarray, n: int, G: TestFunction2D, s: float) -> float:
    """``(1/n) sum_x G_x(s) (E[r_x^2] - E[p_x^2])``."""
    return float(np.real(np.sum(G.lattice(s, n) * equipartition_field(C, n))) / n)


def equipartition_integrand_wigner(ws: WignerSet, G: TestFunction2D, s: float) -> float:
    """Same integrand through ``V = Y+ + Y-``: ``((n+1)/n) sum_eta avg_k V conj(G_hat)``."""
    n = ws.n
    V = ws.Yplus + ws.Yminus
    Ghat = G.fourier(s, n)
    val = np.sum(V.mean(axis=1) * np.conj(Ghat))
    return float(np.real(val) * (n + 1) / n)


def equipartition_functional(C_path: Sequence[np.ndarray], times: Sequence[float], G: TestFunction2D, params: ModelParams,
                             form: str = "lattice") -> float:
    """Trapezoid-in-time integral of the equipartition integrand.

    ``form`` is ``"lattice"`` (site sums) or ``"wigner"`` (the ``(eta, k)`` form).
    """
    import warnings

    times = np.asarray(times, dtype=float)
    if len(C_path) != times.size:
        raise ValueError("covariance path and times differ in length")
    if not G.boundary_ok(times[[0, -1]] if times.size else (0.0,)):
        warnings.warn("test function does not vanish at u = 0, 1", RuntimeWarning, stacklevel=2)
    n = params.n
    if form == "lattice":
        vals = [equipartition_integrand(C, n, G, s) for C, s in zip(C_path, times)]
    elif form == "wigner":
        vals = [equipartition_integrand_wigner(wigner_from_cov(C, n), G, s) for C, s in zip(C_path, times)]
    else:
        raise ValueError("form must be 'lattice' or 'wigner'")
    if times.size < 2:
        return 0.0
    return float(np.trapezoid(vals, times))


# --------------------------------------------------------------------------
# energy balance


def balance_terms(ms: MomentState, params: ModelParams) -> dict:
    """Right-hand side of the fluctuation energy balance, per unit microscopic time.

    Returns the four contributions to ``(1/2) dE/dtau`` where ``E`` is
    :func:`energy_functional_cov`:

    ``thermostat_gain``   ``2 gt / (n+1) sum_{x=0,n} T_x C[p_x, p_x]``
    ``mean_injection``    ``4 g / (n+1) sum_x pbar_x^2 C[p_x, p_x]``
    ``boundary_loss``     ``-2 gt / (n+1) sum_{x=0,n} sum_z C[p_x, z]^2``
    ``bulk_loss``         ``-4 g / (n+1) (sum_{x != y} C[p_x,p_y]^2 + sum_{x,y} C[p_x,r_y]^2)``
    """
    n = params.n
    N = n + 1
    C = fluctuation_cov(ms)
    _, Cpp, Cpr = split_cov(C, n)
    pbar = ms.m[n:]
    g, gt = params.gamma, params.gamma_tilde
    vp = np.diag(Cpp)
    rows = C[[n, 2 * n], :]
    off = np.sum(Cpp**2) - np.sum(vp**2)
    return {
        "thermostat_gain": 2 * gt / N * (params.t_minus * vp[0] + params.t_plus * vp[n]),
        "mean_injection": 4 * g / N * float(np.sum(pbar**2 * vp)),
        "boundary_loss": -2 * gt / N * float(np.sum(rows**2)),
        "bulk_loss": -4 * g / N * float(off + np.sum(Cpr**2)),
    }


def wigner_balance_residual(path: MomentPath, params: ModelParams, dt: float | None = None,
                            return_series: bool = False):
    """Sup over interior recorded times of ``|(1/2) dE/dtau - sum(balance_terms)|``.

    The derivative is a centered difference in microscopic time ``tau = n^2 t``
    over consecutive recorded states; ``dt`` (microscopic) is checked against
    the recorded spacing when given.
    """
    if len(path.states) < 3:
        raise ValueError("need at least three recorded times")
    n = params.n
    tau = np.asarray(path.times) * n**2
    steps = np.diff(tau)
    if not np.allclose(steps, steps[0], rtol=1e-8, atol=0):
        raise ValueError("recorded times must be equally spaced")
    h = steps[0]
    if dt is not None and not np.isclose(h, dt, rtol=1e-6):
        raise ValueError(f"recorded spacing {h} differs from dt = {dt}")
    E = np.array([energy_functional_cov(fluctuation_cov(s), n) for s in path.states])
    lhs = 0.5 * (E[2:] - E[:-2]) / (2 * h)
    rhs = np.array([sum(balance_terms(s, params).values()) for s in path.states[1:-1]])
    res = np.abs(lhs - rhs)
    if return_series:
        return float(res.max()), res
    return float(res.max())


def write_wigner_csv(ws: WignerSet, path) -> None:
    """Columns: eta, j, and real/imag parts of each field."""
    N = ws.n + 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta", "j", "Wplus_re", "Wplus_im", "Wminus_re", "Wminus_im",
                    "Yplus_re", "Yplus_im", "Yminus_re", "Yminus_im"])
        for e in range(N):
            for j in range(N):
                row = [e, j]
                for a in (ws.Wplus, ws.Wminus, ws.Yplus, ws.Yminus):
                    row += [repr(float(a[e, j].real)), repr(float(a[e, j].imag))]
                w.writerow(row)
