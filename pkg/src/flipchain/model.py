"""Core model: parameters, configurations, quadratic observables and the generator.

The phase vector of a chain with ``n + 1`` sites is laid out as

    z = (r_1, ..., r_n, p_0, ..., p_n),      len(z) = 2n + 1,

with the stretch ``r_0`` pinned to zero and never stored.  Helpers
:func:`r_index` and :func:`p_index` translate site labels into positions
of ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "ModelParams",
    "ChainState",
    "GibbsSpec",
    "QuadraticObservable",
    "r_index",
    "p_index",
    "energy_density",
    "current",
    "generator",
    "generator_apply",
    "energy_observable",
    "current_observable",
    "g_observable",
    "v_observable",
    "h_observable",
    "w_observable",
    "fd_identity_g",
    "fd_identity_h",
    "fd_residual_g",
    "fd_residual_h",
    "boundary_energy_identity",
    "sample_initial",
    "gibbs_potential",
    "dft_forward",
    "dft_inverse",
]


@dataclass(frozen=True)
class ModelParams:
    """Physical and scaling constants of the open chain.

    Parameters
    ----------
    n : int
        Last site index; sites are ``0..n``.
    gamma : float
        Intensity of the momentum sign flips.
    gamma_tilde : float
        Intensity of the two boundary Langevin thermostats.
    t_minus, t_plus : float
        Thermostat temperatures at sites ``0`` and ``n``.
    tau_plus : float
        Constant tension acting on site ``n``.
    """

    n: int
    gamma: float = 1.0
    gamma_tilde: float = 1.0
    t_minus: float = 1.0
    t_plus: float = 1.0
    tau_plus: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        for name in ("gamma", "gamma_tilde", "t_minus", "t_plus"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not np.isfinite(self.tau_plus):
            raise ValueError("tau_plus must be finite")

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def temperatures(self) -> tuple[float, float]:
        return self.t_minus, self.t_plus

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("n", "gamma", "gamma_tilde", "t_minus", "t_plus", "tau_plus")}
        values.update(changes)
        return ModelParams(**values)


def r_index(n: int, x: int) -> int:
    """Position of ``r_x`` (``1 <= x <= n``) in the phase vector."""
    if not 1 <= x <= n:
        raise IndexError(f"stretch index {x} outside 1..{n}")
    return x - 1


def p_index(n: int, x: int) -> int:
    """Position of ``p_x`` (``0 <= x <= n``) in the phase vector."""
    if not 0 <= x <= n:
        raise IndexError(f"momentum index {x} outside 0..{n}")
    return n + x


@dataclass
class ChainState:
    """One microscopic configuration ``(r, p)`` at macroscopic time ``t_macro``.

    ``r`` holds ``r_1..r_n`` and ``p`` holds ``p_0..p_n``.
    """

    r: np.ndarray
    p: np.ndarray
    t_macro: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.r.ndim != 1 or self.p.shape != (self.r.size + 1,):
            raise ValueError(f"need len(p) == len(r) + 1, got {self.r.shape} and {self.p.shape}")
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.p))):
            raise ValueError("state contains non-finite entries")
        if self.t_macro < 0:
            raise ValueError("t_macro must be nonnegative")

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def r_full(self) -> np.ndarray:
        """Stretches ``r_0..r_n`` with ``r_0 = 0``."""
        return np.concatenate(([0.0], self.r))

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.r, self.p))

    @classmethod
    def from_vector(cls, z, t_macro: float = 0.0) -> "ChainState":
        z = np.asarray(z, dtype=float)
        n = (z.size - 1) // 2
        return cls(z[:n].copy(), z[n:].copy(), t_macro)


def energy_density(state: ChainState) -> np.ndarray:
    """Site energies ``p_x**2/2 + r_x**2/2`` for ``x = 0..n`` (``r_0 = 0``)."""
    return 0.5 * state.p**2 + 0.5 * state.r_full**2


def current(state: ChainState, x: int) -> float:
    """Energy current ``-p_x r_{x+1}`` across the bond ``(x, x+1)``."""
    if not 0 <= x <= state.n - 1:
        raise IndexError(f"bond index {x} outside 0..{state.n - 1}")
    return -state.p[x] * state.r[x]


# --------------------------------------------------------------------------
# Quadratic observables


@dataclass
class QuadraticObservable:
    """Polynomial ``const + lin . z + z^T quad z`` of degree at most two.

    ``quad`` is kept symmetric.
    """

    n: int
    const: float = 0.0
    lin: np.ndarray = None
    quad: np.ndarray = None

    def __post_init__(self):
        dim = 2 * self.n + 1
        self.lin = np.zeros(dim) if self.lin is None else np.asarray(self.lin, dtype=float)
        self.quad = np.zeros((dim, dim)) if self.quad is None else np.asarray(self.quad, dtype=float)
        if self.lin.shape != (dim,) or self.quad.shape != (dim, dim):
            raise ValueError("coefficient shapes do not match n")
        if not np.allclose(self.quad, self.quad.T, rtol=0, atol=1e-12 * (1 + np.abs(self.quad).max())):
            raise ValueError("quadratic coefficient matrix must be symmetric")
        self.quad = 0.5 * (self.quad + self.quad.T)

    @classmethod
    def from_terms(
        cls,
        n: int,
        const: float = 0.0,
        linear: Mapping[tuple[str, int], float] | None = None,
        quadratic: Mapping[tuple[tuple[str, int], tuple[str, int]], float] | None = None,
    ) -> "QuadraticObservable":
        """Build from sparse monomials.

        Variables are named ``("r", x)`` or ``("p", x)``; any term containing
        ``("r", 0)`` vanishes.  ``quadratic`` maps a pair of variables to the
        coefficient of their product.
        """
        obs = cls(n, const)
        for var, c in (linear or {}).items():
            i = _var_index(n, var)
            if i is not None:
                obs.lin[i] += c
        for (a, b), c in (quadratic or {}).items():
            i, j = _var_index(n, a), _var_index(n, b)
            if i is None or j is None:
                continue
            obs.quad[i, j] += 0.5 * c
            obs.quad[j, i] += 0.5 * c
        return obs

    def __call__(self, z) -> np.ndarray | float:
        """Evaluate on a state, a phase vector or a batch of phase vectors (last axis)."""
        if isinstance(z, ChainState):
            z = z.as_vector()
        z = np.asarray(z, dtype=float)
        return self.const + z @ self.lin + np.einsum("...i,ij,...j->...", z, self.quad, z)

    def __add__(self, other: "QuadraticObservable") -> "QuadraticObservable":
        _check_same_n(self, other)
        return QuadraticObservable(self.n, self.const + other.const, self.lin + other.lin, self.quad + other.quad)

    def __sub__(self, other: "QuadraticObservable") -> "QuadraticObservable":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "QuadraticObservable":
        return QuadraticObservable(self.n, c * self.const, c * self.lin, c * self.quad)

    def max_abs_coefficient(self) -> float:
        return max(abs(self.const), np.abs(self.lin).max(), np.abs(self.quad).max())

    def expectation(self, mean: np.ndarray, second_moment: np.ndarray) -> float:
        """``E[f(z)]`` given ``E[z]`` and ``E[z z^T]``."""
        return float(self.const + self.lin @ mean + np.sum(self.quad * second_moment))


def _var_index(n: int, var: tuple[str, int]) -> int | None:
    kind, x = var
    if kind == "r":
        return None if x == 0 else r_index(n, x)
    if kind == "p":
        return p_index(n, x)
    raise ValueError(f"unknown variable kind {kind!r}")


def _check_same_n(a: QuadraticObservable, b: QuadraticObservable):
    if a.n != b.n:
        raise ValueError("observables live on chains of different length")


def hamiltonian_drift(n: int) -> np.ndarray:
    """Linear part of the Hamiltonian vector field (antisymmetric)."""
    dim = 2 * n + 1
    H = np.zeros((dim, dim))
    for x in range(1, n + 1):
        H[r_index(n, x), p_index(n, x)] += 1.0
        H[r_index(n, x), p_index(n, x - 1)] -= 1.0
    for x in range(1, n):
        H[p_index(n, x), r_index(n, x + 1)] += 1.0
        H[p_index(n, x), r_index(n, x)] -= 1.0
    H[p_index(n, 0), r_index(n, 1)] += 1.0
    H[p_index(n, n), r_index(n, n)] -= 1.0
    return H


def generator(obs: QuadraticObservable, params: ModelParams) -> QuadraticObservable:
    """Action of the full generator on a quadratic observable.

    Quadratic polynomials are mapped to quadratic polynomials, so the result
    is returned in closed form.  Units are macroscopic (the ``n**2`` factor
    is included).
    """
    if not isinstance(obs, QuadraticObservable):
        raise TypeError("generator is only defined here for QuadraticObservable (degree <= 2)")
    n = obs.n
    if n != params.n:
        raise ValueError("observable and params disagree on n")
    l, Q = obs.lin, obs.quad
    H = hamiltonian_drift(n)
    b = np.zeros(2 * n + 1)
    b[p_index(n, n)] = params.tau_plus
    pmask = np.zeros(2 * n + 1)
    pmask[n:] = 1.0
    bmask = np.zeros(2 * n + 1)
    bmask[[p_index(n, 0), p_index(n, n)]] = 1.0
    temps = np.zeros(2 * n + 1)
    temps[p_index(n, 0)], temps[p_index(n, n)] = params.t_minus, params.t_plus

    # Hamiltonian transport plus tension
    c_a = l @ b
    l_a = H.T @ l + 2.0 * Q @ b
    Q_a = Q @ H + H.T @ Q

    # sign flips: sum_x f(p^x) - f
    dq = np.diag(Q)
    l_s = -2.0 * pmask * l
    Q_s = -2.0 * (pmask[:, None] * Q + Q * pmask[None, :]) + np.diag(4.0 * pmask * dq)

    # boundary Ornstein-Uhlenbeck
    c_t = 2.0 * np.sum(temps * dq)
    l_t = -bmask * l
    Q_t = -(bmask[:, None] * Q + Q * bmask[None, :])

    n2 = float(n) ** 2
    g, gt = params.gamma, params.gamma_tilde
    return QuadraticObservable(
        n,
        n2 * (c_a + gt * c_t),
        n2 * (l_a + g * l_s + gt * l_t),
        n2 * (Q_a + g * Q_s + gt * Q_t),
    )


def generator_apply(obs: QuadraticObservable, state: ChainState, params: ModelParams) -> float:
    """``(L obs)(state)``."""
    return float(generator(obs, params)(state))


# --------------------------------------------------------------------------
# local functions used by the conservation-law identities


def energy_observable(n: int, x: int) -> QuadraticObservable:
    return QuadraticObservable.from_terms(n, quadratic={(("p", x), ("p", x)): 0.5, (("r", x), ("r", x)): 0.5})


def current_observable(n: int, x: int) -> QuadraticObservable:
    """``j_{x,x+1} = -p_x r_{x+1}``."""
    if not 0 <= x <= n - 1:
        raise IndexError(f"bond index {x} outside 0..{n - 1}")
    return QuadraticObservable.from_terms(n, quadratic={(("p", x), ("r", x + 1)): -1.0})


def g_observable(n: int, x: int, gamma: float) -> QuadraticObservable:
    return QuadraticObservable.from_terms(
        n,
        quadratic={
            (("p", x), ("p", x)): -0.25,
            (("p", x), ("r", x)): 1.0 / (4 * gamma),
            (("p", x), ("r", x + 1)): 1.0 / (4 * gamma),
        },
    )


def v_observable(n: int, x: int, gamma: float) -> QuadraticObservable:
    return QuadraticObservable.from_terms(
        n,
        quadratic={(("r", x), ("r", x)): 1.0 / (4 * gamma), (("p", x), ("p", x - 1)): 1.0 / (4 * gamma)},
    )


def h_observable(n: int, x: int, gamma: float) -> QuadraticObservable:
    c = 1.0 / (2 * gamma)
    # (r_x + r_{x-1})^2 / 2 - r_x^2 = -r_x^2/2 + r_x r_{x-1} + r_{x-1}^2/2
    return QuadraticObservable.from_terms(
        n,
        quadratic={
            (("r", x), ("r", x)): -0.5 * c,
            (("r", x), ("r", x - 1)): c,
            (("r", x - 1), ("r", x - 1)): 0.5 * c,
            (("p", x - 1), ("p", x)): c,
        },
    )


def w_observable(n: int, x: int, gamma: float) -> QuadraticObservable:
    c = 1.0 / (2 * gamma)
    return QuadraticObservable.from_terms(
        n, quadratic={(("p", x - 2), ("r", x - 1)): c, (("p", x - 2), ("r", x)): c}
    )


def fd_identity_g(x: int, params: ModelParams) -> QuadraticObservable:
    """``n^-2 L g_x - (V_{x+1} - V_x) - j_{x,x+1}`` as a polynomial; identically zero."""
    n = params.n
    if not 1 <= x <= n - 1:
        raise IndexError(f"site {x} outside 1..{n - 1}")
    lg = generator(g_observable(n, x, params.gamma), params).scale(1.0 / n**2)
    dv = v_observable(n, x + 1, params.gamma) - v_observable(n, x, params.gamma)
    return lg - dv - current_observable(n, x)


def fd_identity_h(x: int, params: ModelParams) -> QuadraticObservable:
    """``n^-2 L h_x - (W_{x+1} - W_x) + 2 p_x p_{x-1}`` as a polynomial; identically zero.

    The flips act twice on ``p_{x-1} p_x``, hence the factor two in front of
    the momentum product.
    """
    n = params.n
    if not 2 <= x <= n - 2:
        raise IndexError(f"site {x} outside 2..{n - 2}")
    lh = generator(h_observable(n, x, params.gamma), params).scale(1.0 / n**2)
    dw = w_observable(n, x + 1, params.gamma) - w_observable(n, x, params.gamma)
    pp = QuadraticObservable.from_terms(n, quadratic={(("p", x), ("p", x - 1)): 2.0})
    return lh - dw + pp


def fd_residual_g(state: ChainState, x: int, params: ModelParams) -> float:
    return float(fd_identity_g(x, params)(state))


def fd_residual_h(state: ChainState, x: int, params: ModelParams) -> float:
    return float(fd_identity_h(x, params)(state))


def boundary_energy_identity(side: str, params: ModelParams) -> QuadraticObservable:
    """Residual polynomial of the boundary energy balance at site 0 or n.

    ``side="left"``:  ``n^-2 L E_0 + j_{0,1} - gt (T_- - p_0^2)``
    ``side="right"``: ``n^-2 L E_n - j_{n-1,n} - tau p_n - gt (T_+ - p_n^2)``
    """
    n, gt = params.n, params.gamma_tilde
    if side == "left":
        lhs = generator(energy_observable(n, 0), params).scale(1.0 / n**2)
        rhs = current_observable(n, 0).scale(-1.0) + QuadraticObservable.from_terms(
            n, const=gt * params.t_minus, quadratic={(("p", 0), ("p", 0)): -gt}
        )
    elif side == "right":
        lhs = generator(energy_observable(n, n), params).scale(1.0 / n**2)
        rhs = current_observable(n, n - 1) + QuadraticObservable.from_terms(
            n,
            const=gt * params.t_plus,
            linear={("p", n): params.tau_plus},
            quadratic={(("p", n), ("p", n)): -gt},
        )
    else:
        raise ValueError("side must be 'left' or 'right'")
    return lhs - rhs


# --------------------------------------------------------------------------
# Gibbs-type initial laws


def _zero_profile(u):
    return np.zeros_like(np.asarray(u, dtype=float))


@dataclass
class GibbsSpec:
    """Inhomogeneous product Gaussian law.

    ``beta_profile(u)`` gives the inverse temperature at ``u = x/n``.  The
    stretch ``r_x`` has mean ``tension + mean_r(x/n)`` and ``p_x`` has mean
    ``mean_p(x/n)``; all variances are ``1/beta(x/n)``.
    """

    beta_profile: Callable[[np.ndarray], np.ndarray]
    tension: float = 0.0
    mean_r: Callable[[np.ndarray], np.ndarray] = field(default=_zero_profile)
    mean_p: Callable[[np.ndarray], np.ndarray] = field(default=_zero_profile)

    @classmethod
    def linear(cls, t_minus: float, t_plus: float, tension: float = 0.0, **kw) -> "GibbsSpec":
        """Inverse temperature interpolating linearly between ``1/t_minus`` and ``1/t_plus``."""
        b0, b1 = 1.0 / t_minus, 1.0 / t_plus
        return cls(lambda u: (b1 - b0) * np.asarray(u, dtype=float) + b0, tension, **kw)

    @classmethod
    def equilibrium(cls, temperature: float, tension: float = 0.0) -> "GibbsSpec":
        return cls(lambda u: np.full_like(np.asarray(u, dtype=float), 1.0 / temperature), tension)

    @classmethod
    def temperature_profile(cls, temp: Callable[[np.ndarray], np.ndarray], tension: float = 0.0, **kw):
        return cls(lambda u: 1.0 / np.asarray(temp(u), dtype=float), tension, **kw)

    def site_moments(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean vector and variance vector over the phase layout."""
        u_p = np.arange(n + 1) / n
        u_r = np.arange(1, n + 1) / n
        beta_p = np.asarray(self.beta_profile(u_p), dtype=float)
        beta_r = np.asarray(self.beta_profile(u_r), dtype=float)
        if np.any(beta_p <= 0) or np.any(beta_r <= 0):
            raise ValueError("inverse temperature must be positive")
        mean = np.concatenate((self.tension + np.asarray(self.mean_r(u_r), float), np.asarray(self.mean_p(u_p), float)))
        var = np.concatenate((1.0 / beta_r, 1.0 / beta_p))
        return mean, var


def sample_initial(spec: GibbsSpec, params: ModelParams, rng: np.random.Generator, size: int | None = None):
    """Draw one state (``size=None``) or a batch of phase vectors of shape ``(size, 2n+1)``."""
    mean, var = spec.site_moments(params.n)
    shape = mean.shape if size is None else (size, mean.size)
    z = mean + np.sqrt(var) * rng.standard_normal(shape)
    if size is None:
        return ChainState.from_vector(z)
    return z


def gibbs_potential(beta: float, tau: float) -> float:
    """``beta tau^2 / 2 + log(2 pi / beta) / 2``: log-partition of one stretch variable."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return 0.5 * beta * tau**2 + 0.5 * np.log(2 * np.pi / beta)


# --------------------------------------------------------------------------
# Fourier transform on the discrete torus {0..n}


def dft_forward(f) -> np.ndarray:
    """``f_hat(k) = sum_x f_x exp(-2 pi i x k)`` on ``k = j/(n+1)``."""
    return np.fft.fft(np.asarray(f), axis=-1)


def dft_inverse(f_hat) -> np.ndarray:
    """Averaged inverse: ``f_x = (1/(n+1)) sum_k f_hat(k) exp(2 pi i x k)``."""
    return np.fft.ifft(np.asarray(f_hat), axis=-1)
