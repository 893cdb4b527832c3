"""Monte Carlo integration of the microscopic dynamics.

Time stepping runs in microscopic units; one step of length ``dtau`` moves
the macroscopic clock by ``dtau / n**2``.  A step is the symmetric splitting

    OU(h/2) -> flips(h/2) -> velocity Verlet(h) -> flips(h/2) -> OU(h/2)

where the Ornstein-Uhlenbeck and flip sub-steps are sampled exactly.  Many
trajectories are advanced together as rows of one array; each row owns its
random stream so that results do not depend on how rows are grouped.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ChainState, GibbsSpec, ModelParams, sample_initial

__all__ = [
    "IntegratorConfig",
    "EnsembleStats",
    "TrajectoryRecord",
    "BOUNDARY_KEYS",
    "flip_probability",
    "ou_substep",
    "flip_substep",
    "verlet_substep",
    "step",
    "run_trajectory",
    "run_ensemble",
    "pairwise_sum",
    "write_ensemble_csv",
    "write_boundary_json",
]

_BLOCK = 64  # steps of noise drawn per call, fixed so streams never depend on run length

BOUNDARY_KEYS = (
    "p_0", "p_n", "r_1", "r_n_minus_tau",
    "p0_sq_minus_T", "pn_sq_minus_T",
    "j_01", "j_n1n", "p0_p1", "pn1_pn",
)


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size (microscopic), horizon (macroscopic) and recording stride."""

    dtau: float = 0.05
    t_end_macro: float = 0.05
    record_stride: int = 1

    def __post_init__(self):
        if not 0 < self.dtau <= 0.25:
            raise ValueError(f"dtau must lie in (0, 0.25], got {self.dtau}")
        if not self.t_end_macro >= 0:
            raise ValueError("t_end_macro must be nonnegative")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")

    def n_steps(self, n: int) -> tuple[int, float]:
        """Number of steps and the actual step so that the horizon is hit exactly."""
        span = self.t_end_macro * n**2
        if span == 0:
            return 0, self.dtau
        steps = int(np.ceil(span / self.dtau - 1e-9))
        return steps, span / steps


def flip_probability(gamma: float, dtau: float) -> float:
    """Probability of an odd number of rate-``gamma`` flip events in time ``dtau``."""
    if not (gamma > 0 and dtau > 0):
        raise ValueError("gamma and dtau must be positive")
    return 0.5 * (-np.expm1(-2.0 * gamma * dtau))


# --------------------------------------------------------------------------
# sub-steps; arrays carry trajectories along the first axis


def ou_substep(p: np.ndarray, h: float, params: ModelParams, xi: np.ndarray) -> None:
    """Exact OU update over time ``h`` at ``p_0`` and ``p_n`` (in place). ``xi`` has shape ``(..., 2)``."""
    a = np.exp(-params.gamma_tilde * h)
    s = -np.expm1(-2.0 * params.gamma_tilde * h)
    p[..., 0] = a * p[..., 0] + np.sqrt(params.t_minus * s) * xi[..., 0]
    p[..., -1] = a * p[..., -1] + np.sqrt(params.t_plus * s) * xi[..., 1]


def flip_substep(p: np.ndarray, prob: float, u: np.ndarray) -> None:
    """Negate ``p_x`` wherever ``u < prob`` (in place)."""
    np.negative(p, out=p, where=u < prob)


def _force(r: np.ndarray, tau: float) -> np.ndarray:
    F = np.empty(r.shape[:-1] + (r.shape[-1] + 1,))
    F[..., 0] = r[..., 0]
    F[..., 1:-1] = r[..., 1:] - r[..., :-1]
    F[..., -1] = tau - r[..., -1]
    return F


def verlet_substep(r: np.ndarray, p: np.ndarray, h: float, tau: float) -> None:
    """Velocity Verlet for the Hamiltonian part, with ``r`` as position (in place)."""
    p += 0.5 * h * _force(r, tau)
    r += h * (p[..., 1:] - p[..., :-1])
    p += 0.5 * h * _force(r, tau)


def _full_step(r, p, h, params, u, xi):
    """One split step; ``u`` has shape ``(..., 2, n+1)``, ``xi`` shape ``(..., 2, 2)``."""
    prob = flip_probability(params.gamma, 0.5 * h)
    ou_substep(p, 0.5 * h, params, xi[..., 0, :])
    flip_substep(p, prob, u[..., 0, :])
    verlet_substep(r, p, h, params.tau_plus)
    flip_substep(p, prob, u[..., 1, :])
    ou_substep(p, 0.5 * h, params, xi[..., 1, :])


def step(state: ChainState, cfg: IntegratorConfig, params: ModelParams, rng: np.random.Generator) -> ChainState:
    """Advance one configuration by one step of length ``cfg.dtau``."""
    n = params.n
    r, p = state.r.copy(), state.p.copy()
    u = rng.random((2, n + 1))
    xi = rng.standard_normal((2, 2))
    _full_step(r, p, cfg.dtau, params, u, xi)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(p))):
        raise FloatingPointError(f"non-finite state after step at t={state.t_macro}; dtau={cfg.dtau}")
    return ChainState(r, p, state.t_macro + cfg.dtau / n**2)


# --------------------------------------------------------------------------
# batched trajectories


def _boundary_values(r, p, params):
    n = params.n
    return np.stack(
        [
            p[:, 0],
            p[:, n],
            r[:, 0],
            r[:, n - 1] - params.tau_plus,
            p[:, 0] ** 2 - params.t_minus,
            p[:, n] ** 2 - params.t_plus,
            -p[:, 0] * r[:, 0],
            -p[:, n - 1] * r[:, n - 1],
            p[:, 0] * p[:, 1],
            p[:, n - 1] * p[:, n],
        ],
        axis=1,
    )


def _simulate_batch(z0: np.ndarray, rngs: list, cfg: IntegratorConfig, params: ModelParams):
    """Run the rows of ``z0`` forward. Returns (times, records, integrals).

    ``records`` has shape ``(B, R, 2n+1)`` and ``integrals`` shape ``(B, 10)``.
    """
    n = params.n
    B = z0.shape[0]
    steps, h = cfg.n_steps(n)
    r = z0[:, :n].copy()
    p = z0[:, n:].copy()
    ds = h / n**2
    rec_idx = sorted(set(range(0, steps + 1, cfg.record_stride)) | {steps})
    records = np.empty((B, len(rec_idx), 2 * n + 1))
    times = np.array([k * ds for k in rec_idx])
    # Kahan-compensated trapezoid accumulators
    acc = np.zeros((B, len(BOUNDARY_KEYS)))
    comp = np.zeros_like(acc)

    def add(term):
        nonlocal acc, comp
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t

    ri = 0
    if rec_idx[0] == 0:
        records[:, 0, :n], records[:, 0, n:] = r, p
        ri = 1
    prev = _boundary_values(r, p, params)
    u_blk = xi_blk = None
    for k in range(1, steps + 1):
        j = (k - 1) % _BLOCK
        if j == 0:
            u_blk = np.stack([g.random((_BLOCK, 2, n + 1)) for g in rngs])
            xi_blk = np.stack([g.standard_normal((_BLOCK, 2, 2)) for g in rngs])
        _full_step(r, p, h, params, u_blk[:, j], xi_blk[:, j])
        cur = _boundary_values(r, p, params)
        add(0.5 * ds * (prev + cur))
        prev = cur
        if ri < len(rec_idx) and rec_idx[ri] == k:
            if not (np.all(np.isfinite(r)) and np.all(np.isfinite(p))):
                raise FloatingPointError(f"non-finite state at step {k}; reduce dtau (now {h:.3g})")
            records[:, ri, :n], records[:, ri, n:] = r, p
            ri += 1
    return times, records, acc


@dataclass
class TrajectoryRecord:
    """Recorded phase vectors ``states[time, coord]`` and boundary time integrals."""

    times: np.ndarray
    states: np.ndarray
    integrals: dict

    def chain_state(self, i: int) -> ChainState:
        return ChainState.from_vector(self.states[i], self.times[i])


def run_trajectory(initial: ChainState, cfg: IntegratorConfig, params: ModelParams, rng: np.random.Generator) -> TrajectoryRecord:
    """Simulate one path; deterministic given the state of ``rng``."""
    times, rec, acc = _simulate_batch(initial.as_vector()[None, :], [rng], cfg, params)
    return TrajectoryRecord(times + initial.t_macro, rec[0], dict(zip(BOUNDARY_KEYS, acc[0])))


def pairwise_sum(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Pairwise (tree) summation along ``axis``; the tree depends only on the length."""
    a = np.moveaxis(np.asarray(a), axis, 0)
    m = a.shape[0]
    if m == 0:
        return np.zeros(a.shape[1:])
    if m <= 8:
        out = a[0].copy()
        for i in range(1, m):
            out = out + a[i]
        return out
    half = m // 2
    return pairwise_sum(a[:half]) + pairwise_sum(a[half:])


def _mean_se(x: np.ndarray):
    """Mean and standard error along the first axis (pairwise sums)."""
    k = x.shape[0]
    mean = pairwise_sum(x) / k
    if k < 2:
        return mean, np.full_like(mean, np.nan)
    var = pairwise_sum((x - mean) ** 2) / (k - 1)
    return mean, np.sqrt(var / k)


@dataclass
class EnsembleStats:
    """Ensemble averages over recorded times.

    ``mean_r`` holds ``r_1..r_n`` and ``mean_p`` holds ``p_0..p_n``, each with
    a leading time axis.  ``var_*`` are sample variances of the fluctuations and
    ``se_var_*`` their standard errors.  ``cov`` (optional) is the full sample
    covariance of the phase vector.  ``boundary_integrals`` maps each key of
    :data:`BOUNDARY_KEYS` to ``(mean, stderr)`` of the macroscopic-time integral.
    """

    times: np.ndarray
    mean_r: np.ndarray
    mean_p: np.ndarray
    se_r: np.ndarray
    se_p: np.ndarray
    var_r: np.ndarray
    var_p: np.ndarray
    se_var_r: np.ndarray
    se_var_p: np.ndarray
    energy_profile: np.ndarray
    se_E: np.ndarray
    boundary_integrals: dict
    n_traj: int
    cov: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.mean_r.shape[1]

    def profile_r(self, ti: int, u) -> np.ndarray:
        """Piecewise-constant embedding: ``r_x`` on ``[x/(n+1), (x+1)/(n+1))`` with ``r_0 = 0``."""
        n = self.n
        r_full = np.concatenate(([0.0], self.mean_r[ti]))
        x = np.clip(np.floor(np.asarray(u, dtype=float) * (n + 1)).astype(int), 0, n)
        return r_full[x]


def _simulate_chunk(args):
    z0, rngs, cfg, params = args
    return _simulate_batch(z0, rngs, cfg, params)


def run_ensemble(
    spec: GibbsSpec,
    cfg: IntegratorConfig,
    params: ModelParams,
    n_traj: int,
    master_seed: int,
    workers: int = 1,
    compute_cov: bool = False,
    chunk_size: int = 250,
) -> EnsembleStats:
    """Simulate ``n_traj`` independent paths started from ``spec``.

    Trajectory ``i`` uses the stream ``SeedSequence(master_seed, spawn_key=(i,))``
    for its initial draw and all of its noise, so the output is identical for
    any ``workers`` or ``chunk_size``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    n = params.n
    rngs = [np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(i,))))
            for i in range(n_traj)]
    z0 = np.stack([sample_initial(spec, params, g).as_vector() for g in rngs])
    chunks = [(z0[a:a + chunk_size], rngs[a:a + chunk_size], cfg, params) for a in range(0, n_traj, chunk_size)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_simulate_chunk, chunks))
    else:
        results = [_simulate_chunk(c) for c in chunks]
    times = results[0][0]
    rec = np.concatenate([res[1] for res in results], axis=0)
    acc = np.concatenate([res[2] for res in results], axis=0)
    return _reduce(times, rec, acc, n, compute_cov, {"master_seed": master_seed, "workers": workers})


def _reduce(times, rec, acc, n, compute_cov, meta):
    k = rec.shape[0]
    mean, se = _mean_se(rec)
    fl = rec - mean
    sq = fl**2
    var, se_var = _mean_se(sq)
    var = var * k / max(k - 1, 1)
    se_var = se_var * k / max(k - 1, 1)
    zero = np.zeros((rec.shape[0], rec.shape[1], 1))
    energies = 0.5 * rec[:, :, n:] ** 2 + 0.5 * np.concatenate((zero, rec[:, :, :n]), axis=2) ** 2
    mean_E, se_E = _mean_se(energies)
    cov = None
    if compute_cov:
        cov = pairwise_sum(np.einsum("bti,btj->btij", fl, fl)) / max(k - 1, 1)
    bmean, bse = _mean_se(acc)
    bint = {key: (float(bmean[i]), float(bse[i])) for i, key in enumerate(BOUNDARY_KEYS)}
    return EnsembleStats(
        times=times, mean_r=mean[:, :n], mean_p=mean[:, n:], se_r=se[:, :n], se_p=se[:, n:],
        var_r=var[:, :n], var_p=var[:, n:], se_var_r=se_var[:, :n], se_var_p=se_var[:, n:],
        energy_profile=mean_E, se_E=se_E, boundary_integrals=bint, n_traj=k, cov=cov, meta=meta,
    )


def write_ensemble_csv(stats: EnsembleStats, path) -> None:
    """Columns t, x, mean_r, mean_p, mean_E, se_r, se_p, se_E (``r_0`` reported as 0)."""
    n = stats.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "mean_r", "mean_p", "mean_E", "se_r", "se_p", "se_E"])
        for ti, t in enumerate(stats.times):
            r = np.concatenate(([0.0], stats.mean_r[ti]))
            sr = np.concatenate(([0.0], stats.se_r[ti]))
            for x in range(n + 1):
                w.writerow([repr(float(t)), x, repr(float(r[x])), repr(float(stats.mean_p[ti, x])),
                            repr(float(stats.energy_profile[ti, x])), repr(float(sr[x])),
                            repr(float(stats.se_p[ti, x])), repr(float(stats.se_E[ti, x]))])


def write_boundary_json(stats: EnsembleStats, path) -> None:
    payload = {k: {"mean": m, "stderr": s} for k, (m, s) in stats.boundary_integrals.items()}
    payload["n_traj"] = stats.n_traj
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
