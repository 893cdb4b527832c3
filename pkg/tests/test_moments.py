import numpy as np
import pytest
import scipy.linalg
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from flipchain import model, moments
from flipchain.model import GibbsSpec, ModelParams, QuadraticObservable
from flipchain.moments import MomentState

from oracles import random_cov, sym_generator, sym_vars

P = ModelParams(6, gamma=1.2, gamma_tilde=0.8, t_minus=1.0, t_plus=2.0, tau_plus=0.7)


def _sym_stationary_mean(n, g, gt, tau):
    """Solve E[L z_i] = 0 exactly; L of a linear function is linear, so means close."""
    r, p = sym_vars(n)
    zs = list(r[1:]) + list(p)
    mu = sp.symbols(f"mu0:{len(zs)}")
    sub = dict(zip(zs, mu))
    eqs = [sym_generator(z, n, r, p, g, gt, 1, 1, tau).subs(sub) for z in zs]
    sol = sp.solve(eqs, mu, dict=True)[0]
    return [sol[m] for m in mu]


def test_stationary_mean_matches_exact_solution():
    n = 4
    exact = _sym_stationary_mean(n, sp.Integer(1), sp.Integer(1), sp.Integer(1))
    params = ModelParams(n, gamma=1.0, gamma_tilde=1.0, tau_plus=1.0)
    num = moments.stationary_mean(params)
    assert np.allclose(num, [float(v) for v in exact], atol=1e-13)
    # frozen from the exact solution above
    assert np.allclose(12 * num, [3, 5, 7, 9, 1, 1, 1, 1, 1], atol=1e-12)


def test_second_moment_rhs_matches_generator():
    """dM_ij/dtau equals E[n^-2 L(z_i z_j)] for arbitrary (m, M)."""
    n = P.n
    rng = np.random.default_rng(0)
    m = rng.standard_normal(P.dim)
    M = random_cov(P.dim, rng) + np.outer(m, m)
    drift = moments.build_drift(P)
    dm, dM = moments._rhs(drift, moments._flip_weights(n, P.gamma), m, M)
    for i in range(P.dim):
        e = np.zeros(P.dim)
        e[i] = 1.0
        lin = model.generator(QuadraticObservable(n, 0.0, e), P)
        assert lin.expectation(m, M) / n**2 == pytest.approx(dm[i], abs=1e-12)
        for j in range(i, P.dim):
            Q = np.zeros((P.dim, P.dim))
            Q[i, j] += 0.5
            Q[j, i] += 0.5
            L = model.generator(QuadraticObservable(n, 0.0, None, Q), P)
            assert L.expectation(m, M) / n**2 == pytest.approx(dM[i, j], abs=1e-11)


def test_means_agree_with_matrix_exponential():
    rng = np.random.default_rng(1)
    m0 = rng.standard_normal(P.dim)
    t = 0.05
    times, ms = moments.evolve_means(m0, P, t, dtau=0.02, record_every=10**9)
    K = moments.build_drift(P).mean_matrix
    b = moments.build_drift(P).b
    # independent: augmented expm of [[K, b], [0, 0]]
    aug = np.zeros((P.dim + 1, P.dim + 1))
    aug[:-1, :-1], aug[:-1, -1] = K, b
    ref = (scipy.linalg.expm(aug * t * P.n**2) @ np.append(m0, 1.0))[:-1]
    assert np.allclose(ms[-1], ref, atol=1e-10)
    assert np.allclose(moments.means_exact(m0, P, t), ref, atol=1e-10)
    assert times[-1] == pytest.approx(t)


def test_covariance_rk4_fourth_order():
    ms0 = MomentState.from_gibbs(GibbsSpec.linear(1.0, 2.0, mean_p=lambda u: np.cos(3 * u)), P)
    t = 2.0 / P.n**2
    errs = []
    ref = moments.evolve(ms0, P, t, dtau=0.0125).M
    for h in (0.4, 0.2, 0.1):
        errs.append(np.abs(moments.evolve(ms0, P, t, dtau=h).M - ref).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.5)


def test_equilibrium_is_stationary():
    params = ModelParams(8, gamma=0.9, gamma_tilde=1.4, t_minus=1.5, t_plus=1.5, tau_plus=0.0)
    ms = MomentState.from_gibbs(GibbsSpec.equilibrium(1.5), params)
    out = moments.evolve(ms, params, 0.01)
    assert np.allclose(out.M, ms.M, atol=1e-12)
    assert np.allclose(out.m, 0.0, atol=1e-14)


def test_linear_profile_with_tension_relaxes_to_stationary_mean():
    params = P.replace(n=4)
    m0 = np.zeros(params.dim)
    _, ms = moments.evolve_means(m0, params, 20.0, dtau=0.2, record_every=10**9)
    assert np.allclose(ms[-1], moments.stationary_mean(params), atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_covariance_stays_psd(n, seed):
    rng = np.random.default_rng(seed)
    params = ModelParams(n, gamma=rng.uniform(0.2, 3), gamma_tilde=rng.uniform(0.2, 3), t_minus=rng.uniform(0.5, 2),
                         t_plus=rng.uniform(0.5, 2), tau_plus=rng.uniform(-1, 1))
    C = random_cov(params.dim, rng)
    ms = MomentState.from_mean_cov(rng.standard_normal(params.dim), C)
    path, _ = moments.evolve_path(ms, params, 1.0 / n**2, dtau=0.05, record_every=5)
    for s in path.states:
        s.check(atol=1e-9)
        assert np.array_equal(s.M, s.M.T)


def test_flip_term_requires_symmetry():
    A = np.arange(9.0).reshape(3, 3)
    with pytest.raises(ValueError):
        moments.flip_term(A, 1.0)
    S = A + A.T
    W = moments.flip_term(S, 2.0)
    # n = 1 layout: r_1, p_0, p_1
    assert W[1, 1] == 0 and W[1, 2] == pytest.approx(-8.0 * S[1, 2]) and W[0, 1] == pytest.approx(-4.0 * S[0, 1])
    assert W[0, 0] == 0


def test_moment_state_validation():
    with pytest.raises(ValueError):
        MomentState(np.zeros(5), np.zeros((4, 4)))
    bad = MomentState(np.zeros(3), -np.eye(3))
    with pytest.raises(ValueError):
        bad.check()
    det = MomentState.deterministic(np.ones(5))
    assert np.allclose(moments.fluctuation_cov(det), 0)
    with pytest.raises(ValueError):
        moments.fluctuation_cov(MomentState(np.ones(5), None))


def test_evolve_path_records_both_ends_and_observer():
    ms = MomentState.from_gibbs(GibbsSpec.linear(1, 2), P)
    path, obs = moments.evolve_path(ms, P, 0.01, dtau=0.1, record_every=7, observer=lambda s: s.t_macro)
    assert path.times[0] == 0 and path.times[-1] == pytest.approx(0.01)
    assert obs == list(path.times)
    with pytest.raises(ValueError):
        moments.evolve_path(ms, P, -1.0)


def test_energy_profile_of_gibbs():
    spec = GibbsSpec.linear(1.0, 3.0, tension=0.0)
    ms = MomentState.from_gibbs(spec, P)
    _, var = spec.site_moments(P.n)
    e = moments.energy_profile(ms)
    assert e[0] == pytest.approx(0.5 * var[P.n])
    assert np.allclose(e[1:], 0.5 * (var[:P.n] + var[P.n + 1:]))


def test_checkpoint_roundtrip(tmp_path):
    ms = moments.evolve(MomentState.from_gibbs(GibbsSpec.linear(1, 2), P), P, 0.003)
    f = tmp_path / "ck.bin"
    moments.write_checkpoint(ms, f)
    back = moments.read_checkpoint(f)
    assert np.array_equal(back.M, ms.M) and np.array_equal(back.m, ms.m) and back.t_macro == ms.t_macro
    (tmp_path / "bad.bin").write_bytes(b"garbage!" + bytes(40))
    with pytest.raises(ValueError):
        moments.read_checkpoint(tmp_path / "bad.bin")


def test_moments_csv(tmp_path):
    ms = MomentState.from_gibbs(GibbsSpec.linear(1, 2), P)
    moments.write_moments_csv([ms, MomentState(ms.m, None, 0.1)], tmp_path / "m.csv")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0] == "t,x,mean_r,mean_p,var_r,var_p,energy"
    assert len(rows) == 1 + 2 * (P.n + 1)
