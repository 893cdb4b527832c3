import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flipchain import microsim, moments
from flipchain.microsim import IntegratorConfig
from flipchain.model import ChainState, GibbsSpec, ModelParams
from flipchain.moments import MomentState

P = ModelParams(6, gamma=1.0, gamma_tilde=1.0, t_minus=1.0, t_plus=2.0, tau_plus=0.5)
SPEC = GibbsSpec.linear(1.0, 2.0, tension=0.5, mean_p=lambda u: np.sin(np.pi * u))


def test_flip_probability_value():
    # (1 - exp(-2 * 1 * 0.05)) / 2
    assert microsim.flip_probability(1.0, 0.05) == pytest.approx(0.0475813, abs=5e-8)
    with pytest.raises(ValueError):
        microsim.flip_probability(0.0, 0.1)


@given(st.floats(1e-3, 50), st.floats(1e-4, 10), st.floats(1e-4, 10))
def test_flip_probability_properties(gamma, a, b):
    pa, pb = microsim.flip_probability(gamma, a), microsim.flip_probability(gamma, b)
    assert 0 < pa <= 0.5
    if a < b:
        assert pa <= pb
    # two independent windows compose: odd count over a+b
    pab = microsim.flip_probability(gamma, a + b)
    assert pab == pytest.approx(pa * (1 - pb) + pb * (1 - pa), rel=1e-9)


def test_integrator_config():
    with pytest.raises(ValueError):
        IntegratorConfig(dtau=0.3)
    cfg = IntegratorConfig(0.05, 0.01, 4)
    steps, h = cfg.n_steps(10)
    assert steps * h == pytest.approx(1.0) and h <= 0.05


def test_ou_substep_exact_moments():
    p = np.array([[2.0, 0.0, 0.0, -1.0]])
    microsim.ou_substep(p, 0.3, P, np.zeros((1, 2)))
    a = math.exp(-0.3)
    assert p[0, 0] == pytest.approx(2 * a) and p[0, -1] == pytest.approx(-a) and p[0, 1] == 0
    # stationary law preserved in distribution
    rng = np.random.default_rng(0)
    q = np.zeros((200_000, 4))
    q[:, 0] = rng.standard_normal(200_000) * math.sqrt(P.t_minus)
    q[:, -1] = rng.standard_normal(200_000) * math.sqrt(P.t_plus)
    microsim.ou_substep(q, 0.7, P, rng.standard_normal((200_000, 2)))
    assert q[:, 0].var() == pytest.approx(P.t_minus, rel=0.02)
    assert q[:, -1].var() == pytest.approx(P.t_plus, rel=0.02)


def test_verlet_reversible_and_energy_bounded():
    rng = np.random.default_rng(1)
    r = rng.standard_normal(8)
    p = rng.standard_normal(9)
    r0, p0 = r.copy(), p.copy()
    E0 = 0.5 * (np.sum(r**2) + np.sum(p**2))
    drift = []
    for _ in range(2000):
        microsim.verlet_substep(r, p, 0.05, 0.0)
        drift.append(0.5 * (np.sum(r**2) + np.sum(p**2)) - E0)
    assert np.max(np.abs(drift)) < 0.01 * E0
    for _ in range(2000):
        microsim.verlet_substep(r, p, -0.05, 0.0)
    assert np.allclose(r, r0, atol=1e-9) and np.allclose(p, p0, atol=1e-9)


def test_flip_substep():
    p = np.array([1.0, -2.0, 3.0])
    microsim.flip_substep(p, 0.5, np.array([0.1, 0.9, 0.4]))
    assert np.array_equal(p, [-1.0, -2.0, -3.0])


def test_step_and_trajectory():
    rng = np.random.default_rng(2)
    s = ChainState(np.ones(6), np.zeros(7))
    out = microsim.step(s, IntegratorConfig(0.05, 0.0), P, rng)
    assert isinstance(out, ChainState) and out.r.shape == (6,)
    rec = microsim.run_trajectory(s, IntegratorConfig(0.05, 0.01, 3), P, np.random.default_rng(3))
    assert rec.times[0] == 0 and rec.times[-1] == pytest.approx(0.01)


def _ens(**kw):
    args = dict(spec=SPEC, cfg=IntegratorConfig(0.05, 0.02, 8), params=P, n_traj=60, master_seed=11)
    args.update(kw)
    return microsim.run_ensemble(**args)


def test_ensemble_deterministic_and_worker_independent():
    a = _ens()
    b = _ens()
    c = _ens(workers=2, chunk_size=7)
    d = _ens(master_seed=12)
    for name in ("mean_r", "mean_p", "var_p", "energy_profile"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
        assert np.array_equal(getattr(a, name), getattr(c, name))
    assert not np.array_equal(a.mean_p, d.mean_p)
    assert a.boundary_integrals == c.boundary_integrals


def test_ensemble_prefix_consistency():
    """Trajectory i uses the same stream regardless of the ensemble size."""
    a = _ens(n_traj=1)
    b = _ens(n_traj=1, chunk_size=1)
    assert np.array_equal(a.mean_p, b.mean_p)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=300))
def test_pairwise_sum_accuracy(xs):
    x = np.array(xs)
    assert microsim.pairwise_sum(x) == pytest.approx(math.fsum(xs), abs=1e-6 * (1 + np.abs(x).sum()))


@pytest.mark.parametrize("dtau", [0.05, 0.025])
def test_ensemble_unbiased_against_oracle(dtau):
    """Mean z-score near 0 for both step sizes: no systematic shift beyond stderr."""
    params = ModelParams(8, gamma=1.0, gamma_tilde=1.0, t_minus=1.0, t_plus=2.0, tau_plus=0.5)
    stride = int(round(0.8 / dtau))
    cfg = IntegratorConfig(dtau, 0.05, stride)
    st_ = microsim.run_ensemble(SPEC, cfg, params, 1500, 5)
    path, _ = moments.evolve_path(MomentState.from_gibbs(SPEC, params), params, 0.05, dtau, stride)
    z = []
    for i, s in enumerate(path.states[1:], 1):
        d = np.diag(moments.fluctuation_cov(s))
        z += list((st_.mean_p[i] - s.m[8:]) / st_.se_p[i]) + list((st_.var_r[i] - d[:8]) / st_.se_var_r[i])
    z = np.array(z)
    assert abs(z.mean()) < 0.6
    assert np.mean(np.abs(z) <= 2) > 0.85


def test_outputs(tmp_path):
    a = _ens(n_traj=10)
    microsim.write_ensemble_csv(a, tmp_path / "e.csv")
    microsim.write_boundary_json(a, tmp_path / "b.json")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("t,x,mean_r") and len(lines) == 1 + len(a.times) * (P.n + 1)
    data = json.loads((tmp_path / "b.json").read_text())
    assert set(microsim.BOUNDARY_KEYS) <= set(data) and data["n_traj"] == 10
    u = np.linspace(0, 0.999, 7)
    assert a.profile_r(0, u)[0] == 0.0
