"""Acceptance criteria 1-9, each at its stated size and tolerance.

Every test prints one ``criterion k: PASS/FAIL`` line; the lines are
collected again in the terminal summary.  Criterion 3 contains a gate that
cannot hold for any initial data (see the ledger); it is implemented as
stated and marked as an expected failure.
"""

import time

import numpy as np
import pytest

from flipchain import spectral
from flipchain.harness import ExperimentConfig, run_experiment

pytestmark = pytest.mark.slow


def _run(limit_s=None, **kw):
    t0 = time.perf_counter()
    rep = run_experiment(ExperimentConfig(**kw))
    dt = time.perf_counter() - t0
    return rep, dt, (limit_s is None or dt < limit_s)


def _vals(rep, name, ns):
    return [rep.metric(name, n) for n in ns]


def test_criterion_1_generator_identities(acceptance_log):
    rep, dt, fast = _run(10, experiment="generator-identities", n=16)
    worst = max(rep.metric(k) for k in ("max_rel_residual_g", "max_rel_residual_h", "max_rel_residual_left",
                                         "max_rel_residual_right"))
    ok = rep.ok and fast
    acceptance_log(1, ok, f"max relative residual {worst:.2e} over 1000 states, n=16, {dt:.1f}s")
    assert ok, rep.passed


def test_criterion_2_mc_vs_oracle(acceptance_log):
    rep, dt, fast = _run(300, experiment="mc-vs-oracle", n=16, t_end=0.05, n_traj=2000, master_seed=20261016,
                         dtau=0.05, record_stride=16)
    ok = rep.ok and fast
    acceptance_log(2, ok, f"{rep.metric('frac_within_2'):.1%} of {rep.metric('n_z')} z-scores within 2, "
                          f"max |z| {rep.metric('max_abs_z'):.2f}, {dt:.0f}s")
    assert ok, rep.passed


@pytest.mark.xfail(strict=True, reason="n int sum pbar^2/(n+1) decays like 1/n; the factor-3 gate cannot hold")
def test_criterion_3_hydro_stretch(acceptance_log):
    ns = (32, 64, 128, 256)
    rep, dt, fast = _run(600, experiment="hydro-stretch", n_list=ns, t_end=0.1, dtau=0.05, m=2048, dt_pde=1e-4)
    rel = _vals(rep, "rel_l2_error", ns)
    stated = _vals(rep, "n_int_sum_p2_over_n1", ns)
    raw = _vals(rep, "n_int_sum_p2", ns)
    parts = {
        "errors_decrease": rep.passed["errors_decrease"],
        "rel_error_lt_5pct": rep.passed["final_rel_error_lt_5pct"],
        "stated_p2_within_x3": rep.passed["n_int_sum_p2_over_n1_within_x3"],
        "runtime": fast,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    acceptance_log(3, ok, f"rel L2 error {rel[0]:.3f} -> {rel[-1]:.4f}; n*int sum p^2/(n+1) "
                          f"{stated[0]:.2e} -> {stated[-1]:.2e} (ratio {max(stated) / min(stated):.1f}); "
                          f"without 1/(n+1): {raw[0]:.4f} -> {raw[-1]:.4f}; {dt:.0f}s"
                          + (f"; failed: {', '.join(failed)}" if failed else ""))
    # the parts that do not depend on the normalization hold
    assert parts["errors_decrease"] and parts["rel_error_lt_5pct"] and rep.passed["n_int_sum_p2_within_x3"]
    assert ok, parts


def test_criterion_4_hydro_energy(acceptance_log):
    ns = (32, 64, 128)
    rep, dt, fast = _run(900, experiment="hydro-energy", n_list=ns, t_end=0.1, test_function="bump", m=1024,
                         dt_pde=1e-4, dtau=0.05, record_stride=16)
    rel = _vals(rep, "rel_diff", ns)
    ok = rep.passed["diff_decreases"] and rep.passed["final_rel_diff_lt_5pct"] and fast
    acceptance_log(4, ok, "relative weak-pairing gap " + ", ".join(f"{r:.2%}" for r in rel)
                          + f"; without r^2/2 flux {rep.metric('ablation_rel_diff', 128):.2%}; {dt:.0f}s")
    assert ok, rep.passed
    assert rep.passed["ablation_breaks_agreement"]


def test_criterion_5_equipartition(acceptance_log):
    ns = (64, 256)
    rep, dt, fast = _run(600, experiment="equipartition", initial="shock", r_amp=0, p_amp=0, temp_bump=0,
                         n_list=ns, t_end=0.02, dtau=0.1, record_stride=4, test_function="bump")
    v64, v256 = (abs(v) for v in _vals(rep, "equipartition", ns))
    ok = v256 < 0.5 * v64 and fast
    acceptance_log(5, ok, f"|functional| n=64 {v64:.3e}, n=256 {v256:.3e} (ratio {v256 / v64:.3f}); {dt:.0f}s")
    assert ok


def test_criterion_6_boundary_scalings(acceptance_log):
    ns = (32, 64, 128, 256)
    rep, dt, fast = _run(600, experiment="boundary-scalings", n_list=ns, t_end=0.1, dtau=0.05)
    s = {k: rep.metric(k + "_slope") for k in ("int_pn", "int_diff_sq", "int_sup_sq")}
    ok = rep.ok and fast
    acceptance_log(6, ok, f"slopes |int p_n| {s['int_pn']:.2f}, int (p0-pn)^2 {s['int_diff_sq']:.2f}, "
                          f"int sup p^2 {s['int_sup_sq']:.2f}; {dt:.0f}s")
    assert ok, rep.passed


def test_criterion_7_energy_balance(acceptance_log):
    rep, dt, _ = _run(experiment="energy-balance", n=16, initial="shock")
    res = [v for v in (m["value"] for m in rep.metrics if m["name"] == "residual")]
    ok = rep.ok
    acceptance_log(7, ok, f"fitted order {rep.metric('fitted_order'):.3f}; residual at dt=1e-4 {res[-1]:.2e}")
    assert ok, rep.passed


def test_criterion_8_spectral(acceptance_log):
    ns = (16, 64, 256)
    rep, dt, fast = _run(120, experiment="spectral-certify", n_list=ns)
    ok = rep.ok and fast
    # drift on a wider grid is informational: the k = 0 term breaks n-uniformity for |eta| << 1/n
    params = ExperimentConfig().params()
    wide = spectral.appendix_certify(ns, spectral.default_eta_grid(1e-4, 1e3, 141), params)
    drift = {n: [r.constant for r in wide["rows"] if r.name == n] for n in ("e_d", "c_n")}
    wide_note = ", ".join(f"{k} x{max(v) / min(v):.1f}" for k, v in drift.items())
    acceptance_log(8, ok, f"dispersion {rep.metric('max_dispersion_residual'):.1e}, c_n closed form "
                          f"{rep.metric('max_c_closed_form_error'):.1e}, Q2 slope {rep.metric('Q2_slope'):.3f}, "
                          f"{sum(rep.passed.values())}/{len(rep.passed)} flags; drift on |eta| in [1e-4, 1e3]: "
                          f"{wide_note}; {dt:.0f}s")
    assert ok, {k: v for k, v in rep.passed.items() if not v}


def test_criterion_9_pde(acceptance_log):
    rep, dt, _ = _run(experiment="pde-convergence")
    orders = {k: rep.metric("order_" + k) for k in ("space_stretch", "space_energy", "time_stretch", "time_energy")}
    ok = rep.ok
    acceptance_log(9, ok, "orders " + ", ".join(f"{k} {v:.3f}" for k, v in orders.items())
                          + f"; sine mode error {rep.metric('sine_mode_error_m256'):.1e}")
    assert ok, rep.passed
    assert np.isfinite(list(orders.values())).all()
