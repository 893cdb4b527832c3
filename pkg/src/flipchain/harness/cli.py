"""Command-line entry point: ``flipchain <command> [--key value ...]``."""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np

from .. import microsim, moments, pde, wigner
from .config import EXPERIMENTS, ExperimentConfig, parse_config_text
from .experiments import Report, initial_gibbs, initial_moments, profiles, run_experiment, write_report

_HELP = {
    "n": "chain length (sites 0..n)",
    "gamma": "momentum flip rate",
    "gamma_tilde": "thermostat strength",
    "t_minus": "left reservoir temperature",
    "t_plus": "right reservoir temperature",
    "tau_plus": "tension at the right end",
    "initial": "initial law: local-gibbs, equilibrium, shock, deterministic, stationary-stretch, white-noise",
    "r_amp": "amplitude of the sin(pi u) stretch bump",
    "p_amp": "amplitude of the cos(pi u) momentum profile",
    "temp_bump": "amplitude of the sin(pi u) temperature bump",
    "t_end": "horizon in macroscopic time",
    "dtau": "step in microscopic time (RK4 and Monte Carlo)",
    "record_stride": "steps between recorded states",
    "n_traj": "Monte Carlo trajectories",
    "master_seed": "master seed for all randomness",
    "workers": "worker processes for Monte Carlo",
    "m": "PDE grid cells",
    "dt_pde": "PDE time step",
    "energy_flux_term": "keep the r^2/2 flux in the energy equation",
    "n_list": "comma separated chain lengths for scaling studies",
    "test_function": "test function preset",
    "eta_min": "smallest |eta| of the spectral grid",
    "eta_max": "largest |eta| of the spectral grid",
    "eta_num": "points per sign on the spectral grid",
    "nodes": "quadrature nodes for Laplace inversion",
    "out_dir": "output directory",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' file; flags override it")
    for f in fields(ExperimentConfig):
        if f.name == "experiment":
            continue
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        common.add_argument(*names, dest=f.name, default=None, metavar="V",
                            help=f"{_HELP.get(f.name, f.name)} (default {f.default})")
    parser = argparse.ArgumentParser(prog="flipchain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="Monte Carlo ensemble")
    sub.add_parser("moments", parents=[common], help="exact mean and covariance evolution")
    sub.add_parser("pde", parents=[common], help="macroscopic stretch and energy equations")
    sub.add_parser("wigner", parents=[common], help="Fourier-Wigner fields of the covariance")
    sub.add_parser("spectral", parents=[common], help="spectral bound certification")
    v = sub.add_parser("verify", parents=[common], help="run a named experiment with pass/fail flags")
    v.add_argument("experiment", choices=EXPERIMENTS)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = parse_config_text(Path(args.config).read_text()) if args.config else {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "experiment":
            values[f.name] = v
    if args.command == "verify":
        values["experiment"] = args.experiment
    elif args.command == "spectral":
        values["experiment"] = "spectral-certify"
    return ExperimentConfig(**values)


def _base_report(command: str, cfg: ExperimentConfig, claim: str) -> Report:
    return Report(command, claim, cfg.as_dict(), config_hash=cfg.hash(), seed=cfg.master_seed)


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> Report:
    params = cfg.params()
    stats = microsim.run_ensemble(initial_gibbs(cfg, params), cfg.integrator(), params, cfg.n_traj,
                                  cfg.master_seed, workers=cfg.workers)
    microsim.write_ensemble_csv(stats, out / "ensemble.csv")
    microsim.write_boundary_json(stats, out / "boundary.json")
    rep = _base_report("simulate", cfg, "Monte Carlo ensemble statistics")
    rep.add("n_traj", stats.n_traj)
    rep.add("final_mean_energy", float(stats.energy_profile[-1].mean()))
    for k, (m, s) in stats.boundary_integrals.items():
        rep.add(f"int_{k}", m)
        rep.add(f"int_{k}_stderr", s)
    return rep


def cmd_moments(cfg: ExperimentConfig, out: Path) -> Report:
    params = cfg.params()
    path, _ = moments.evolve_path(initial_moments(cfg, params), params, cfg.t_end, cfg.dtau, cfg.record_stride)
    moments.write_moments_csv(path.states, out / "moments.csv")
    final = path.states[-1]
    moments.write_checkpoint(final, out / "moments_final.bin")
    rep = _base_report("moments", cfg, "exact mean and covariance evolution")
    rep.add("n_records", len(path))
    rep.add("final_total_energy", float(moments.energy_profile(final).sum()))
    rep.add("final_fluctuation_energy", wigner.energy_functional_cov(moments.fluctuation_cov(final), params.n))
    lam = float(np.linalg.eigvalsh(moments.fluctuation_cov(final)).min())
    rep.add("final_min_cov_eigenvalue", lam)
    rep.passed["covariance_psd"] = lam >= -1e-8
    return rep


def cmd_pde(cfg: ExperimentConfig, out: Path) -> Report:
    params = cfg.params()
    r0, _, T = profiles(cfg, params)
    grid = cfg.grid()
    rp = pde.solve_stretch(r0, params, cfg.t_end, grid)
    ep = pde.solve_energy(lambda u: T(u) + 0.5 * r0(u) ** 2, rp, params, grid, flux_term=cfg.energy_flux_term)
    every = max(1, len(rp) // 50)
    pde.write_field_csv(rp, out / "stretch.csv", every)
    pde.write_field_csv(ep, out / "energy.csv", every)
    G = pde.TestFunction1D.preset(cfg.test_function)
    rep = _base_report("pde", cfg, "macroscopic stretch and energy equations")
    rep.add("weak_residual_stretch", pde.weak_residual(rp, G, params))
    rep.add("weak_residual_energy", pde.weak_residual(ep, G, params, rp))
    rep.add("final_stretch_l2", float(np.sqrt(np.trapezoid(rp.values[-1] ** 2, grid.u))))
    rep.add("final_energy_mean", float(np.trapezoid(ep.values[-1], grid.u)))
    return rep


def cmd_wigner(cfg: ExperimentConfig, out: Path) -> Report:
    params = cfg.params()
    n = params.n
    G = wigner.TestFunction2D.preset(cfg.test_function)

    def obs(s):
        C = moments.fluctuation_cov(s)
        ws = wigner.wigner_from_cov(C, n, s.t_macro)
        return (s.t_macro, wigner.energy_functional(ws), wigner.dissipation_sum(ws),
                wigner.equipartition_integrand(C, n, G, s.t_macro))

    path, rows = moments.evolve_path(initial_moments(cfg, params), params, cfg.t_end, cfg.dtau, cfg.record_stride,
                                     obs)
    final = path.states[-1]
    wigner.write_wigner_csv(wigner.wigner_from_cov(moments.fluctuation_cov(final), n, final.t_macro),
                            out / "wigner.csv")
    with open(out / "wigner_series.csv", "w") as fh:
        fh.write("t,energy_functional,dissipation_sum,equipartition_integrand\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")
    rep = _base_report("wigner", cfg, "Fourier-Wigner fluctuation fields")
    arr = np.array(rows)
    rep.add("final_energy_functional", arr[-1, 1])
    rep.add("final_dissipation_sum", arr[-1, 2])
    rep.add("equipartition_functional", float(np.trapezoid(arr[:, 3], arr[:, 0])))
    return rep


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"flipchain: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    if args.command in ("verify", "spectral"):
        rep = run_experiment(cfg)
        if args.command == "spectral":
            rep.experiment = "spectral"
    else:
        runner = {"simulate": cmd_simulate, "moments": cmd_moments, "pde": cmd_pde, "wigner": cmd_wigner}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = runner[args.command](cfg, out)
        rep.notes += sorted({str(w.message) for w in caught})
    csv_path, json_path = write_report(rep, out)
    for flag, ok in rep.passed.items():
        print(f"{'PASS' if ok else 'FAIL'}  {rep.experiment}: {flag}")
    print(f"wrote {json_path}" + (f" and {csv_path}" if csv_path else ""))
    return 0 if all(rep.passed.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
