"""Command-line front end: rgbdsde {basis,simulate,reflect,solve,pde,verify} --config FILE.

Exit status: 0 success, 1 a verify property failed, 2 configuration error,
3 numerical failure (a diagnostic JSON is written next to the artifacts).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .basis import check_diagonal_bracket, orthonormality_error
from .bdsde import equation_residuals, picard_solve
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, NumericalError
from .io import save_batch, write_csv, write_json
from .levy import validate_characteristics
from .norms import build_weights, weighted_norms
from .paths import simulate_batch
from .reflection import moment_report, solve_paths
from .sipde import SIPDEProblem, compare_report, fd_obstacle_solve, mc_representation
from .models import make_obstacle, make_terminal

SUBCOMMANDS = ("basis", "simulate", "reflect", "solve", "pde", "verify")
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    return {"rgbdsde": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pyyaml": yaml.__version__, "python": platform.python_version()}


def write_manifest(out: Path, sub: str, cfg: ExperimentConfig, artifacts: list) -> None:
    write_json(out / f"manifest-{sub}.json", {
        "subcommand": sub,
        "config_sha256": cfg.source_hash,
        "seed": cfg.seed,
        "versions": _versions(),
        "artifacts": {name: _sha256(out / name) for name in sorted(artifacts)},
    })


# ---------------------------------------------------------------- subcommands


def cmd_basis(cfg: ExperimentConfig, out: Path) -> list:
    chars = cfg.build_characteristics()
    basis = cfg.build_basis(chars)
    if basis is None:
        raise ConfigurationError("the characteristics carry no jumps and no diffusion: the basis is empty")
    d = basis.d
    write_csv(out / "basis_alpha.csv", ["n"] + [f"alpha_{j}" for j in range(d)],
              [[n + 1] + list(basis.alpha[n]) for n in range(d)])
    ok, worst = check_diagonal_bracket(basis, chars, cfg.build_grid().nodes)
    write_json(out / "basis.json", {
        "d": d, "t_ref": basis.t_ref, "support": basis.support, "weights": basis.weights,
        "orthonormality_error": orthonormality_error(basis), "diagonal_bracket": ok, "max_offdiagonal": worst,
        "validation": validate_characteristics(chars).to_dict(),
    })
    return ["basis_alpha.csv", "basis.json"]


def _batch(cfg: ExperimentConfig):
    chars = cfg.build_characteristics()
    basis = cfg.build_basis(chars)
    grid = cfg.build_grid()
    batch = simulate_batch(chars, basis, grid, cfg.n_paths(), cfg.seed, backward=cfg.backward_mode())
    return chars, basis, grid, batch


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> list:
    chars, basis, grid, batch = _batch(cfg)
    save_batch(batch, out / "batch.lbds")
    Hc = np.cumsum(batch.dH, axis=1) if batch.d else np.zeros((batch.n_paths, grid.n_steps, 0))
    rows = []
    for i, t in enumerate(grid.nodes):
        h = Hc[:, i - 1].mean(axis=0) if i > 0 and batch.d else np.zeros(batch.d)
        rows.append([i, t, batch.L[:, i].mean(), batch.L[:, i].var()] + list(h))
    write_csv(out / "simulate.csv", ["node", "t", "mean_L", "var_L"] + [f"mean_H{k + 1}" for k in range(batch.d)], rows)
    write_json(out / "simulate.json", {"n_paths": batch.n_paths, "n_steps": grid.n_steps, "d": batch.d,
                                       "n_events": int(batch.ev_path.size), "backward": batch.backward_mode})
    return ["batch.lbds", "simulate.csv", "simulate.json"]


def _reflected(cfg: ExperimentConfig, chars, basis, grid, batch):
    domain = cfg.build_domain()
    return solve_paths(domain, chars, basis, grid, cfg.build_sigma(), cfg.start(), batch)


def cmd_reflect(cfg: ExperimentConfig, out: Path) -> list:
    if not cfg.domain:
        raise ConfigurationError("reflect needs a domain block")
    chars, basis, grid, batch = _batch(cfg)
    paths = _reflected(cfg, chars, basis, grid, batch)
    X = paths.state()
    X1 = X if X.ndim == 2 else X[..., 0]
    write_csv(out / "reflect.csv", ["node", "t", "mean_X1", "mean_kappa"],
              [[i, t, X1[:, i].mean(), paths.kappa[:, i].mean()] for i, t in enumerate(grid.nodes)])
    write_json(out / "reflect.json", {"min_psi": paths.min_psi(), "complementarity_defect": paths.complementarity_defect(),
                                      "boundary_tol": paths.boundary_tol, "moments": moment_report(paths, 4.0, 1.0)})
    return ["reflect.csv", "reflect.json"]


def cmd_solve(cfg: ExperimentConfig, out: Path) -> list:
    chars, basis, grid, batch = _batch(cfg)
    kappa = None
    if cfg.problem.get("kappa") == "reflected":
        kappa = _reflected(cfg, chars, basis, grid, batch)
    problem = cfg.build_problem(kappa=kappa)
    scfg = cfg.solver_config()
    sol, residuals = picard_solve(problem, batch, basis, scfg)
    d = sol.Z.shape[2]
    rows = []
    for i, t in enumerate(grid.nodes):
        z = list(sol.Z[:, i].mean(axis=0)) if i < grid.n_steps else [0.0] * d
        rows.append([i, t, sol.Y[:, i].mean(), sol.Y[:, i].std(), sol.K[:, i].mean()] + z)
    write_csv(out / "solution.csv", ["node", "t", "mean_Y", "sd_Y", "mean_K"] + [f"mean_Z{k + 1}" for k in range(d)], rows)
    a2 = max(problem.drivers.a_squared(), scfg.eps)
    w = build_weights(grid.nodes, sol.kappa, a2, scfg.theta, scfg.mu)
    res = equation_residuals(problem, sol, batch)
    diag = {k: v for k, v in sol.diagnostics.items()}
    write_json(out / "solve.json", {"Y0": sol.Y0, "Y0_se": sol.Y0_se, "picard_residuals": residuals,
                                    "weighted_norms": weighted_norms(sol, w), "diagnostics": diag,
                                    "equation_residual_max_z": res["max_abs_z"]})
    return ["solution.csv", "solve.json"]


def cmd_pde(cfg: ExperimentConfig, out: Path) -> list:
    p = cfg.pde
    if not p:
        raise ConfigurationError("pde needs a pde block")
    chars = cfg.build_characteristics(p.get("characteristics", cfg.characteristics))
    dom_block = p.get("domain", cfg.domain)
    prob_block = p.get("problem", cfg.problem)
    drivers = cfg.build_drivers(prob_block)
    terminal = make_terminal(prob_block.get("terminal"))
    if not callable(terminal):
        c = float(terminal)
        terminal = lambda x, c=c: np.full(np.shape(np.asarray(x, dtype=float)), c)  # noqa: E731
    problem = SIPDEProblem(domain=cfg.build_domain(dom_block), chars=chars, sigma=cfg.build_sigma(dom_block),
                           drivers=drivers, terminal=terminal,
                           obstacle=make_obstacle(prob_block.get("obstacle"), chars.T))
    basis = cfg.build_basis(chars)
    mc = mc_representation(problem, basis, p.get("t_points", [0.0]), p.get("x_points", [0.5]),
                           int(p.get("paths", 20000)), int(p.get("steps", 100)), cfg.seed,
                           workers=int(p.get("workers", 1)), config=cfg.solver_config())
    write_csv(out / "u_field.csv", ["t", "x", "u", "se"], list(mc.rows()))
    artifacts = ["u_field.csv"]
    report = {"meta": mc.meta, "failures": mc.failures, "continuity_modulus": mc.continuity_modulus()}
    if drivers.g is None and problem.domain.preset == "interval":
        fdc = p.get("fd", {})
        fd = fd_obstacle_solve(problem, basis, int(fdc.get("n_x", 400)), int(fdc.get("n_t", 400)))
        report["comparison"] = compare_report(mc, fd, float(p.get("scheme_tol", 0.03)))
    write_json(out / "pde.json", report)
    artifacts.append("pde.json")
    return artifacts


def cmd_verify(cfg: ExperimentConfig, out: Path, only=None) -> tuple:
    from .verify import run_all

    results = run_all(only)
    for r in results:
        print(r.line())
    write_json(out / "verify.json", {str(r.number): {"name": r.name, "passed": r.passed, "details": r.details}
                                     for r in results})
    return ["verify.json"], all(r.passed for r in results)


_COMMANDS = {"basis": cmd_basis, "simulate": cmd_simulate, "reflect": cmd_reflect, "solve": cmd_solve, "pde": cmd_pde}


def run(sub: str, config_path, out=None, only=None) -> int:
    """Run one subcommand; returns the exit status."""
    if sub not in SUBCOMMANDS:
        print(f"unknown subcommand {sub!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(config_path)
    except ConfigurationError as exc:
        print(json.dumps({"status": "configuration_error", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    outdir = cfg.output_dir(str(out) if out is not None else None)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        if sub == "verify":
            artifacts, passed = cmd_verify(cfg, outdir, only)
        else:
            artifacts, passed = _COMMANDS[sub](cfg, outdir), True
    except ConfigurationError as exc:
        diag = {"status": "configuration_error", "subcommand": sub, "type": type(exc).__name__, "message": str(exc)}
        write_json(outdir / f"error-{sub}.json", diag)
        print(json.dumps(diag), file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        diag = {"status": "numerical_error", "subcommand": sub, "type": type(exc).__name__, "message": str(exc)}
        write_json(outdir / f"error-{sub}.json", diag)
        print(json.dumps(diag), file=sys.stderr)
        return EXIT_NUMERICAL
    write_manifest(outdir, sub, cfg, artifacts)
    return EXIT_OK if passed else EXIT_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rgbdsde", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", default=None, help="output directory (overrides outputs.directory)")
    parser.add_argument("--only", default=None, help="verify: comma-separated criterion numbers")
    args = parser.parse_args(argv)
    only = None
    if args.only:
        try:
            only = {int(v) for v in args.only.split(",")}
        except ValueError:
            parser.error("--only takes comma-separated integers")
    return run(args.subcommand, args.config, args.out, only)


if __name__ == "__main__":
    sys.exit(main())
