"""Acceptance checks, one function per criterion, shared by the CLI and the test suite.

Every check returns a CriterionResult; none of them relaxes its tolerance.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .basis import build_basis, gamma_sq_integral, orthonormality_error
from .bdsde import RGBDSDEProblem, SolverConfig, compare_solutions, picard_solve, solve
from .doss_sussmann import Flow, TransformedProblemFactory, flow_chi, flow_inverse_pi
from .levy import JumpAtom, LevyCharacteristics
from .models import (
    f_cubic_monotone, make_drivers, make_obstacle, make_terminal, modulated_chars, poisson_chars, two_atom_chars,
)
from .norms import build_weights, distance_norms, weighted_norms
from .paths import TimeGrid, simulate_batch
from .reflection import make_domain, solve_paths
from .sipde import SIPDEProblem, compare_report, fd_obstacle_solve, mc_representation
from .yosida import yosida_property_suite


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:2d}: {self.name}"


# ---------------------------------------------------------------- shared test models


def standard_drivers():
    """f = -y + 0.5 z_1, g = 0.3 y."""
    return make_drivers({"f": {"preset": "linear", "a": -1.0, "z_coef": [0.5]}, "g": {"preset": "linear", "s": 0.3}})


def standard_problem(terminal_shift: float = 0.0) -> RGBDSDEProblem:
    put = make_terminal({"preset": "put", "strike": 0.5})
    term = put if terminal_shift == 0.0 else (lambda x: put(x) + terminal_shift)
    obstacle = make_obstacle({"preset": "affine", "a": 0.25, "b": -0.5}, 1.0)
    return RGBDSDEProblem(term, standard_drivers(), obstacle=obstacle, label="standard")


def standard_batch(n_paths: int = 20000, n_steps: int = 50, seed: int = 7):
    chars = two_atom_chars()
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0.0, 1.0, n_steps)
    return chars, basis, simulate_batch(chars, basis, grid, n_paths, seed, backward="common")


def sipde_test_problem() -> SIPDEProblem:
    """sigma(x) = x on [0, 1] with one negative atom: jumps stay inside, drift pushes into x = 1."""
    chars = LevyCharacteristics(1.0, 0.5, 0.0, [JumpAtom(-0.5, 1.0)])
    drivers = make_drivers({"f": {"preset": "linear", "a": -0.5, "b": 0.2}, "h": {"preset": "linear", "a": 0.0, "b": 0.5}})
    return SIPDEProblem(
        domain=make_domain("interval", 0.0, 1.0), chars=chars, sigma=lambda x: np.asarray(x, dtype=float),
        drivers=drivers, terminal=lambda x: 0.3 + 0.5 * np.asarray(x, dtype=float),
        obstacle=lambda t, x: 0.6 - 0.3 * t + 0.0 * np.asarray(x, dtype=float),
    )


# ---------------------------------------------------------------- criteria


def criterion_1() -> CriterionResult:
    errs = {name: orthonormality_error(build_basis(ch)) for name, ch in
            (("two_atom", two_atom_chars()), ("poisson", poisson_chars(2.0)))}
    return CriterionResult(1, "basis orthonormality", all(e <= 1e-10 for e in errs.values()), {"errors": errs})


def criterion_2(n_paths: int = 100_000, n_steps: int = 100, seed: int = 2) -> CriterionResult:
    """Mean, variance and cross-covariance of H^(k) at T/2 and T against the predicted bracket."""
    chars = modulated_chars()
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0.0, chars.T, n_steps)
    batch = simulate_batch(chars, basis, grid, n_paths, seed)
    H = np.cumsum(batch.dH, axis=1)
    checks = []
    ok = True
    for i in (n_steps // 2 - 1, n_steps - 1):
        h = H[:, i, :]
        pred = gamma_sq_integral(basis, 0.0, grid.nodes[i + 1])
        mean = h.mean(axis=0)
        mean_se = h.std(axis=0, ddof=1) / np.sqrt(n_paths)
        var = h.var(axis=0, ddof=1)
        c = h - mean
        var_se = np.sqrt(np.maximum((c**4).mean(axis=0) - var**2, 0.0) / n_paths)
        z_mean = np.abs(mean) / mean_se
        z_var = np.abs(var - pred) / var_se
        z_cross = []
        for k in range(basis.d):
            for m in range(k + 1, basis.d):
                prod = h[:, k] * h[:, m]
                z_cross.append(abs(prod.mean()) / (prod.std(ddof=1) / np.sqrt(n_paths)))
        passed = bool(np.all(z_mean <= 3) and np.all(z_var <= 3) and all(z <= 3 for z in z_cross))
        ok &= passed
        checks.append({"t": float(grid.nodes[i + 1]), "z_mean": z_mean, "z_var": z_var, "z_cross": z_cross})
    return CriterionResult(2, "martingale and bracket moments", ok, {"d": basis.d, "checks": checks})


def criterion_3() -> CriterionResult:
    f, _ = f_cubic_monotone(1.0, 0.5, 0.0)
    suite = yosida_property_suite(lambda y: f(0.0, None, y, None), n=1000, seed=3, tol=1e-9)
    keys = ("monotone", "lipschitz", "domination", "convergence", "cross", "resolvent_ok")
    return CriterionResult(3, "Yosida properties", all(suite[k] for k in keys), suite)


def _linear_y0(N: int) -> float:
    drivers = make_drivers({"f": {"preset": "linear", "a": 1.0}})
    chars = LevyCharacteristics(1.0, 0.0, 0.0, [])
    grid = TimeGrid.uniform(0.0, 1.0, N)
    batch = simulate_batch(chars, None, grid, 1, 0)
    return solve(RGBDSDEProblem(1.0, drivers), batch, None).Y0


def criterion_4() -> CriterionResult:
    e200 = abs(_linear_y0(200) - np.e)
    e400 = abs(_linear_y0(400) - np.e)
    ratio = e200 / e400
    return CriterionResult(4, "closed-form linear BDSDE", bool(e200 <= 0.01 and 1.7 <= ratio <= 2.3),
                           {"error_N200": e200, "error_N400": e400, "ratio": ratio})


def criterion_5() -> CriterionResult:
    s0, N = 0.7, 100
    chars = LevyCharacteristics(1.0, 0.0, 0.0, [])
    grid = TimeGrid.uniform(0.0, 1.0, N)
    batch = simulate_batch(chars, None, grid, 1, 0)
    det = solve(RGBDSDEProblem(0.0, make_drivers({"f": {"preset": "linear"}}),
                               obstacle=make_obstacle({"preset": "decreasing_linear", "s0": s0}, 1.0)), batch, None)
    t = grid.nodes
    err_Y = float(np.max(np.abs(det.Y[0] - s0 * (1 - t))))
    err_K = float(np.max(np.abs(det.K[0] - s0 * t)))
    _, basis, sb = standard_batch(20000, 50, 5)
    sol = picard_solve(standard_problem(), sb, basis)[0]
    dtau = float(sb.grid.dt.max())
    defect = sol.diagnostics["skorokhod_defect"]
    KT = sol.diagnostics["KT_norm"]
    ok = err_Y <= 1e-12 and err_K <= 1e-12 and defect <= dtau * KT and sol.diagnostics["min_dK"] >= 0 and KT > 0
    return CriterionResult(5, "reflection", bool(ok), {"det_err_Y": err_Y, "det_err_K": err_K, "defect": defect,
                                                      "threshold": dtau * KT, "min_dK": sol.diagnostics["min_dK"]})


def criterion_6() -> CriterionResult:
    _, basis, batch = standard_batch(10000, 50, 6)
    rep = compare_solutions(standard_problem(), standard_problem(1.0), batch, basis)
    rep.pop("solutions")
    return CriterionResult(6, "comparison theorem", rep["fraction_violating"] == 0.0, rep)


def criterion_7() -> CriterionResult:
    _, basis, batch = standard_batch(20000, 50, 7)
    cfg = SolverConfig()
    s_zero, r_zero = picard_solve(standard_problem(), batch, basis, cfg, init="zero")
    s_obs, r_obs = picard_solve(standard_problem(), batch, basis, cfg, init="obstacle")
    ratios = [b / a for a, b in zip(r_zero[:-1], r_zero[1:])]
    # ratios from the second iteration on: r_{k+1}/r_k for k >= 2
    tail = ratios[1:]
    gap = float(np.max(np.abs(s_zero.Y - s_obs.Y)))
    ok = len(tail) > 0 and all(q <= 0.9 for q in tail) and gap <= 5 * cfg.picard_tol
    return CriterionResult(7, "Picard contraction and uniqueness", bool(ok),
                           {"residuals": r_zero, "ratios": ratios, "init_gap": gap, "tol": cfg.picard_tol})


def criterion_8() -> CriterionResult:
    chars = poisson_chars(1.0)
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0.0, 1.0, 50)
    batch = simulate_batch(chars, basis, grid, 20000, 8)
    drivers = make_drivers({"f": {"preset": "cubic_monotone", "a": 0.2, "b": 0.2, "c": 0.5}})
    problem = RGBDSDEProblem(make_terminal({"preset": "put", "strike": 0.5}), drivers,
                             obstacle=make_obstacle({"preset": "affine", "a": 0.8, "b": -1.0, "c": -0.3}, 1.0))
    deltas = [1.0, 0.5, 0.25, 0.125]
    sols = [solve(problem, batch, basis, SolverConfig(yosida_delta=d)) for d in deltas]
    w = build_weights(grid.nodes, np.zeros((1, grid.nodes.size)), 1.0, 8.0, 1.0)
    norms = [weighted_norms(s, w)["total"] for s in sols]
    dists = [distance_norms(a, b, w)["total"] for a, b in zip(sols[:-1], sols[1:])]
    bound = 2.0 * norms[0]
    ok = all(np.isfinite(norms)) and max(norms) <= bound and all(b < a for a, b in zip(dists[:-1], dists[1:]))
    return CriterionResult(8, "Yosida-family uniformity", bool(ok),
                           {"deltas": deltas, "norms": norms, "common_bound": bound, "distances": dists,
                            "KT_norms": [s.diagnostics["KT_norm"] for s in sols]})


def criterion_9() -> CriterionResult:
    prob = sipde_test_problem()
    basis = build_basis(prob.chars)
    grid = TimeGrid.uniform(0.0, 1.0, 100)
    batch = simulate_batch(prob.chars, basis, grid, 20000, 9)
    paths = solve_paths(prob.domain, prob.chars, basis, grid, prob.sigma, (0.0, 0.6), batch)
    min_psi = paths.min_psi()
    defect = paths.complementarity_defect()
    # deterministic clamp: sigma0 = 1, b = -1, start x = 0.35
    x0, b, s0 = 0.35, -1.0, 1.0
    chars = LevyCharacteristics(1.0, b, 0.0, [])
    cb = simulate_batch(chars, None, grid, 1, 0)
    cp = solve_paths(make_domain("interval", 0.0, 1.0), chars, None, grid, lambda x: s0 + 0 * np.asarray(x), (0.0, x0), cb)
    t = grid.nodes
    err_X = float(np.max(np.abs(cp.X[0, :, 0] - np.maximum(x0 + s0 * b * t, 0.0))))
    err_k = float(np.max(np.abs(cp.kappa[0] - np.maximum(s0 * abs(b) * t - x0, 0.0))))
    ok = min_psi >= -1e-12 and defect == 0.0 and err_X <= 1e-12 and err_k <= 1e-12 and paths.kappa[:, -1].max() > 0
    return CriterionResult(9, "reflected SDE", bool(ok), {"min_psi": min_psi, "complementarity_defect": defect,
                                                         "boundary_tol": paths.boundary_tol, "clamp_err_X": err_X,
                                                         "clamp_err_kappa": err_k})


def route_y0(drivers, N: int, fine: np.ndarray, n_paths: int, seed: int):
    """Direct solution and mapped-back transformed Y0 on one fine backward path aggregated to N steps."""
    chars = two_atom_chars()
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0.0, 1.0, N)
    dB = fine.reshape(N, -1).sum(axis=1)[None, :]
    batch = simulate_batch(chars, basis, grid, n_paths, seed, backward="common", backward_increments=dB)
    problem = RGBDSDEProblem(make_terminal({"preset": "put", "strike": 0.5}), drivers,
                             obstacle=make_obstacle({"preset": "affine", "a": 0.25, "b": -0.5}, 1.0))
    direct = solve(problem, batch, basis)
    fac = TransformedProblemFactory(drivers, grid.nodes, batch.dB[0])
    transformed = solve(fac.transform_problem(problem), batch, basis)
    return direct, float(fac.map_back(transformed.Y)[:, 0].mean())


def criterion_10(n_paths: int = 20000) -> CriterionResult:
    rng = np.random.default_rng(10)
    N = 50
    nodes = np.linspace(0.0, 1.0, N + 1)
    ys = np.linspace(-2.0, 2.0, 41)
    closed_const, closed_lin, round_trip = 0.0, 0.0, 0.0
    for _ in range(5):
        dB = rng.standard_normal(N) * np.sqrt(1.0 / N)
        tail = np.concatenate([np.cumsum(dB[::-1])[::-1], [0.0]])
        c = flow_chi(lambda t, x, y: 0.7 + 0.0 * y, dB, nodes, 0.0, ys)
        closed_const = max(closed_const, float(np.max(np.abs(c - (ys[None, :] + 0.7 * tail[:, None])))))
        c = flow_chi(lambda t, x, y: y, dB, nodes, 0.0, ys)
        closed_lin = max(closed_lin, float(np.max(np.abs(c - ys[None, :] * np.exp(tail[:, None])))))
        field_ = Flow(lambda t, x, y: np.sin(y) + 0.3 * x, nodes, dB).tabulate([0.0, 0.5], ys)
        for i in (0, N // 2):
            back = flow_inverse_pi(field_, i, 0.5, field_.chi[i, 1])
            round_trip = max(round_trip, float(np.max(np.abs(back - ys))))
    # route agreement: f independent of (y, z), g affine in y
    drivers = make_drivers({"f": {"preset": "linear", "a": 0.0, "b": 0.3}, "g": {"preset": "linear", "s": 0.3, "c": 0.1}})
    fine = np.random.default_rng(1010).standard_normal(4 * N) * np.sqrt(1.0 / (4 * N))
    direct, mapped = route_y0(drivers, N, fine, n_paths, 10)
    coarse, _ = route_y0(drivers, N // 2, fine, n_paths, 10)
    scheme_tol = abs(direct.Y0 - coarse.Y0)
    gap = abs(direct.Y0 - mapped)
    route_ok = gap <= 3 * (direct.Y0_se + scheme_tol)
    ok = round_trip <= 1e-8 and closed_const <= 1e-10 and closed_lin <= 1e-10 and route_ok
    return CriterionResult(10, "Doss-Sussmann flow and route agreement", bool(ok), {
        "round_trip": round_trip, "closed_constant_g": closed_const, "closed_linear_g": closed_lin,
        "direct_Y0": direct.Y0, "transformed_Y0": mapped, "gap": gap, "se": direct.Y0_se, "scheme_tol": scheme_tol})


def criterion_11(n_paths: int = 20000, workers: int = 4) -> CriterionResult:
    prob = sipde_test_problem()
    basis = build_basis(prob.chars)
    fd = fd_obstacle_solve(prob, basis, 400, 400)
    mc = mc_representation(prob, basis, [0.0, 0.25, 0.5], [0.2, 0.5, 0.8], n_paths, 100, 11, workers=workers)
    rep = compare_report(mc, fd, scheme_tol=0.03)
    ok = rep["pass"] and not mc.failures
    return CriterionResult(11, "SIPDE representation vs finite differences", bool(ok),
                           {"max_abs_diff": rep["max_abs_diff"], "points": rep["points"], "failures": mc.failures})


REPRO_CONFIG = """\
seed: 1234
characteristics: {T: 1.0, b: 0.1, c: 0.25, atoms: [{e: 0.5, lambda: 2.0}, {e: -0.3, lambda: 1.0}]}
grid: {t0: 0.0, N: 20}
batch: {paths: 2000, backward: common}
problem:
  drivers: {f: {preset: linear, a: -1.0, z_coef: [0.5]}, g: {preset: linear, s: 0.3}}
  terminal: {preset: put, strike: 0.5}
  obstacle: {preset: affine, a: 0.0, b: -0.2}
domain: {preset: interval, a: -1.0, b: 1.0, sigma: {s0: 0.5, s2: -0.5}, start: [0.0, 0.0]}
numerics: {picard_tol: 1.0e-6}
"""


def criterion_12() -> CriterionResult:
    from .cli import run

    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "repro.yaml"
        cfg.write_text(REPRO_CONFIG)
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            for sub in ("basis", "simulate", "reflect", "solve"):
                code = run(sub, cfg, out)
                if code != 0:
                    return CriterionResult(12, "reproducibility", False, {"failed": sub, "exit": code})
            digests.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = digests[0] == digests[1]
    return CriterionResult(12, "reproducibility", bool(same and len(digests[0]) > 0),
                           {"artifacts": sorted(digests[0]), "identical": same})


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
}


def run_all(only=None) -> list:
    return [CRITERIA[k]() for k in sorted(CRITERIA) if only is None or k in only]
