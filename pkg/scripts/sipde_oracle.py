"""Monte Carlo representation vs finite-difference oracle on the 1D obstacle test model."""

from __future__ import annotations

import argparse
import json

from rgbdsde.basis import build_basis
from rgbdsde.sipde import compare_report, fd_obstacle_solve, fd_self_convergence, mc_representation
from rgbdsde.verify import sipde_test_problem


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    prob = sipde_test_problem()
    basis = build_basis(prob.chars)
    ts, xs = [0.0, 0.25, 0.5], [0.2, 0.5, 0.8]
    mc = mc_representation(prob, basis, ts, xs, args.paths, args.steps, args.seed, workers=args.workers)
    fd = fd_obstacle_solve(prob, basis)
    rep = compare_report(mc, fd)
    rep["fd_self_convergence"] = fd_self_convergence(prob, basis, [(t, x) for t in ts for x in xs])
    print(json.dumps(rep, indent=2, default=float))


if __name__ == "__main__":
    main()
