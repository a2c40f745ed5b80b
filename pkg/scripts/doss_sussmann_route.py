"""Direct vs transformed-problem Y0 on one injected backward path, across grid sizes."""

from __future__ import annotations

import argparse

import numpy as np

from rgbdsde.models import make_drivers
from rgbdsde.verify import route_y0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=10)
    ap.add_argument("--fine", type=int, default=200, help="steps of the injected fine path")
    args = ap.parse_args()
    fine = np.random.default_rng(args.seed).standard_normal(args.fine) * np.sqrt(1.0 / args.fine)
    drivers = make_drivers({"f": {"preset": "linear", "a": 0.0, "b": 0.3}, "g": {"preset": "linear", "s": 0.3, "c": 0.1}})
    print(f"{'N':>5} {'direct':>12} {'se':>10} {'transformed':>12} {'gap':>10}")
    for N in (25, 50, 100, 200):
        if args.fine % N:
            continue
        direct, mapped = route_y0(drivers, N, fine, args.paths, args.seed)
        print(f"{N:5d} {direct.Y0:12.6f} {direct.Y0_se:10.2e} {mapped:12.6f} {abs(direct.Y0 - mapped):10.2e}")


if __name__ == "__main__":
    main()
