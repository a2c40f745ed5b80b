"""Run the acceptance criteria and print one line per criterion; exit 1 if any fails."""

from __future__ import annotations

import argparse
import json
import sys
import time

from rgbdsde.verify import CRITERIA


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--only", default="", help="comma-separated criterion numbers")
    ap.add_argument("--json", default=None, help="write details to this file")
    args = ap.parse_args()
    wanted = {int(v) for v in args.only.split(",") if v} or set(CRITERIA)
    report, ok = {}, True
    for k in sorted(wanted):
        start = time.perf_counter()
        res = CRITERIA[k]()
        print(f"{res.line()}  ({time.perf_counter() - start:.1f} s)", flush=True)
        report[k] = {"name": res.name, "passed": res.passed, "details": res.details}
        ok &= res.passed
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, default=str)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
