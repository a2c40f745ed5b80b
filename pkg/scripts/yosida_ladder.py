"""Weighted norms and successive distances of the Yosida-regularized solutions on the delta ladder."""

from __future__ import annotations

import argparse

from rgbdsde.verify import criterion_8


def main() -> None:
    argparse.ArgumentParser(description=__doc__).parse_args()
    res = criterion_8()
    print(res.line())
    for key, val in sorted(res.details.items()):
        print(f"  {key}: {val}")


if __name__ == "__main__":
    main()
