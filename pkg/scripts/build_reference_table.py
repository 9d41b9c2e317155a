"""Build the bundled two-sample calibration table.

Small designs are enumerated exactly; larger ones use random permutations of
the pooled sample. All alphas for one (nx, ny) share one set of orderings.

    python3 scripts/build_reference_table.py [--out PATH] [--M 200000] [--seed 1]
"""
from __future__ import annotations

import argparse
import itertools
import sys
import time
import warnings
from pathlib import Path

from qmtp.calibrate import DiscretenessWarning, ReferenceTable, calibrate_2s_many
from qmtp.rng import RngStream

ALPHAS = (0.01, 0.05, 0.1)
GRID = (5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60, 80, 100)
EXTRA = ((6, 11), (6, 12), (9, 10), (10, 13), (25, 500), (29, 30), (99, 100), (200, 200))


def pairs():
    seen = set()
    for a, b in itertools.chain(itertools.combinations_with_replacement(GRID, 2), EXTRA):
        key = (min(a, b), max(a, b))
        if key not in seen:
            seen.add(key)
            yield key


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/qmtp/data/reference_table.csv"))
    ap.add_argument("--M", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    table = ReferenceTable()
    t0 = time.time()
    for i, (nx, ny) in enumerate(pairs()):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DiscretenessWarning)
            cals = calibrate_2s_many(ALPHAS, nx, ny, "two_sided", "auto", args.M, RngStream(args.seed, i))
        for c in cals:
            table.add(c)
        print(f"({nx},{ny}) {[round(c.tilde_alpha, 6) for c in cals]} {time.time() - t0:.0f}s",
              file=sys.stderr)
    table.save(args.out)
    print(args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
