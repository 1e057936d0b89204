#!/usr/bin/env python3
# Check the desk-scale results: the detector ordering across seeds and the interior
# minimum of the threshold sweep.
#
#   aoi-access simulate -c desk
#   aoi-access simulate -c desk-threshold-sweep
#   uv run scripts/check_desk_results.py

import argparse
import sys
from itertools import pairwise
from pathlib import Path

from aoi_access import is_interior_minimum, read_csv, sign_test

_ORDER = ("A-PIAAE", "A-LISTA-AE", "A-LISTA")
_SIGNIFICANCE = 0.05


def _ordering(runs_csv: Path) -> bool:
    runs = read_csv(runs_csv).sort_values("seed")
    by_scheme = dict(list(runs.groupby("scheme")))
    missing = [name for name in _ORDER if name not in by_scheme]
    if missing:
        print(f"{runs_csv}: no runs for {', '.join(missing)}")
        return False
    ok = True
    for better, worse in pairwise(_ORDER):
        a, b = by_scheme[better], by_scheme[worse]
        p_detection = sign_test(a["detection_rate"].tolist(), b["detection_rate"].tolist())
        p_aoi = sign_test(a["stationary_aoi"].tolist(), b["stationary_aoi"].tolist(), higher_is_better=False)
        passed = p_detection < _SIGNIFICANCE and p_aoi < _SIGNIFICANCE
        ok &= passed
        verdict = "ok" if passed else "FAIL"
        print(f"{better} vs {worse}: detection p={p_detection:.4f}, AoI p={p_aoi:.4f} [{verdict}]")
    return ok


def _u_shape(aggregate_csv: Path, scheme: str) -> bool:
    frame = read_csv(aggregate_csv)
    frame = frame[frame["scheme"] == scheme]
    if frame.empty:
        print(f"{aggregate_csv}: no rows for {scheme}")
        return False
    interior = is_interior_minimum(frame["sweep_value"].tolist(), frame["aoi_mean"].tolist())
    best = frame.loc[frame["aoi_mean"].idxmin()]
    print(f"{scheme}: minimum AoI {best['aoi_mean']:.3f} at delta={best['sweep_value']:g} [{'ok' if interior else 'FAIL'}]")
    return interior


def main() -> int:
    parser = argparse.ArgumentParser(description="Check desk-scale ordering and threshold-sweep results.")
    parser.add_argument("--ordering", type=Path, default=Path("results/desk-ordering/runs.csv"))
    parser.add_argument("--threshold-sweep", type=Path, default=Path("results/desk-threshold-sweep/aggregate.csv"))
    parser.add_argument("--scheme", default="A-PIAAE", help="Scheme whose threshold sweep must have an interior minimum.")
    opts = parser.parse_args()
    ok = _ordering(opts.ordering)
    ok = _u_shape(opts.threshold_sweep, opts.scheme) and ok
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
