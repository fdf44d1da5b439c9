#!/usr/bin/env python3
"""Sweep one unit-cell parameter and track the primary gap.

The tether width is the most fabrication-sensitive dimension, so it is the
default, but any cell parameter can be swept.  Prints a table of gap centre
and width versus the parameter value and optionally writes it as CSV.
"""

import argparse
import csv
import dataclasses
import sys

import numpy as np

from phonogap import UnitCellParams, parameter_sweep

PARAM_NAMES = [f.name for f in dataclasses.fields(UnitCellParams)]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--param", default="t", choices=PARAM_NAMES,
                        help="cell parameter to sweep (nm)")
    parser.add_argument("--span-nm", type=float, default=6.0,
                        help="half-width of the sweep around the nominal value")
    parser.add_argument("--n-values", type=int, default=5)
    parser.add_argument("--resolution", default="10,8,4",
                        help="mesh resolution nx,ny,nz")
    parser.add_argument("--n-kpoints", type=int, default=12)
    parser.add_argument("--n-modes", type=int, default=30)
    parser.add_argument("--csv", help="optional path for the sweep CSV")
    args = parser.parse_args(argv)

    base = UnitCellParams()
    nominal = getattr(base, args.param)
    values = np.linspace(nominal - args.span_nm, nominal + args.span_nm,
                         args.n_values)
    if values.min() <= 0:
        parser.error(f"sweep reaches non-positive {args.param}; shrink --span-nm")
    resolution = tuple(int(part) for part in args.resolution.split(","))

    points = parameter_sweep(
        base, args.param, values,
        resolution=resolution,
        k_points=np.linspace(0.0, 1.0, args.n_kpoints),
        n_modes=args.n_modes,
    )

    print(f"{args.param + '_nm':>8} {'center_GHz':>11} {'width_GHz':>10}")
    for point in points:
        print(f"{point.value_nm:8.2f} {point.center_ghz:11.3f} "
              f"{point.width_ghz:10.3f}")

    if args.csv:
        with open(args.csv, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([f"{args.param}_nm", "center_GHz", "width_GHz"])
            for point in points:
                writer.writerow([point.value_nm, point.center_ghz,
                                 point.width_ghz])
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
