#!/usr/bin/env python3
"""Monte Carlo validation of the simulator against the analytic gap laws.

Runs the two-leaf check (gap law chi-square plus new-spacer means) and,
when --Tprime is given, the three-leaf check. Exits nonzero if any
p-value falls below 1e-4.
"""

import argparse
import sys

from spacerloss.cli import run_validation


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rho", type=float, default=0.6931471805599453)
    parser.add_argument("--theta", type=float, default=69.31471805599453)
    parser.add_argument("--T", type=float, default=1.0)
    parser.add_argument("--Tprime", type=float, default=None)
    parser.add_argument("--trials", type=int, default=20000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = run_validation(
        args.rho, args.theta, args.T, args.Tprime, args.trials, args.seed
    )
    failed = False
    for name, statistic, p in report:
        print(f"{name}: statistic={statistic:.4g} p={p:.4g}")
        failed = failed or p < 1e-4
    return 3 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
