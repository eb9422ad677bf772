#!/usr/bin/env python3
"""Transient estimation demo on the AR(1) built-in.

Runs the blockwise stopping rule for the mean at each step of a range and
prints the estimate, its half-width, the replication count the rule settled
on, and the analytic truth E[X_t] = mu + (x0 - mu) rho^t for comparison.
Steps close to the start have small variance and freeze early; later steps
need more replications.
"""

import argparse

from smcheck.models import Ar1Model
from smcheck.query import expand, parse, check_or_raise
from smcheck.rng import SeedPlan
from smcheck.stats import CiSpec
from smcheck.transient import AutoIrConfig, auto_ir, make_targets


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mu", type=float, default=2.0)
    ap.add_argument("--rho", type=float, default=0.8)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--x0", type=float, default=6.0)
    ap.add_argument("--max-step", type=int, default=15)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    src = (
        'at(t, o) = if (s.eval("steps") == t) then s.eval(o) '
        "else next(at(t, o)) fi ;\n"
        f'eval autoIR(E[ at(t, "x") ], t, 0, 1, {args.max_step}) ;\n'
    )
    ast = check_or_raise(parse(src))
    targets = make_targets(expand(ast), CiSpec(args.alpha, args.delta))
    factory = lambda: Ar1Model(mu=args.mu, rho=args.rho, sigma=args.sigma,
                               x0=args.x0)
    report = auto_ir(ast, targets, AutoIrConfig(), factory,
                     SeedPlan(args.seed), workers=args.workers)

    print(f"{'step':>4}  {'estimate':>10}  {'halfwidth':>10}  "
          f"{'n':>6}  {'truth':>10}  {'err':>8}")
    for t, row in enumerate(report.rows):
        truth = Ar1Model.expected_value(t, args.mu, args.rho, args.x0)
        print(f"{t:>4}  {row.estimate:>10.4f}  {row.ci_halfwidth:>10.4f}  "
              f"{row.n_replications:>6}  {truth:>10.4f}  "
              f"{abs(row.estimate - truth):>8.4f}")
    print(f"\ntotal replications {report.total_replications}, "
          f"total steps {report.total_steps}")


if __name__ == "__main__":
    main()
