"""Mean cost as regions are added in order of average availability.

Uses daily spot windows staggered across regions, so each added region opens
hours that no earlier region covers.
"""
import argparse

import numpy as np

from nomadsim.harness import regions_by_availability, run_policy, start_indices
from nomadsim.market import JobSpec
from nomadsim.scenarios import staggered_windows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--regions", type=int, default=6)
    ap.add_argument("--starts", type=int, default=20)
    ap.add_argument("--policies", default="skynomad,up_s,up_a,optimal")
    args = ap.parse_args(argv)

    tr = staggered_windows(args.seed, regions=args.regions)
    order = regions_by_availability(tr)
    job = JobSpec(P=24, T=36, d=0.1, ckpt_gb=50)
    names = args.policies.split(",")
    print("k  " + " ".join(f"{n:>9}" for n in names))
    for k in range(1, args.regions + 1):
        sub = tr.subset(order[:k])
        starts = start_indices(sub, job, args.starts, None)
        costs = [np.mean([np.mean([r.total_cost for r in run_policy(n, sub, job, s)])
                          for s in starts]) for n in names]
        print(f"{k:<2} " + " ".join(f"{c:>9.2f}" for c in costs))


if __name__ == "__main__":
    main()
