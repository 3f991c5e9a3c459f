"""Mean cost per policy as the deadline loosens, averaged over staggered start times."""
import argparse

import numpy as np

from nomadsim.harness import run_policy, start_indices
from nomadsim.market import JobSpec
from nomadsim.scenarios import heterogeneous_market


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--regions", type=int, default=4)
    ap.add_argument("--work", type=float, default=24.0)
    ap.add_argument("--ratios", default="tight,1.2,1.5,2.0",
                    help="'tight' is the smallest ratio the engine accepts")
    ap.add_argument("--starts", type=int, default=20)
    ap.add_argument("--policies", default="skynomad,up,up_s,up_a,up_ap,od_only,optimal")
    args = ap.parse_args(argv)

    tr = heterogeneous_market(args.seed, regions=args.regions, horizon_h=24 * 7, price_spread=3.0,
                              rng_offset=2000)
    d, step = 0.1, tr.interval_s / 3600
    names = args.policies.split(",")
    print("ratio    " + " ".join(f"{n:>9}" for n in names))
    for tok in args.ratios.split(","):
        ratio = (args.work + 2 * d + step) / args.work + 1e-6 if tok == "tight" else float(tok)
        job = JobSpec(P=args.work, T=args.work * ratio, d=d, ckpt_gb=50)
        starts = start_indices(tr, job, args.starts, None)
        costs = [np.mean([np.mean([r.total_cost for r in run_policy(n, tr, job, s)])
                          for s in starts]) for n in names]
        print(f"{ratio:<8.4f} " + " ".join(f"{c:>9.2f}" for c in costs))


if __name__ == "__main__":
    main()
