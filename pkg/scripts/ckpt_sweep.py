"""SkyNomad migrations and cost as the checkpoint grows from 0 to 4 TB.

The ``capped`` column runs SkyNomad with migration cost spread over at most
the remaining work instead of the whole predicted lifetime.
"""
import argparse

import numpy as np

from nomadsim.engine import run
from nomadsim.harness import run_policy, start_indices
from nomadsim.market import JobSpec
from nomadsim.policy import SkyNomad, SkyNomadConfig
from nomadsim.scenarios import heterogeneous_market


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--starts", type=int, default=10)
    ap.add_argument("--sizes", default="0,50,500,1000,4000")
    args = ap.parse_args(argv)

    sizes = [float(x) for x in args.sizes.split(",")]
    print(f"{'ckpt_gb':>8} {'migrations':>11} {'sky_cost':>9} {'egress':>7} {'capped':>7} {'up_cost':>8} {'optimal':>8}")
    markets = [heterogeneous_market(s, regions=4, horizon_h=24 * 7, price_spread=3.0,
                                    rng_offset=2000) for s in range(args.seeds)]
    for gb in sizes:
        job = JobSpec(P=24, T=36, d=0.1, ckpt_gb=gb)
        sky, capped, up, opt = [], [], [], []
        for tr in markets:
            for s in start_indices(tr, job, args.starts, None):
                sky += run_policy("skynomad", tr, job, s)
                pol = SkyNomad(SkyNomadConfig(amortize_within_job=True))
                capped.append(run(tr, None, job, pol, start_index=s).total_cost)
                up += [r.total_cost for r in run_policy("up", tr, job, s)]
                opt += [r.total_cost for r in run_policy("optimal", tr, job, s)]
        print(f"{gb:>8.0f} {np.mean([r.migrations for r in sky]):>11.2f} "
              f"{np.mean([r.total_cost for r in sky]):>9.2f} {np.mean([r.egress for r in sky]):>7.2f} "
              f"{np.mean(capped):>7.2f} {np.mean(up):>8.2f} {np.mean(opt):>8.2f}")


if __name__ == "__main__":
    main()
