"""Compare every policy against the offline optimum on heterogeneous 8-region markets."""
import argparse
import csv
import sys

import numpy as np

from nomadsim.harness import run_policy
from nomadsim.market import JobSpec
from nomadsim.scenarios import heterogeneous_market

POLICIES = ["skynomad", "up", "up_s", "up_a", "up_ap", "asm", "od_only", "optimal"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--regions", type=int, default=8)
    ap.add_argument("--work", type=float, default=48.0, help="job length P in hours")
    ap.add_argument("--ratio", type=float, default=1.5, help="deadline T / P")
    ap.add_argument("--ckpt-gb", type=float, default=50.0)
    ap.add_argument("--probe-minutes", type=float, default=0.0)
    ap.add_argument("--policies", default=",".join(POLICIES))
    ap.add_argument("--out", help="CSV with one row per (seed, policy)")
    args = ap.parse_args(argv)

    job = JobSpec(P=args.work, T=args.work * args.ratio, d=0.1, ckpt_gb=args.ckpt_gb,
                  probe_minutes=args.probe_minutes)
    names = args.policies.split(",")
    rows = []
    for seed in range(args.seeds):
        tr = heterogeneous_market(seed, regions=args.regions)
        for name in names:
            reps = run_policy(name, tr, job, 0)
            rows.append({"seed": seed, "policy": name,
                         "cost": float(np.mean([r.total_cost for r in reps])),
                         "deadline_met": all(r.deadline_met for r in reps),
                         "migrations": float(np.mean([r.migrations for r in reps]))})
        print(f"seed {seed} done", file=sys.stderr)
    opt = np.mean([r["cost"] for r in rows if r["policy"] == "optimal"]) if "optimal" in names else None
    print(f"{'policy':<10} {'mean_cost':>10} {'vs_opt':>7} {'deadline':>9}")
    for name in names:
        mine = [r for r in rows if r["policy"] == name]
        c = np.mean([r["cost"] for r in mine])
        rel = f"{c / opt:7.3f}" if opt else "    n/a"
        print(f"{name:<10} {c:>10.2f} {rel} {np.mean([r['deadline_met'] for r in mine]):>9.2f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
