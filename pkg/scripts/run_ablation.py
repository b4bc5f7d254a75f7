"""K++ ablation on the synthetic low-rank 512x128 problem: FLOPs to a true residual threshold."""
import argparse
import json

from kzpp.experiments import ABLATIONS, ablation_problem, kzpp_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--block-size", type=int, default=64)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threshold", type=float, default=1e-8)
    ap.add_argument("--eta", type=float, default=None, help="momentum step (default s/(2n))")
    ap.add_argument("--out", default=None, help="optional JSON output path")
    args = ap.parse_args()

    overrides = {} if args.eta is None else {"eta": args.eta}
    res = kzpp_ablation(ablation_problem(0), args.block_size, range(args.seeds), args.threshold, **overrides)
    full = res["full"].median_flops
    rows = []
    print(f"{'variant':<10} {'median FLOPs':>14} {'median iters':>13} {'vs full':>8}")
    for name in ABLATIONS:
        r = res[name]
        its = sorted(i for i in r.iters if i is not None)
        med_it = its[len(its) // 2] if its else None
        ratio = r.median_flops / full if r.median_flops and full else None
        rows.append(dict(variant=name, median_flops=r.median_flops, flops=r.flops, iters=r.iters, ratio=ratio))
        print(f"{name:<10} {r.median_flops or float('inf'):>14.4g} {str(med_it):>13} "
              f"{ratio if ratio is not None else float('nan'):>8.3f}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(rows, f, indent=2)


if __name__ == "__main__":
    main()
