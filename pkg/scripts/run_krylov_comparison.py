"""CD++ versus GMRES and CG on Gaussian kernel systems over (dimension, width) configurations."""
import argparse
import json

from kzpp.experiments import KRYLOV_CONFIGS, kernel_config_problem, krylov_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[512])
    ap.add_argument("--block-size", type=int, default=64)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threshold", type=float, default=1e-4)
    ap.add_argument("--out", default=None, help="optional JSON output path")
    args = ap.parse_args()

    rows = []
    print(f"{'n':>6} {'config':<14} {'CD++ FLOPs':>12} {'GMRES FLOPs':>12} {'CD++/GMRES':>11} {'CG iters':>9} CG ok")
    for n in args.n:
        for d, g in KRYLOV_CONFIGS:
            label = f"d{d}/gamma{g}"
            r = krylov_comparison(kernel_config_problem(n, d, g), label, args.block_size, range(args.seeds),
                                  args.threshold)
            ratio = r.cdpp_median / r.gmres_flops if r.cdpp_median and r.gmres_flops else None
            rows.append(dict(n=n, config=label, cdpp_flops=r.cdpp_flops, cdpp_median=r.cdpp_median,
                             gmres_flops=r.gmres_flops, cg_iters=r.cg_iters, cg_converged=r.cg_converged))
            print(f"{n:>6} {label:<14} {r.cdpp_median or float('inf'):>12.4g} "
                  f"{r.gmres_flops or float('inf'):>12.4g} {ratio if ratio else float('nan'):>11.3f} "
                  f"{r.cg_iters:>9} {r.cg_converged}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(rows, f, indent=2)


if __name__ == "__main__":
    main()
