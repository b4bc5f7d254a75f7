"""CD++ sensitivity to the regularizer: median iterations to a true residual threshold per lambda."""
import argparse

from kzpp.experiments import kernel_config_problem, lambda_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--block-size", type=int, default=64)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--threshold", type=float, default=1e-6)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.0, 1e-10, 1e-8, 1e-4, 1e-2])
    args = ap.parse_args()

    its = lambda_sweep(kernel_config_problem(args.n, args.dim, args.gamma), args.block_size, args.lams,
                       range(args.seeds), args.threshold)
    for lam, it in its.items():
        print(f"lambda={lam:<8g} median iterations={it}")
    vals = list(its.values())
    if None not in vals:
        print(f"spread (max-min)/min = {(max(vals) - min(vals)) / min(vals):.1%}")


if __name__ == "__main__":
    main()
