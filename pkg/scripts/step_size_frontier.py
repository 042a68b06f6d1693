"""Run the fusion at several step fractions and record the convergence traces.

Fractions at or beyond 2/beta are expected to trip the divergence guard.

    python scripts/step_size_frontier.py --outdir results/frontier
"""

import argparse
import csv
import warnings
from pathlib import Path

from hydefuse.fusion import DivergenceError, FusionOptions, run
from hydefuse.metrics import band_psnr
from hydefuse.pipeline import bicubic_baseline, synthetic_case


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--bands", type=int, default=16)
    ap.add_argument("--fracs", default="0.5,1.0,1.5,1.8,1.95,2.05,2.2")
    ap.add_argument("--max-iters", type=int, default=1000)
    ap.add_argument("--outdir", default="frontier")
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)

    case = synthetic_case(args.size, args.size, args.bands, rank=4)
    cubic = band_psnr(case.truth.data, bicubic_baseline(case.y_h, case.model.decimation).data)
    print(f"bicubic baseline: {cubic:.2f} dB")
    summary = []
    for frac in (float(f) for f in args.fracs.split(",")):
        opts = FusionOptions(gamma_frac=frac, max_iters=args.max_iters, ground_truth=case.truth)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                res = run(case.problem, opts)
                trace, status = res.trace, "converged" if res.trace.converged else "max-iters"
            except DivergenceError as err:
                trace, status = err.trace, "diverged"
        trace.write_csv(out / f"trace_{frac:g}.csv")
        psnr = trace.psnrs[-1] if trace.records else float("nan")
        rate = trace.empirical_rate()
        summary.append([frac, status, trace.iterations_run, rate, psnr])
        print(f"gamma={frac:<5g}/beta  {status:<10} iters={trace.iterations_run:<5} "
              f"rate={rate:.4f}  psnr={psnr:.2f}")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma_frac", "status", "iterations", "empirical_rate", "final_psnr"])
        w.writerows(summary)


if __name__ == "__main__":
    main()
