#!/usr/bin/env python3
"""Semi-synthetic uplift benchmark.

Fits per-arm visit models and a 3-component PCA on the first 10,000 rows
of a delimited dataset, then replays the remaining rows through each
design. Without --data a synthetic surrogate with known logistic truth is
generated first.
"""

import argparse
from pathlib import Path

from reservoir_pairing.dgp import FIT_SAMPLE_SIZE, write_criteo_surrogate
from reservoir_pairing.harness import (
    ExperimentConfig,
    compare_designs,
    default_workers,
    emit_comparison_csv,
    emit_csv,
    run_grid,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", default=None, help="delimited dataset path")
    parser.add_argument("--out-dir", default="results/semisynthetic")
    parser.add_argument("--T", type=int, default=100_000)
    parser.add_argument("--reps", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    data_path = args.data
    if data_path is None:
        data_path = str(out_dir / "surrogate.csv")
        n_rows = FIT_SAMPLE_SIZE + args.T + 10_000
        print(f"no --data given; writing a {n_rows}-row surrogate to {data_path}")
        write_criteo_surrogate(data_path, n_rows, seed=args.seed)

    cfg = ExperimentConfig(
        dgp="criteo",
        designs=("iid", "kk14", "packing"),
        sample_sizes=(args.T,),
        replicates=args.reps,
        base_seed=args.seed,
        workers=args.workers if args.workers is not None else default_workers(),
        data_path=data_path,
    )
    table = run_grid(cfg)
    emit_csv(table, out_dir / "rows.csv")
    comparison = compare_designs(table, seed=args.seed)
    emit_comparison_csv(comparison, out_dir / "vs_iid.csv")
    for c in comparison:
        print(
            f"T={c.sample_size} {c.design}: variance {c.variance:.4e}, "
            f"ratio to iid {c.ratio_to_iid:.3f} (se {c.ratio_stderr:.3f})"
        )
    print(f"wrote results under {out_dir}")


if __name__ == "__main__":
    main()
