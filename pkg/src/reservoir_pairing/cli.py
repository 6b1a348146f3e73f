"""Command-line interface for the benchmark harness."""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dgp as dgp_mod
from .designs import DESIGN_NAMES
from .harness import (
    ConfigError,
    DGP_NAMES,
    ExperimentConfig,
    compare_designs,
    default_workers,
    emit_comparison_csv,
    emit_csv,
    emit_diagnose_csv,
    run_diagnose,
    run_grid,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _parse_schema_file(path: str) -> dgp_mod.CriteoSchema:
    """Schema config: simple key=value lines (features comma-separated)."""
    kwargs = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"bad schema line (expected key=value): {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key == "features":
            kwargs["features"] = tuple(v.strip() for v in value.split(","))
        elif key in ("treatment", "visit", "delimiter"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown schema key {key!r}")
    return dgp_mod.CriteoSchema(**kwargs)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dgp", default="setting1", choices=DGP_NAMES)
    parser.add_argument(
        "--design",
        action="append",
        choices=DESIGN_NAMES,
        help="repeatable; defaults to iid",
    )
    parser.add_argument(
        "--T",
        action="append",
        type=int,
        dest="sample_sizes",
        help="repeatable sample size; defaults to 1000",
    )
    parser.add_argument("--reps", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--delta", type=float, default=0.0)
    parser.add_argument("--kk-lambda", type=float, default=0.1)
    parser.add_argument("--burn-in", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default="results.csv")
    parser.add_argument("--data", default=None, help="path to a delimited dataset")
    parser.add_argument("--schema", default=None, help="key=value schema config file")


def _build_config(args: argparse.Namespace, dgp_name: Optional[str] = None) -> ExperimentConfig:
    schema = _parse_schema_file(args.schema) if args.schema else dgp_mod.CriteoSchema()
    return ExperimentConfig(
        dgp=dgp_name or args.dgp,
        designs=tuple(args.design or ["iid"]),
        sample_sizes=tuple(args.sample_sizes or [1000]),
        replicates=args.reps,
        base_seed=args.seed,
        workers=args.workers if args.workers is not None else default_workers(),
        delta=args.delta,
        kk_lambda=args.kk_lambda,
        burn_in=args.burn_in,
        data_path=args.data,
        schema=schema,
    )


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    table = run_grid(cfg)
    emit_csv(table, args.out)
    print(f"wrote {len(table.rows)} rows to {args.out}")
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    cfg = _build_config(args)
    sizes = cfg.sample_sizes
    if len(sizes) != 1:
        raise ConfigError("diagnose takes exactly one --T")
    series = run_diagnose(cfg, sizes[0])
    emit_diagnose_csv(series, args.out)
    print(f"wrote per-step series for {len(series)} design(s) to {args.out}")
    return 0


def _cmd_criteo(args: argparse.Namespace) -> int:
    data_path = args.data
    if data_path is None:
        # no dataset supplied: run on a freshly generated synthetic surrogate
        tmp = Path(tempfile.mkdtemp(prefix="criteo_surrogate_"))
        data_path = str(tmp / "surrogate.csv")
        n_rows = dgp_mod.FIT_SAMPLE_SIZE + max(args.sample_sizes or [1000]) + 10_000
        print(f"no --data given; writing a {n_rows}-row surrogate to {data_path}")
        dgp_mod.write_criteo_surrogate(data_path, n_rows, seed=args.seed)
    args.data = data_path
    if not args.design:
        args.design = ["iid", "kk14", "packing"]
    cfg = _build_config(args, dgp_name="criteo")
    table = run_grid(cfg)
    emit_csv(table, args.out)
    comparison_path = str(args.out) + ".comparison.csv"
    if "iid" in cfg.designs:
        comparison = compare_designs(table, seed=cfg.base_seed)
        emit_comparison_csv(comparison, comparison_path)
        for c in comparison:
            print(
                f"T={c.sample_size} {c.design}: variance={c.variance:.4e} "
                f"ratio_to_iid={c.ratio_to_iid:.3f} (se {c.ratio_stderr:.3f})"
            )
        print(f"wrote rows to {args.out} and comparison to {comparison_path}")
    else:
        print(f"wrote rows to {args.out}")
    return 0


def _cmd_selftest(args: argparse.Namespace) -> int:
    from .estimators import OutcomeModel, conditional_variance, exact_variance_oracle
    from .numerics import chisq_cdf, chisq_quantile, f_cdf, f_quantile

    failures = 0

    def check(label: str, ok: bool) -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {label}")
        if not ok:
            failures += 1

    worst = 0.0
    for p in (0.05, 0.25, 0.5, 0.75, 0.95):
        for d in (1, 3, 7):
            worst = max(worst, abs(chisq_cdf(chisq_quantile(p, d), d) - p))
            worst = max(worst, abs(f_cdf(f_quantile(p, d, d + 5), d, d + 5) - p))
    check(f"quantile round-trip error {worst:.2e} < 1e-9", worst < 1e-9)

    gen = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        t = int(gen.integers(2, 11))
        x = gen.normal(size=(t, 2))
        w = gen.normal(size=(4, 2))
        model = OutcomeModel(
            mu1=lambda v, w=w: v @ w[0],
            mu0=lambda v, w=w: v @ w[1],
            var1=lambda v, w=w: (v @ w[2]) ** 2,
            var0=lambda v, w=w: (v @ w[3]) ** 2,
            tau=0.0,
        )
        k = int(gen.integers(0, t // 2 + 1))
        perm = gen.permutation(t) + 1
        matches = [
            (min(perm[2 * i], perm[2 * i + 1]), max(perm[2 * i], perm[2 * i + 1]))
            for i in range(k)
        ]
        worst = max(
            worst,
            abs(
                conditional_variance(model, x, matches)
                - exact_variance_oracle(model, x, matches)
            ),
        )
    check(f"variance-formula vs enumeration error {worst:.2e} < 1e-12", worst < 1e-12)

    from .core import RandomSource
    from .designs import PackingConfig, run_packing

    x = gen.random((500, 2))
    res = run_packing(x, PackingConfig(dimension=2, standardize=False), RandomSource(1, 1))
    res.state.check_partition()
    lam = 500 ** (-0.25)
    pts = x[np.asarray(res.state.reservoir) - 1]
    ok = True
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < lam:
                ok = False
    check("packing invariant on a 500-step run", ok)

    return 0 if failures == 0 else 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _Parser(prog="reservoir-pairing")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", _cmd_simulate),
        ("diagnose", _cmd_diagnose),
        ("criteo", _cmd_criteo),
        ("selftest", _cmd_selftest),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(parser.format_usage(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
