"""Command line: ``streamtwin run | fit-report | compare``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

OUTPUT_ROOT_VAR = "STREAMTWIN_OUTPUT_ROOT"


def resolve_out(path: str) -> Path:
    """Relative output paths land under ``$STREAMTWIN_OUTPUT_ROOT`` when it is set."""
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_VAR)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def cmd_run(args) -> int:
    from .baselines import PolicyKind
    from .config import load_config
    from .harness import run_experiment

    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise SystemExit(f"--set expects section.key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    cfg = load_config(args.config, overrides)
    schemes = _csv_list(args.schemes) if args.schemes else None
    if schemes:
        valid = {k.value for k in PolicyKind}
        bad = [s for s in schemes if s not in valid]
        if bad:
            raise SystemExit(f"unknown scheme(s): {', '.join(bad)}; choose from {sorted(valid)}")
    seeds = [int(s) for s in _csv_list(args.seeds)] if args.seeds else None
    out = resolve_out(args.out)
    res = run_experiment(cfg, out, schemes=schemes, seeds=seeds, jobs=args.jobs,
                         figures=not args.no_figures)
    print(f"wrote {out}")
    for row in res["comparison_summary"]:
        print(f"  {row['scheme']:6s} mean PQoE {row['mean_pqoe']:.4f}  "
              f"normalized {row['mean_normalized']:.4f}")
    return 0


def cmd_fit_report(args) -> int:
    import numpy as np

    from .harness import read_csv
    from .plotting import plot_fit_report

    run = resolve_out(args.run_dir)
    paths = sorted((run / "runs").glob(f"{args.scheme}/seed*/fit_report.csv"))
    if not paths:
        print(f"no fit reports for {args.scheme} under {run}", file=sys.stderr)
        return 1
    print("seed user  lambda   alpha    beta     gamma    residual")
    for path in paths:
        rows = read_csv(path)
        last = {}
        for r in rows:
            last[int(r["user"])] = r
        for u, r in sorted(last.items()):
            vals = [float(r[k]) for k in ("lambda", "alpha", "beta", "gamma", "residual")]
            print(f"{path.parent.name:5s}{u:4d}  " + "  ".join(f"{v:7.4g}" for v in vals))
        if rows:
            lam = np.array([float(r["lambda"]) for r in rows])
            print(f"  lambda range over episodes: {lam.min():.3g} .. {lam.max():.3g}")
        fig = plot_fit_report(path, run / "figures" / f"fit_{args.scheme}_{path.parent.name}.png")
        if fig is not None:
            print(f"  figure: {fig}")
    return 0


def cmd_compare(args) -> int:
    from .harness import read_csv
    from .plotting import plot_comparison, plot_learning_curves

    run = resolve_out(args.run_dir)
    path = run / "comparison_summary.csv"
    if not path.exists():
        print(f"missing {path}", file=sys.stderr)
        return 1
    rows = read_csv(path)
    best = max(float(r["mean_pqoe"]) for r in rows)
    print("scheme  mean_pqoe  normalized  vs_best")
    for r in rows:
        v = float(r["mean_pqoe"])
        rel = v / best if best > 0 else float("nan")
        print(f"{r['scheme']:6s}  {v:9.4f}  {float(r['mean_normalized']):10.4f}  {rel:7.3f}")
    for fig in (plot_comparison(run), plot_learning_curves(run)):
        if fig is not None:
            print(f"figure: {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="streamtwin", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate schemes, write CSVs and figures")
    run.add_argument("--config", help="INI file; defaults apply to anything omitted")
    run.add_argument("--out", default="run", help=f"output directory (relative to ${OUTPUT_ROOT_VAR})")
    run.add_argument("--schemes", help="comma list from DCTRA,CTRA,RR,PF,JRAT")
    run.add_argument("--seeds", help="comma list of integer seeds")
    run.add_argument("--jobs", type=int, default=1, help="parallel seeds")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override one config value (repeatable)")
    run.add_argument("--no-figures", action="store_true")
    run.set_defaults(func=cmd_run)

    fit = sub.add_parser("fit-report", help="tabulate and plot fitted twin parameters")
    fit.add_argument("run_dir")
    fit.add_argument("--scheme", default="DCTRA")
    fit.set_defaults(func=cmd_fit_report)

    cmp_ = sub.add_parser("compare", help="normalized PQoE table and figures for a run")
    cmp_.add_argument("run_dir")
    cmp_.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .config import ConfigError
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
