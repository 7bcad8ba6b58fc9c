"""Command-line interface: fit, predict, cv and benchmark subcommands.

Exit codes: 0 success, 1 usage, 2 data error, 3 pipeline/numerical failure,
4 model-format mismatch.  Option precedence is CLI flag > config file >
built-in default; the config file is a flat ``key = value`` text document
using the long option names.  Every run is reproducible from its seed:
reports contain no timestamps, and the benchmark's wall-time column can be
suppressed with ``--omit-timing`` when byte-identical outputs are needed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .benchmark import (VARIANT_WITH, VARIANT_WITHOUT, BenchmarkProtocol,
                        render_table, run_table1, write_csv)
from .data import load_csv
from .errors import (DataError, GpselError, ModelFormatError, PipelineError)
from .pipeline import PipelineConfig, cross_validate, fit_full
from .predictor import GpModel


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_pipeline_options(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--k-build", type=int, default=4,
                   help="folds for the selection Q2 (default 4)")
    p.add_argument("--k-valid", type=int, default=6,
                   help="outer folds for final validation (default 6)")
    p.add_argument("--holdout", type=float, default=None, metavar="FRAC",
                   help="validate on a holdout fraction instead of outer CV")
    p.add_argument("--skip-steps-4-5", action="store_true",
                   help="disable the Q2-jump re-ranking rerun")
    p.add_argument("--restrict-p", action="store_true",
                   help="limit correlation powers to 0.5, 1 and 2")
    p.add_argument("--tau-fixed", type=float, default=None,
                   help="pin the nugget ratio instead of estimating it")
    p.add_argument("--max-evals-factor", type=int, default=500,
                   help="optimizer budget per coordinate (default 500)")
    p.add_argument("--stop-step", type=float, default=1e-4,
                   help="optimizer stop step as a fraction of range")
    p.add_argument("--cheap-cv", action="store_true",
                   help="reuse hyperparameters inside CV folds (faster, biased)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes for folds/replicates")


def _pipeline_config(args, run_steps_4_5: bool | None = None) -> PipelineConfig:
    return PipelineConfig(
        k_build=args.k_build,
        k_valid=args.k_valid,
        holdout_fraction=args.holdout,
        run_steps_4_5=not args.skip_steps_4_5 if run_steps_4_5 is None
        else run_steps_4_5,
        restrict_p=args.restrict_p,
        tau_fixed=args.tau_fixed,
        max_evals_factor=args.max_evals_factor,
        stop_step_frac=args.stop_step,
        refit_cv=not args.cheap_cv,
        seed=args.seed,
        n_jobs=max(1, args.jobs),
    )


def _load_config_file(path: str) -> dict:
    """Flat ``key = value`` file; keys use the long option names."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _apply_config_file(parser: _Parser, args_in: list[str]) -> list[str]:
    """Peel --config off, turn its entries into parser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(args_in)
    if known.config:
        raw = _load_config_file(known.config)
        defaults = {}
        for key, val in raw.items():
            lowered = val.lower()
            if lowered in ("true", "false"):
                defaults[key] = lowered == "true"
            else:
                try:
                    defaults[key] = int(val)
                except ValueError:
                    try:
                        defaults[key] = float(val)
                    except ValueError:
                        defaults[key] = val
        # subcommand parsers re-apply their own defaults over the namespace,
        # so the file's values must land on them as well
        parser.set_defaults(**defaults)
        for sub in getattr(parser, "_gpsel_subparsers", {}).values():
            sub.set_defaults(**defaults)
    return args_in


def build_parser() -> _Parser:
    parser = _Parser(prog="gpsel",
                     description="Gaussian process surrogate modeling with "
                                 "sequential input selection")
    parser.add_argument("--config", help="flat key=value config file")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_fit = sub.add_parser("fit", help="fit a surrogate to a CSV data set")
    p_fit.add_argument("--data", required=True, help="training CSV")
    p_fit.add_argument("--output-col", required=True,
                       help="name of the output column")
    p_fit.add_argument("--model", default=None, help="model file to write")
    p_fit.add_argument("--report", default=None, help="selection report to write")
    p_fit.add_argument("--trace", default=None,
                       help="machine-readable trace (JSON) to write")
    _add_pipeline_options(p_fit)

    p_pred = sub.add_parser("predict", help="predict at query points")
    p_pred.add_argument("--model", required=True, help="fitted model file")
    p_pred.add_argument("--data", required=True, help="query CSV")
    p_pred.add_argument("--out", required=True, help="prediction CSV to write")
    p_pred.add_argument("--uncorrected-mse", action="store_true",
                        help="report the plain kriging variance")

    p_cv = sub.add_parser("cv", help="cross-validate the whole pipeline")
    p_cv.add_argument("--data", required=True)
    p_cv.add_argument("--output-col", required=True)
    p_cv.add_argument("--k", type=int, default=None,
                      help="folds (default: --k-valid)")
    p_cv.add_argument("--report", default=None)
    _add_pipeline_options(p_cv)

    p_bench = sub.add_parser("benchmark",
                             help="replicated analytic benchmark table")
    p_bench.add_argument("--d", default="4,8",
                         help="comma-separated input dimensions (default 4,8)")
    p_bench.add_argument("--replicates", type=int, default=10)
    p_bench.add_argument("--full", action="store_true",
                         help="use the full 50-replicate protocol")
    p_bench.add_argument("--n-test", type=int, default=1000)
    p_bench.add_argument("--variants", default="both",
                         choices=["both", "with", "without"])
    p_bench.add_argument("--out", default=None,
                         help="output prefix for .txt and .csv tables")
    p_bench.add_argument("--quick", action="store_true",
                         help="reduced budgets/test size for a desk check")
    p_bench.add_argument("--omit-timing", action="store_true",
                         help="omit wall time for byte-reproducible output")
    _add_pipeline_options(p_bench)
    parser._gpsel_subparsers = {"fit": p_fit, "predict": p_pred,
                                "cv": p_cv, "benchmark": p_bench}
    return parser


def _cmd_fit(args) -> int:
    cfg = _pipeline_config(args)
    ts = load_csv(args.data, args.output_col)
    model, trace = fit_full(ts, cfg)
    stem = args.model or (os.path.splitext(args.data)[0] + ".model.json")
    report_path = args.report or (os.path.splitext(stem)[0] + ".report.txt")
    trace_path = args.trace or (os.path.splitext(stem)[0] + ".trace.json")
    model.output_name = args.output_col
    model.save(stem)
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(trace.render_report())
    with open(trace_path, "w", encoding="utf-8") as fh:
        json.dump(trace.to_dict(), fh, indent=1)
        fh.write("\n")
    names = trace.input_names
    print(f"final Q2: {trace.final_q2!r} ({trace.final_q2_source})")
    print(f"covariance inputs: {' '.join(names[l] for l in trace.active_cov)}")
    print(f"regression inputs: {' '.join(names[l] for l in trace.active_reg)}")
    print(f"model: {stem}")
    print(f"report: {report_path}")
    return 0


def _cmd_predict(args) -> int:
    model = GpModel.load(args.model)
    try:
        fh = open(args.data, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{args.data}: empty file") from None
        missing = [nm for nm in model.input_names if nm not in header]
        if missing:
            raise DataError(f"{args.data}: missing model input columns: "
                            f"{', '.join(missing)}")
        cols = [header.index(nm) for nm in model.input_names]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                rows.append([float(rec[c]) for c in cols])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{args.data}:{lineno}: {exc}") from None
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["mean", "mse", "lo95", "hi95"])
        if rows:
            results = model.predict_batch(np.asarray(rows), interval=True,
                                          corrected=not args.uncorrected_mse)
            for r in results:
                w.writerow([repr(r.mean), repr(r.mse), repr(r.lo95),
                            repr(r.hi95)])
    print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def _cmd_cv(args) -> int:
    cfg = _pipeline_config(args)
    ts = load_csv(args.data, args.output_col)
    pool = None
    if cfg.n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=cfg.n_jobs)
    try:
        res = cross_validate(ts, cfg, k=args.k, executor=pool)
    finally:
        if pool is not None:
            pool.shutdown()
    print(f"pooled Q2 ({res['k']}-fold, seed {res['seed']}): {res['q2']!r}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(f"gpsel cross-validation report\nseed: {res['seed']}\n"
                     f"folds: {res['k']}\npooled Q2: {res['q2']!r}\n")
    return 0


def _cmd_benchmark(args) -> int:
    try:
        d_list = tuple(int(tok) for tok in args.d.split(",") if tok.strip())
    except ValueError:
        raise DataError(f"--d expects comma-separated integers, got {args.d!r}")
    if not d_list:
        raise DataError("--d gave no dimensions")
    variants = {"both": (VARIANT_WITH, VARIANT_WITHOUT),
                "with": (VARIANT_WITH,),
                "without": (VARIANT_WITHOUT,)}[args.variants]
    replicates = 50 if args.full else args.replicates
    n_test = args.n_test
    cfg = _pipeline_config(args, run_steps_4_5=True)
    if args.quick:
        n_test = min(n_test, 200)
        cfg = PipelineConfig(**{**_cfg_dict(cfg), "max_evals_factor": 100,
                                "k_build": 3})
    protocol = BenchmarkProtocol(d_list=d_list, n_test=n_test,
                                 replicates=replicates, seed=args.seed,
                                 variants=variants)
    pool = None
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=args.jobs)
        cfg = PipelineConfig(**{**_cfg_dict(cfg), "n_jobs": 1})
    else:
        cfg = PipelineConfig(**{**_cfg_dict(cfg), "n_jobs": 1})

    def progress(d, rep, result):
        vals = ", ".join(f"{k}={result[k]:.3f}" for k in variants
                         if result.get(k) is not None)
        print(f"  d={d} replicate {rep + 1}/{replicates}: {vals}",
              file=sys.stderr)

    try:
        rows = run_table1(protocol, cfg, executor=pool, progress=progress)
    finally:
        if pool is not None:
            pool.shutdown()
    table = render_table(rows, omit_timing=args.omit_timing)
    print(table, end="")
    if args.out:
        with open(args.out + ".txt", "w", encoding="utf-8") as fh:
            fh.write(f"seed: {args.seed}\n")
            fh.write(table)
        write_csv(rows, args.out + ".csv", omit_timing=args.omit_timing)
        print(f"wrote {args.out}.txt and {args.out}.csv")
    return 0


def _cfg_dict(cfg: PipelineConfig) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        handler = {"fit": _cmd_fit, "predict": _cmd_predict,
                   "cv": _cmd_cv, "benchmark": _cmd_benchmark}[args.command]
        return handler(args)
    except ModelFormatError as exc:
        print(f"gpsel: model error: {exc}", file=sys.stderr)
        return 4
    except (DataError, OSError) as exc:
        print(f"gpsel: data error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, GpselError) as exc:
        print(f"gpsel: pipeline error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
