"""Command line interface.

Subcommands:
  generate   build a synthetic stream from a config file
  calibrate  run the per-task calibration loop for one method
  evaluate   recompute reports from a persisted run without refitting
  report     aggregate several run directories into combined CSVs

Exit codes: 0 success, 2 config error, 3 data error, 4 non-convergence
under --strict (otherwise a warning).
"""

import argparse
import csv
import json
import os
import sys

from . import metrics, pipeline, synth
from .config import METHODS, load_run_config, load_synth_config
from .errors import ConfigError, DataError, DriftcalError


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path, fieldnames, rows):
    import io

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def emit_report(stage_result, out_dir, bins_label=None):
    """Write report JSON, flat CSV, reliability-bin CSV and temperature CSV."""
    os.makedirs(out_dir, exist_ok=True)
    report = stage_result.report
    _atomic_write_text(os.path.join(out_dir, "report.json"), report.to_json() + "\n")
    _write_csv(
        os.path.join(out_dir, "report.csv"),
        ["task_id", "method", "acc", "nll", "ece_pre", "ece_post", "delta_ece"],
        report.csv_rows(),
    )
    rel_rows = []
    for task_id, rbins in stage_result.reliability:
        rel_rows.extend(metrics.reliability_csv_rows(rbins, task_id, report.method_name))
    _write_csv(
        os.path.join(out_dir, "reliability_bins.csv"),
        ["task_id", "method", "bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"],
        rel_rows,
    )
    temp_rows = []
    for tr in stage_result.traces:
        temp_rows.append(
            {
                "stage": tr.stage,
                "task_id": tr.task_id,
                "method": tr.method,
                "temperature": tr.temperature,
                "d_test": "" if tr.d_test is None else tr.d_test,
                "coverage": "" if tr.coverage is None else tr.coverage,
                "representative_classes": ""
                if tr.representative is None
                else " ".join(str(c) for c in tr.representative),
            }
        )
    _write_csv(
        os.path.join(out_dir, "temperatures.csv"),
        ["stage", "task_id", "method", "temperature", "d_test", "coverage", "representative_classes"],
        temp_rows,
    )


def cmd_generate(args):
    cfg, out_dir, stream_id = load_synth_config(args.config)
    dumps, truth = synth.generate_stream(cfg)
    synth.write_stream(dumps, out_dir, ground_truth=truth, stream_id=stream_id)
    print(f"wrote stream {stream_id!r} ({len(dumps)} tasks) to {out_dir}")
    return 0


def cmd_calibrate(args):
    run_cfg = load_run_config(args.config, method_override=args.method)
    result = pipeline.run_pipeline(run_cfg)
    out_dir = run_cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write_text(
        os.path.join(out_dir, "run_config.json"),
        json.dumps(
            {
                "stream": run_cfg.stream,
                "method": run_cfg.method,
                "threshold": run_cfg.threshold,
                "reserve_fraction": run_cfg.reserve_fraction,
                "bins": run_cfg.bins,
                "seed": run_cfg.seed,
                "baseline_loss": run_cfg.baseline_loss,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    final_stage = result.stages[-1]
    emit_report(final_stage, out_dir)
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    inter_dir = os.path.join(out_dir, "intermediate")
    os.makedirs(inter_dir, exist_ok=True)
    for stage_result in result.stages:
        _atomic_write_text(
            os.path.join(models_dir, f"stage_{stage_result.stage:03d}.json"),
            json.dumps(stage_result.fitted, indent=2, sort_keys=True) + "\n",
        )
        if stage_result is not final_stage:
            # mid-stream snapshots; the headline numbers are the final report
            _atomic_write_text(
                os.path.join(inter_dir, f"report_after_task_{stage_result.stage:03d}.json"),
                stage_result.report.to_json() + "\n",
            )
    print(
        f"method={run_cfg.method} aece={final_stage.report.aece:.4f} "
        f"delta_lece={final_stage.report.delta_lece:+.4f} "
        f"max_delta_ece={final_stage.report.max_delta_ece:+.4f} -> {out_dir}"
    )
    if not result.all_converged:
        print("warning: at least one fit did not converge", file=sys.stderr)
        if args.strict:
            return 4
    return 0


def cmd_evaluate(args):
    run_dir = args.run
    cfg_path = os.path.join(run_dir, "run_config.json")
    try:
        with open(cfg_path, "r", encoding="utf-8") as fh:
            saved = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {cfg_path}: {exc}") from exc
    from .config import RunConfig

    run_cfg = RunConfig(out_dir=run_dir, **saved)
    stages = sorted(os.listdir(os.path.join(run_dir, "models")))
    if not stages:
        raise DataError(f"{run_dir}/models is empty")
    with open(os.path.join(run_dir, "models", stages[-1]), "r", encoding="utf-8") as fh:
        fitted = json.load(fh)
    stage_result = pipeline.evaluate_from_fitted(
        run_cfg, fitted, threshold=args.threshold, bins=args.bins
    )
    label = []
    if args.threshold is not None:
        label.append(f"threshold_{args.threshold:g}")
    if args.bins is not None:
        label.append(f"bins_{args.bins}")
    out_dir = os.path.join(run_dir, "eval_" + "_".join(label) if label else "eval_default")
    emit_report(stage_result, out_dir)
    print(
        f"method={fitted['method']} aece={stage_result.report.aece:.4f} "
        f"delta_lece={stage_result.report.delta_lece:+.4f} -> {out_dir}"
    )
    return 0


def cmd_report(args):
    rows = []
    summary = []
    temp_rows = []
    for run_dir in args.runs:
        path = os.path.join(run_dir, "report.json")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                rep = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        for pre, post in zip(rep["per_task_pre"], rep["per_task_post"]):
            rows.append(
                {
                    "task_id": post["task_id"],
                    "method": rep["method"],
                    "acc": post["accuracy"],
                    "nll": post["nll"],
                    "ece_pre": pre["ece"],
                    "ece_post": post["ece"],
                    "delta_ece": post["ece"] - pre["ece"],
                }
            )
        summary.append(
            {
                "method": rep["method"],
                "avg_acc": rep["avg_acc"],
                "avg_nll": rep["avg_nll"],
                "aece": rep["aece"],
                "delta_lece": rep["delta_lece"],
                "max_delta_ece": rep["max_delta_ece"],
                "run_dir": run_dir,
            }
        )
        temps_path = os.path.join(run_dir, "temperatures.csv")
        if os.path.exists(temps_path):
            with open(temps_path, "r", encoding="utf-8", newline="") as fh:
                for trow in csv.DictReader(fh):
                    trow["run_dir"] = run_dir
                    temp_rows.append(trow)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "combined_report.csv"),
        ["task_id", "method", "acc", "nll", "ece_pre", "ece_post", "delta_ece"],
        rows,
    )
    _write_csv(
        os.path.join(args.out, "summary.csv"),
        ["method", "avg_acc", "avg_nll", "aece", "delta_lece", "max_delta_ece", "run_dir"],
        summary,
    )
    if temp_rows:
        _write_csv(
            os.path.join(args.out, "combined_temperatures.csv"),
            list(temp_rows[0].keys()),
            temp_rows,
        )
    print(f"aggregated {len(args.runs)} runs into {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="driftcal",
        description="Distance-aware temperature scaling for class-incremental streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a synthetic stream")
    p_gen.add_argument("--config", required=True, help="synthetic stream config file")
    p_gen.set_defaults(func=cmd_generate)

    p_cal = sub.add_parser("calibrate", help="fit a calibrator and evaluate the stream")
    p_cal.add_argument("--config", required=True, help="run config file")
    p_cal.add_argument("--method", choices=METHODS, default=None, help="override config method")
    p_cal.add_argument("--strict", action="store_true", help="treat non-convergence as an error")
    p_cal.set_defaults(func=cmd_calibrate)

    p_eval = sub.add_parser("evaluate", help="recompute reports from a persisted run")
    p_eval.add_argument("--run", required=True, help="run directory from `calibrate`")
    p_eval.add_argument("--threshold", type=float, default=None, help="coverage threshold")
    p_eval.add_argument("--bins", type=int, default=None, help="reliability bin count")
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("report", help="aggregate run directories")
    p_rep.add_argument("--runs", nargs="+", required=True, help="run directories")
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DriftcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
