"""End-to-end orchestration across a stream's tasks.

Per task: update the calibration buffer, fit the selected calibrator, then
evaluate every test split seen so far, pre- and post-calibration. The loop
stores one report per stage; the end-of-stream stage is the headline result.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import calibrators, metrics, prototypes, testtime
from .errors import DataError, DriftcalError, FitError
from .stream import CalibrationBuffer, ingest_stream, pad_logits, update_calibration_buffer


@dataclass
class EvalTrace:
    """What was applied to one task's test split at one stage."""

    stage: int
    task_id: int
    method: str
    temperature: float
    d_test: float | None = None
    coverage: float | None = None
    representative: tuple | None = None


@dataclass
class StageResult:
    stage: int
    report: metrics.CalibrationReport
    traces: list
    reliability: list  # (task_id, ReliabilityBins) after calibration
    fitted: dict  # JSON-serializable description of the fitted calibrator
    diagnostics: list  # FitDiagnostics for every fit in this stage
    score_table: prototypes.DistanceScoreTable | None = None


@dataclass
class PipelineResult:
    method: str
    stages: list = field(default_factory=list)

    @property
    def final(self):
        return self.stages[-1].report

    @property
    def all_converged(self):
        return all(d.converged for s in self.stages for d in s.diagnostics)


def _logit_matrix(records, width):
    return np.stack([pad_logits(r.logits, width) for r in records])


def _label_vector(records):
    return np.array([r.label for r in records], dtype=np.int64)


def _buffer_arrays(buffer, table, width):
    scored = prototypes.score_buffer_records(buffer, table)
    logits = _logit_matrix([rec for rec, _ in scored], width)
    labels = _label_vector([rec for rec, _ in scored])
    distances = np.array([score for _, score in scored], dtype=np.float64)
    return logits, labels, distances


def _stage_error(stage, task_id, name, exc):
    return DriftcalError(f"task {task_id}, stage {name!r}: {exc}")


def run_pipeline(run_config, dumps=None):
    """Execute the per-task calibration loop for one method over one stream."""
    if dumps is None:
        dumps = ingest_stream(run_config.stream)
    method = run_config.method
    buffer = CalibrationBuffer(
        reserve_fraction=run_config.reserve_fraction, rng_seed=run_config.seed
    )
    result = PipelineResult(method=method)

    for stage, dump in enumerate(dumps):
        width = dump.logit_width
        try:
            buffer = update_calibration_buffer(buffer, dump)
        except DataError as exc:
            raise _stage_error(stage, dump.task_id, "buffer-update", exc) from exc

        diagnostics = []
        table = None
        fitted = {"method": method}

        if method == "dats":
            try:
                table = prototypes.distance_table_for_task(dump, buffer)
            except DataError as exc:
                raise _stage_error(stage, dump.task_id, "distance-scores", exc) from exc
            try:
                logits, labels, distances = _buffer_arrays(buffer, table, width)
                model, diag = calibrators.fit_dats(logits, labels, distances)
            except (DataError, FitError) as exc:
                raise _stage_error(stage, dump.task_id, "distance-aware-fit", exc) from exc
            diagnostics.append(diag)
            fitted["model"] = json.loads(model.to_json())
            fitted["scores"] = table.to_json_dict()
        elif method == "ts":
            try:
                model, diag = calibrators.fit_single_temperature(
                    _logit_matrix(dump.val_records, width),
                    _label_vector(dump.val_records),
                    source="current_val",
                    loss=run_config.baseline_loss,
                )
            except (DataError, FitError) as exc:
                raise _stage_error(stage, dump.task_id, "single-temperature-fit", exc) from exc
            diagnostics.append(diag)
            fitted["model"] = json.loads(model.to_json())
        elif method == "rc":
            pairs = buffer.records_with_class()
            records = [rec for rec, _ in pairs]
            try:
                model, diag = calibrators.fit_single_temperature(
                    _logit_matrix(records, width),
                    _label_vector(records),
                    source="calibration_buffer",
                    loss=run_config.baseline_loss,
                )
            except (DataError, FitError) as exc:
                raise _stage_error(stage, dump.task_id, "buffer-temperature-fit", exc) from exc
            diagnostics.append(diag)
            fitted["model"] = json.loads(model.to_json())
        elif method == "per_task_oracle":
            oracle_temps = {}
            for past in dumps[: stage + 1]:
                try:
                    m, diag = calibrators.fit_single_temperature(
                        _logit_matrix(past.val_records, width),
                        _label_vector(past.val_records),
                        source="per_task_oracle",
                        loss=run_config.baseline_loss,
                    )
                except (DataError, FitError) as exc:
                    raise _stage_error(stage, past.task_id, "oracle-temperature-fit", exc) from exc
                diagnostics.append(diag)
                oracle_temps[past.task_id] = m.temperature
            fitted["temperatures"] = {str(k): v for k, v in oracle_temps.items()}

        pre_metrics, post_metrics, traces, reliability = [], [], [], []
        for past in dumps[: stage + 1]:
            if not past.test_records:
                continue
            test_logits = _logit_matrix(past.test_records, width)
            test_labels = _label_vector(past.test_records)
            pre_probs = calibrators.apply_temperature(test_logits, 1.0)
            pre_metrics.append(
                metrics.task_metrics(pre_probs, test_labels, past.task_id, run_config.bins)
            )

            if method == "uncalibrated":
                temperature = 1.0
                post_probs = pre_probs
                trace = EvalTrace(stage, past.task_id, method, temperature)
            elif method == "dats":
                try:
                    cal, post_probs = testtime.calibrate_test_set(
                        past.test_records, model, table, run_config.threshold, width=width
                    )
                except DataError as exc:
                    raise _stage_error(stage, past.task_id, "testtime-calibration", exc) from exc
                trace = EvalTrace(
                    stage,
                    past.task_id,
                    method,
                    cal.temperature,
                    d_test=cal.d_test,
                    coverage=cal.representative.coverage_achieved,
                    representative=cal.representative.classes,
                )
            elif method == "per_task_oracle":
                temperature = oracle_temps[past.task_id]
                post_probs = calibrators.apply_temperature(test_logits, temperature)
                trace = EvalTrace(stage, past.task_id, method, temperature)
            else:  # ts, rc
                temperature = model.temperature
                post_probs = calibrators.apply_temperature(test_logits, temperature)
                trace = EvalTrace(stage, past.task_id, method, temperature)

            task_post = metrics.task_metrics(
                post_probs, test_labels, past.task_id, run_config.bins
            )
            post_metrics.append(task_post)
            traces.append(trace)
            conf = np.max(post_probs, axis=1)
            correct = np.argmax(post_probs, axis=1) == test_labels
            _, bins = metrics.ece(conf, correct, run_config.bins)
            reliability.append((past.task_id, bins))

        if not pre_metrics:
            raise _stage_error(stage, dump.task_id, "evaluation", "no test splits to evaluate")
        report = metrics.continual_report(pre_metrics, post_metrics, method)
        result.stages.append(
            StageResult(
                stage=stage,
                report=report,
                traces=traces,
                reliability=reliability,
                fitted=fitted,
                diagnostics=diagnostics,
                score_table=table,
            )
        )

    return result


def evaluate_from_fitted(run_config, fitted, dumps=None, threshold=None, bins=None):
    """Recompute the end-of-stream report from a persisted fit.

    Replays ingestion, buffer updates and distance scoring (cheap, seeded)
    but reuses the fitted calibrator, so threshold and bin ablations skip
    the optimization entirely.
    """
    if dumps is None:
        dumps = ingest_stream(run_config.stream)
    method = fitted["method"]
    threshold = run_config.threshold if threshold is None else threshold
    bins = run_config.bins if bins is None else bins

    buffer = CalibrationBuffer(
        reserve_fraction=run_config.reserve_fraction, rng_seed=run_config.seed
    )
    for dump in dumps:
        buffer = update_calibration_buffer(buffer, dump)
    last = dumps[-1]
    width = last.logit_width

    table = None
    model = None
    oracle_temps = None
    if method == "dats":
        table = prototypes.distance_table_for_task(last, buffer)
        model = calibrators.DatsModel.from_json(json.dumps(fitted["model"]))
    elif method in ("ts", "rc"):
        model = calibrators.ScalarTemperatureModel.from_json(json.dumps(fitted["model"]))
    elif method == "per_task_oracle":
        oracle_temps = {int(k): float(v) for k, v in fitted["temperatures"].items()}

    pre_metrics, post_metrics, traces, reliability = [], [], [], []
    stage = len(dumps) - 1
    for past in dumps:
        if not past.test_records:
            continue
        test_logits = _logit_matrix(past.test_records, width)
        test_labels = _label_vector(past.test_records)
        pre_probs = calibrators.apply_temperature(test_logits, 1.0)
        pre_metrics.append(metrics.task_metrics(pre_probs, test_labels, past.task_id, bins))

        if method == "uncalibrated":
            post_probs = pre_probs
            trace = EvalTrace(stage, past.task_id, method, 1.0)
        elif method == "dats":
            cal, post_probs = testtime.calibrate_test_set(
                past.test_records, model, table, threshold, width=width
            )
            trace = EvalTrace(
                stage,
                past.task_id,
                method,
                cal.temperature,
                d_test=cal.d_test,
                coverage=cal.representative.coverage_achieved,
                representative=cal.representative.classes,
            )
        elif method == "per_task_oracle":
            t = oracle_temps[past.task_id]
            post_probs = calibrators.apply_temperature(test_logits, t)
            trace = EvalTrace(stage, past.task_id, method, t)
        else:
            post_probs = calibrators.apply_temperature(test_logits, model.temperature)
            trace = EvalTrace(stage, past.task_id, method, model.temperature)

        post_metrics.append(metrics.task_metrics(post_probs, test_labels, past.task_id, bins))
        traces.append(trace)
        conf = np.max(post_probs, axis=1)
        correct = np.argmax(post_probs, axis=1) == test_labels
        _, rbins = metrics.ece(conf, correct, bins)
        reliability.append((past.task_id, rbins))

    report = metrics.continual_report(pre_metrics, post_metrics, method)
    return StageResult(
        stage=stage,
        report=report,
        traces=traces,
        reliability=reliability,
        fitted=fitted,
        diagnostics=[],
        score_table=table,
    )
