"""Post-hoc calibration toolkit for class-incremental classifier streams.

Core pieces: a stream data model with a cross-task calibration buffer,
prototype-based class distance scores, a distance-aware temperature model
with scalar-temperature baselines, task-label-free test-time calibration,
continual calibration metrics, and a synthetic stream generator with known
ground truth.
"""

from ._kernels import BACKEND as kernel_backend
from .calibrators import (
    DatsModel,
    FitDiagnostics,
    ScalarTemperatureModel,
    apply_temperature,
    brier_loss,
    fit_dats,
    fit_single_temperature,
    temperature_for_class,
)
from .metrics import CalibrationReport, TaskMetrics, continual_report, ece, nll, task_metrics
from .prototypes import (
    ClassPrototype,
    DistanceScoreTable,
    SimilarityMatrix,
    assign_distance_scores,
    compute_prototype,
    distance_table_for_task,
    score_buffer_records,
    similarity_matrix,
)
from .stream import (
    CalibrationBuffer,
    SampleRecord,
    TaskDump,
    buffer_class_view,
    ingest_stream,
    ingest_task_dump,
    update_calibration_buffer,
)
from .synth import GroundTruth, SynthConfig, generate_stream, write_stream
from .testtime import (
    AssignmentHistogram,
    RepresentativeSet,
    TestCalibration,
    assign_test_samples,
    calibrate_test_set,
    compute_d_test,
    select_representative,
)

__version__ = "0.1.0"

__all__ = [
    "AssignmentHistogram",
    "CalibrationBuffer",
    "CalibrationReport",
    "ClassPrototype",
    "DatsModel",
    "DistanceScoreTable",
    "FitDiagnostics",
    "GroundTruth",
    "RepresentativeSet",
    "SampleRecord",
    "ScalarTemperatureModel",
    "SimilarityMatrix",
    "SynthConfig",
    "TaskDump",
    "TaskMetrics",
    "TestCalibration",
    "apply_temperature",
    "assign_distance_scores",
    "assign_test_samples",
    "brier_loss",
    "buffer_class_view",
    "calibrate_test_set",
    "compute_d_test",
    "compute_prototype",
    "continual_report",
    "distance_table_for_task",
    "ece",
    "fit_dats",
    "fit_single_temperature",
    "generate_stream",
    "ingest_stream",
    "ingest_task_dump",
    "kernel_backend",
    "nll",
    "score_buffer_records",
    "select_representative",
    "similarity_matrix",
    "task_metrics",
    "temperature_for_class",
    "update_calibration_buffer",
    "write_stream",
]
