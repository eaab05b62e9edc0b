"""Temperature calibrators.

The distance-aware model assigns each seen class the temperature
T(d_c) = t_base + w_c * d_c and is fit by minimizing the summed Brier score
of softmax(z_i / T_i) over the calibration buffer, where T_i is the
temperature of sample i's own true class. Baselines fit one scalar
temperature by NLL (optionally Brier): on the current validation set, on
the calibration buffer, or per task as a reporting oracle.

All temperatures are floored at TEMPERATURE_FLOOR, enforced by projecting
every optimizer iterate.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import optim
from ._kernels import brier_loss_dtemp, nll_loss_dtemp, softmax
from .errors import ConvergenceWarning, DataError, FitError, TemperatureFloorError

TEMPERATURE_FLOOR = 1e-3

FIT_SOURCES = ("current_val", "calibration_buffer", "per_task_oracle")


@dataclass(frozen=True)
class DatsModel:
    t_base: float
    weights: dict  # class id -> w_c
    class_distances: dict  # class id -> d_c in [0, 1]
    temperature_floor: float = TEMPERATURE_FLOOR

    def to_json(self):
        classes = {
            str(c): {"w": self.weights[c], "d": self.class_distances[c]} for c in self.weights
        }
        return json.dumps(
            {"t_base": self.t_base, "floor": self.temperature_floor, "classes": classes},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(
            t_base=float(raw["t_base"]),
            weights={int(c): float(v["w"]) for c, v in raw["classes"].items()},
            class_distances={int(c): float(v["d"]) for c, v in raw["classes"].items()},
            temperature_floor=float(raw["floor"]),
        )


@dataclass(frozen=True)
class ScalarTemperatureModel:
    temperature: float
    fit_source: str

    def to_json(self):
        return json.dumps(
            {"temperature": self.temperature, "source": self.fit_source}, indent=2, sort_keys=True
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(temperature=float(raw["temperature"]), fit_source=str(raw["source"]))


@dataclass(frozen=True)
class FitDiagnostics:
    initial_loss: float
    final_loss: float
    iterations: int
    converged: bool
    gradient_norm_final: float


def temperature_for_class(model, class_id):
    """T(d_c) for one class, floored."""
    if class_id not in model.weights:
        raise FitError(f"class {class_id} not covered by the fitted model")
    t = model.t_base + model.weights[class_id] * model.class_distances[class_id]
    return max(t, model.temperature_floor)


def _per_sample_temperatures(labels, distances, t_base, weights):
    y = np.asarray(labels)
    d = np.asarray(distances, dtype=np.float64)
    w = np.array([weights[int(c)] for c in y], dtype=np.float64)
    return t_base + w * d


def brier_loss(logits, labels, distances, t_base, weights, floor=TEMPERATURE_FLOOR):
    """Summed squared error between one-hot labels and tempered softmax outputs.

    Each sample's full logit vector is divided by the scalar temperature of
    its own true class, t_base + w_{c(i)} * d_i.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    d = np.asarray(distances, dtype=np.float64)
    if not (z.shape[0] == y.shape[0] == d.shape[0]) or z.shape[0] == 0:
        raise DataError("logits, labels and distances must be equally long and non-empty")
    temps = _per_sample_temperatures(y, d, t_base, weights)
    if np.any(temps < floor):
        bad = int(y[np.argmin(temps)])
        raise TemperatureFloorError(
            f"temperature {temps.min():.3g} of class {bad} is below the floor {floor}"
        )
    loss, _ = brier_loss_dtemp(z, y, temps)
    return loss


def _check_fit_inputs(logits, labels):
    z = np.ascontiguousarray(logits, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] != y.shape[0] or z.shape[0] == 0:
        raise DataError("need a non-empty (n, k) logit matrix aligned with labels")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise DataError("labels must index into the logit width")
    return z, y


def fit_dats(buffer_logits, buffer_labels, buffer_distances, floor=TEMPERATURE_FLOOR,
             max_iter=optim.MAX_ITER):
    """Fit (t_base, w_c per class) on the calibration buffer by Brier score.

    Distances must be constant within each class; classes present are taken
    from the labels. Starts at the identity calibrator (t_base=1, w=0).
    """
    z, y = _check_fit_inputs(buffer_logits, buffer_labels)
    d = np.ascontiguousarray(buffer_distances, dtype=np.float64)
    if d.shape[0] != y.shape[0]:
        raise DataError("distances must align with labels")
    if np.any(d < 0.0) or np.any(d > 1.0):
        raise DataError("distances must lie in [0, 1]")

    class_ids = np.unique(y)
    if class_ids.size < 2:
        raise FitError("distance-aware fit needs at least two classes in the buffer")
    class_dist = np.empty(class_ids.size)
    slot_of = {int(c): i for i, c in enumerate(class_ids)}
    for c, i in slot_of.items():
        vals = d[y == c]
        if np.ptp(vals) != 0.0:
            raise DataError(f"distance score varies within class {c}")
        class_dist[i] = vals[0]
    sample_slot = np.array([slot_of[int(c)] for c in y], dtype=np.int64)

    def project(x):
        x = x.copy()
        x[0] = max(x[0], floor)
        w = x[1:]
        pos = class_dist > 0.0
        w[pos] = np.maximum(w[pos], (floor - x[0]) / class_dist[pos])
        return x

    def fun_grad(x):
        temps = x[0] + x[1:][sample_slot] * d
        loss, dldt = brier_loss_dtemp(z, y, temps)
        grad = np.empty_like(x)
        grad[0] = dldt.sum()
        grad[1:] = np.bincount(sample_slot, weights=dldt * d, minlength=class_ids.size)
        return loss, grad

    x0 = np.zeros(1 + class_ids.size)
    x0[0] = 1.0
    res = optim.minimize(fun_grad, x0, project=project, max_iter=max_iter)
    if not res.converged:
        warnings.warn(
            f"distance-aware fit stopped at {res.iterations} iterations "
            f"(grad norm {res.grad_norm:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    model = DatsModel(
        t_base=float(res.x[0]),
        weights={int(c): float(res.x[1 + i]) for i, c in enumerate(class_ids)},
        class_distances={int(c): float(class_dist[i]) for i, c in enumerate(class_ids)},
        temperature_floor=floor,
    )
    diag = FitDiagnostics(
        initial_loss=res.initial_loss,
        final_loss=res.final_loss,
        iterations=res.iterations,
        converged=res.converged,
        gradient_norm_final=res.grad_norm,
    )
    return model, diag


def fit_single_temperature(logits, labels, source, loss="nll", floor=TEMPERATURE_FLOOR,
                           max_iter=optim.MAX_ITER):
    """Fit one scalar temperature by NLL (default) or Brier score."""
    if source not in FIT_SOURCES:
        raise DataError(f"fit source must be one of {FIT_SOURCES}, got {source!r}")
    if loss not in ("nll", "brier"):
        raise DataError(f"loss must be nll or brier, got {loss!r}")
    z, y = _check_fit_inputs(logits, labels)
    if np.unique(y).size < 2:
        raise FitError("single-temperature fit needs at least two distinct labels")
    kernel = nll_loss_dtemp if loss == "nll" else brier_loss_dtemp
    ones = np.ones(z.shape[0])

    def project(x):
        return np.maximum(x, floor)

    def fun_grad(x):
        lval, dldt = kernel(z, y, ones * x[0])
        return lval, np.array([dldt.sum()])

    res = optim.minimize(fun_grad, np.array([1.0]), project=project, max_iter=max_iter)
    if not res.converged:
        warnings.warn(
            f"single-temperature fit stopped at {res.iterations} iterations "
            f"(grad norm {res.grad_norm:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    model = ScalarTemperatureModel(temperature=float(res.x[0]), fit_source=source)
    diag = FitDiagnostics(
        initial_loss=res.initial_loss,
        final_loss=res.final_loss,
        iterations=res.iterations,
        converged=res.converged,
        gradient_norm_final=res.grad_norm,
    )
    return model, diag


def apply_temperature(logits, temperature):
    """softmax(z / T) row-wise; positive scaling, argmax preserved."""
    if temperature <= 0.0:
        raise TemperatureFloorError(f"temperature must be positive, got {temperature}")
    return softmax(np.asarray(logits, dtype=np.float64), float(temperature))
