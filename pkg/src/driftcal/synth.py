"""Synthetic class-incremental streams with known calibration ground truth.

Each class is a Gaussian cluster around a unit-sphere mean and every sample
is labeled with its cluster. Calibrated logits are scaled cosine
similarities to the class means, arranged so the own class ranks first;
with probability 1 - p_max (or always, for the forgetting fraction) the
own-class logit is swapped with the runner-up, making the sample
confidently wrong while preserving its max probability. Every confidence
bin then has accuracy equal to its confidence, so the emitted logits
z = m_t * z_cal are optimally recalibrated by exactly T = m_t, per task
and per class. Forgetting noise degrades accuracy and raises the optimal
temperature above m_t without touching confidence.

All logits carry a constant per-sample offset (8 * alpha, scaled with m_t).
Softmax is shift-invariant, so probabilities and optimal temperatures are
unchanged, but right-zero-padding of old-task logits stays numerically
inert at any applied temperature.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .stream import MANIFEST_NAME, SampleRecord, TaskDump

MEAN_MIN_DIST = 1.2  # chord floor between uniform means / task centers
WITHIN_TASK_CHORD = 0.71  # chord between same-task means in grouped layout
MEAN_MAX_TRIES = 4000
MEDIAN_CONFIDENCE_TARGET = 0.8
GROUND_TRUTH_NAME = "ground_truth.json"
LAYOUTS = ("grouped", "uniform")


@dataclass(frozen=True)
class SynthConfig:
    n_tasks: int
    classes_per_task: int
    samples_per_class_val: int
    samples_per_class_test: int
    embedding_dim: int
    cluster_separation: float
    true_temperature_per_task: tuple
    forgetting_noise_per_task: tuple
    seed: int
    task_layout: str = "grouped"
    confidence_target_per_task: tuple | None = None

    def __post_init__(self):
        if self.n_tasks < 1 or self.classes_per_task < 1:
            raise DataError("need at least one task and one class per task")
        if self.samples_per_class_val < 1:
            raise DataError("need at least one validation sample per class")
        if self.cluster_separation <= 0:
            raise DataError("cluster_separation must be positive")
        if len(self.true_temperature_per_task) != self.n_tasks:
            raise DataError("true_temperature_per_task must list one value per task")
        if len(self.forgetting_noise_per_task) != self.n_tasks:
            raise DataError("forgetting_noise_per_task must list one value per task")
        if any(m <= 0 for m in self.true_temperature_per_task):
            raise DataError("per-task temperatures must be positive")
        if any(not (0.0 <= f < 1.0) for f in self.forgetting_noise_per_task):
            raise DataError("forgetting noise must lie in [0, 1)")
        if self.task_layout not in LAYOUTS:
            raise DataError(f"task_layout must be one of {LAYOUTS}")
        if self.task_layout == "grouped" and self.embedding_dim < 4:
            raise DataError("grouped layout needs embedding_dim >= 4")
        if self.confidence_target_per_task is not None:
            if len(self.confidence_target_per_task) != self.n_tasks:
                raise DataError("confidence_target_per_task must list one value per task")
            if any(not (0.5 < c < 0.995) for c in self.confidence_target_per_task):
                raise DataError("confidence targets must lie in (0.5, 0.995)")

    @property
    def confidence_targets(self):
        if self.confidence_target_per_task is None:
            return tuple(MEDIAN_CONFIDENCE_TARGET for _ in range(self.n_tasks))
        return tuple(float(c) for c in self.confidence_target_per_task)


@dataclass(frozen=True)
class GroundTruth:
    class_means: dict  # class id -> unit mean vector
    per_task_temperature: tuple
    corrupted_fraction: tuple
    sigma: float
    alpha_per_task: tuple  # per-task logit sharpness
    beta: float
    mean_min_distance: float

    def to_json(self):
        return json.dumps(
            {
                "class_means": {str(c): list(map(float, v)) for c, v in self.class_means.items()},
                "per_task_temperature": list(self.per_task_temperature),
                "corrupted_fraction": list(self.corrupted_fraction),
                "sigma": self.sigma,
                "alpha_per_task": list(self.alpha_per_task),
                "beta": self.beta,
                "mean_min_distance": self.mean_min_distance,
            },
            indent=2,
            sort_keys=True,
        )


def _sample_separated_units(count, dim, rng, min_chord):
    """Greedy rejection sampling of unit vectors with a pairwise distance floor."""
    means = []
    tries = 0
    while len(means) < count:
        if tries >= MEAN_MAX_TRIES:
            raise DataError(
                f"could not place {count} unit vectors at pairwise distance "
                f">= {min_chord} in {dim} dims; increase embedding_dim"
            )
        tries += 1
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(np.linalg.norm(v - m) >= min_chord for m in means):
            means.append(v)
    return np.stack(means)


def _spread_task_centers(n_tasks, dim, rng):
    """Maximally spread unit vectors: a randomly rotated regular simplex.

    Pairwise cosine is -1/(n_tasks - 1), pushing cross-task softmax tails
    to the 1e-4 level. Falls back to rejection sampling when the dimension
    cannot host the simplex.
    """
    if n_tasks == 1:
        v = rng.standard_normal(dim)
        return (v / np.linalg.norm(v))[None, :]
    if n_tasks > dim:
        return _sample_separated_units(n_tasks, dim, rng, MEAN_MIN_DIST)
    corners = np.eye(n_tasks)
    corners = corners - corners.mean(axis=0)
    corners /= np.linalg.norm(corners, axis=1, keepdims=True)
    q, _ = np.linalg.qr(rng.standard_normal((dim, n_tasks)))
    return corners @ q.T


def _grouped_class_means(n_tasks, classes_per_task, dim, rng):
    """Same-task means share a tight neighborhood around a task center.

    Off-top probability then concentrates in the within-task runner-up,
    which keeps the per-class optimal temperatures at their designed values
    (heavy softmax tails would bias them otherwise).
    """
    centers = _spread_task_centers(n_tasks, dim, rng)
    means = []
    for t in range(n_tasks):
        center = centers[t]
        basis = []
        while len(basis) < 2:
            v = rng.standard_normal(dim)
            v -= (v @ center) * center
            for b in basis:
                v -= (v @ b) * b
            norm = np.linalg.norm(v)
            if norm > 1e-6:
                basis.append(v / norm)
        if classes_per_task == 1:
            means.append(center)
            continue
        # ring radius chosen so adjacent members sit at the target chord
        r = WITHIN_TASK_CHORD / (2.0 * math.sin(math.pi / classes_per_task))
        for j in range(classes_per_task):
            theta = 2.0 * math.pi * j / classes_per_task
            v = center + r * (math.cos(theta) * basis[0] + math.sin(theta) * basis[1])
            means.append(v / np.linalg.norm(v))
    return np.stack(means)


def _cosine_to_means(emb, means):
    e = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    m = means / np.linalg.norm(means, axis=1, keepdims=True)
    return e @ m.T


def _max_prob(cos_rows, alpha):
    u = alpha * cos_rows
    u = u - u.max(axis=1, keepdims=True)
    e = np.exp(u)
    return (e / e.sum(axis=1, keepdims=True)).max(axis=1)


def _calibrate_alpha(cos_blocks, target=MEDIAN_CONFIDENCE_TARGET):
    """Bisect the logit scale so the pooled median max-probability hits the target."""
    lo, hi = 1e-2, 1e4
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        med = float(np.median(np.concatenate([_max_prob(b, mid) for b in cos_blocks])))
        if med < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def generate_stream(config):
    """Build the stream's TaskDumps and the GroundTruth that explains them."""
    n_classes = config.n_tasks * config.classes_per_task
    rng_means = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    if config.task_layout == "grouped":
        means = _grouped_class_means(
            config.n_tasks, config.classes_per_task, config.embedding_dim, rng_means
        )
    else:
        means = _sample_separated_units(
            n_classes, config.embedding_dim, rng_means, MEAN_MIN_DIST
        )
    dists = [
        np.linalg.norm(means[i] - means[j])
        for i in range(n_classes)
        for j in range(i + 1, n_classes)
    ]
    min_dist = float(min(dists)) if dists else MEAN_MIN_DIST
    sigma = min_dist / config.cluster_separation

    # phase 1: embeddings per (task, split, class), deterministic child seeds
    split_sizes = {"val": config.samples_per_class_val, "test": config.samples_per_class_test}
    embeddings = {}
    for t in range(config.n_tasks):
        for s_idx, split in enumerate(("val", "test")):
            for j in range(config.classes_per_task):
                c = t * config.classes_per_task + j
                n = split_sizes[split]
                if n == 0:
                    embeddings[(t, split, c)] = np.empty((0, config.embedding_dim))
                    continue
                rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1, t, s_idx, c]))
                embeddings[(t, split, c)] = means[c] + sigma * rng.standard_normal(
                    (n, config.embedding_dim)
                )

    # phase 2: per-task logit sharpness hitting the confidence targets
    targets = config.confidence_targets
    alphas = []
    for t in range(config.n_tasks):
        width = (t + 1) * config.classes_per_task
        cos_blocks = []
        for split in ("val", "test"):
            for j in range(config.classes_per_task):
                c = t * config.classes_per_task + j
                emb = embeddings[(t, split, c)]
                if emb.shape[0]:
                    cos_blocks.append(_cosine_to_means(emb, means[:width]))
        alphas.append(_calibrate_alpha(cos_blocks, target=targets[t]))
    beta = 8.0 * max(alphas)

    # phase 3: correctness channel via own-vs-runner-up logit swaps
    dumps = []
    for t in range(config.n_tasks):
        width = (t + 1) * config.classes_per_task
        task_classes = tuple(range(t * config.classes_per_task, width))
        m_t = float(config.true_temperature_per_task[t])
        eta = float(config.forgetting_noise_per_task[t])
        alpha_t = alphas[t]
        val, test = [], []
        for s_idx, (split, sink) in enumerate((("val", val), ("test", test))):
            for j, c in enumerate(task_classes):
                emb = embeddings[(t, split, c)]
                n = emb.shape[0]
                if not n:
                    continue
                z_cal = alpha_t * _cosine_to_means(emb, means[:width]) + beta
                rows = np.arange(n)
                # correct-looking version: own class moved to the argmax slot
                top = np.argmax(z_cal, axis=1)
                fix = rows[top != c]
                own = z_cal[fix, c].copy()
                z_cal[fix, c] = z_cal[fix, top[fix]]
                z_cal[fix, top[fix]] = own
                masked = z_cal.copy()
                masked[:, c] = -np.inf
                runner_up = np.argmax(masked, axis=1)
                # correctness probability placing the temperature optimum at
                # exactly m_t: a = (E_p[z] - z_second) / (z_top - z_second)
                u = z_cal - z_cal.max(axis=1, keepdims=True)
                p = np.exp(u)
                p /= p.sum(axis=1, keepdims=True)
                mean_logit = np.sum(p * z_cal, axis=1)
                z_top = z_cal[rows, c]
                z_sec = z_cal[rows, runner_up]
                gap = np.maximum(z_top - z_sec, 1e-12)
                a = np.clip((mean_logit - z_sec) / gap, 0.0, 1.0)
                rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2, t, s_idx, c]))
                wrong = rows[rng.random(n) >= (1.0 - eta) * a]
                own = z_cal[wrong, c].copy()
                z_cal[wrong, c] = z_cal[wrong, runner_up[wrong]]
                z_cal[wrong, runner_up[wrong]] = own
                logits = m_t * z_cal
                for i in range(n):
                    sink.append(
                        SampleRecord(
                            sample_id=f"t{t:02d}-{split}-c{c:03d}-{i:05d}",
                            task_id=t,
                            split=split,
                            label=int(c),
                            logits=logits[i].copy(),
                            embedding=emb[i].copy(),
                        )
                    )
        val.sort(key=lambda r: r.sample_id)
        test.sort(key=lambda r: r.sample_id)
        dumps.append(
            TaskDump(
                task_id=t,
                class_set=task_classes,
                logit_width=width,
                val_records=tuple(val),
                test_records=tuple(test),
            )
        )

    truth = GroundTruth(
        class_means={c: means[c] for c in range(n_classes)},
        per_task_temperature=tuple(float(m) for m in config.true_temperature_per_task),
        corrupted_fraction=tuple(float(f) for f in config.forgetting_noise_per_task),
        sigma=float(sigma),
        alpha_per_task=tuple(float(a) for a in alphas),
        beta=float(beta),
        mean_min_distance=min_dist,
    )
    return dumps, truth


def _record_line(rec):
    return json.dumps(
        {
            "id": rec.sample_id,
            "split": rec.split,
            "label": int(rec.label),
            "logits": [float(v) for v in rec.logits],
            "embedding": [float(v) for v in rec.embedding],
        }
    )


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_stream(dumps, out_dir, ground_truth=None, stream_id="synthetic"):
    """Write manifest + per-task JSONL files; lines sorted by record id."""
    if not dumps:
        raise DataError("cannot write an empty stream")
    os.makedirs(out_dir, exist_ok=True)
    emb_dim = dumps[0].records[0].embedding.shape[0]
    tasks = []
    for dump in dumps:
        fname = f"task_{dump.task_id:03d}.jsonl"
        records = sorted(dump.records, key=lambda r: r.sample_id)
        _atomic_write(
            os.path.join(out_dir, fname),
            "".join(_record_line(r) + "\n" for r in records),
        )
        tasks.append(
            {
                "task_id": dump.task_id,
                "class_set": list(dump.class_set),
                "logit_width": dump.logit_width,
                "file": fname,
            }
        )
    manifest = {"stream_id": stream_id, "embedding_dim": int(emb_dim), "tasks": tasks}
    _atomic_write(
        os.path.join(out_dir, MANIFEST_NAME), json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    if ground_truth is not None:
        _atomic_write(os.path.join(out_dir, GROUND_TRUTH_NAME), ground_truth.to_json() + "\n")
    return out_dir
