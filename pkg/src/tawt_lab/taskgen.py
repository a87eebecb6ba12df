"""Synthetic teacher-student task family.

Pipeline: draw a base dataset with uniform features on [-0.5, 0.5]^d and
uniform labels, resample a q-fraction of the labels ("flip rate" q), fit an
interpolating two-layer teacher network on each flipped variant, then label
fresh uniform inputs with each teacher's argmax to define one task per flip
rate. The flip rate controls how far a source task sits from the q = 0
target task: at q = 0 the source shares the target's label function, at
q = 1 it comes from a teacher fit to fully resampled labels.

Every teacher for flip rate q derives its seeds from hash64(seed, q*10000),
so teachers for different flip rates can be fit independently (or in
parallel) without perturbing one another.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .model import (
    OptimizerState,
    SharedModel,
    apply_update,
    backward_arrays,
    init_model,
    predictions,
)
from .numerics import DimensionError, Rng, float_repr17, hash64

TEACHER_TASK_ID = "teacher"
TARGET_TASK_ID = "target"


class FitFailureError(RuntimeError):
    """A teacher failed to reach the required training accuracy."""


@dataclass
class Dataset:
    features: np.ndarray  # (n, d) float64 in [-0.5, 0.5]
    labels: np.ndarray    # (n,) int64 in [0, n_classes)
    n_classes: int
    task_id: str

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionError(f"features must be (n, d), got {self.features.shape}")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise DimensionError("labels must pair up with feature rows")
        if self.n_classes <= 0:
            raise ValueError("n_classes must be positive")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.n_classes
        ):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def take(self, n: int, task_id: str | None = None) -> "Dataset":
        """First n examples (nested subsets for size sweeps)."""
        if n > self.n:
            raise ValueError(f"asked for {n} of {self.n} examples")
        return Dataset(
            self.features[:n].copy(),
            self.labels[:n].copy(),
            self.n_classes,
            task_id or self.task_id,
        )


@dataclass(frozen=True)
class TaskSpec:
    flip_rate: float
    n_examples: int
    input_dim: int
    n_classes: int
    teacher_hidden_width: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError(f"flip_rate must be in [0, 1], got {self.flip_rate}")
        for name in ("n_examples", "input_dim", "n_classes", "teacher_hidden_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def generate_base_dataset(n: int, d: int, k: int, rng: Rng, task_id: str = "base") -> Dataset:
    """n examples with uniform features on [-0.5, 0.5]^d and uniform labels.

    The label distribution before flipping is an assumption of this
    generator, not a property inherited from anywhere else.
    """
    if n <= 0 or d <= 0 or k <= 0:
        raise ValueError("n, d, k must all be positive")
    features = rng.uniform(-0.5, 0.5, size=(n, d))
    labels = rng.integers(0, k, size=n)
    return Dataset(features, labels, k, task_id)


def flip_labels(base: Dataset, q: float, rng: Rng) -> Dataset:
    """Resample exactly round(q*n) distinct labels uniformly over all classes.

    A resampled label may coincide with the original, so the expected
    fraction of labels actually changed is q * (1 - 1/k).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"flip rate must be in [0, 1], got {q}")
    labels = base.labels.copy()
    n_flip = round_half_up(q * base.n)
    if n_flip > 0:
        idx = rng.subset(base.n, n_flip)
        labels[idx] = rng.integers(0, base.n_classes, size=n_flip)
    return Dataset(base.features.copy(), labels, base.n_classes, f"{base.task_id}-flip{q:g}")


def teacher_accuracy(teacher: SharedModel, data: Dataset) -> float:
    return float(np.mean(predictions(teacher, TEACHER_TASK_ID, data.features) == data.labels))


def fit_teacher(data: Dataset, spec: TaskSpec, cfg) -> SharedModel:
    """Fit a two-layer teacher until it interpolates its training data.

    Trains with the configured optimizer and stops at the first epoch whose
    training accuracy reaches cfg.teacher_accuracy_threshold (1.0 by
    default, i.e. interpolation). Raises FitFailureError if the threshold is
    still unmet after cfg.epochs epochs; callers may retry with a wider
    hidden layer or a larger epoch budget.
    """
    if data.n == 0:
        raise ValueError("cannot fit a teacher on an empty dataset")
    threshold = getattr(cfg, "teacher_accuracy_threshold", 1.0)
    model = init_model(
        data.input_dim,
        spec.teacher_hidden_width,
        {TEACHER_TASK_ID: data.n_classes},
        seed=hash64(spec.seed, "teacher-init"),
    )
    shuffle = Rng(hash64(spec.seed, "teacher-shuffle"))
    opt = OptimizerState(kind=cfg.optimizer, lr=cfg.lr)
    keys = ["W1", "b1", "W2", "b2"]
    for _ in range(cfg.epochs):
        order = shuffle.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads = backward_arrays(model, TEACHER_TASK_ID, data.features[idx], data.labels[idx])
            head = model.head(TEACHER_TASK_ID)
            new = apply_update([model.W1, model.b1, head.W2, head.b2], list(grads), opt, keys)
            model.W1, model.b1, head.W2, head.b2 = new
        if teacher_accuracy(model, data) >= threshold:
            return model
    raise FitFailureError(
        f"teacher for {data.task_id!r} reached "
        f"{teacher_accuracy(model, data):.4f} accuracy after {cfg.epochs} epochs "
        f"(threshold {threshold})"
    )


def sample_task_data(teacher: SharedModel, n: int, d: int, rng: Rng, task_id: str) -> Dataset:
    """Fresh uniform inputs labeled by the teacher's argmax (ties to lowest)."""
    if teacher.input_dim != d:
        raise DimensionError(f"teacher expects dimension {teacher.input_dim}, got {d}")
    k = teacher.head(TEACHER_TASK_ID).n_classes
    if n == 0:
        return Dataset(np.empty((0, d)), np.empty(0, dtype=np.int64), k, task_id)
    features = rng.uniform(-0.5, 0.5, size=(n, d))
    labels = predictions(teacher, TEACHER_TASK_ID, features)
    return Dataset(features, labels, k, task_id)


def fit_flip_teachers(
    specs: list[TaskSpec], base: Dataset, cfg
) -> dict[float, SharedModel]:
    """One interpolating teacher per distinct flip rate, all from one base."""
    teachers: dict[float, SharedModel] = {}
    for spec in specs:
        q = spec.flip_rate
        if q in teachers:
            continue
        child = Rng(hash64(spec.seed, round(q * 10000)))
        flipped = flip_labels(base, q, child.spawn("flip"))
        q_spec = TaskSpec(
            flip_rate=q,
            n_examples=spec.n_examples,
            input_dim=spec.input_dim,
            n_classes=spec.n_classes,
            teacher_hidden_width=spec.teacher_hidden_width,
            seed=hash64(spec.seed, round(q * 10000)),
        )
        teachers[q] = fit_teacher(flipped, q_spec, cfg)
    return teachers


def make_task_family(
    specs: list[TaskSpec],
    target_size: int,
    source_sizes,
    rng: Rng,
    cfg,
) -> tuple[Dataset, list[Dataset]]:
    """Target task plus one source task per spec.

    All teachers are fit on flips of the same base dataset. The target is
    drawn from the q = 0 teacher; each source from its own flipped-then-refit
    teacher. A q = 0 source is therefore a fresh draw from the target's own
    label function.
    """
    if not specs:
        raise ValueError("need at least one source spec")
    d = specs[0].input_dim
    k = specs[0].n_classes
    if any(s.input_dim != d or s.n_classes != k for s in specs):
        raise ValueError("all specs must share input_dim and n_classes")
    if isinstance(source_sizes, int):
        source_sizes = [source_sizes] * len(specs)
    if len(source_sizes) != len(specs):
        raise ValueError("one source size per spec required")

    base = generate_base_dataset(specs[0].n_examples, d, k, rng.spawn("base"))
    all_specs = list(specs)
    if not any(s.flip_rate == 0.0 for s in specs):
        all_specs.append(
            TaskSpec(0.0, specs[0].n_examples, d, k, specs[0].teacher_hidden_width, specs[0].seed)
        )
    teachers = fit_flip_teachers(all_specs, base, cfg)

    target = sample_task_data(
        teachers[0.0], target_size, d, rng.spawn("target-draw"), TARGET_TASK_ID
    )
    sources = []
    for i, (spec, size) in enumerate(zip(specs, source_sizes)):
        sources.append(
            sample_task_data(
                teachers[spec.flip_rate],
                size,
                d,
                rng.spawn("source-draw", i),
                f"source{i}_q{spec.flip_rate:g}",
            )
        )
    return target, sources


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Flat CSV layout: header row (n, d, k), then d feature columns + label."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([dataset.n, dataset.input_dim, dataset.n_classes])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([float_repr17(x) for x in row] + [int(label)])


def load_dataset_csv(path, task_id: str | None = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n, d, k = (int(x) for x in header)
        features = np.empty((n, d))
        labels = np.empty(n, dtype=np.int64)
        for i, row in enumerate(reader):
            if len(row) != d + 1:
                raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected {d + 1}")
            features[i] = [float(x) for x in row[:d]]
            labels[i] = int(row[d])
    if task_id is None:
        task_id = os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(features, labels, k, task_id)
