"""Empirical representation-based task distance.

The distance from a weighted collection of source tasks to a target task is
the excess target risk of the best representation trainable from the
weighted sources over the risk of a representation trained on abundant
target data. Both population quantities are replaced by plug-in training
estimates here:

  * weighted source-to-target risk: train the representation on the
    weighted sources, freeze it, fit only the target head on held-in target
    data, evaluate the loss on held-out target data;
  * oracle target risk: train the full model on a large target sample and
    evaluate on the same held-out data.

The reported distance is their difference, raw: estimation noise can make
it negative, and clipping would bias trend comparisons, so negative values
are only flagged. A single trained representation stands in for the whole
set of minimizers of the weighted objective. The estimator is directional
by construction; swapping source and target roles generally changes the
value, and nothing here symmetrizes it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

from .numerics import Rng, float_repr17, hash64
from .taskgen import (
    TARGET_TASK_ID,
    Dataset,
    TaskSpec,
    fit_flip_teachers,
    generate_base_dataset,
    sample_task_data,
)
from .training import TrainConfig, evaluate, pretrain_then_finetune, train_single_task
from .weighting import SimplexWeights, init_weights


@dataclass
class TaskDistanceEstimate:
    flip_rate: float
    seed: int
    weighted_source_target_risk: float
    oracle_target_risk: float
    distance: float
    aux_accuracy: float
    oracle_accuracy: float
    weights: list[float]
    negative: bool
    config: dict = field(default_factory=dict)


@dataclass
class DistanceConfig:
    """Sizes, dims, and training budgets for the distance estimator."""

    input_dim: int = 20
    n_classes: int = 10
    hidden: int = 256
    base_n: int = 200
    teacher_hidden: int = 256
    teacher_epochs: int = 400
    teacher_lr: float = 3e-3
    source_n: int = 10000
    head_fit_n: int = 2000
    eval_n: int = 2000
    oracle_n: int = 10000
    rep_epochs: int = 60
    head_fit_epochs: int = 100
    oracle_epochs: int = 60
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    master_seed: int = 0

    def estimator_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            paradigm="pretrain",
            optimizer=self.optimizer,
            lr=self.lr,
            batch_size=self.batch_size,
            hidden=self.hidden,
            epochs=self.rep_epochs,
            finetune_epochs=self.head_fit_epochs,
            finetune_rep="frozen",
            metrics_every=0,
            seed=seed,
        )

    def oracle_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            paradigm="single",
            optimizer=self.optimizer,
            lr=self.lr,
            batch_size=self.batch_size,
            hidden=self.hidden,
            epochs=self.oracle_epochs,
            metrics_every=0,
            seed=seed,
        )


def estimate_weighted_source_target_risk(
    sources, weights: SimplexWeights, target_train: Dataset, target_eval: Dataset, cfg: TrainConfig
) -> tuple[float, float]:
    """Held-out target loss of a source-trained representation.

    Trains the representation on the weighted sources, freezes it, fits only
    the target head on target_train, and returns (mean loss, accuracy) on
    target_eval. target_train and target_eval must be disjoint draws.
    """
    cfg = replace(cfg, paradigm="pretrain", weighted=False, finetune_rep="frozen")
    model, _ = pretrain_then_finetune(sources, target_train, weights, cfg)
    ev = evaluate(model, TARGET_TASK_ID, target_eval)
    return ev.mean_loss, ev.accuracy


def estimate_oracle_target_risk(
    target_train_large: Dataset, target_eval: Dataset, cfg: TrainConfig
) -> tuple[float, float]:
    """Held-out loss of a full model trained on abundant target data.

    Plug-in stand-in for the risk of the best target representation.
    """
    cfg = replace(cfg, paradigm="single", weighted=False)
    model, _ = train_single_task(target_train_large, cfg)
    ev = evaluate(model, TARGET_TASK_ID, target_eval)
    return ev.mean_loss, ev.accuracy


def distance_curve(flip_grid, weights_mode: str, cfg: DistanceConfig) -> list[TaskDistanceEstimate]:
    """One distance estimate per (flip rate, seed), single source per point.

    Per seed, all teachers come from flips of one base dataset, and one
    oracle run is shared by every grid point, so distances within a seed
    differ only through their source tasks.
    """
    flip_grid = list(flip_grid)
    if any(not 0.0 <= q <= 1.0 for q in flip_grid):
        raise ValueError("flip rates must lie in [0, 1]")
    estimates = []
    for seed in cfg.seeds:
        family_rng = Rng(hash64(cfg.master_seed, "distance-family", seed))
        specs = [
            TaskSpec(
                flip_rate=q,
                n_examples=cfg.base_n,
                input_dim=cfg.input_dim,
                n_classes=cfg.n_classes,
                teacher_hidden_width=cfg.teacher_hidden,
                seed=hash64(cfg.master_seed, "distance-teacher", seed),
            )
            for q in sorted(set(flip_grid) | {0.0})
        ]
        base = generate_base_dataset(
            cfg.base_n, cfg.input_dim, cfg.n_classes, family_rng.spawn("base")
        )
        teacher_cfg = TrainConfig(
            optimizer=cfg.optimizer,
            lr=cfg.teacher_lr,
            batch_size=cfg.batch_size,
            epochs=cfg.teacher_epochs,
        )
        teachers = fit_flip_teachers(specs, base, teacher_cfg)
        target_teacher = teachers[0.0]
        d = cfg.input_dim
        target_train = sample_task_data(
            target_teacher, cfg.head_fit_n, d, family_rng.spawn("head-fit-draw"), TARGET_TASK_ID
        )
        target_eval = sample_task_data(
            target_teacher, cfg.eval_n, d, family_rng.spawn("eval-draw"), TARGET_TASK_ID
        )
        target_large = sample_task_data(
            target_teacher, cfg.oracle_n, d, family_rng.spawn("oracle-draw"), TARGET_TASK_ID
        )
        oracle_seed = hash64(cfg.master_seed, "distance-oracle", seed)
        oracle_risk, oracle_acc = estimate_oracle_target_risk(
            target_large, target_eval, cfg.oracle_train_config(oracle_seed)
        )
        for q in flip_grid:
            source = sample_task_data(
                teachers[q],
                cfg.source_n,
                d,
                family_rng.spawn("source-draw", round(q * 10000)),
                f"source_q{q:g}",
            )
            weights = init_weights(weights_mode, [source.n])
            est_seed = hash64(cfg.master_seed, "distance-est", seed, round(q * 10000))
            risk, acc = estimate_weighted_source_target_risk(
                [source], weights, target_train, target_eval,
                cfg.estimator_train_config(est_seed),
            )
            dist = risk - oracle_risk
            estimates.append(
                TaskDistanceEstimate(
                    flip_rate=q,
                    seed=seed,
                    weighted_source_target_risk=risk,
                    oracle_target_risk=oracle_risk,
                    distance=dist,
                    aux_accuracy=acc,
                    oracle_accuracy=oracle_acc,
                    weights=[float(x) for x in weights.values],
                    negative=dist < 0.0,
                    config={
                        "source_n": cfg.source_n,
                        "head_fit_n": cfg.head_fit_n,
                        "eval_n": cfg.eval_n,
                        "oracle_n": cfg.oracle_n,
                        "rep_epochs": cfg.rep_epochs,
                        "head_fit_epochs": cfg.head_fit_epochs,
                        "oracle_epochs": cfg.oracle_epochs,
                    },
                )
            )
    return estimates


def write_distance_csv(estimates, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "flip_rate",
                "seed",
                "source_risk_estimate",
                "oracle_risk_estimate",
                "distance",
                "aux_accuracy",
            ]
        )
        for est in estimates:
            writer.writerow(
                [
                    float_repr17(est.flip_rate),
                    est.seed,
                    float_repr17(est.weighted_source_target_risk),
                    float_repr17(est.oracle_target_risk),
                    float_repr17(est.distance),
                    float_repr17(est.aux_accuracy),
                ]
            )
