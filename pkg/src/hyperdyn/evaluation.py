"""Cross-validated model assessment and effective-order selection.

A model order is scored by the exponential of its (scale-normalized)
loss times an exponential complexity discount in the order itself:

    score(order) = exp(-L / L_max) * exp(-weight * order / k)

with L_max the largest loss among the candidate orders. The selected
effective order is the score argmax, ties resolving toward the smaller
order. The loss L is the cross-validated pointwise MAE for point data
and the rollout trajectory MAE for trajectory data.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .datasets import Dataset, Sample, derived_rng, sample_initial_state
from .dynamics import DivergenceError, Trajectory, UpdateFamily, evaluate_rhs, integrate_euler
from .hypergraph import Hypergraph
from .model import LearnedDynamics, TrainConfig, predict_rhs, train

log = logging.getLogger(__name__)

TRAJECTORY_BANK_SIZE = 10


def _predictor(model) -> Callable[[Hypergraph, np.ndarray], np.ndarray]:
    if isinstance(model, LearnedDynamics):
        return lambda h, x: predict_rhs(model, h, x)
    if isinstance(model, UpdateFamily):
        return lambda h, x: evaluate_rhs(h, model, x)
    return model


def pointwise_mae(model, samples: Sequence[Sample]) -> float:
    """Mean absolute derivative error over all samples and nodes."""
    if not samples:
        raise ValueError("pointwise_mae needs a nonempty dataset")
    predict = _predictor(model)
    total = 0.0
    count = 0
    for s in samples:
        total += float(np.abs(predict(s.hypergraph, s.x) - s.dxdt).sum())
        count += s.dxdt.size
    return total / count


def trajectory_mae(
    model,
    h: Hypergraph,
    x0: np.ndarray,
    steps: int,
    dt: float,
    family: UpdateFamily,
) -> float:
    """Mean absolute deviation between model and ground-truth rollouts.

    Both sides are integrated with the identical forward-Euler scheme
    from x0; the mean runs over all steps+1 states and all nodes. A
    diverging model rollout reports an infinite MAE.
    """
    predict = _predictor(model)
    truth = integrate_euler(h, family, x0, steps, dt)
    try:
        predicted = integrate_euler(h, family, x0, steps, dt, rhs=lambda x: predict(h, x))
    except DivergenceError as exc:
        log.warning("model rollout diverged at step %d; reporting infinite MAE", exc.step)
        return math.inf
    return float(np.abs(predicted.states - truth.states).mean())


def rollout_predict(
    model, h: Hypergraph, x0: np.ndarray, steps: int, dt: float
) -> Trajectory:
    """Forward-Euler rollout under the model's predicted derivatives."""
    predict = _predictor(model)
    return integrate_euler(h, None, x0, steps, dt, rhs=lambda x: predict(h, x))


def fold_assignment(group_ids: Sequence[int], k_folds: int, seed: int) -> list[list[int]]:
    """Partition distinct group ids into k shuffled folds (deterministic per seed)."""
    groups = sorted(set(group_ids))
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if len(groups) < k_folds:
        raise ValueError(f"cannot make {k_folds} folds from {len(groups)} groups")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF01D)))
    shuffled = [groups[i] for i in rng.permutation(len(groups))]
    return [list(part) for part in np.array_split(np.asarray(shuffled), k_folds)]


def kfold_single(
    dataset: Dataset,
    k_folds: int,
    fold_idx: int,
    order: int,
    config: TrainConfig,
    metric: str = "pointwise",
    eval_steps: int | None = None,
) -> float:
    """Test error of one fold: train a fresh model on the rest, score the fold.

    The "trajectory" metric scores a fold by the rollout MAE averaged
    over (up to 10 of) its held-out trajectories' initial conditions.
    """
    groups = dataset.group_ids()
    folds = fold_assignment(groups, k_folds, config.seed)
    test_set = set(folds[fold_idx])
    train_samples = [s for s, g in zip(dataset.samples, groups) if g not in test_set]
    test_samples = [s for s, g in zip(dataset.samples, groups) if g in test_set]
    if not test_samples or not train_samples:
        raise ValueError(f"fold {fold_idx} has an empty split")
    sizes = sorted({d for s in dataset.samples for d in s.hypergraph.edges_by_size})
    model = LearnedDynamics.create(
        order,
        sizes,
        hidden=config.hidden,
        activation=config.activation,
        seed=config.seed + fold_idx,
    )
    train(model, train_samples, replace(config, seed=config.seed + fold_idx))
    if metric == "pointwise":
        return pointwise_mae(model, test_samples)
    if metric == "trajectory":
        from .dynamics import make_family

        family = make_family(dataset.manifest["family"], dataset.manifest["p"])
        steps = eval_steps or dataset.manifest["steps"]
        dt = dataset.manifest["dt"]
        starts = {}
        for s in test_samples:
            if s.step == 0 and s.traj_id not in starts:
                starts[s.traj_id] = s
        bank = [starts[t] for t in sorted(starts)][:TRAJECTORY_BANK_SIZE]
        values = [trajectory_mae(model, s.hypergraph, s.x, steps, dt, family) for s in bank]
        return float(np.mean(values))
    raise ValueError(f"unknown metric {metric!r}")


def kfold_cv(
    dataset: Dataset,
    k_folds: int,
    order: int,
    config: TrainConfig,
    metric: str = "pointwise",
    eval_steps: int | None = None,
) -> list[float]:
    """Per-fold test errors of a fresh model of the given order.

    Folds partition trajectory datasets by trajectory id so no trajectory
    is split across folds; assignment is deterministic per config seed.
    """
    return [
        kfold_single(dataset, k_folds, fold_idx, order, config, metric, eval_steps)
        for fold_idx in range(k_folds)
    ]


def mc_perf(
    losses: Mapping[int, float], k: int, complexity_weight: float = 1.0
) -> dict[int, float]:
    """Model-corrected performance score per candidate order.

    Losses are normalized by their maximum, so the score is invariant
    under positive rescaling of all losses. When every loss is zero the
    data factor is 1 for all entries and only the complexity discount
    differentiates the candidates.
    """
    if not losses:
        raise ValueError("losses must be nonempty")
    if any(v < 0 for v in losses.values()):
        raise ValueError("losses must be nonnegative")
    l_max = max(losses.values())
    scores = {}
    for order, value in losses.items():
        data_factor = 1.0 if l_max == 0 else math.exp(-value / l_max)
        scores[order] = data_factor * math.exp(-complexity_weight * order / k)
    return scores


def select_effective_order(scores: Mapping[int, float]) -> int:
    """Order with the highest score; ties go to the smaller order."""
    best_order, best_score = None, None
    for order in sorted(scores):
        if best_score is None or scores[order] > best_score:
            best_order, best_score = order, scores[order]
    return best_order


@dataclass
class SuiteResult:
    """Cross-validation outcome for one (dynamics, p) dataset."""

    dynamics: str
    p: int
    fold_maes: dict[int, list[float]]
    mean_mae: dict[int, float] = field(default_factory=dict)
    std_mae: dict[int, float] = field(default_factory=dict)
    l_max: float = 0.0
    scores: dict[int, float] = field(default_factory=dict)
    selected_order: int = 0

    def finalize(self, k: int, complexity_weight: float = 1.0) -> "SuiteResult":
        self.mean_mae = {m: float(np.mean(v)) for m, v in self.fold_maes.items()}
        self.std_mae = {m: float(np.std(v)) for m, v in self.fold_maes.items()}
        self.l_max = max(self.mean_mae.values())
        self.scores = mc_perf(self.mean_mae, k, complexity_weight)
        self.selected_order = select_effective_order(self.scores)
        return self


@dataclass
class EvalReport:
    suites: list[SuiteResult]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "metadata": self.metadata,
            "suites": [
                {
                    "dynamics": s.dynamics,
                    "p": s.p,
                    "fold_maes": {str(m): v for m, v in s.fold_maes.items()},
                    "mean_mae": {str(m): v for m, v in s.mean_mae.items()},
                    "std_mae": {str(m): v for m, v in s.std_mae.items()},
                    "l_max": s.l_max,
                    "mc_perf": {str(m): v for m, v in s.scores.items()},
                    "selected_order": s.selected_order,
                }
                for s in self.suites
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        suites = []
        for raw in payload["suites"]:
            suite = SuiteResult(
                dynamics=raw["dynamics"],
                p=raw["p"],
                fold_maes={int(m): v for m, v in raw["fold_maes"].items()},
                mean_mae={int(m): v for m, v in raw["mean_mae"].items()},
                std_mae={int(m): v for m, v in raw["std_mae"].items()},
                l_max=raw["l_max"],
                scores={int(m): v for m, v in raw["mc_perf"].items()},
                selected_order=raw["selected_order"],
            )
            suites.append(suite)
        return cls(suites, payload.get("metadata", {}))

    def fold_table(self) -> str:
        """Long-format CSV: one row per (dynamics, p, model order, fold)."""
        lines = ["dynamics,p,p_model,fold,mae"]
        for s in self.suites:
            for order in sorted(s.fold_maes):
                for fold, mae in enumerate(s.fold_maes[order]):
                    lines.append(f"{s.dynamics},{s.p},{order},{fold},{mae:.17g}")
        return "\n".join(lines) + "\n"

    def score_table(self) -> str:
        """Long-format CSV of per-order summaries and selections."""
        lines = ["dynamics,p,p_model,mean_mae,std_mae,mc_perf,selected_order"]
        for s in self.suites:
            for order in sorted(s.mean_mae):
                lines.append(
                    f"{s.dynamics},{s.p},{order},{s.mean_mae[order]:.17g},"
                    f"{s.std_mae[order]:.17g},{s.scores[order]:.17g},{s.selected_order}"
                )
        return "\n".join(lines) + "\n"


def evaluate_dataset(
    dataset: Dataset,
    p_models: Sequence[int],
    k_folds: int,
    config: TrainConfig,
    k_topological: int | None = None,
    complexity_weight: float = 1.0,
    eval_steps: int | None = None,
) -> SuiteResult:
    """Cross-validate every candidate order on one dataset and score them."""
    metric = "trajectory" if dataset.manifest.get("scenario") == "trajectory" else "pointwise"
    fold_maes = {
        order: kfold_cv(dataset, k_folds, order, config, metric=metric, eval_steps=eval_steps)
        for order in p_models
    }
    if k_topological is None:
        k_topological = max(
            (d for s in dataset.samples for d in s.hypergraph.edges_by_size), default=2
        )
    result = SuiteResult(
        dynamics=dataset.manifest.get("family", "?"), p=dataset.manifest.get("p", 0),
        fold_maes=fold_maes,
    )
    return result.finalize(k_topological, complexity_weight)


def heldout_initial_conditions(
    family_name: str, n_nodes: int, count: int, seed: int
) -> list[np.ndarray]:
    """Deterministic bank of initial conditions for rollout evaluation."""
    return [
        sample_initial_state(family_name, n_nodes, derived_rng(seed, 0xBA4C, i))
        for i in range(count)
    ]
