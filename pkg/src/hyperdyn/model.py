"""Learnable hypergraph dynamics built from per-size-class MLPs.

One network is kept per hyperedge size d. Its input arity is
q = min(d, model order): edges no larger than the model order feed the
whole edge through one network, larger edges are covered by summing a
q-ary network over all (q-1)-subsets of the non-center members. Because
a network's inputs are ordered while a hyperedge is a set, every network
evaluation is averaged over all (q-1)! orderings of the neighbor block
(center always first). The averaging makes the learned edge update
exactly invariant under permutation of the non-center values.

Training minimizes the summed L1 error of the predicted node derivatives
plus an L2 penalty on the concatenated parameter vector. The penalty
uses the plain Euclidean norm by default (set l2_squared for the squared
variant); its gradient is guarded near the origin.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .hypergraph import DEFAULT_MAX_ARITY, Hypergraph
from .mlp import (
    AdamState,
    MlpParams,
    MlpSpec,
    backward_from_cache,
    flatten_arrays,
    forward_cached,
    init_params,
    load_params_text,
    mlp_forward,
    optimizer_step,
    save_params_text,
)

NORM_GUARD = 1e-12


@dataclass
class TrainConfig:
    """Knobs for one training run; defaults target small desk-scale sets."""

    lam: float = 1e-6
    lr: float = 1e-3
    lr_end: float | None = None  # exponential decay target; None keeps lr constant
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"
    l2_squared: bool = False
    lambda_grid: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"training loss became non-finite at epoch {epoch} (value {value})")
        self.epoch = epoch
        self.value = value


class LearnedDynamics:
    """Bank of per-size-class MLPs predicting node derivatives on hypergraphs."""

    def __init__(self, order: int, mlps: dict[int, MlpParams], manifest: dict | None = None):
        if order < 2:
            raise ValueError("model order must be >= 2")
        for d, params in mlps.items():
            expected = min(d, order)
            if params.spec.arity != expected:
                raise ValueError(f"size-{d} network has arity {params.spec.arity}, expected {expected}")
        self.order = order
        self.mlps = dict(sorted(mlps.items()))
        self.manifest = dict(manifest or {})

    @classmethod
    def create(
        cls,
        order: int,
        sizes: Sequence[int],
        hidden: tuple[int, ...] = (32, 32),
        activation: str = "tanh",
        seed: int = 0,
        max_arity: int = DEFAULT_MAX_ARITY,
    ) -> "LearnedDynamics":
        """Fresh model with one network per edge size class, seeded per size."""
        if order > max_arity:
            raise ValueError(f"model order {order} exceeds the arity cap {max_arity}")
        mlps: dict[int, MlpParams] = {}
        for d in sorted(set(sizes)):
            if d < 2:
                raise ValueError("edge sizes must be >= 2")
            if d > max_arity:
                raise ValueError(f"edge size {d} exceeds the arity cap {max_arity}")
            spec = MlpSpec(arity=min(d, order), hidden=tuple(hidden), activation=activation)
            mlps[d] = init_params(spec, np.random.SeedSequence((seed, d)))
        return cls(order, mlps)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(self.mlps)

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for d in self.mlps:
            out.extend(self.mlps[d].arrays())
        return out

    def theta_norm(self) -> float:
        return float(np.linalg.norm(flatten_arrays(self.param_arrays())))

    def copy(self) -> "LearnedDynamics":
        return LearnedDynamics(self.order, {d: p.copy() for d, p in self.mlps.items()}, self.manifest)


@lru_cache(maxsize=None)
def _ordering_template(d: int, q: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Row template covering (center, subset, ordering) choices on a size-d edge.

    Returns (input positions (R, q), center positions (R,), scale) where
    scale = 1/(q-1)! turns the per-ordering sum into the mean for each
    subset. Positions index into the sorted member tuple of an edge.
    """
    inputs: list[tuple[int, ...]] = []
    centers: list[int] = []
    for c in range(d):
        rest = [i for i in range(d) if i != c]
        for subset in itertools.combinations(rest, q - 1):
            for perm in itertools.permutations(subset):
                inputs.append((c, *perm))
                centers.append(c)
    scale = 1.0 / math.factorial(q - 1)
    return np.asarray(inputs, dtype=np.intp), np.asarray(centers, dtype=np.intp), scale


def _model_plan(h: Hypergraph, d: int, q: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Node-index rows for every network evaluation on the size-d edges of h."""
    key = ("model", d, q)
    if key in h._plan_cache:
        return h._plan_cache[key]
    edges = np.asarray(h.edges(d), dtype=np.intp)
    in_pos, c_pos, scale = _ordering_template(d, q)
    inputs = edges[:, in_pos].reshape(-1, q)
    centers = edges[:, c_pos].ravel()
    h._plan_cache[key] = (inputs, centers, scale)
    return inputs, centers, scale


def edge_update_learned(model: LearnedDynamics, x_edge: Sequence[float], center_index: int) -> float:
    """Learned update one hyperedge contributes to its center node.

    Sum over (q-1)-subsets of the non-center values of the ordering-mean
    of the size-class network; a single mean when the edge is no larger
    than the model order.
    """
    values = np.asarray(x_edge, dtype=float)
    d = len(values)
    if d not in model.mlps:
        raise ValueError(f"model has no update network for size-{d} edges")
    if not 0 <= center_index < d:
        raise ValueError(f"center index {center_index} outside edge of size {d}")
    q = min(model.order, d)
    others = np.delete(values, center_index)
    rows = [
        (values[center_index], *perm)
        for subset in itertools.combinations(others, q - 1)
        for perm in itertools.permutations(subset)
    ]
    out = mlp_forward(model.mlps[d], np.asarray(rows))
    return float(out.sum() / math.factorial(q - 1))


def predict_rhs(model: LearnedDynamics, h: Hypergraph, x: np.ndarray) -> np.ndarray:
    """Predicted node derivatives: learned edge updates summed onto nodes."""
    x = np.asarray(x, dtype=float)
    if x.shape != (h.n_nodes,):
        raise ValueError(f"state has shape {x.shape}, hypergraph has {h.n_nodes} nodes")
    out = np.zeros(h.n_nodes)
    for d in h.edges_by_size:
        if d not in model.mlps:
            raise ValueError(f"model has no update network for size-{d} edges")
        inputs, centers, scale = _model_plan(h, d, min(model.order, d))
        vals = mlp_forward(model.mlps[d], x[inputs])
        out += scale * np.bincount(centers, weights=vals, minlength=h.n_nodes)
    return out


def penalty(model: LearnedDynamics, lam: float, l2_squared: bool = False) -> float:
    norm = model.theta_norm()
    return lam * (norm * norm if l2_squared else norm)


def loss(model: LearnedDynamics, samples: Sequence, lam: float, l2_squared: bool = False) -> float:
    """Summed L1 prediction error over samples plus the parameter penalty."""
    if not samples:
        raise ValueError("loss needs a nonempty batch")
    total = 0.0
    for s in samples:
        total += float(np.abs(predict_rhs(model, s.hypergraph, s.x) - s.dxdt).sum())
    return total + penalty(model, lam, l2_squared)


class _DatasetPlan:
    """Precomputed gather/scatter indices for training over many samples.

    States and labels of all samples are concatenated into flat vectors;
    for each edge size the network-evaluation rows of every sample are
    stored contiguously so a minibatch reduces to slicing row ranges.
    """

    def __init__(self, model: LearnedDynamics, samples: Sequence):
        self.n_samples = len(samples)
        self.n_nodes = np.asarray([s.hypergraph.n_nodes for s in samples])
        self.state_bounds = np.concatenate([[0], np.cumsum(self.n_nodes)])
        self.states = np.concatenate([np.asarray(s.x, dtype=float) for s in samples])
        self.labels = np.concatenate([np.asarray(s.dxdt, dtype=float) for s in samples])

        sizes = sorted({d for s in samples for d in s.hypergraph.edges_by_size})
        for d in sizes:
            if d not in model.mlps:
                raise ValueError(f"model has no update network for size-{d} edges")
        self.sizes = sizes
        self.input_idx: dict[int, np.ndarray] = {}
        self.center_local: dict[int, np.ndarray] = {}
        self.row_bounds: dict[int, np.ndarray] = {}
        self.scale: dict[int, float] = {}
        for d in sizes:
            q = min(model.order, d)
            chunks_in, chunks_c, counts = [], [], []
            for i, s in enumerate(samples):
                if d in s.hypergraph.edges_by_size:
                    inputs, centers, scale = _model_plan(s.hypergraph, d, q)
                    chunks_in.append(inputs + self.state_bounds[i])
                    chunks_c.append(centers)
                    counts.append(len(centers))
                    self.scale[d] = scale
                else:
                    counts.append(0)
            self.input_idx[d] = np.concatenate(chunks_in)
            self.center_local[d] = np.concatenate(chunks_c)
            self.row_bounds[d] = np.concatenate([[0], np.cumsum(counts)])

    def batch_views(self, d: int, batch: np.ndarray):
        bounds = self.row_bounds[d]
        segs = [(bounds[s], bounds[s + 1]) for s in batch]
        rows = np.concatenate([np.arange(a, b) for a, b in segs]) if segs else np.zeros(0, dtype=np.intp)
        lengths = np.asarray([b - a for a, b in segs], dtype=np.intp)
        return rows, lengths


def _l1_and_grads(
    model: LearnedDynamics,
    plan: _DatasetPlan,
    batch: np.ndarray,
    arrays: list[np.ndarray],
    lam: float,
    l2_squared: bool,
    penalty_frac: float,
) -> tuple[float, list[np.ndarray]]:
    """Batch L1 error plus gradients of (L1 + penalty_frac * penalty)."""
    ns = plan.n_nodes[batch]
    node_off = np.concatenate([[0], np.cumsum(ns)])
    lab = np.concatenate(
        [plan.labels[plan.state_bounds[s]: plan.state_bounds[s + 1]] for s in batch]
    )
    total = int(node_off[-1])
    pred = np.zeros(total)
    cache: dict[int, tuple[list[np.ndarray], np.ndarray]] = {}
    for d in plan.sizes:
        rows, lengths = plan.batch_views(d, batch)
        if rows.size == 0:
            continue
        x_rows = plan.states[plan.input_idx[d][rows]]
        activations = forward_cached(model.mlps[d], x_rows)
        out = activations[-1][:, 0]
        batch_pos = np.repeat(np.arange(len(batch)), lengths)
        out_idx = node_off[batch_pos] + plan.center_local[d][rows]
        pred += plan.scale[d] * np.bincount(out_idx, weights=out, minlength=total)
        cache[d] = (activations, out_idx)

    resid = pred - lab
    l1 = float(np.abs(resid).sum())
    sign = np.sign(resid)

    grad_arrays: list[np.ndarray] = []
    for d in model.mlps:
        if d in cache:
            activations, out_idx = cache[d]
            upstream = sign[out_idx] * plan.scale[d]
            grads, _ = backward_from_cache(model.mlps[d], activations, upstream)
            grad_arrays.extend(grads.arrays())
        else:
            grad_arrays.extend(np.zeros_like(a) for a in model.mlps[d].arrays())

    if lam > 0 and penalty_frac > 0:
        if l2_squared:
            for a, g in zip(arrays, grad_arrays):
                g += (2.0 * lam * penalty_frac) * a
        else:
            norm = float(np.linalg.norm(flatten_arrays(arrays)))
            if norm > NORM_GUARD:
                coef = lam * penalty_frac / norm
                for a, g in zip(arrays, grad_arrays):
                    g += coef * a
    return l1, grad_arrays


def loss_gradient(
    model: LearnedDynamics, samples: Sequence, lam: float, l2_squared: bool = False
) -> list[np.ndarray]:
    """Exact (sub)gradient of the full-batch objective for every parameter array."""
    plan = _DatasetPlan(model, samples)
    arrays = model.param_arrays()
    _, grads = _l1_and_grads(
        model, plan, np.arange(len(samples)), arrays, lam, l2_squared, penalty_frac=1.0
    )
    return grads


def train(model: LearnedDynamics, samples: Sequence, config: TrainConfig) -> list[float]:
    """Minibatch training on the L1-plus-penalty objective; returns the loss curve.

    The model is updated in place; the curve holds, per epoch, the summed
    L1 error accumulated over that epoch's minibatches plus the penalty at
    the epoch's end. Deterministic for a fixed config seed.
    """
    if not samples:
        raise ValueError("training set is empty")
    plan = _DatasetPlan(model, samples)
    arrays = model.param_arrays()
    adam = AdamState(lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n = len(samples)
    bs = max(1, min(config.batch_size, n))
    curve: list[float] = []
    for epoch in range(config.epochs):
        if config.lr_end is not None:
            frac = epoch / max(config.epochs - 1, 1)
            adam.lr = config.lr * (config.lr_end / config.lr) ** frac
        order = rng.permutation(n)
        epoch_l1 = 0.0
        for start in range(0, n, bs):
            batch = order[start: start + bs]
            # penalty gradient prorated so one epoch integrates one full penalty
            l1, grads = _l1_and_grads(
                model, plan, batch, arrays, config.lam, config.l2_squared,
                penalty_frac=len(batch) / n,
            )
            optimizer_step(adam, arrays, grads)
            epoch_l1 += l1
        value = epoch_l1 + penalty(model, config.lam, config.l2_squared)
        if not np.isfinite(value):
            raise TrainingDivergedError(epoch, value)
        curve.append(value)
    return curve


def search_lambda(
    order: int,
    train_samples: Sequence,
    val_samples: Sequence,
    grid: Sequence[float],
    config: TrainConfig,
) -> tuple[float, dict[float, float]]:
    """Pick the penalty strength with the lowest validation L1 error.

    Trains one fresh model per distinct grid value (duplicates are
    collapsed); ties resolve to the smaller value.
    """
    values = sorted(set(grid))
    if not values:
        raise ValueError("lambda grid is empty")
    sizes = sorted(
        {d for s in [*train_samples, *val_samples] for d in s.hypergraph.edges_by_size}
    )
    errors: dict[float, float] = {}
    best_lam, best_err = None, None
    for lam in values:
        candidate = LearnedDynamics.create(
            order, sizes, hidden=config.hidden, activation=config.activation, seed=config.seed
        )
        train(candidate, train_samples, replace(config, lam=lam))
        err = 0.0
        count = 0
        for s in val_samples:
            err += float(np.abs(predict_rhs(candidate, s.hypergraph, s.x) - s.dxdt).sum())
            count += s.dxdt.size
        err /= max(count, 1)
        errors[lam] = err
        if best_err is None or err < best_err:
            best_lam, best_err = lam, err
    return best_lam, errors


def save_model(model: LearnedDynamics, path: str | Path, manifest: dict | None = None) -> None:
    """Write a model bundle: json manifest record plus one weight block per size."""
    meta = dict(model.manifest)
    meta.update(manifest or {})
    meta["order"] = model.order
    meta["sizes"] = list(model.sizes)
    lines = ["#bundle " + json.dumps(meta, sort_keys=True)]
    for d, params in model.mlps.items():
        lines.append(f"#mlp d={d}")
        lines.append(save_params_text(params).rstrip("\n"))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_model(path: str | Path) -> LearnedDynamics:
    """Read a model bundle written by save_model."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#bundle "):
        raise ValueError(f"{path}: missing bundle manifest record")
    meta = json.loads(lines[0][len("#bundle "):])
    mlps: dict[int, MlpParams] = {}
    block: list[str] = []
    current: int | None = None
    for line in lines[1:] + ["#mlp d=-1"]:
        if line.startswith("#mlp d="):
            if current is not None:
                mlps[current] = load_params_text("\n".join(block))
            current = int(line.split("=", 1)[1])
            block = []
        else:
            block.append(line)
    return LearnedDynamics(int(meta["order"]), mlps, manifest=meta)
