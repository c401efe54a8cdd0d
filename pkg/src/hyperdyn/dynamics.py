"""Analytical dynamics on hypergraphs.

Each update family is defined by a symmetric kernel acting on a center
value and q-1 neighbor values drawn from one hyperedge. On an edge of
size d, a family of order p contributes, to each member node, the sum of
the kernel over all (q-1)-subsets of the other member values, where
q = min(p, d). Edges no larger than p therefore receive a single full
kernel call; larger edges receive a combination of q-ary interactions.

Kernels are vectorized: they take a batch of center values (R,), a batch
of neighbor blocks (R, q-1), and the edge size d, and return (R,) values.

Shipped families (x is the node state):
  kuramoto   phase coupling      sin(sum_j (y_j - y_i)) over the q values
  si         epidemic spread     (1 - y_i) * prod of the q-1 neighbor values
  mcm        opinion consensus   exp(-(sum_j y_j / d - y_i)) * sum_j (y_j - y_i)
  diffusion  linear consensus    sum_j (y_j - y_i)

The mcm exponent divides the q-value sum by the edge size d, not by q;
that normalization is part of the model definition here. Self-dynamics
(single-node update terms) are identically zero; the slot on
UpdateFamily exists only so callers can see that explicitly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._io import atomic_write_text
from .hypergraph import Hypergraph

Kernel = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def _kuramoto_kernel(y_c: np.ndarray, neigh: np.ndarray, d: int) -> np.ndarray:
    q = neigh.shape[1] + 1
    return np.sin(neigh.sum(axis=1) - (q - 1) * y_c)


def _si_kernel(y_c: np.ndarray, neigh: np.ndarray, d: int) -> np.ndarray:
    return (1.0 - y_c) * neigh.prod(axis=1)


def _mcm_kernel(y_c: np.ndarray, neigh: np.ndarray, d: int) -> np.ndarray:
    q = neigh.shape[1] + 1
    total = y_c + neigh.sum(axis=1)
    consensus = neigh.sum(axis=1) - (q - 1) * y_c
    return np.exp(-(total / d - y_c)) * consensus


def _diffusion_kernel(y_c: np.ndarray, neigh: np.ndarray, d: int) -> np.ndarray:
    q = neigh.shape[1] + 1
    return neigh.sum(axis=1) - (q - 1) * y_c


KERNELS: dict[str, Kernel] = {
    "kuramoto": _kuramoto_kernel,
    "si": _si_kernel,
    "mcm": _mcm_kernel,
    "diffusion": _diffusion_kernel,
}

FAMILY_NAMES = tuple(sorted(KERNELS))


@dataclass(frozen=True)
class UpdateFamily:
    """An analytical dynamics: name, interaction order p, and its kernel.

    self_update is the per-node self-dynamics slot; it is kept for
    interface completeness but must stay None (treated as zero).
    """

    name: str
    p: int
    kernel: Kernel = field(repr=False)
    self_update: Callable[[float], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"interaction order must be >= 2, got {self.p}")

    def arity_on(self, d: int) -> int:
        """Effective kernel arity on a size-d edge."""
        return min(self.p, d)


def make_family(name: str, p: int) -> UpdateFamily:
    """Look up one of the shipped update families at interaction order p."""
    if name not in KERNELS:
        raise ValueError(f"unknown dynamics family {name!r}; valid: {', '.join(FAMILY_NAMES)}")
    return UpdateFamily(name=name, p=int(p), kernel=KERNELS[name])


def kernel_eval(family: UpdateFamily, y_center: float, neighbors: Sequence[float], d: int) -> float:
    """Evaluate the family kernel once, enforcing the p-ary contract.

    neighbors must hold exactly p-1 values and the edge size d must be at
    least p (smaller edges are handled by edge_update via the reduced
    arity, not by this entry point).
    """
    neigh = np.asarray(list(neighbors), dtype=float)
    if neigh.shape != (family.p - 1,):
        raise ValueError(f"expected {family.p - 1} neighbor values, got {neigh.shape}")
    if d < family.p:
        raise ValueError(f"edge size {d} is below the kernel order {family.p}")
    return float(family.kernel(np.asarray([y_center], dtype=float), neigh[None, :], d)[0])


@lru_cache(maxsize=None)
def _subset_template(d: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Index template for all (center, (q-1)-subset) choices on a size-d edge.

    Returns (centers, neighbors) position arrays of shapes (R,) and
    (R, q-1) with R = d * C(d-1, q-1); positions index into the sorted
    member tuple of an edge.
    """
    centers: list[int] = []
    neighbors: list[tuple[int, ...]] = []
    for c in range(d):
        rest = [i for i in range(d) if i != c]
        for subset in itertools.combinations(rest, q - 1):
            centers.append(c)
            neighbors.append(subset)
    return np.asarray(centers), np.asarray(neighbors).reshape(len(centers), q - 1)


def _dyn_plan(h: Hypergraph, d: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Node-index arrays for every (edge, center, subset) row of size class d."""
    key = ("dyn", d, q)
    if key in h._plan_cache:
        return h._plan_cache[key]
    edges = np.asarray(h.edges(d), dtype=np.intp)
    centers_pos, neigh_pos = _subset_template(d, q)
    centers = edges[:, centers_pos].ravel()
    neigh = edges[:, neigh_pos].reshape(-1, q - 1)
    h._plan_cache[key] = (centers, neigh)
    return centers, neigh


def edge_update(family: UpdateFamily, x_edge: Sequence[float], center_index: int) -> float:
    """Total update a single hyperedge contributes to its center node.

    Sums the kernel over all (q-1)-subsets of the non-center values with
    q = min(p, d); for d <= p this is one full-arity kernel call.
    """
    values = np.asarray(x_edge, dtype=float)
    d = len(values)
    if not 0 <= center_index < d:
        raise ValueError(f"center index {center_index} outside edge of size {d}")
    q = family.arity_on(d)
    others = np.delete(values, center_index)
    subsets = np.asarray(list(itertools.combinations(others, q - 1)), dtype=float)
    centers = np.full(len(subsets), values[center_index])
    return float(family.kernel(centers, subsets, d).sum())


def evaluate_rhs(h: Hypergraph, family: UpdateFamily, x: np.ndarray) -> np.ndarray:
    """Time derivative of every node state under the family's dynamics.

    Each node accumulates edge_update over all hyperedges containing it;
    nodes in no hyperedge have zero derivative.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (h.n_nodes,):
        raise ValueError(f"state has shape {x.shape}, hypergraph has {h.n_nodes} nodes")
    if family.self_update is not None:
        raise NotImplementedError("self-dynamics are fixed to zero")
    out = np.zeros(h.n_nodes)
    for d in h.edges_by_size:
        centers, neigh = _dyn_plan(h, d, family.arity_on(d))
        vals = family.kernel(x[centers], x[neigh], d)
        out += np.bincount(centers, weights=vals, minlength=h.n_nodes)
    return out


class DivergenceError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state encountered at step {step}")
        self.step = step


@dataclass
class Trajectory:
    """Uniformly spaced states x(0), x(dt), ..., x(steps * dt)."""

    dt: float
    states: np.ndarray  # (steps + 1, n_nodes)

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_nodes(self) -> int:
        return self.states.shape[1]


def integrate_euler(
    h: Hypergraph,
    family: UpdateFamily,
    x0: np.ndarray,
    steps: int,
    dt: float,
    rhs: Callable[[np.ndarray], np.ndarray] | None = None,
) -> Trajectory:
    """Forward-Euler trajectory of the dynamics from x0.

    rhs may override the derivative function (used to roll out learned
    models with the identical integrator). Raises DivergenceError with
    the offending step index if a state stops being finite.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if rhs is None:
        rhs = lambda state: evaluate_rhs(h, family, state)
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise DivergenceError(0)
    out = np.empty((steps + 1, x.shape[0]))
    out[0] = x
    for t in range(steps):
        x = x + dt * rhs(x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(t + 1)
        out[t + 1] = x
    return Trajectory(dt=dt, states=out)


def save_trajectory(traj: Trajectory, path: str | Path, header: dict | None = None) -> None:
    """Write a trajectory file: one json header record, then one CSV row per step."""
    import json

    meta = dict(header or {})
    meta.setdefault("dt", traj.dt)
    meta.setdefault("steps", traj.steps)
    lines = ["#header " + json.dumps(meta, sort_keys=True)]
    for row in traj.states:
        lines.append(",".join(f"{v:.17g}" for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_trajectory(path: str | Path) -> tuple[Trajectory, dict]:
    """Read a trajectory file back into (Trajectory, header dict)."""
    import json

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#header "):
        raise ValueError(f"{path}: missing trajectory header record")
    meta = json.loads(lines[0][len("#header "):])
    rows = [
        np.asarray([float(p) for p in line.split(",")])
        for line in lines[1:]
        if line.strip()
    ]
    states = np.vstack(rows)
    return Trajectory(dt=float(meta["dt"]), states=states), meta
