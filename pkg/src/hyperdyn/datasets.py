"""Dataset generation: labeled (state, derivative) pairs from two scenarios.

Point datasets pair independently sampled initial states with exact
derivatives. Trajectory datasets integrate forward-Euler trajectories and
emit one sample per step, labeled with the derivative used for that step
(for Euler data the forward difference quotient and the evaluated
derivative coincide, so the exact value is stored).

All randomness is derived from one master seed: the generator for item
``index`` of kind ``stream`` is seeded with SeedSequence((master, stream,
index)), so datasets are pure functions of their arguments and regenerate
byte-identically.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .dynamics import DivergenceError, UpdateFamily, evaluate_rhs, integrate_euler
from .hypergraph import Hypergraph, generate_er_hypergraph, load_hyperedge_file, save_hyperedge_file

log = logging.getLogger(__name__)

HG_STREAM = 0
STATE_STREAM = 1

INIT_LAWS = {
    "kuramoto": "uniform:-pi:pi",
    "si": "uniform:0:1",
    "mcm": "square:0:1",
    "diffusion": "uniform:-1:1",
}


def derived_rng(master_seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, stream, index)))


def sample_initial_state(
    family_name: str,
    n_nodes: int,
    rng: np.random.Generator,
    law: str | None = None,
) -> np.ndarray:
    """Draw an i.i.d. initial state from the family's initialization law.

    Phases start uniform in [-pi, pi], infection probabilities uniform in
    [0, 1], diffusion states uniform in [-1, 1]. The consensus model uses
    a law skewed toward 0 on [0, 1]: the square of a uniform draw
    (overridable via law="uniform:0:1").
    """
    law = law or INIT_LAWS.get(family_name)
    if law is None:
        raise ValueError(f"no initialization law for family {family_name!r}")
    kind, lo, hi = law.split(":")
    bounds = {"pi": np.pi, "-pi": -np.pi}
    low = bounds.get(lo, None)
    low = float(lo) if low is None else low
    high = bounds.get(hi, None)
    high = float(hi) if high is None else high
    u = rng.uniform(low, high, size=n_nodes)
    if kind == "uniform":
        return u
    if kind == "square":
        return u * u
    raise ValueError(f"unknown initialization law {law!r}")


@dataclass
class Sample:
    """One labeled pair: a state vector and its derivative on a hypergraph."""

    hypergraph: Hypergraph
    x: np.ndarray
    dxdt: np.ndarray
    hg_ref: str
    traj_id: int | None = None
    step: int | None = None


@dataclass
class Dataset:
    samples: list[Sample]
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def group_ids(self) -> list[int]:
        """Leakage-safe fold keys: trajectory ids when present, else sample indices."""
        if self.manifest.get("scenario") == "trajectory":
            return [s.traj_id for s in self.samples]
        return list(range(len(self.samples)))


class HypergraphSource:
    """Supplies the topology for dataset item i, cycling over a fixed pool."""

    def graph(self, index: int) -> tuple[Hypergraph, str]:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class ERSource(HypergraphSource):
    """Pool of n_graphs random hypergraphs, generated lazily per derived seed."""

    def __init__(self, n_nodes: int, probs: dict[int, float], n_graphs: int, master_seed: int):
        self.n_nodes = n_nodes
        self.probs = dict(probs)
        self.n_graphs = n_graphs
        self.master_seed = master_seed
        self._cache: dict[int, Hypergraph] = {}

    def graph(self, index: int) -> tuple[Hypergraph, str]:
        g = index % self.n_graphs
        if g not in self._cache:
            seed = np.random.SeedSequence((self.master_seed, HG_STREAM, g))
            self._cache[g] = generate_er_hypergraph(self.n_nodes, self.probs, seed)
        return self._cache[g], f"hg_{g:05d}"

    def describe(self) -> dict:
        return {
            "kind": "er",
            "n_nodes": self.n_nodes,
            "probs": {str(d): p for d, p in self.probs.items()},
            "n_graphs": self.n_graphs,
        }


class FixedSource(HypergraphSource):
    """A fixed list of hypergraphs, reused round-robin."""

    def __init__(self, graphs: Sequence[Hypergraph], refs: Sequence[str] | None = None):
        if not graphs:
            raise ValueError("need at least one hypergraph")
        self.graphs = list(graphs)
        self.refs = list(refs) if refs else [f"hg_{i:05d}" for i in range(len(graphs))]

    def graph(self, index: int) -> tuple[Hypergraph, str]:
        g = index % len(self.graphs)
        return self.graphs[g], self.refs[g]

    def describe(self) -> dict:
        return {"kind": "fixed", "n_graphs": len(self.graphs)}


def make_point_dataset(
    source: HypergraphSource,
    family: UpdateFamily,
    count: int,
    rng_seed: int,
    init_law: str | None = None,
) -> Dataset:
    """Independently sampled states paired with exact derivatives."""
    if count < 1:
        raise ValueError("count must be >= 1")
    samples = []
    for i in range(count):
        h, ref = source.graph(i)
        rng = derived_rng(rng_seed, STATE_STREAM, i)
        x = sample_initial_state(family.name, h.n_nodes, rng, law=init_law)
        samples.append(Sample(h, x, evaluate_rhs(h, family, x), hg_ref=ref))
    manifest = {
        "scenario": "point",
        "family": family.name,
        "p": family.p,
        "count": count,
        "seed": rng_seed,
        "init_law": init_law or INIT_LAWS[family.name],
        "source": source.describe(),
    }
    return Dataset(samples, manifest)


def make_trajectory_dataset(
    source: HypergraphSource,
    family: UpdateFamily,
    n_traj: int,
    steps: int,
    dt: float,
    rng_seed: int,
    init_law: str | None = None,
) -> Dataset:
    """Samples extracted from Euler trajectories with exact derivative labels.

    Each trajectory runs on its own source hypergraph; one sample is
    emitted per integration step (n_traj * steps in total). Trajectories
    that leave the finite range are dropped and counted in the manifest.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    samples = []
    dropped = 0
    for j in range(n_traj):
        h, ref = source.graph(j)
        rng = derived_rng(rng_seed, STATE_STREAM, j)
        x0 = sample_initial_state(family.name, h.n_nodes, rng, law=init_law)
        try:
            traj = integrate_euler(h, family, x0, steps, dt)
        except DivergenceError as exc:
            dropped += 1
            log.warning("trajectory %d diverged at step %d; dropped", j, exc.step)
            continue
        for t in range(steps):
            x = traj.states[t]
            samples.append(
                Sample(h, x, evaluate_rhs(h, family, x), hg_ref=ref, traj_id=j, step=t)
            )
    manifest = {
        "scenario": "trajectory",
        "family": family.name,
        "p": family.p,
        "count": len(samples),
        "n_traj": n_traj,
        "steps": steps,
        "dt": dt,
        "dropped_trajectories": dropped,
        "seed": rng_seed,
        "init_law": init_law or INIT_LAWS[family.name],
        "source": source.describe(),
    }
    return Dataset(samples, manifest)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write samples to one CSV-like file plus one hyperedge file per topology.

    The first record is the json manifest; each sample row is
    ``hg_ref,traj,step`` followed by the state values and the label
    values, both at 17 significant digits. Hypergraph files land in a
    sibling directory named after the dataset file.
    """
    path = Path(path)
    hg_dir = path.parent / f"{path.stem}_hg"
    hg_dir.mkdir(parents=True, exist_ok=True)
    written: set[str] = set()
    lines = ["#manifest " + json.dumps(dataset.manifest, sort_keys=True)]
    lines.append("#columns hg_ref,traj,step,x...,dxdt...")
    for s in dataset.samples:
        if s.hg_ref not in written:
            save_hyperedge_file(s.hypergraph, hg_dir / f"{s.hg_ref}.txt")
            written.add(s.hg_ref)
        traj = "" if s.traj_id is None else str(s.traj_id)
        step = "" if s.step is None else str(s.step)
        values = [f"{v:.17g}" for v in s.x] + [f"{v:.17g}" for v in s.dxdt]
        lines.append(",".join([f"{hg_dir.name}/{s.hg_ref}.txt", traj, step, *values]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset file written by save_dataset."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#manifest "):
        raise ValueError(f"{path}: missing dataset manifest record")
    manifest = json.loads(lines[0][len("#manifest "):])
    graphs: dict[str, Hypergraph] = {}
    samples: list[Sample] = []
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        ref, traj, step, *values = line.split(",")
        if ref not in graphs:
            graphs[ref] = load_hyperedge_file(path.parent / ref)
        h = graphs[ref]
        n = h.n_nodes
        if len(values) != 2 * n:
            raise ValueError(f"{path}: sample row has {len(values)} values, expected {2 * n}")
        x = np.asarray([float(v) for v in values[:n]])
        y = np.asarray([float(v) for v in values[n:]])
        samples.append(
            Sample(
                h,
                x,
                y,
                hg_ref=Path(ref).stem,
                traj_id=int(traj) if traj else None,
                step=int(step) if step else None,
            )
        )
    return Dataset(samples, manifest)
