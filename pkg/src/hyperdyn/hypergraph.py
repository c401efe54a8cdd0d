"""Hypergraph container with size-grouped edges, random generation, and file IO.

Edges are grouped by their size d (number of member nodes). Within a size
class, edges are stored as sorted tuples of distinct 0-based node indices,
deduplicated and ordered lexicographically, so two hypergraphs built from
the same edge sets compare equal and serialize identically.
"""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._io import atomic_write_text

DEFAULT_MAX_ARITY = 5


class Hypergraph:
    """Immutable collection of hyperedges grouped by size.

    The topological order is the size of the largest hyperedge (0 for an
    empty edge set). Derived incidence structures are cached on the
    instance; the instance itself must not be mutated after construction.
    """

    __slots__ = ("n_nodes", "edges_by_size", "_incidence_cache", "_plan_cache")

    def __init__(self, n_nodes: int, edges_by_size: Mapping[int, Sequence[Sequence[int]]]):
        if n_nodes < 0:
            raise ValueError("n_nodes must be nonnegative")
        canonical: dict[int, tuple[tuple[int, ...], ...]] = {}
        for d in sorted(edges_by_size):
            edges = edges_by_size[d]
            if not edges:
                continue
            if d < 2:
                raise ValueError(f"hyperedge size {d} is below the minimum of 2")
            seen = sorted({tuple(sorted(e)) for e in edges})
            for edge in seen:
                if len(edge) != d or len(set(edge)) != d:
                    raise ValueError(f"edge {edge} does not have {d} distinct members")
                if edge[0] < 0 or edge[-1] >= n_nodes:
                    raise ValueError(f"edge {edge} has node index outside [0, {n_nodes})")
            canonical[d] = tuple(seen)
        self.n_nodes = int(n_nodes)
        self.edges_by_size = canonical
        self._incidence_cache: dict[int, dict[int, tuple[int, ...]]] = {}
        self._plan_cache: dict = {}

    @property
    def order(self) -> int:
        """Topological order: size of the largest hyperedge, 0 when empty."""
        return max(self.edges_by_size) if self.edges_by_size else 0

    @property
    def n_edges(self) -> int:
        return sum(len(e) for e in self.edges_by_size.values())

    def edges(self, d: int) -> tuple[tuple[int, ...], ...]:
        """All hyperedges of size d (empty tuple when none)."""
        return self.edges_by_size.get(d, ())

    def all_edges(self) -> list[tuple[int, ...]]:
        """Every hyperedge, ordered by (size, lexicographic members)."""
        out: list[tuple[int, ...]] = []
        for d in sorted(self.edges_by_size):
            out.extend(self.edges_by_size[d])
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return self.n_nodes == other.n_nodes and self.edges_by_size == other.edges_by_size

    def __hash__(self):
        return hash((self.n_nodes, tuple(sorted(self.edges_by_size.items()))))

    def __repr__(self) -> str:
        sizes = ", ".join(f"{len(v)}x{d}" for d, v in sorted(self.edges_by_size.items()))
        return f"Hypergraph(n_nodes={self.n_nodes}, edges=[{sizes or 'none'}])"


def build_hypergraph(
    n_nodes: int,
    hyperedges: Iterable[Iterable[int]],
    max_arity: int = DEFAULT_MAX_ARITY,
) -> tuple[Hypergraph, int]:
    """Group hyperedges by size into a validated Hypergraph.

    Duplicate edges (same member set) within a size class are dropped;
    the number of dropped duplicates is returned alongside the hypergraph.

    Raises ValueError for node indices outside [0, n_nodes), edges with
    fewer than 2 members, or edges larger than max_arity.
    """
    grouped: dict[int, list[tuple[int, ...]]] = {}
    total = 0
    for raw in hyperedges:
        edge = tuple(sorted(set(raw)))
        d = len(edge)
        if d < 2:
            raise ValueError(f"hyperedge {tuple(raw)} has fewer than 2 distinct members")
        if d > max_arity:
            raise ValueError(f"hyperedge of size {d} exceeds the maximum arity {max_arity}")
        if edge[0] < 0 or edge[-1] >= n_nodes:
            raise ValueError(f"hyperedge {edge} has node index outside [0, {n_nodes})")
        grouped.setdefault(d, []).append(edge)
        total += 1
    h = Hypergraph(n_nodes, grouped)
    duplicates = total - h.n_edges
    return h, duplicates


def incidence_view(h: Hypergraph, d: int) -> dict[int, tuple[int, ...]]:
    """Map each node to the indices of the size-d hyperedges containing it.

    This is the sparse realization of the node-to-edge structure used to
    collect per-edge state blocks; the sum of list lengths over all nodes
    equals d * |E_d|. A size with no edges yields an empty mapping.
    """
    if d in h._incidence_cache:
        return h._incidence_cache[d]
    view: dict[int, list[int]] = {}
    for idx, edge in enumerate(h.edges(d)):
        for node in edge:
            view.setdefault(node, []).append(idx)
    frozen = {node: tuple(idxs) for node, idxs in view.items()}
    h._incidence_cache[d] = frozen
    return frozen


def clique_weights(h: Hypergraph) -> np.ndarray:
    """Pairwise co-membership counts: A[i, j] = number of hyperedges containing both.

    Equals B^T B for the node-to-edge incidence B over all hyperedges.
    The diagonal holds per-node edge membership counts; consumers of the
    pairwise reduction only use the off-diagonal part.
    """
    a = np.zeros((h.n_nodes, h.n_nodes), dtype=np.int64)
    for edges in h.edges_by_size.values():
        for edge in edges:
            idx = np.asarray(edge)
            a[np.ix_(idx, idx)] += 1
    return a


def generate_er_hypergraph(
    n_nodes: int,
    probs: Mapping[int, float],
    rng_seed: int | np.random.SeedSequence,
) -> Hypergraph:
    """Random hypergraph: each candidate size-d subset appears with probs[d].

    Candidate subsets are enumerated in lexicographic order of their sorted
    member tuples, and one uniform draw is spent per candidate, so the
    result is a pure function of (n_nodes, probs, rng_seed).
    """
    for d, p in probs.items():
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability for size {d} is {p}, outside [0, 1]")
        if d < 2:
            raise ValueError(f"edge size {d} is below the minimum of 2")
        if d > n_nodes:
            raise ValueError(f"edge size {d} exceeds n_nodes={n_nodes}")
    rng = np.random.default_rng(rng_seed)
    grouped: dict[int, list[tuple[int, ...]]] = {}
    for d in sorted(probs):
        candidates = list(itertools.combinations(range(n_nodes), d))
        keep = rng.random(len(candidates)) < probs[d]
        chosen = [c for c, k in zip(candidates, keep) if k]
        if chosen:
            grouped[d] = chosen
    return Hypergraph(n_nodes, grouped)


class HyperedgeFileError(ValueError):
    """Raised when a hyperedge-list file cannot be parsed."""


def save_hyperedge_file(h: Hypergraph, path: str | Path, comments: Sequence[str] = ()) -> None:
    """Write the hyperedge-list text format.

    Optional comment lines come first, then the node count declaration,
    then one hyperedge per line as whitespace-separated node ids, ordered
    by (size, lexicographic members).
    """
    lines = [f"# {c}" for c in comments]
    lines.append(f"nodes {h.n_nodes}")
    for edge in h.all_edges():
        lines.append(" ".join(str(i) for i in edge))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_hyperedge_file(
    path: str | Path,
    max_size: int | None = None,
    max_arity: int = DEFAULT_MAX_ARITY,
    return_mapping: bool = False,
):
    """Parse a hyperedge-list file into a Hypergraph.

    Lines starting with '#' are comments. An optional first non-comment
    line ``nodes N`` declares the node count, in which case ids must lie
    in [0, N) and are used as-is. Without it, arbitrary nonnegative ids
    are remapped densely onto 0..n-1 in sorted order.

    max_size, when given, silently drops larger hyperedges before
    validation (used to cut a raw edge list down to a target order).
    With return_mapping=True, returns (hypergraph, mapping) where mapping
    sends original ids to internal indices.
    """
    declared: int | None = None
    raw_edges: list[tuple[int, ...]] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if declared is None and not raw_edges and parts[0] == "nodes":
                if len(parts) != 2 or not parts[1].isdigit():
                    raise HyperedgeFileError(f"{path}:{lineno}: malformed node count line {line!r}")
                declared = int(parts[1])
                continue
            try:
                members = tuple(int(p) for p in parts)
            except ValueError as exc:
                raise HyperedgeFileError(f"{path}:{lineno}: malformed hyperedge line {line!r}") from exc
            if any(m < 0 for m in members):
                raise HyperedgeFileError(f"{path}:{lineno}: negative node id in {line!r}")
            if max_size is not None and len(set(members)) > max_size:
                continue
            raw_edges.append(members)

    if declared is not None:
        used = {m for e in raw_edges for m in e}
        bad = [m for m in used if m >= declared]
        if bad:
            raise HyperedgeFileError(
                f"{path}: node id {max(bad)} inconsistent with declared count {declared}"
            )
        mapping = {i: i for i in sorted(used)}
        n_nodes = declared
        edges = raw_edges
    else:
        ids = sorted({m for e in raw_edges for m in e})
        mapping = {orig: new for new, orig in enumerate(ids)}
        n_nodes = len(ids)
        edges = [tuple(mapping[m] for m in e) for e in raw_edges]

    h, _ = build_hypergraph(n_nodes, edges, max_arity=max_arity)
    if return_mapping:
        return h, mapping
    return h
