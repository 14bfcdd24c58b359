"""Network topologies and combination matrices.

Convention: the combination matrix ``Gamma`` is indexed ``entries[l, k]``
and column ``k`` holds the weights node ``k`` applies to the estimates it
receives from its neighbors ``l``, i.e. ``w_k = sum_l entries[l, k] * phi_l``.
Columns therefore sum to one (left stochastic); rows generally do not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

COLUMN_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Topology:
    """Undirected graph over ``node_count`` nodes; every node neighbors itself."""

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        adj = adj.copy()
        np.fill_diagonal(adj, True)
        object.__setattr__(self, "adjacency", _frozen(adj))

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def neighborhoods(self) -> tuple[tuple[int, ...], ...]:
        """``N_k`` for each node, zero-based and including ``k`` itself."""
        return tuple(tuple(np.flatnonzero(self.adjacency[:, k]).tolist()) for k in range(self.node_count))

    @property
    def degrees(self) -> np.ndarray:
        """Neighborhood sizes ``|N_k|`` (self included)."""
        return self.adjacency.sum(axis=0)

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges ``(l, k)`` with ``l < k``, zero-based."""
        rows, cols = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(rows.tolist(), cols.tolist()))

    def is_connected(self) -> bool:
        seen = {0}
        frontier = [0]
        while frontier:
            k = frontier.pop()
            for l in np.flatnonzero(self.adjacency[k]):
                if l not in seen:
                    seen.add(int(l))
                    frontier.append(int(l))
        return len(seen) == self.node_count

    def __eq__(self, other):
        return isinstance(other, Topology) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Topology":
        """Build from zero-based undirected edges."""
        adj = np.zeros((n, n), dtype=bool)
        for l, k in edges:
            if not (0 <= l < n and 0 <= k < n):
                raise ValueError(f"edge ({l}, {k}) out of range for {n} nodes")
            adj[l, k] = adj[k, l] = True
        return cls(adj)

    def to_edge_list(self) -> str:
        """Serialize: ``N <count>`` then one 1-indexed ``l k`` line per edge."""
        lines = [f"N {self.node_count}"]
        lines += [f"{l + 1} {k + 1}" for l, k in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "Topology":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines:
            raise ValueError("empty edge list")
        head = lines[0].split()
        if len(head) != 2 or head[0] != "N":
            raise ValueError(f"edge list must start with 'N <count>', got {lines[0]!r}")
        n = int(head[1])
        edges = []
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'l k', got {ln!r}")
            l, k = int(parts[0]) - 1, int(parts[1]) - 1
            if l == k:
                continue
            edges.append((l, k))
        return cls.from_edges(n, edges)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_edge_list())

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_edge_list(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class CombinationMatrix:
    """Nonnegative N x N matrix with ``entries[l, k] = a_{l,k}``."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"combination matrix must be square, got shape {e.shape}")
        object.__setattr__(self, "entries", _frozen(e))

    @property
    def node_count(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other):
        return isinstance(other, CombinationMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def build_uniform_combiner(topology: Topology) -> CombinationMatrix:
    """``a_{l,k} = 1/|N_k|`` for ``l`` in ``N_k``, else 0."""
    adj = topology.adjacency.astype(float)
    return CombinationMatrix(adj / topology.degrees[np.newaxis, :])


def build_metropolis_combiner(topology: Topology) -> CombinationMatrix:
    """Metropolis weights; symmetric and doubly stochastic."""
    n = topology.node_count
    deg = topology.degrees
    a = np.zeros((n, n))
    for l, k in topology.edges():
        a[l, k] = a[k, l] = 1.0 / max(deg[l], deg[k])
    np.fill_diagonal(a, 1.0 - a.sum(axis=0))
    return CombinationMatrix(a)


def random_geometric_topology(n: int, radius: float, seed: int) -> Topology:
    """Place ``n`` nodes uniformly in the unit square; link pairs within ``radius``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < radius <= math.sqrt(2):
        raise ValueError("radius must lie in (0, sqrt(2)]")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(size=(n, 2))
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    adj = dist <= radius
    # guard against the rounding of sqrt in the fully connected case
    if radius >= math.sqrt(2):
        adj[:] = True
    return Topology(adj)


@dataclass(frozen=True)
class Violation:
    kind: str  # "support" | "column_sum" | "nonnegative" | "range"
    index: tuple[int, ...]
    value: float

    def __str__(self):
        return f"{self.kind} violated at {self.index}: {self.value!r}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def __str__(self):
        lines = [str(v) for v in self.violations] + [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


def validate_combiner(matrix: CombinationMatrix, topology: Topology, tol: float = COLUMN_SUM_TOL) -> ValidationReport:
    """Check support, column sums, and entry range of ``matrix`` against ``topology``."""
    a = matrix.entries
    if a.shape != topology.adjacency.shape:
        raise ValueError(f"dimension mismatch: matrix {a.shape} vs topology {topology.adjacency.shape}")
    report = ValidationReport()
    for l, k in zip(*np.nonzero((a != 0) & ~topology.adjacency)):
        report.violations.append(Violation("support", (int(l), int(k)), float(a[l, k])))
    for l, k in zip(*np.nonzero(a < 0)):
        report.violations.append(Violation("nonnegative", (int(l), int(k)), float(a[l, k])))
    for l, k in zip(*np.nonzero(a > 1)):
        report.violations.append(Violation("range", (int(l), int(k)), float(a[l, k])))
    sums = a.sum(axis=0)
    for k in np.flatnonzero(np.abs(sums - 1.0) > tol):
        report.violations.append(Violation("column_sum", (int(k),), float(sums[k])))
    if not topology.is_connected():
        report.warnings.append("topology is disconnected; components adapt independently")
    return report


def ring_topology(n: int) -> Topology:
    return Topology.from_edges(n, [(k, (k + 1) % n) for k in range(n)] if n > 1 else [])


def fully_connected_topology(n: int) -> Topology:
    return Topology(np.ones((n, n), dtype=bool))
