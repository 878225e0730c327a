"""Chimera hardware graphs and random spin-glass instances on them.

Qubit ids follow ``((row * N) + col) * 2L + partition * L + index`` with the
left partition numbered 0.  Left-partition qubits couple vertically between
cells, right-partition qubits horizontally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ising import IsingProblem

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class ChimeraSpec:
    rows: int
    cols: int
    shore: int
    broken: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if min(self.rows, self.cols, self.shore) < 1:
            raise ValidationError("rows, cols and shore must all be >= 1")
        broken = frozenset(int(b) for b in self.broken)
        bad = [b for b in broken if not 0 <= b < self.n_ids]
        if bad:
            raise ValidationError(f"broken qubit ids out of range: {sorted(bad)}")
        object.__setattr__(self, "broken", broken)

    @property
    def n_ids(self):
        return self.rows * self.cols * 2 * self.shore

    def qubit_id(self, row, col, partition, index):
        return ((row * self.cols) + col) * 2 * self.shore + partition * self.shore + index

    def coordinates(self, q):
        cell, rem = divmod(q, 2 * self.shore)
        row, col = divmod(cell, self.cols)
        partition, index = divmod(rem, self.shore)
        return row, col, partition, index


@dataclass(frozen=True, eq=False)
class HardwareGraph:
    spec: ChimeraSpec
    nodes: tuple
    edges: np.ndarray  # (m, 2), u < v, lexicographically sorted

    @property
    def n_ids(self):
        return self.spec.n_ids

    @property
    def coordinates(self):
        return {q: self.spec.coordinates(q) for q in self.nodes}

    def edge_set(self):
        return {(int(u), int(v)) for u, v in self.edges}

    def adjacency(self):
        adj = {q: set() for q in self.nodes}
        for u, v in self.edges.tolist():
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degree(self, q):
        return int(np.count_nonzero(self.edges == q))

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges.tolist())
        return g


def build_chimera(spec: ChimeraSpec) -> HardwareGraph:
    M, N, L = spec.rows, spec.cols, spec.shore
    q = spec.qubit_id
    edges = []
    for r in range(M):
        for c in range(N):
            for i in range(L):
                for j in range(L):
                    edges.append((q(r, c, LEFT, i), q(r, c, RIGHT, j)))
                if r + 1 < M:
                    edges.append((q(r, c, LEFT, i), q(r + 1, c, LEFT, i)))
                if c + 1 < N:
                    edges.append((q(r, c, RIGHT, i), q(r, c + 1, RIGHT, i)))
    broken = spec.broken
    kept = sorted((min(u, v), max(u, v)) for u, v in edges if u not in broken and v not in broken)
    nodes = tuple(i for i in range(spec.n_ids) if i not in broken)
    return HardwareGraph(spec, nodes, np.array(kept, dtype=np.int64).reshape(-1, 2))


def random_spin_glass(graph: HardwareGraph, coupling_domain=(-1.0, 1.0), field_domain=(0.0,), seed=0):
    """Draw J uniformly from ``coupling_domain`` on every edge and h from
    ``field_domain`` on every working qubit. Broken qubits keep h = 0."""
    coupling_domain = list(coupling_domain)
    field_domain = list(field_domain)
    if not coupling_domain or not field_domain:
        raise ValidationError("coupling and field domains must be non-empty")
    if not graph.nodes:
        raise ValidationError("graph has no working qubits")
    rng = np.random.default_rng(seed)
    J = np.asarray(coupling_domain, dtype=float)[rng.integers(0, len(coupling_domain), len(graph.edges))]
    h = np.zeros(graph.n_ids)
    nodes = np.array(graph.nodes)
    h[nodes] = np.asarray(field_domain, dtype=float)[rng.integers(0, len(field_domain), len(nodes))]
    return IsingProblem(graph.n_ids, h, graph.edges, J)


def parse_chimera_shape(text: str) -> tuple:
    """'8x8x4' -> (8, 8, 4)."""
    try:
        parts = tuple(int(x) for x in text.lower().split("x"))
    except ValueError as e:
        raise ValidationError(f"bad Chimera shape {text!r}") from e
    if len(parts) != 3:
        raise ValidationError(f"Chimera shape must be MxNxL, got {text!r}")
    return parts


def dumps_graph(graph: HardwareGraph) -> str:
    s = graph.spec
    lines = [f"chimera {s.rows} {s.cols} {s.shore} {len(s.broken)}"]
    lines += [f"{u} {v}" for u, v in graph.edges.tolist()]
    lines += [str(b) for b in sorted(s.broken)]
    return "\n".join(lines) + "\n"


def loads_graph(text: str) -> HardwareGraph:
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0]
    if len(head) != 5 or head[0] != "chimera":
        raise ValidationError(f"bad graph header: {' '.join(head)!r}")
    M, N, L, n_broken = (int(x) for x in head[1:])
    broken = [int(ln[0]) for ln in lines[1:] if len(ln) == 1]
    if len(broken) != n_broken:
        raise ValidationError(f"header announces {n_broken} broken qubits, found {len(broken)}")
    graph = build_chimera(ChimeraSpec(M, N, L, frozenset(broken)))
    listed = {(min(int(a), int(b)), max(int(a), int(b))) for a, b in (ln for ln in lines[1:] if len(ln) == 2)}
    if listed != graph.edge_set():
        raise ValidationError("edge list does not match the Chimera graph named in the header")
    return graph


def write_graph(graph: HardwareGraph, path):
    Path(path).write_text(dumps_graph(graph))


def read_graph(path) -> HardwareGraph:
    return loads_graph(Path(path).read_text())
