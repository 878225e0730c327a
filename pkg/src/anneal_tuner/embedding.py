"""Chain embeddings, majority-vote decoding and strict-embedding statistics."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernel
from .errors import RegionNotFoundError, ValidationError
from .ising import IsingProblem, Qubo, normalize_dynamic_range, qubo_to_ising, spins_to_binary


@dataclass(frozen=True, eq=False)
class Embedding:
    """Map from logical variable id to the hardware qubits of its chain."""

    chains: dict

    def __post_init__(self):
        chains = {int(k): tuple(sorted(int(q) for q in v)) for k, v in self.chains.items()}
        if any(len(c) == 0 for c in chains.values()):
            raise ValidationError("every chain needs at least one qubit")
        seen = {}
        for var, chain in chains.items():
            for q in chain:
                if q in seen:
                    raise ValidationError(f"qubit {q} shared by chains {seen[q]} and {var}")
                seen[q] = var
        object.__setattr__(self, "chains", dict(sorted(chains.items())))

    @property
    def n_logical(self):
        return max(self.chains) + 1 if self.chains else 0

    @property
    def max_chain_length(self):
        return max((len(c) for c in self.chains.values()), default=0)

    def owner(self, n_ids):
        own = np.full(n_ids, -1, dtype=np.int64)
        for var, chain in self.chains.items():
            own[list(chain)] = var
        return own

    def to_json(self):
        return json.dumps({str(k): list(v) for k, v in self.chains.items()}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls({int(k): v for k, v in json.loads(text).items()})


def read_embedding(path) -> Embedding:
    return Embedding.from_json(Path(path).read_text())


def write_embedding(emb: Embedding, path):
    Path(path).write_text(emb.to_json())


def identity_embedding(qubits) -> Embedding:
    return Embedding({int(q): (int(q),) for q in qubits})


def pair_chain_embedding(graph, cells=None) -> Embedding:
    """Test fixture: in each unit cell chain left qubit k with right qubit k.

    Logical variable ids run cell by cell. Only cells whose paired qubits
    are both working are used.
    """
    spec = graph.spec
    nodes = set(graph.nodes)
    if cells is None:
        cells = [(r, c) for r in range(spec.rows) for c in range(spec.cols)]
    chains = {}
    for r, c in cells:
        for k in range(spec.shore):
            a, b = spec.qubit_id(r, c, 0, k), spec.qubit_id(r, c, 1, k)
            if a in nodes and b in nodes:
                chains[len(chains)] = (a, b)
    return Embedding(chains)


def induced_logical_edges(emb: Embedding, graph):
    """Logical pairs (u, v), u < v, joined by at least one hardware edge."""
    own = emb.owner(graph.n_ids)
    a, b = own[graph.edges[:, 0]], own[graph.edges[:, 1]]
    keep = (a >= 0) & (b >= 0) & (a != b)
    pairs = np.sort(np.stack([a[keep], b[keep]], axis=1), axis=1)
    return sorted({(int(u), int(v)) for u, v in pairs})


def _check_connected(chain, adj):
    members = set(chain)
    start = chain[0]
    seen = {start}
    queue = deque([start])
    while queue:
        q = queue.popleft()
        for nb in adj.get(q, ()):
            if nb in members and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return seen == members


@dataclass(frozen=True, eq=False)
class EmbeddedProblem:
    hardware: IsingProblem  # normalized
    embedding: Embedding
    J_E: float
    scale: float
    logical: object  # IsingProblem or Qubo, as supplied
    logical_ising: IsingProblem
    chain_edges: np.ndarray
    raw: IsingProblem  # hardware problem before normalization

    def lift(self, s_logical):
        """Aligned hardware state for logical spins; unused qubits are set to +1."""
        s = np.asarray(s_logical)
        out = np.ones(s.shape[:-1] + (self.hardware.n,), dtype=np.int8)
        for var, chain in self.embedding.chains.items():
            out[..., list(chain)] = s[..., var, None]
        return out

    def logical_energies(self, s_logical, frame="qubo"):
        """Energies of decoded logical spins in the QUBO (full logical) or problem frame."""
        S = np.atleast_2d(s_logical)
        if isinstance(self.logical, Qubo):
            X = spins_to_binary(S)
            if frame == "qubo":
                return self.logical.energies(X)
            if frame == "problem":
                return problem_objective(self.logical).energies(X)
        else:
            if frame == "qubo":
                return self.logical_ising.energies(S)
            if frame == "problem":
                raise ValidationError("an Ising logical problem has no problem/ancilla partition")
        raise ValidationError(f"unknown energy frame {frame!r}")


def embed(logical, emb: Embedding, graph, J_E: float) -> EmbeddedProblem:
    if not J_E > 0:
        raise ValidationError("J_E must be positive")
    lp = qubo_to_ising(logical)[0] if isinstance(logical, Qubo) else logical
    missing = [v for v in range(lp.n) if v not in emb.chains]
    if missing:
        raise ValidationError(f"logical variables without a chain: {missing[:10]}")
    nodes = set(graph.nodes)
    adj = graph.adjacency()
    for var, chain in emb.chains.items():
        off = [q for q in chain if q not in nodes]
        if off:
            raise ValidationError(f"chain {var} uses unavailable qubits {off}")
        if not _check_connected(chain, adj):
            raise ValidationError(f"chain {var} is not connected")

    n = graph.n_ids
    own = emb.owner(n)
    h = np.zeros(n)
    for var, chain in emb.chains.items():
        if var < lp.n:
            h[list(chain)] += lp.h[var] / len(chain)

    a, b = own[graph.edges[:, 0]], own[graph.edges[:, 1]]
    is_chain = (a >= 0) & (a == b)
    J = np.zeros(len(graph.edges))
    J[is_chain] = -J_E

    between = {}
    for idx in np.flatnonzero((a >= 0) & (b >= 0) & (a != b)):
        key = (min(a[idx], b[idx]), max(a[idx], b[idx]))
        between.setdefault(key, []).append(idx)
    for (u, v), w in zip(lp.edges.tolist(), lp.J):
        if w == 0:
            continue
        idxs = between.get((u, v))
        if not idxs:
            raise ValidationError(f"no hardware edge joins chains {u} and {v}")
        J[idxs] += w / len(idxs)

    used = is_chain | (J != 0)
    raw = IsingProblem(n, h, graph.edges[used], J[used], lp.offset)
    hw, scale = normalize_dynamic_range(raw)
    return EmbeddedProblem(hw, emb, float(J_E), scale, logical, lp, graph.edges[is_chain].copy(), raw)


def majority_vote_decode(s_hw, emb: Embedding, seed: int = 0, first_read: int = 0):
    """Decode hardware readouts to logical spins by chain majority.

    Exact ties (even chains) are settled by a coin keyed on
    (seed, read index, chain id), so decoding is reproducible read by read.
    """
    S = np.asarray(s_hw)
    single = S.ndim == 1
    S = np.atleast_2d(S)
    n_log = emb.n_logical
    out = np.ones((len(S), n_log), dtype=np.int8)
    tie_cols = []
    for var, chain in emb.chains.items():
        total = S[:, list(chain)].sum(axis=1, dtype=np.int64)
        out[:, var] = np.where(total >= 0, 1, -1)
        if len(chain) % 2 == 0:
            tie_cols.append((var, total == 0))
    if tie_cols:
        rows = np.flatnonzero(np.any(np.stack([t for _, t in tie_cols], axis=1), axis=1))
        if len(rows):
            chains = np.array([v for v, _ in tie_cols], dtype=np.int64)
            coins = _kernel.coin_flips(seed, rows.astype(np.int64) + first_read, chains)
            for j, (var, tie) in enumerate(tie_cols):
                hit = tie[rows]
                out[rows[hit], var] = coins[hit, j]
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class SEReport:
    f_se: float
    passed: np.ndarray
    J_star: float | None = None
    J_star2: float | None = None


def chain_aligned(s_hw, emb: Embedding):
    S = np.atleast_2d(np.asarray(s_hw))
    ok = np.ones(len(S), dtype=bool)
    for chain in emb.chains.values():
        if len(chain) > 1:
            block = S[:, list(chain)]
            ok &= block.min(axis=1) == block.max(axis=1)
    return ok


def strict_embedding_fraction(readouts, emb: Embedding) -> SEReport:
    """Fraction of reads in which every chain is internally aligned.

    ``readouts`` are hardware spins in the problem frame (ungauged).
    """
    S = getattr(readouts, "spins", readouts)
    S = np.atleast_2d(np.asarray(S))
    if len(S) == 0:
        raise ValidationError("no readouts")
    passed = chain_aligned(S, emb)
    return SEReport(float(passed.mean()), passed)


def je_region_bounds(curve, f_max: float, low: float = 0.05, onset: float = 0.95):
    """Return (J*, J**): first J_E with f_SE >= low, first with f_SE >= onset * f_max."""
    curve = [(float(j), float(f)) for j, f in curve]
    if not 0 <= f_max <= 1:
        raise ValidationError("f_max must lie in [0, 1]")
    if any(b[0] <= a[0] for a, b in zip(curve, curve[1:])):
        raise ValidationError("curve must be sorted by increasing J_E")
    lower = next((j for j, f in curve if f >= low), None)
    if lower is None:
        raise RegionNotFoundError(f"no candidate reaches f_SE >= {low}", curve)
    upper = next((j for j, f in curve if f >= onset * f_max and j >= lower), None)
    if upper is None:
        upper = curve[-1][0]
    return lower, upper


# -- logical energies -------------------------------------------------------


def problem_objective(q: Qubo) -> Qubo:
    """The problem-frame objective: explicit if supplied, else the problem-variable terms."""
    if q.problem_vars is None:
        raise ValidationError("E_problem needs a problem/ancilla variable partition")
    if q.problem is not None:
        return q.problem
    pv = set(q.problem_vars)
    return Qubo(
        q.n,
        {i: c for i, c in q.linear.items() if i in pv},
        {(i, j): c for (i, j), c in q.quadratic.items() if i in pv and j in pv},
        q.offset,
    )


def energy_qubo(q: Qubo, x) -> float:
    return q.energy(x)


def energy_problem(q: Qubo, x) -> float:
    return problem_objective(q).energy(x)
