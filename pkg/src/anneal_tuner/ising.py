"""Ising and QUBO problem representations.

Problems are stored as flat numpy arrays over a canonical, sorted edge
list so that energies of many readouts can be evaluated in one shot.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

# Energies are compared after rounding to this many decimals.
ENERGY_DECIMALS = 12


def round_energies(e):
    return np.round(np.asarray(e, dtype=np.float64), ENERGY_DECIMALS)


def _readonly(a):
    a.setflags(write=False)
    return a


def _canonical_edges(n, edges, J):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    J = np.asarray(J, dtype=np.float64).reshape(-1)
    if len(edges) != len(J):
        raise ValidationError("edge list and coupling vector differ in length")
    if len(edges) == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
    if np.any(edges[:, 0] == edges[:, 1]):
        raise ValidationError("self-couplings are not allowed")
    if edges.min() < 0 or edges.max() >= n:
        raise ValidationError("coupler id out of range")
    edges = np.sort(edges, axis=1)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges, J = edges[order], J[order]
    dup = np.all(edges[1:] == edges[:-1], axis=1)
    if np.any(dup):
        raise ValidationError("duplicate couplers in edge list")
    return edges, J


@dataclass(frozen=True, eq=False)
class IsingProblem:
    """E(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j + offset over s in {+1,-1}^n."""

    n: int
    h: np.ndarray
    edges: np.ndarray
    J: np.ndarray
    offset: float = 0.0
    normalized: bool = False

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError("n must be non-negative")
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        if len(h) != self.n:
            raise ValidationError(f"h has length {len(h)}, expected {self.n}")
        edges, J = _canonical_edges(self.n, self.edges, self.J)
        object.__setattr__(self, "h", _readonly(h))
        object.__setattr__(self, "edges", _readonly(np.ascontiguousarray(edges)))
        object.__setattr__(self, "J", _readonly(np.array(J)))
        object.__setattr__(self, "offset", float(self.offset))
        if self.normalized and (np.any(np.abs(h) > 2) or np.any(np.abs(J) > 1)):
            raise ValidationError("normalized problem exceeds |h|<=2, |J|<=1")

    @classmethod
    def from_terms(cls, n, h=None, J=None, offset=0.0):
        """Build from dicts ``{i: h_i}`` and ``{(i, j): J_ij}``; repeated pairs are summed."""
        hv = np.zeros(n)
        for i, v in (h or {}).items():
            hv[int(i)] += v
        acc = {}
        for (i, j), v in (J or {}).items():
            key = (min(int(i), int(j)), max(int(i), int(j)))
            acc[key] = acc.get(key, 0.0) + v
        keys = sorted(acc)
        return cls(n, hv, np.array(keys, dtype=np.int64).reshape(-1, 2), [acc[k] for k in keys], offset)

    @property
    def m(self):
        return len(self.J)

    def h_terms(self):
        return {int(i): float(self.h[i]) for i in np.flatnonzero(self.h)}

    def J_terms(self):
        return {(int(u), int(v)): float(w) for (u, v), w in zip(self.edges, self.J)}

    def replace(self, h=None, J=None, offset=None, normalized=False):
        return IsingProblem(
            self.n,
            self.h if h is None else h,
            self.edges,
            self.J if J is None else J,
            self.offset if offset is None else offset,
            normalized,
        )

    def energy(self, s):
        s = as_spins(s, self.n)
        return energy_ising(self, s)

    def energies(self, spins):
        """Energies of a (reads, n) array of ±1 configurations."""
        S = np.asarray(spins)
        if S.ndim != 2 or S.shape[1] != self.n:
            raise ValidationError(f"expected (reads, {self.n}) spin array, got {S.shape}")
        out = S @ self.h if self.n else np.zeros(len(S))
        if self.m:
            u, v = self.edges[:, 0], self.edges[:, 1]
            out = out + (S[:, u] * S[:, v]) @ self.J
        return out + self.offset

    def equals(self, other):
        return (
            self.n == other.n
            and self.offset == other.offset
            and np.array_equal(self.h, other.h)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.J, other.J)
        )


def as_spins(s, n=None):
    s = np.asarray(s)
    if n is not None and s.shape[-1] != n:
        raise ValidationError(f"spin vector has length {s.shape[-1]}, expected {n}")
    if not np.all((s == 1) | (s == -1)):
        raise ValidationError("spins must be +1 or -1")
    return s.astype(np.int8)


def energy_ising(p: IsingProblem, s) -> float:
    s = as_spins(s, p.n).astype(np.float64)
    total = math.fsum(p.h * s)
    if p.m:
        total += math.fsum(p.J * s[p.edges[:, 0]] * s[p.edges[:, 1]])
    return total + p.offset


# -- gauges ---------------------------------------------------------------


def apply_gauge(p: IsingProblem, a) -> IsingProblem:
    """Spin-reversal transform: h_i -> a_i h_i, J_ij -> a_i a_j J_ij."""
    a = as_spins(a, p.n)
    h = p.h * a
    J = p.J * a[p.edges[:, 0]] * a[p.edges[:, 1]]
    return IsingProblem(p.n, h, p.edges, J, p.offset, p.normalized)


def ungauge(s, a):
    """Map spins between gauge frames (s_i -> a_i s_i); works row-wise on 2-D arrays."""
    a = as_spins(a)
    s = np.asarray(s)
    if s.shape[-1] != a.shape[-1]:
        raise ValidationError("spin and gauge lengths differ")
    return (s * a).astype(np.int8)


def random_gauge(n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValidationError("gauge length must be >= 1")
    rng = np.random.default_rng(seed)
    return (rng.integers(0, 2, size=n, dtype=np.int8) * 2 - 1).astype(np.int8)


def identity_gauge(n: int) -> np.ndarray:
    return np.ones(n, dtype=np.int8)


# -- QUBO -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Qubo:
    """Quadratic objective over binary variables x in {0,1}^n.

    ``problem_vars`` splits the variables into problem and ancilla sets;
    ``problem`` optionally carries the problem-frame objective, which must
    only touch problem variables.
    """

    n: int
    linear: dict = field(default_factory=dict)
    quadratic: dict = field(default_factory=dict)
    offset: float = 0.0
    problem_vars: tuple | None = None
    problem: Qubo | None = None

    def __post_init__(self):
        lin, quad = {}, {}
        for i, v in self.linear.items():
            i = int(i)
            if not 0 <= i < self.n:
                raise ValidationError(f"variable {i} out of range")
            lin[i] = lin.get(i, 0.0) + float(v)
        for (i, j), v in self.quadratic.items():
            i, j = int(i), int(j)
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValidationError(f"pair ({i}, {j}) out of range")
            if i == j:
                # x^2 == x
                lin[i] = lin.get(i, 0.0) + float(v)
                continue
            key = (min(i, j), max(i, j))
            quad[key] = quad.get(key, 0.0) + float(v)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "quadratic", quad)
        if self.problem_vars is not None:
            pv = tuple(sorted(set(int(i) for i in self.problem_vars)))
            if any(not 0 <= i < self.n for i in pv):
                raise ValidationError("problem variable out of range")
            object.__setattr__(self, "problem_vars", pv)
        if self.problem is not None:
            if self.problem_vars is None:
                raise ValidationError("a problem-frame objective needs a variable partition")
            allowed = set(self.problem_vars)
            used = set(self.problem.linear) | {i for pair in self.problem.quadratic for i in pair}
            if not used <= allowed:
                raise ValidationError("problem-frame objective touches ancilla variables")

    @property
    def ancilla_vars(self):
        if self.problem_vars is None:
            return None
        pv = set(self.problem_vars)
        return tuple(i for i in range(self.n) if i not in pv)

    def energy(self, x) -> float:
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise ValidationError(f"assignment has shape {x.shape}, expected ({self.n},)")
        if not np.all((x == 0) | (x == 1)):
            raise ValidationError("binary variables must be 0 or 1")
        return float(self.energies(x[None, :])[0])

    def energies(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(len(X), self.offset)
        if self.linear:
            idx = np.fromiter(self.linear, dtype=np.int64)
            out += X[:, idx] @ np.fromiter(self.linear.values(), dtype=np.float64)
        if self.quadratic:
            pairs = np.array(list(self.quadratic), dtype=np.int64)
            w = np.fromiter(self.quadratic.values(), dtype=np.float64)
            out += (X[:, pairs[:, 0]] * X[:, pairs[:, 1]]) @ w
        return out


def spins_to_binary(s):
    return ((np.asarray(s) + 1) // 2).astype(np.int8)


def binary_to_spins(x):
    return (2 * np.asarray(x) - 1).astype(np.int8)


def qubo_to_ising(q: Qubo):
    """Substitute x_i = (1 + s_i)/2.

    Returns the Ising problem and the variable map (binary var -> spin id),
    which is the identity.
    """
    h = np.zeros(q.n)
    J = {}
    offset = q.offset
    for i, c in q.linear.items():
        h[i] += c / 2
        offset += c / 2
    for (i, j), c in q.quadratic.items():
        J[(i, j)] = J.get((i, j), 0.0) + c / 4
        h[i] += c / 4
        h[j] += c / 4
        offset += c / 4
    p = IsingProblem.from_terms(q.n, dict(enumerate(h)), J, offset)
    return p, {i: i for i in range(q.n)}


# -- dynamic range ----------------------------------------------------------


def normalize_dynamic_range(p: IsingProblem):
    """Rescale so that |h| <= 2 and |J| <= 1; returns (problem, scale)."""
    if p.n == 0:
        raise ValidationError("cannot normalize an empty problem")
    max_j = float(np.max(np.abs(p.J))) if p.m else 0.0
    max_h = float(np.max(np.abs(p.h))) / 2
    scale = max(max_j, max_h, 1.0)
    if scale == 1.0:
        return IsingProblem(p.n, p.h, p.edges, p.J, p.offset, True), 1.0
    return IsingProblem(p.n, p.h / scale, p.edges, p.J / scale, p.offset / scale, True), scale


# -- coefficient counts -----------------------------------------------------


def _chain_mask(p, chain_edges):
    if chain_edges is None or len(chain_edges) == 0:
        return np.zeros(p.m, dtype=bool)
    ce = {(min(u, v), max(u, v)) for u, v in np.asarray(chain_edges).tolist()}
    return np.array([(u, v) in ce for u, v in p.edges.tolist()], dtype=bool)


def count_positive_couplers(p: IsingProblem, chain_edges=None, which="all") -> int:
    """Number of antiferromagnetic couplers (J > 0).

    ``which`` selects all couplers, only chain couplers, or only non-chain
    couplers; ``chain_edges`` lists the intra-chain hardware edges.
    """
    pos = p.J > 0
    if which == "all":
        return int(np.count_nonzero(pos))
    mask = _chain_mask(p, chain_edges)
    if which == "chain":
        return int(np.count_nonzero(pos & mask))
    if which == "nonchain":
        return int(np.count_nonzero(pos & ~mask))
    raise ValidationError(f"unknown coupler selection {which!r}")


def count_positive_fields(p: IsingProblem) -> int:
    return int(np.count_nonzero(p.h > 0))


# -- instance files ---------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def dumps_instance(p: IsingProblem) -> str:
    h_terms = [(i, p.h[i]) for i in np.flatnonzero(p.h)]
    buf = io.StringIO()
    buf.write(f"p ising {p.n} {len(h_terms)} {p.m} {_fmt(p.offset)}\n")
    for i, v in h_terms:
        buf.write(f"{i} {_fmt(v)}\n")
    for (u, v), w in zip(p.edges.tolist(), p.J):
        buf.write(f"{u} {v} {_fmt(w)}\n")
    return buf.getvalue()


def loads_instance(text: str):
    """Parse the text format or its JSON mirror. JSON may also hold a Qubo."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return instance_from_dict(json.loads(stripped))
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValidationError("empty instance file")
    head = lines[0].split()
    if len(head) != 6 or head[:2] != ["p", "ising"]:
        raise ValidationError(f"bad header line: {lines[0]!r}")
    n, n_h, n_j = int(head[2]), int(head[3]), int(head[4])
    offset = float(head[5])
    body = lines[1:]
    if len(body) != n_h + n_j:
        raise ValidationError(f"expected {n_h + n_j} term lines, found {len(body)}")
    h = np.zeros(n)
    for ln in body[:n_h]:
        i, v = ln.split()
        h[int(i)] = float(v)
    edges, J = [], []
    for ln in body[n_h:]:
        i, j, v = ln.split()
        if int(i) >= int(j):
            raise ValidationError(f"coupler line must have i < j: {ln!r}")
        edges.append((int(i), int(j)))
        J.append(float(v))
    return IsingProblem(n, h, np.array(edges, dtype=np.int64).reshape(-1, 2), J, offset)


def instance_to_dict(p) -> dict:
    if isinstance(p, Qubo):
        d = {
            "type": "qubo",
            "n": p.n,
            "offset": p.offset,
            "linear": {str(i): v for i, v in sorted(p.linear.items())},
            "quadratic": [[i, j, v] for (i, j), v in sorted(p.quadratic.items())],
        }
        if p.problem_vars is not None:
            d["problem_vars"] = list(p.problem_vars)
        if p.problem is not None:
            d["problem"] = instance_to_dict(p.problem)
        return d
    return {
        "type": "ising",
        "n": p.n,
        "offset": p.offset,
        "h": {str(i): v for i, v in p.h_terms().items()},
        "J": [[u, v, w] for (u, v), w in p.J_terms().items()],
    }


def instance_from_dict(d: dict):
    if d.get("type", "ising") == "qubo":
        problem = instance_from_dict(d["problem"]) if "problem" in d else None
        return Qubo(
            int(d["n"]),
            {int(i): float(v) for i, v in d.get("linear", {}).items()},
            {(int(i), int(j)): float(v) for i, j, v in d.get("quadratic", [])},
            float(d.get("offset", 0.0)),
            tuple(d["problem_vars"]) if "problem_vars" in d else None,
            problem,
        )
    n = int(d["n"])
    h = np.zeros(n)
    for i, v in d.get("h", {}).items():
        h[int(i)] = float(v)
    terms = d.get("J", [])
    edges = np.array([[int(u), int(v)] for u, v, _ in terms], dtype=np.int64).reshape(-1, 2)
    return IsingProblem(n, h, edges, [float(w) for _, _, w in terms], float(d.get("offset", 0.0)))


def write_instance(p, path):
    path = Path(path)
    if isinstance(p, Qubo) or path.suffix == ".json":
        path.write_text(json.dumps(instance_to_dict(p), indent=1) + "\n")
    else:
        path.write_text(dumps_instance(p))


def read_instance(path):
    return loads_instance(Path(path).read_text())
