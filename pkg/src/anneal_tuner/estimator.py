"""Score functions and rankings for Hamiltonian specifications.

The elite mean is the negated average of the lowest epsilon percent of
readout energies.  Ground-truth performance is the greedy rank: compare
energy histograms lowest-energy first, breaking ties on frequency.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import ValidationError
from .ising import round_energies

UNBOUNDED = math.inf


@dataclass(frozen=True, eq=False)
class EnergyBatch:
    energies: np.ndarray
    batch: int = 0

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64).reshape(-1)
        if len(e) == 0:
            raise ValidationError("energy batch is empty")
        object.__setattr__(self, "energies", e)

    def __len__(self):
        return len(self.energies)


@dataclass(frozen=True)
class EliteScore:
    value: float
    epsilon: float
    n_reads: int  # per batch
    n_reps: int = 1
    n_elite: int = 1

    @property
    def total_reads(self):
        return self.n_reads * self.n_reps


def n_elite(epsilon: float, n_reads: int) -> int:
    if not 0 < epsilon <= 100:
        raise ValidationError(f"epsilon must lie in (0, 100], got {epsilon}")
    # round before ceil so that e.g. 2 * 50000 / 100 stays exactly 1000
    return max(1, math.ceil(round(epsilon * n_reads / 100, 9)))


def _as_energies(batch):
    if isinstance(batch, EnergyBatch):
        return batch.energies
    return EnergyBatch(batch).energies


def elite_mean(batch, epsilon: float) -> EliteScore:
    e = _as_energies(batch)
    k = n_elite(epsilon, len(e))
    elite = np.sort(np.partition(e, k - 1)[:k])
    return EliteScore(-(math.fsum(elite) / k), float(epsilon), len(e), 1, k)


def elite_score_batched(batches: Sequence, epsilon: float) -> EliteScore:
    """Average of per-batch elite means; all batches must be the same size."""
    batches = list(batches)
    if not batches:
        raise ValidationError("need at least one batch")
    scores = [elite_mean(b, epsilon) for b in batches]
    sizes = {s.n_reads for s in scores}
    if len(sizes) != 1:
        raise ValidationError(f"batches must have equal size, got sizes {sorted(sizes)}")
    if len(scores) == 1:
        return scores[0]
    value = math.fsum(s.value for s in scores) / len(scores)
    return EliteScore(value, float(epsilon), scores[0].n_reads, len(scores), scores[0].n_elite)


@dataclass(frozen=True, eq=False)
class SpecSummary:
    """Energy histogram of one specification, sorted by ascending energy."""

    spec_id: Hashable
    energies: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        c = np.asarray(self.counts, dtype=np.int64)
        if len(e) != len(c):
            raise ValidationError("histogram energies and counts differ in length")
        if np.any(np.diff(e) <= 0):
            raise ValidationError("histogram energies must be strictly increasing")
        if np.any(c <= 0):
            raise ValidationError("histogram counts must be positive")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_energies(cls, spec_id, energies):
        e, c = np.unique(round_energies(energies), return_counts=True)
        return cls(spec_id, e, c)

    @property
    def n_total(self):
        return int(self.counts.sum())

    @property
    def histogram(self):
        return dict(zip(self.energies.tolist(), self.counts.tolist()))

    @property
    def min_energy(self):
        return float(self.energies[0]) if len(self.energies) else math.inf

    def count_at(self, energy):
        e = float(round_energies(energy))
        i = np.searchsorted(self.energies, e)
        if i < len(self.energies) and self.energies[i] == e:
            return int(self.counts[i])
        return 0

    def merge(self, other: SpecSummary) -> SpecSummary:
        hist = self.histogram
        for e, c in other.histogram.items():
            hist[e] = hist.get(e, 0) + c
        keys = sorted(hist)
        return SpecSummary(self.spec_id, keys, [hist[k] for k in keys])

    def greedy_key(self):
        """Lexicographic key: lower energy first, then higher count, position by position."""
        return tuple(zip(self.energies.tolist(), (-self.counts).tolist()))


@dataclass(frozen=True)
class RankTable:
    ids: tuple  # best first
    scores: tuple | None = None

    @property
    def ranks(self):
        return {sid: r for r, sid in enumerate(self.ids, start=1)}

    def rank_of(self, spec_id):
        return self.ids.index(spec_id) + 1

    def top(self, k):
        return list(self.ids[:k])

    def __len__(self):
        return len(self.ids)


def success_probability(summary: SpecSummary, ground_energy: float) -> float:
    if summary.n_total < 1:
        raise ValidationError("summary holds no reads")
    return summary.count_at(ground_energy) / summary.n_total


def r99(p_s: float):
    """Reads needed to see the ground state at least once with 99% probability.

    Returns ``UNBOUNDED`` (inf) when p_s == 0.
    """
    if not 0 <= p_s <= 1:
        raise ValidationError(f"p_s must lie in [0, 1], got {p_s}")
    if p_s == 0:
        return UNBOUNDED
    if p_s >= 0.99:
        return 1
    reps = math.log(0.01) / math.log1p(-p_s)
    if math.isinf(reps):
        return UNBOUNDED
    return math.ceil(reps)


def greedy_rank(summaries: Sequence[SpecSummary]) -> RankTable:
    for s in summaries:
        if s.n_total == 0:
            raise ValidationError(f"summary {s.spec_id!r} is empty")
    ordered = sorted(summaries, key=lambda s: (s.greedy_key(), s.spec_id))
    return RankTable(tuple(s.spec_id for s in ordered))


def greedy_estimator_rank(summaries: Sequence[SpecSummary]) -> RankTable:
    """The greedy comparator applied to short scan runs (an estimator, not ground truth)."""
    return greedy_rank(summaries)


def estimator_rank(scores) -> RankTable:
    """Rank (spec_id, EliteScore) pairs by descending score; ties break on spec id."""
    scores = list(scores.items() if isinstance(scores, dict) else scores)
    if not scores:
        return RankTable(())
    eps = {s.epsilon for _, s in scores}
    reads = {(s.n_reads, s.n_reps) for _, s in scores}
    if len(eps) != 1:
        raise ValidationError(f"scores computed with different epsilon: {sorted(eps)}")
    if len(reads) != 1:
        raise ValidationError("scores computed with different read counts")
    ordered = sorted(scores, key=lambda t: (-t[1].value, t[0]))
    return RankTable(tuple(sid for sid, _ in ordered), tuple(s.value for _, s in ordered))


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties replaced by the mean of the ranks they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(len(x))
    start = 0
    for i in range(1, len(x) + 1):
        if i == len(x) or sx[i] != sx[start]:
            ranks[order[start:i]] = (start + 1 + i) / 2
            start = i
    return ranks


def spearman(r1, r2) -> float:
    """Spearman rho (Pearson correlation of average ranks).

    Accepts two RankTables over the same ids, or two equal-length value
    sequences. Returns nan when either side is constant.
    """
    if isinstance(r1, RankTable) and isinstance(r2, RankTable):
        if set(r1.ids) != set(r2.ids):
            raise ValidationError("rank tables cover different spec ids")
        ids = list(r1.ids)
        ranks2 = r2.ranks
        x = np.arange(1, len(ids) + 1, dtype=float)
        y = np.array([ranks2[i] for i in ids], dtype=float)
    else:
        x, y = np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)
        if x.shape != y.shape:
            raise ValidationError("value sequences differ in length")
    if len(x) < 2:
        raise ValidationError("spearman needs at least two specifications")
    rx, ry = average_ranks(x) - (len(x) + 1) / 2, average_ranks(y) - (len(x) + 1) / 2
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        return math.nan
    return float(np.clip((rx @ ry) / denom, -1.0, 1.0))


SCORE_COLUMNS = ("spec_id", "score", "rank", "n_reads", "n_reps", "epsilon")


def scores_to_csv(scores) -> str:
    """CSV of (spec_id, EliteScore) pairs with their estimator rank."""
    scores = list(scores.items() if isinstance(scores, dict) else scores)
    table = estimator_rank(scores)
    ranks = table.ranks
    by_id = dict(scores)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for sid in table.ids:
        s = by_id[sid]
        w.writerow([sid, format(s.value, ".17g"), ranks[sid], s.n_reads, s.n_reps, format(s.epsilon, "g")])
    return buf.getvalue()
