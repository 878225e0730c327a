"""Gauge scans, J_E scans, top-k selection and the iterative tuning loop."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import (
    EmbeddedProblem,
    embed,
    identity_embedding,
    je_region_bounds,
    majority_vote_decode,
    strict_embedding_fraction,
)
from .errors import ValidationError
from .estimator import (
    EnergyBatch,
    RankTable,
    SpecSummary,
    elite_score_batched,
    estimator_rank,
    greedy_estimator_rank,
    greedy_rank,
    r99,
    spearman,
    success_probability,
)
from .ising import (
    IsingProblem,
    apply_gauge,
    count_positive_couplers,
    count_positive_fields,
    identity_gauge,
    normalize_dynamic_range,
    random_gauge,
    ungauge,
)
from .sampler import NO_NOISE, MetropolisAnnealer, SamplerConfig, sample
from .seeds import derive_seed

DEFAULT_JE_GRID = tuple(float(x) for x in np.geomspace(0.5, 10.0, 12))
F_MAX_JE = 10.0


def gauge_set(n: int, n_gauges: int, seed: int) -> dict:
    """Gauge 0 is the identity; the rest are drawn from per-id seeds."""
    gauges = {0: identity_gauge(n)}
    for gid in range(1, n_gauges):
        gauges[gid] = random_gauge(n, derive_seed(seed, "gauge", gid))
    return gauges


class _Target:
    """What gets programmed, and how readouts are turned into clean energies."""

    def __init__(self, problem):
        if isinstance(problem, EmbeddedProblem):
            self.embedded = problem
            self.device = problem.hardware
            self.chain_edges = problem.chain_edges
        elif isinstance(problem, IsingProblem):
            self.embedded = None
            self.clean = problem
            self.device = problem if problem.normalized else normalize_dynamic_range(problem)[0]
            self.chain_edges = np.zeros((0, 2), dtype=np.int64)
        else:
            raise ValidationError(f"cannot scan a {type(problem).__name__}")

    @property
    def n(self):
        return self.device.n

    def energies(self, spins, frame, decode_seed):
        if self.embedded is None:
            if frame != "qubo":
                raise ValidationError("problem-frame energies need an embedded QUBO with a partition")
            return self.clean.energies(spins)
        logical = majority_vote_decode(spins, self.embedded.embedding, decode_seed)
        return self.embedded.logical_energies(logical, frame)


def _run(target, gauge, config, noise, backend, seed):
    reads = sample(apply_gauge(target.device, gauge), config.with_reads(config.n_reads, seed=seed), noise, backend)
    return reads, ungauge(reads.spins, gauge)


def _batches(energies, reads):
    return [EnergyBatch(energies[idx], b) for b, idx in enumerate(reads.batches())]


class _CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def anneal(self, *args):
        self.calls += 1
        return self.inner.anneal(*args)


# -- gauge scan -------------------------------------------------------------


@dataclass(eq=False)
class GaugeScanResult:
    gauges: dict
    scores: dict  # gauge id -> EliteScore (E_QUBO / E_ising frame)
    summaries: dict  # gauge id -> SpecSummary
    batches: dict  # gauge id -> list[EnergyBatch]
    epsilon: float
    n_reads: int
    device_problem: IsingProblem
    chain_edges: np.ndarray
    problem_scores: dict | None = None
    problem_summaries: dict | None = None
    n_sampler_calls: int = 0

    @property
    def ids(self):
        return sorted(self.gauges)

    def elite_ranks(self, frame="qubo") -> RankTable:
        return estimator_rank(self._scores(frame))

    def greedy_ranks(self, frame="qubo") -> RankTable:
        return greedy_estimator_rank(list(self._summaries(frame).values()))

    def rescore(self, epsilon) -> dict:
        return {gid: elite_score_batched(b, epsilon) for gid, b in self.batches.items()}

    def best_energy(self):
        return min(s.min_energy for s in self.summaries.values())

    def _scores(self, frame):
        if frame == "qubo":
            return self.scores
        if self.problem_scores is None:
            raise ValidationError("scan was run without problem-frame energies")
        return self.problem_scores

    def _summaries(self, frame):
        if frame == "qubo":
            return self.summaries
        if self.problem_summaries is None:
            raise ValidationError("scan was run without problem-frame energies")
        return self.problem_summaries

    def to_csv(self) -> str:
        table = self.elite_ranks()
        ranks = table.ranks
        ground = self.best_energy()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("gauge", "score", "n_gs", "rank"))
        for gid in table.ids:
            w.writerow((gid, format(self.scores[gid].value, ".17g"), self.summaries[gid].count_at(ground), ranks[gid]))
        return buf.getvalue()


def gauge_scan(
    problem,
    n_gauges: int = 100,
    n_reads: int = 1000,
    epsilon: float = 2.0,
    config: SamplerConfig | None = None,
    noise=NO_NOISE,
    seed: int = 0,
    backend=None,
    gauges: dict | None = None,
    problem_frame: bool = False,
) -> GaugeScanResult:
    """Score every gauge from one short run each.

    ``problem`` is a direct IsingProblem or an EmbeddedProblem; embedded
    readouts are majority-vote decoded and scored on E_QUBO (and E_problem
    when ``problem_frame`` is set). The scores reuse the readouts already
    drawn, so the sampler runs exactly n_gauges x n_reps programmings.
    """
    target = _Target(problem)
    if gauges is None:
        if n_gauges < 2:
            raise ValidationError("a gauge scan needs at least two gauges")
        gauges = gauge_set(target.n, n_gauges, seed)
    config = (config or SamplerConfig()).with_reads(n_reads)
    counter = _CountingBackend(backend or MetropolisAnnealer())
    scores, summaries, batches = {}, {}, {}
    p_scores, p_summaries = ({}, {}) if problem_frame else (None, None)
    for gid in sorted(gauges):
        reads, spins = _run(target, gauges[gid], config, noise, counter, derive_seed(seed, "scan", gid))
        dseed = derive_seed(seed, "decode", gid)
        e = target.energies(spins, "qubo", dseed)
        batches[gid] = _batches(e, reads)
        scores[gid] = elite_score_batched(batches[gid], epsilon)
        summaries[gid] = SpecSummary.from_energies(gid, e)
        if problem_frame:
            ep = target.energies(spins, "problem", dseed)
            p_scores[gid] = elite_score_batched(_batches(ep, reads), epsilon)
            p_summaries[gid] = SpecSummary.from_energies(gid, ep)
    return GaugeScanResult(
        dict(gauges), scores, summaries, batches, float(epsilon), n_reads, target.device,
        target.chain_edges, p_scores, p_summaries, counter.calls,
    )


def select_top_k(result: GaugeScanResult, k: int, method: str = "elite", frame: str = "qubo") -> list:
    if k > len(result.gauges):
        raise ValidationError(f"k={k} exceeds the {len(result.gauges)} scanned gauges")
    if method == "elite":
        return result.elite_ranks(frame).top(k)
    if method == "greedy":
        return result.greedy_ranks(frame).top(k)
    raise ValidationError(f"unknown selection method {method!r}")


def union_top_selection(result: GaugeScanResult, k: int = 5) -> list:
    """Union of the top-k by elite score and by greedy estimator, both on E_problem."""
    if result.problem_scores is None:
        raise ValidationError("union selection needs problem-frame energies (ancilla partition)")
    elite = select_top_k(result, k, "elite", "problem")
    greedy = select_top_k(result, k, "greedy", "problem")
    return elite + [g for g in greedy if g not in elite]


# -- J_E scan ----------------------------------------------------------------


@dataclass(eq=False)
class JeScanResult:
    candidates: list
    scores: list  # EliteScore on E_QUBO per candidate
    f_se: list
    scales: list
    summaries: list

    def curve(self):
        return list(zip(self.candidates, self.f_se))

    def best(self, lo=-math.inf, hi=math.inf):
        inside = [i for i, j in enumerate(self.candidates) if lo <= j <= hi]
        if not inside:
            raise ValidationError("no J_E candidate inside the requested region")
        return self.candidates[max(inside, key=lambda i: (self.scores[i].value, -i))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("J_E", "f_SE", "elite_score"))
        for j, f, s in zip(self.candidates, self.f_se, self.scores):
            w.writerow((format(j, ".17g"), format(f, ".17g"), format(s.value, ".17g")))
        return buf.getvalue()


def _embedded_run(ep, gauge, config, noise, backend, seed, epsilon):
    target = _Target(ep)
    reads, spins = _run(target, gauge, config, noise, backend, seed)
    f_se = strict_embedding_fraction(spins, ep.embedding).f_se
    e = target.energies(spins, "qubo", derive_seed(seed, "decode"))
    score = elite_score_batched(_batches(e, reads), epsilon)
    return score, f_se, SpecSummary.from_energies(ep.J_E, e)


def je_scan(
    logical,
    embedding,
    graph,
    candidates=DEFAULT_JE_GRID,
    gauge=None,
    n_reads: int = 1000,
    epsilon: float = 2.0,
    config: SamplerConfig | None = None,
    noise=NO_NOISE,
    seed: int = 0,
    backend=None,
) -> JeScanResult:
    """Score each J_E on decoded E_QUBO energies and record f_SE on raw reads.

    All candidates share one sampling seed (common random numbers), so
    differences between candidates are not masked by sampling noise.
    """
    candidates = sorted(float(c) for c in candidates)
    if len(candidates) < 2:
        raise ValidationError("need at least two J_E candidates")
    if candidates[0] <= 0:
        raise ValidationError("J_E candidates must be positive")
    config = (config or SamplerConfig()).with_reads(n_reads)
    backend = backend or MetropolisAnnealer()
    scores, fs, scales, sums = [], [], [], []
    run_seed = derive_seed(seed, "je-scan")
    for je in candidates:
        ep = embed(logical, embedding, graph, je)
        g = identity_gauge(ep.hardware.n) if gauge is None else gauge
        score, f_se, summary = _embedded_run(ep, g, config, noise, backend, run_seed, epsilon)
        scores.append(score)
        fs.append(f_se)
        scales.append(ep.scale)
        sums.append(summary)
    return JeScanResult(candidates, scores, fs, scales, sums)


def measure_f_max(logical, embedding, graph, gauge=None, n_reads=1000, config=None, noise=NO_NOISE,
                  seed=0, backend=None, J_E=F_MAX_JE):
    """One-shot f_SE at a large chain penalty."""
    ep = embed(logical, embedding, graph, J_E)
    g = identity_gauge(ep.hardware.n) if gauge is None else gauge
    config = (config or SamplerConfig()).with_reads(n_reads)
    _, f_se, _ = _embedded_run(ep, g, config, noise, backend or MetropolisAnnealer(), derive_seed(seed, "f-max"), 100)
    return f_se


# -- long runs ---------------------------------------------------------------


def extensive_run(problem, gauge, total_reads, config=None, noise=NO_NOISE, seed=0, backend=None,
                  target_energy=None) -> SpecSummary:
    """Accumulate a histogram over ``total_reads`` reads, one submission at a time.

    Stops after the first submission that reaches ``target_energy``.
    """
    target = _Target(problem)
    config = config or SamplerConfig()
    cap = math.floor(config.max_duty / config.t_a)
    backend = backend or MetropolisAnnealer()
    summary = None
    done, chunk = 0, 0
    while done < total_reads:
        n = min(cap, total_reads - done)
        cseed = derive_seed(seed, "submission", chunk)
        reads, spins = _run(target, gauge, config.with_reads(n), noise, backend, cseed)
        e = target.energies(spins, "qubo", derive_seed(cseed, "decode"))
        part = SpecSummary.from_energies(0, e)
        summary = part if summary is None else summary.merge(part)
        done += n
        chunk += 1
        if target_energy is not None and part.min_energy <= target_energy + 1e-9:
            break
    return summary


def performance_summaries(problem, gauges, total_reads, config=None, noise=NO_NOISE, seed=0, backend=None):
    """Long-run histograms for every gauge; the ground truth for ranking."""
    out = {}
    for gid in sorted(gauges):
        s = extensive_run(problem, gauges[gid], total_reads, config, noise, derive_seed(seed, "long", gid), backend)
        out[gid] = SpecSummary(gid, s.energies, s.counts)
    return out


# -- iterative tuning --------------------------------------------------------


@dataclass(frozen=True)
class Budgets:
    scan_reads: int = 1000  # N_reads per J_E candidate / gauge
    total_reads: int = 100_000  # N_total per selected gauge
    top_k: int = 5
    target_energy: float | None = None


@dataclass(eq=False)
class TuneReport:
    chosen_J_E: float
    region: tuple
    f_max: float
    first_scan: JeScanResult
    gauge_scan: GaugeScanResult
    selected: list
    second_J_E: float | None
    second_scan: JeScanResult | None
    extensive: bool
    ground_energy: float
    runs: dict = field(default_factory=dict)  # gauge id -> SpecSummary

    @property
    def final_J_E(self):
        return self.second_J_E if self.second_J_E is not None else self.chosen_J_E

    @property
    def best_gauge(self):
        """The selected gauge whose extensive run ranks first by the greedy comparator."""
        return greedy_rank([SpecSummary(g, s.energies, s.counts) for g, s in self.runs.items()]).ids[0]

    def gauge_stats(self, gid):
        s = self.runs[gid]
        p = success_probability(s, self.ground_energy)
        return {"n_gs": s.count_at(self.ground_energy), "N_total": s.n_total, "p_s": p, "R99": r99(p)}

    def to_dict(self):
        def jnum(x):
            return None if x is None or (isinstance(x, float) and math.isinf(x)) else x

        return {
            "chosen_J_E": self.chosen_J_E,
            "region": list(self.region),
            "f_max": self.f_max,
            "je_scan": [
                {"J_E": j, "f_SE": f, "score": s.value}
                for j, f, s in zip(self.first_scan.candidates, self.first_scan.f_se, self.first_scan.scores)
            ],
            "gauge_scores": {str(g): self.gauge_scan.scores[g].value for g in self.gauge_scan.ids},
            "selected_gauges": [
                {"gauge": g, "score": self.gauge_scan.scores[g].value} for g in self.selected
            ],
            "second_J_E": self.second_J_E,
            "extensive": self.extensive,
            "best_gauge": self.best_gauge,
            "ground_energy": self.ground_energy,
            "runs": {
                str(g): {k: jnum(v) for k, v in self.gauge_stats(g).items()} for g in self.selected
            },
        }


def iterative_tune(
    logical,
    embedding,
    graph,
    candidates=DEFAULT_JE_GRID,
    n_gauges: int = 100,
    budgets: Budgets = Budgets(),
    epsilon: float = 2.0,
    config: SamplerConfig | None = None,
    noise=NO_NOISE,
    seed: int = 0,
    second_scan: bool = False,
    backend=None,
    onset: float = 0.95,
) -> TuneReport:
    """J_E scan under the identity gauge, gauge scan at the chosen J_E,
    optional re-scan of J_E under the best gauge, then extensive runs on
    the top-k gauges. ``embedding=None`` means every variable is its own chain."""
    config = config or SamplerConfig()
    backend = backend or MetropolisAnnealer()
    if embedding is None:
        embedding = identity_embedding(range(logical.n))
    scan_kw = dict(n_reads=budgets.scan_reads, epsilon=epsilon, config=config, noise=noise, backend=backend)

    first = je_scan(logical, embedding, graph, candidates, seed=derive_seed(seed, "je", 1), **scan_kw)
    f_max = measure_f_max(logical, embedding, graph, None, budgets.scan_reads, config, noise,
                          derive_seed(seed, "f-max"), backend)
    region = je_region_bounds(first.curve(), f_max, onset=onset)
    chosen = first.best(*region)

    ep = embed(logical, embedding, graph, chosen)
    gauges = gauge_set(ep.hardware.n, n_gauges, seed)
    scan = gauge_scan(ep, gauges=gauges, seed=derive_seed(seed, "gauge-scan"), **scan_kw)
    selected = select_top_k(scan, min(budgets.top_k, len(gauges)))

    second_je, second = None, None
    if second_scan:
        second = je_scan(logical, embedding, graph, candidates, gauge=gauges[selected[0]],
                         seed=derive_seed(seed, "je", 2), **scan_kw)
        second_je = second.best(*region)
        ep = embed(logical, embedding, graph, second_je)

    extensive = budgets.total_reads > budgets.scan_reads
    if extensive:
        runs = {
            g: extensive_run(ep, gauges[g], budgets.total_reads, config, noise,
                             derive_seed(seed, "extensive", g), backend, budgets.target_energy)
            for g in selected
        }
    else:
        runs = {g: scan.summaries[g] for g in selected}
    if budgets.target_energy is not None:
        ground = float(budgets.target_energy)
    else:
        ground = min(min(s.min_energy for s in runs.values()), scan.best_energy())
    return TuneReport(chosen, region, f_max, first, scan, selected, second_je, second, extensive, ground, runs)


# -- containment experiments ---------------------------------------------------


@dataclass(eq=False)
class ContainmentTable:
    k: int
    n_gauges: int
    n_experiments: int
    fractions: dict  # (n_reads, method) -> list of fractions for any-top-1..m
    truth: list  # gauge ids, best first

    def get(self, n_reads, method, m=1):
        return self.fractions[(n_reads, method)][m - 1]

    def to_dict(self):
        return {
            "k": self.k,
            "n_gauges": self.n_gauges,
            "n_experiments": self.n_experiments,
            "truth_order": list(self.truth),
            "rows": [
                {"n_reads": n, "method": meth, "any_top": fr}
                for (n, meth), fr in sorted(self.fractions.items(), key=lambda kv: (kv[0][0], str(kv[0][1])))
            ],
        }


def method_label(eps):
    return "greedy" if eps == "greedy" else f"{eps:g}%"


def containment_experiment(
    problem,
    n_gauges: int = 100,
    n_reads_grid=(1000,),
    eps_grid=(1.0, 2.0, 5.0, 10.0),
    n_experiments: int = 50,
    total_reads: int = 100_000,
    config: SamplerConfig | None = None,
    noise=NO_NOISE,
    seed: int = 0,
    backend=None,
    k: int = 5,
    max_m: int = 5,
    gauges: dict | None = None,
    truth_summaries: dict | None = None,
) -> ContainmentTable:
    """How often the predicted top-k gauges contain any of the true top-m.

    Truth is the greedy rank of long runs; each experiment rescans the same
    gauges with fresh sampling seeds.
    """
    config = config or SamplerConfig()
    target = _Target(problem)
    if gauges is None:
        gauges = gauge_set(target.n, n_gauges, seed)
    if truth_summaries is None:
        truth_summaries = performance_summaries(problem, gauges, total_reads, config, noise,
                                                derive_seed(seed, "truth"), backend)
    truth = greedy_rank(list(truth_summaries.values()))
    hits = {}
    for n_reads in n_reads_grid:
        for e in range(n_experiments):
            scan = gauge_scan(problem, n_reads=n_reads, epsilon=eps_grid[0], config=config, noise=noise,
                              seed=derive_seed(seed, "experiment", n_reads, e), backend=backend, gauges=gauges)
            preds = {"greedy": scan.greedy_ranks().top(k)}
            for eps in eps_grid:
                preds[eps] = estimator_rank(scan.rescore(eps)).top(k)
            for meth, pred in preds.items():
                row = hits.setdefault((n_reads, method_label(meth)), np.zeros(max_m))
                for m in range(1, max_m + 1):
                    row[m - 1] += any(g in pred for g in truth.top(m))
    fractions = {key: (row / n_experiments).tolist() for key, row in hits.items()}
    return ContainmentTable(k, len(gauges), n_experiments, fractions, list(truth.ids))


# -- Appendix-style coupler-count correlations ----------------------------------


COUNT_TYPES = ("J>0", "J>0 non-chain", "J>0 chain", "h>0")


def positive_counts(scan: GaugeScanResult) -> dict:
    counts = {t: {} for t in COUNT_TYPES}
    for gid, a in scan.gauges.items():
        p = apply_gauge(scan.device_problem, a)
        counts["J>0"][gid] = count_positive_couplers(p)
        counts["J>0 non-chain"][gid] = count_positive_couplers(p, scan.chain_edges, "nonchain")
        counts["J>0 chain"][gid] = count_positive_couplers(p, scan.chain_edges, "chain")
        counts["h>0"][gid] = count_positive_fields(p)
    return counts


def correlate_positive_couplers(scan: GaugeScanResult, ranks: RankTable) -> dict:
    """Spearman rho between each positive-count type and the performance rank.

    A constant count column gives rho = 0 with ``degenerate`` set.
    """
    if len(scan.gauges) < 10:
        raise ValidationError("need at least 10 gauges for a correlation study")
    rank_of = ranks.ranks
    ids = sorted(scan.gauges)
    out = {}
    for kind, counts in positive_counts(scan).items():
        rho = spearman([counts[g] for g in ids], [rank_of[g] for g in ids])
        out[kind] = {"rho": 0.0 if math.isnan(rho) else rho, "degenerate": math.isnan(rho)}
    return out


def correlation_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("count_type", "spearman_rho", "degenerate"))
    for kind in COUNT_TYPES:
        w.writerow((kind, format(result[kind]["rho"], ".17g"), int(result[kind]["degenerate"])))
    return buf.getvalue()
