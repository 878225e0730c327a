"""Gauge and chain-strength tuning for annealer-style Ising samplers."""

from .embedding import Embedding, embed, majority_vote_decode, strict_embedding_fraction
from .errors import RegionNotFoundError, ValidationError
from .estimator import (
    EliteScore,
    RankTable,
    SpecSummary,
    elite_mean,
    elite_score_batched,
    estimator_rank,
    greedy_rank,
    r99,
    spearman,
)
from .ising import IsingProblem, Qubo, apply_gauge, qubo_to_ising, random_gauge, ungauge
from .pipeline import Budgets, containment_experiment, gauge_scan, iterative_tune, je_scan
from .sampler import NoiseModel, SamplerConfig, sample
from .topology import ChimeraSpec, build_chimera, random_spin_glass

__version__ = "0.1.0"
