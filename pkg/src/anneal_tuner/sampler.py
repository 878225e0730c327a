"""Classical stand-in for the annealer.

A submission is split into equal batches (one device programming each);
every programming perturbs the problem with analog control error and then
runs independent simulated-annealing reads.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernel
from .errors import ValidationError
from .estimator import EnergyBatch
from .ising import IsingProblem, ungauge
from .seeds import derive_seed


@dataclass(frozen=True)
class SamplerConfig:
    n_reads: int = 1000
    t_a: float = 20.0  # microseconds per anneal
    max_duty: float = 1e6  # microseconds per submission
    sweeps: int = 1000
    beta_start: float = 0.1
    beta_end: float = 5.0
    schedule: str = "geometric"
    seed: int = 0

    def __post_init__(self):
        if self.n_reads < 1:
            raise ValidationError("n_reads must be >= 1")
        if not self.beta_end > self.beta_start > 0:
            raise ValidationError("need beta_end > beta_start > 0")
        if self.sweeps < 1:
            raise ValidationError("sweeps must be >= 1")
        if self.schedule not in ("linear", "geometric"):
            raise ValidationError(f"unknown schedule {self.schedule!r}")
        if self.t_a <= 0 or self.max_duty < self.t_a:
            raise ValidationError("need 0 < t_a <= max_duty")

    def betas(self):
        if self.sweeps == 1:
            return np.array([self.beta_end])
        if self.schedule == "linear":
            return np.linspace(self.beta_start, self.beta_end, self.sweeps)
        return np.geomspace(self.beta_start, self.beta_end, self.sweeps)

    def with_reads(self, n_reads, seed=None):
        d = asdict(self)
        d["n_reads"] = n_reads
        if seed is not None:
            d["seed"] = seed
        return SamplerConfig(**d)


@dataclass(frozen=True)
class NoiseModel:
    """Analog control error.

    Gaussian offsets on h and J plus optional quantization. With
    ``refresh="programming"`` offsets are redrawn for every programming;
    with ``refresh="static"`` they are a fixed property of the device
    (keyed by ``device_seed`` and hardware ids) and identical across
    programmings.
    """

    sigma_h: float = 0.0
    sigma_j: float = 0.0
    quant: float = 0.0
    refresh: str = "programming"
    device_seed: int = 0

    def __post_init__(self):
        if min(self.sigma_h, self.sigma_j, self.quant) < 0:
            raise ValidationError("noise parameters must be non-negative")
        if self.refresh not in ("programming", "static"):
            raise ValidationError(f"unknown refresh policy {self.refresh!r}")

    @property
    def is_zero(self):
        return self.sigma_h == 0 and self.sigma_j == 0 and self.quant == 0


NO_NOISE = NoiseModel()


@dataclass(frozen=True, eq=False)
class ReadoutSet:
    spins: np.ndarray  # (reads, n) int8, device frame
    energy_device: np.ndarray  # (reads,)
    batch: np.ndarray  # (reads,) batch index
    n_programmings: int
    seeds: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.spins)

    def batches(self):
        return [np.flatnonzero(self.batch == b) for b in range(self.n_programmings)]


def batch_plan(config: SamplerConfig):
    """Return (n_reps, reads per batch) honouring the duty-time cap."""
    cap = math.floor(config.max_duty / config.t_a)
    n_reps = math.ceil(config.n_reads / cap)
    if config.n_reads % n_reps:
        lo = next(n for n in range(config.n_reads - 1, 0, -1) if _splits(n, cap))
        hi = next(n for n in range(config.n_reads + 1, config.n_reads + n_reps + 1) if _splits(n, cap))
        raise ValidationError(
            f"{config.n_reads} reads cannot be split evenly into {n_reps} batches of at most {cap}; "
            f"try n_reads={lo} or {hi}"
        )
    return n_reps, config.n_reads // n_reps


def _splits(n, cap):
    return n % math.ceil(n / cap) == 0


@functools.lru_cache(maxsize=8)
def _device_offsets(device_seed, n):
    rng = np.random.default_rng(derive_seed(device_seed, "device-calibration", n))
    dh = rng.standard_normal(n)
    dj = rng.standard_normal((n, n))
    dh.setflags(write=False)
    dj.setflags(write=False)
    return dh, dj


def _quantize(x, q):
    return q * np.round(x / q)


def program(p: IsingProblem, noise: NoiseModel, seed: int) -> IsingProblem:
    """Apply analog control error to a problem as programmed on the device."""
    if noise.is_zero:
        return p
    u, v = p.edges[:, 0], p.edges[:, 1]
    if noise.refresh == "static":
        dh_unit, dj_table = _device_offsets(noise.device_seed, p.n)
        dh, dj = dh_unit, dj_table[u, v]
    else:
        rng = np.random.default_rng(seed)
        dh, dj = rng.standard_normal(p.n), rng.standard_normal(p.m)
    h = p.h + noise.sigma_h * dh if noise.sigma_h else p.h.copy()
    J = p.J + noise.sigma_j * dj if noise.sigma_j else p.J.copy()
    if noise.quant > 0:
        h, J = _quantize(h, noise.quant), _quantize(J, noise.quant)
    return IsingProblem(p.n, h, p.edges, J, p.offset)


def _csr(p: IsingProblem):
    u, v = p.edges[:, 0], p.edges[:, 1]
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    w = np.concatenate([p.J, p.J])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(p.n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64), w[order].astype(np.float64)


class MetropolisAnnealer:
    """Simulated-annealing backend. One ``anneal`` call is one device programming."""

    name = "metropolis"

    def anneal(self, p: IsingProblem, n_reads: int, seed: int, betas) -> np.ndarray:
        indptr, nbrs, w = _csr(p)
        out = np.empty((n_reads, p.n), dtype=np.int8)
        _kernel.anneal_reads(
            np.ascontiguousarray(p.h), indptr, nbrs, w, np.ascontiguousarray(betas, dtype=np.float64),
            seed, 0, out,
        )
        return out


def _check_range(p: IsingProblem):
    if p.normalized:
        return
    if np.any(np.abs(p.h) > 2 + 1e-12) or np.any(np.abs(p.J) > 1 + 1e-12):
        raise ValidationError("problem must be normalized (|h| <= 2, |J| <= 1) before sampling")


def sample(p: IsingProblem, config: SamplerConfig, noise: NoiseModel = NO_NOISE, backend=None) -> ReadoutSet:
    _check_range(p)
    backend = backend or MetropolisAnnealer()
    n_reps, per_batch = batch_plan(config)
    betas = config.betas()
    spins, energies, batch, batch_seeds = [], [], [], []
    for b in range(n_reps):
        bseed = derive_seed(config.seed, "batch", b)
        programmed = program(p, noise, derive_seed(bseed, "program"))
        s = backend.anneal(programmed, per_batch, bseed, betas)
        spins.append(s)
        energies.append(programmed.energies(s))
        batch.append(np.full(per_batch, b, dtype=np.int64))
        batch_seeds.append(bseed)
    return ReadoutSet(
        np.concatenate(spins),
        np.concatenate(energies),
        np.concatenate(batch),
        n_reps,
        {"master": config.seed, "batches": batch_seeds, "device": noise.device_seed},
    )


def resolve_energies(reads: ReadoutSet, problem: IsingProblem, gauge) -> list:
    """Ungauge device-frame readouts and evaluate them on the clean original problem."""
    if reads.spins.shape[1] != problem.n:
        raise ValidationError("readouts and problem have different sizes")
    clean = problem.energies(ungauge(reads.spins, gauge))
    return [EnergyBatch(clean[idx], b) for b, idx in enumerate(reads.batches())]
