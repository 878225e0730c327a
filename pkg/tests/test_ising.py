import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anneal_tuner.errors import ValidationError
from anneal_tuner.ising import (
    IsingProblem,
    Qubo,
    apply_gauge,
    count_positive_couplers,
    count_positive_fields,
    dumps_instance,
    energy_ising,
    identity_gauge,
    instance_from_dict,
    instance_to_dict,
    loads_instance,
    normalize_dynamic_range,
    qubo_to_ising,
    random_gauge,
    ungauge,
)
from anneal_tuner.topology import ChimeraSpec, build_chimera, random_spin_glass

from . import oracles


def random_problem(n, seed, density=0.5, hscale=1.0, jscale=1.0):
    rng = np.random.default_rng(seed)
    pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < density]
    h = {i: float(rng.normal() * hscale) for i in range(n)}
    J = {p: float(rng.normal() * jscale) for p in pairs}
    return IsingProblem.from_terms(n, h, J), h, J


@st.composite
def problem_gauge_spins(draw):
    n = draw(st.integers(1, 20))
    seed = draw(st.integers(0, 2**32 - 1))
    p, _, _ = random_problem(n, seed)
    a = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    s = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    return p, np.array(a), np.array(s)


def test_energy_trivial_cases():
    p = IsingProblem.from_terms(3)
    assert energy_ising(p, [1, -1, 1]) == 0
    p = IsingProblem.from_terms(2, J={(0, 1): 1.0})
    assert energy_ising(p, [1, 1]) == 1
    assert energy_ising(p, [1, -1]) == -1


def test_energy_length_mismatch():
    p = IsingProblem.from_terms(2, J={(0, 1): 1.0})
    with pytest.raises(ValidationError):
        energy_ising(p, [1, 1, 1])
    with pytest.raises(ValidationError):
        energy_ising(p, [1, 0])


def test_single_cell_ground_energy_matches_enumeration():
    g = build_chimera(ChimeraSpec(1, 1, 4))
    p = random_spin_glass(g, (-1, 1), (-1, 0, 1), seed=5)
    S = np.array(list(oracles.all_spin_configs(8)))
    best, _ = oracles.ising_ground(p.h_terms(), p.J_terms(), 8)
    assert p.energies(S).min() == best
    assert np.allclose(p.energies(S), [oracles.ising_energy(p.h_terms(), p.J_terms(), s) for s in S])


def test_batch_energies_match_scalar():
    p, h, J = random_problem(9, 2)
    S = np.array(list(oracles.all_spin_configs(9)))
    expected = [oracles.ising_energy(h, J, s) for s in S]
    assert np.allclose(p.energies(S), expected, atol=1e-12)


def test_identity_and_flip_gauges():
    p, _, _ = random_problem(6, 1)
    assert apply_gauge(p, identity_gauge(6)).equals(p)
    flipped = apply_gauge(p, -identity_gauge(6))
    assert np.array_equal(flipped.h, -p.h)
    assert np.array_equal(flipped.J, p.J)


@pytest.mark.parametrize("n,seed", [(6, 0), (10, 1), (12, 2)])
def test_gauge_energy_identity_exhaustive(n, seed):
    p, _, _ = random_problem(n, seed)
    a = random_gauge(n, seed + 100)
    pg = apply_gauge(p, a)
    S = np.array(list(oracles.all_spin_configs(n)), dtype=np.int8)
    assert np.allclose(p.energies(S), pg.energies(ungauge(S, a)), atol=1e-12, rtol=0)


@pytest.mark.parametrize("n,seed", [(8, 3), (12, 4)])
def test_gauged_ground_state_maps_back(n, seed):
    p, h, J = random_problem(n, seed)
    a = random_gauge(n, seed)
    pg = apply_gauge(p, a)
    _, ground = oracles.ising_ground(h, J, n)
    _, ground_g = oracles.ising_ground(pg.h_terms(), pg.J_terms(), n)
    mapped = {tuple(ungauge(np.array(s), a).tolist()) for s in ground_g}
    assert mapped == {tuple(s) for s in ground}


@settings(max_examples=200, deadline=None)
@given(problem_gauge_spins())
def test_gauge_invariance_property(args):
    p, a, s = args
    assert abs(energy_ising(p, s) - energy_ising(apply_gauge(p, a), ungauge(s, a))) <= 1e-12
    assert apply_gauge(apply_gauge(p, a), a).equals(p)
    assert np.array_equal(ungauge(ungauge(s, a), a), s)


def test_random_gauge_determinism_and_balance():
    assert np.array_equal(random_gauge(50, 7), random_gauge(50, 7))
    gauges = {tuple(random_gauge(64, s)) for s in range(100)}
    assert len(gauges) == 100
    # |frac - 0.5| > 0.05 at n = 1e4 is a > 10-sigma event
    fracs = [np.mean(random_gauge(10_000, s) == 1) for s in range(200)]
    assert np.mean([0.45 <= f <= 0.55 for f in fracs]) >= 0.99


def test_qubo_to_ising_small_cases():
    p, vmap = qubo_to_ising(Qubo(3))
    assert not p.h.any() and p.m == 0 and p.offset == 0
    assert vmap == {0: 0, 1: 1, 2: 2}
    p, _ = qubo_to_ising(Qubo(1, {0: 3.0}))
    assert p.h[0] == 1.5 and p.offset == 1.5


def test_qubo_to_ising_exhaustive():
    rng = np.random.default_rng(9)
    n = 10
    linear = {i: float(rng.normal()) for i in range(n)}
    quadratic = {p: float(rng.normal()) for p in itertools.combinations(range(n), 2) if rng.random() < 0.4}
    q = Qubo(n, linear, quadratic, 0.75)
    p, _ = qubo_to_ising(q)
    for x in itertools.product((0, 1), repeat=n):
        s = [2 * v - 1 for v in x]
        assert abs(oracles.qubo_energy(linear, quadratic, x, 0.75) - energy_ising(p, s)) < 1e-10


def test_qubo_diagonal_term_is_linear():
    q = Qubo(2, {}, {(1, 1): 2.0})
    assert q.linear == {1: 2.0} and q.quadratic == {}


def test_qubo_partition_checks():
    with pytest.raises(ValidationError):
        Qubo(3, {}, {}, 0.0, None, Qubo(3, {0: 1.0}))
    with pytest.raises(ValidationError):
        Qubo(3, {}, {}, 0.0, (0, 1), Qubo(3, {2: 1.0}))
    q = Qubo(3, {}, {}, 0.0, (0, 1))
    assert q.ancilla_vars == (2,)


def test_normalize_already_in_range():
    p, _, _ = random_problem(5, 0, hscale=0.1, jscale=0.1)
    p = p.replace(h=np.clip(p.h, -2, 2), J=np.clip(p.J, -1, 1))
    q, scale = normalize_dynamic_range(p)
    assert scale == 1.0 and q.normalized and q.equals(p)


def test_normalize_by_chain_strength():
    p = IsingProblem.from_terms(3, {0: 1.0}, {(0, 1): -3.0, (1, 2): 0.5})
    q, scale = normalize_dynamic_range(p)
    assert scale == 3.0
    assert np.allclose(q.J, [-1.0, 0.5 / 3])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_normalize_preserves_argmin_exhaustive(seed):
    p, _, _ = random_problem(10, seed, hscale=3.0, jscale=2.5)
    q, scale = normalize_dynamic_range(p)
    assert scale > 1
    S = np.array(list(oracles.all_spin_configs(10)))
    e, eq = p.energies(S), q.energies(S)
    assert np.argmin(e) == np.argmin(eq)
    assert set(np.flatnonzero(np.isclose(e, e.min()))) == set(np.flatnonzero(np.isclose(eq, eq.min())))
    assert np.allclose(eq, e / scale, atol=1e-12)


def test_normalized_flag_enforces_range():
    with pytest.raises(ValidationError):
        IsingProblem(2, [3.0, 0.0], [[0, 1]], [0.5], normalized=True)


def test_positive_counts():
    g = build_chimera(ChimeraSpec(2, 2, 4))
    p = random_spin_glass(g, (1,), (0,), 0)
    assert count_positive_couplers(p) == p.m
    assert count_positive_couplers(apply_gauge(p, -identity_gauge(p.n))) == p.m
    glass = random_spin_glass(g, (-1, 1), (0,), 1)
    counts = [count_positive_couplers(apply_gauge(glass, random_gauge(p.n, s))) for s in range(1000)]
    # std of the mean over 1000 gauges is ~0.2 couplers
    assert abs(np.mean(counts) - p.m / 2) < 1.0


def test_positive_count_variants():
    p = IsingProblem.from_terms(3, {0: 1.0, 1: -1.0}, {(0, 1): 1.0, (1, 2): 1.0, (0, 2): -1.0})
    assert count_positive_fields(p) == 1
    assert count_positive_couplers(p, [(1, 0)], "chain") == 1
    assert count_positive_couplers(p, [(1, 0)], "nonchain") == 1
    with pytest.raises(ValidationError):
        count_positive_couplers(p, None, "bogus")


def test_instance_text_round_trip_is_bit_exact():
    p, _, _ = random_problem(7, 4)
    p = p.replace(offset=1 / 3)
    text = dumps_instance(p)
    assert text.splitlines()[0].startswith("p ising 7 7 ")
    back = loads_instance("# comment\n" + text)
    assert back.equals(p)
    assert dumps_instance(back) == text


def test_instance_json_mirror():
    p, _, _ = random_problem(5, 4)
    assert instance_from_dict(instance_to_dict(p)).equals(p)
    q = Qubo(3, {0: 1.0}, {(0, 2): -2.0}, 0.5, (0, 1), Qubo(3, {0: 1.0}))
    back = instance_from_dict(instance_to_dict(q))
    assert back.linear == q.linear and back.quadratic == q.quadratic
    assert back.problem_vars == (0, 1) and back.problem.linear == {0: 1.0}


def test_instance_rejects_bad_files():
    with pytest.raises(ValidationError):
        loads_instance("p ising 2 0 1 0\n1 0 1.0\n")
    with pytest.raises(ValidationError):
        loads_instance("p qubo 2 0 0 0\n")
