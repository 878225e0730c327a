import itertools

import numpy as np
import pytest

from anneal_tuner.embedding import (
    Embedding,
    chain_aligned,
    embed,
    energy_problem,
    energy_qubo,
    identity_embedding,
    induced_logical_edges,
    je_region_bounds,
    majority_vote_decode,
    pair_chain_embedding,
    problem_objective,
    strict_embedding_fraction,
)
from anneal_tuner.errors import RegionNotFoundError, ValidationError
from anneal_tuner.ising import IsingProblem, Qubo, spins_to_binary
from anneal_tuner.topology import ChimeraSpec, build_chimera

from . import oracles


@pytest.fixture(scope="module")
def cell():
    return build_chimera(ChimeraSpec(1, 1, 4))


def logical_for(emb, graph, seed):
    rng = np.random.default_rng(seed)
    pairs = induced_logical_edges(emb, graph)
    h = {v: float(rng.choice([-1, 0, 1])) for v in range(emb.n_logical)}
    J = {p: float(rng.choice([-1, 1])) for p in pairs}
    return IsingProblem.from_terms(emb.n_logical, h, J)


def test_embedding_validation(cell):
    with pytest.raises(ValidationError):
        Embedding({0: (0, 4), 1: (4,)})
    with pytest.raises(ValidationError):
        Embedding({0: ()})
    emb = Embedding({1: [5, 1], 0: [4]})
    assert list(emb.chains) == [0, 1] and emb.chains[1] == (1, 5)
    assert Embedding.from_json(emb.to_json()).chains == emb.chains


def test_pair_chains_cover_cell(cell):
    emb = pair_chain_embedding(cell)
    assert emb.n_logical == 4 and emb.max_chain_length == 2
    # every pair of chains meets through two cross couplers
    assert induced_logical_edges(emb, cell) == list(itertools.combinations(range(4), 2))


def test_embed_rejects_bad_chains(cell):
    p = IsingProblem.from_terms(2, J={(0, 1): 1.0})
    with pytest.raises(ValidationError):
        embed(p, Embedding({0: (0, 1), 1: (4,)}), cell, 1.0)  # 0 and 1 share no edge
    with pytest.raises(ValidationError):
        embed(p, Embedding({0: (0,)}), cell, 1.0)
    with pytest.raises(ValidationError):
        embed(p, Embedding({0: (0,), 1: (1,)}), cell, 1.0)  # logical coupler with no hardware edge
    with pytest.raises(ValidationError):
        embed(p, Embedding({0: (0,), 1: (4,)}), cell, 0.0)


def test_embedded_structure(cell):
    emb = pair_chain_embedding(cell)
    lp = logical_for(emb, cell, 0)
    ep = embed(lp, emb, cell, 2.0)
    raw = ep.raw
    chain = {tuple(e) for e in ep.chain_edges.tolist()}
    assert len(chain) == 4
    terms = raw.J_terms()
    assert all(terms[e] == -2.0 for e in chain)
    for v, (a, b) in emb.chains.items():
        assert raw.h[a] == raw.h[b] == lp.h[v] / 2
    # logical coupler split over the two cross edges between chains
    for (u, v), w in lp.J_terms().items():
        between = [terms[e] for e in terms if e not in chain and {emb.owner(8)[e[0]], emb.owner(8)[e[1]]} == {u, v}]
        assert len(between) == 2 and np.isclose(sum(between), w)
    assert ep.scale == 2.0 and ep.hardware.normalized


@pytest.mark.parametrize("seed", range(4))
def test_aligned_states_reproduce_logical_energy(cell, seed):
    emb = pair_chain_embedding(cell)
    lp = logical_for(emb, cell, seed)
    ep = embed(lp, emb, cell, 3.0)
    S = np.array(list(oracles.all_spin_configs(4)))
    hw = ep.lift(S)
    n_chain_edges = len(ep.chain_edges)
    # an aligned chain contributes -J_E per chain edge
    assert np.allclose(ep.raw.energies(hw), lp.energies(S) - 3.0 * n_chain_edges)
    assert np.allclose(ep.hardware.energies(hw) * ep.scale, ep.raw.energies(hw))


@pytest.mark.parametrize("seed", range(3))
def test_large_je_ground_state_is_aligned_and_decodes_to_logical_ground(cell, seed):
    emb = pair_chain_embedding(cell)
    lp = logical_for(emb, cell, seed)
    ep = embed(lp, emb, cell, 10.0)
    best, states = oracles.ising_ground(ep.raw.h_terms(), ep.raw.J_terms(), 8)
    lbest, lstates = oracles.ising_ground(lp.h_terms(), lp.J_terms(), 4)
    decoded = {tuple(majority_vote_decode(np.array(s), emb)) for s in states}
    assert decoded == {tuple(s) for s in lstates}
    assert all(chain_aligned(np.array(states), emb))
    assert np.isclose(best, lbest - 10.0 * len(ep.chain_edges))


def test_majority_vote_odd_chains_exhaustive():
    emb = Embedding({0: (0, 1, 2), 1: (3,)})
    for s in oracles.all_spin_configs(4):
        s = np.array(s)
        expected = [1 if s[:3].sum() > 0 else -1, s[3]]
        assert majority_vote_decode(s, emb).tolist() == expected


def test_majority_vote_ties_seeded_and_balanced():
    emb = Embedding({0: (0, 1), 1: (2, 3)})
    S = np.tile(np.array([1, -1, -1, 1], dtype=np.int8), (4000, 1))
    a = majority_vote_decode(S, emb, seed=3)
    assert np.array_equal(a, majority_vote_decode(S, emb, seed=3))
    assert not np.array_equal(a, majority_vote_decode(S, emb, seed=4))
    assert abs((a == 1).mean() - 0.5) < 0.05
    # read-wise keys: decoding a slice matches decoding the whole
    assert np.array_equal(majority_vote_decode(S[100:200], emb, seed=3, first_read=100), a[100:200])
    clear = np.array([[1, 1, -1, -1]], dtype=np.int8)
    assert majority_vote_decode(clear, emb, seed=9).tolist() == [[1, -1]]


def test_decoded_energies_match_bruteforce(cell):
    emb = pair_chain_embedding(cell)
    lp = logical_for(emb, cell, 7)
    ep = embed(lp, emb, cell, 1.0)
    S = np.array(list(oracles.all_spin_configs(8)), dtype=np.int8)
    dec = majority_vote_decode(S, emb, seed=1)
    got = ep.logical_energies(dec)
    expected = [oracles.ising_energy(lp.h_terms(), lp.J_terms(), d) for d in dec]
    assert np.allclose(got, expected)


def test_strict_embedding_fraction():
    emb = Embedding({0: (0, 1), 1: (2,)})
    S = np.array([[1, 1, -1], [1, -1, 1], [-1, -1, -1], [-1, 1, 1]])
    rep = strict_embedding_fraction(S, emb)
    assert rep.f_se == 0.5 and rep.passed.tolist() == [True, False, True, False]
    assert strict_embedding_fraction(S, identity_embedding(range(3))).f_se == 1.0
    with pytest.raises(ValidationError):
        strict_embedding_fraction(np.zeros((0, 3)), emb)


def test_region_bounds():
    curve = [(0.5, 0.0), (1.0, 0.02), (2.0, 0.3), (4.0, 0.8), (8.0, 0.9)]
    assert je_region_bounds(curve, 0.9) == (2.0, 8.0)
    assert je_region_bounds(curve, 0.84) == (2.0, 4.0)
    # the onset is never reached: fall back to the largest candidate
    assert je_region_bounds(curve[:4], 1.0) == (2.0, 4.0)
    with pytest.raises(RegionNotFoundError) as err:
        je_region_bounds([(1.0, 0.0), (2.0, 0.01)], 1.0)
    assert err.value.curve == [(1.0, 0.0), (2.0, 0.01)]
    with pytest.raises(ValidationError):
        je_region_bounds([(2.0, 0.5), (1.0, 0.6)], 1.0)


def test_qubo_frames_exhaustive(cell):
    q = Qubo(4, {0: -1.0, 1: 2.0, 3: 0.5}, {(0, 1): 3.0, (1, 2): -1.0, (2, 3): 2.0}, 1.0, (0, 1))
    obj = problem_objective(q)
    assert obj.linear == {0: -1.0, 1: 2.0} and obj.quadratic == {(0, 1): 3.0}
    for x in itertools.product((0, 1), repeat=4):
        assert energy_qubo(q, x) == oracles.qubo_energy(q.linear, q.quadratic, x, 1.0)
        assert energy_problem(q, x) == oracles.qubo_energy(obj.linear, obj.quadratic, x, 1.0)
    with pytest.raises(ValidationError):
        problem_objective(Qubo(2))


def test_embedded_qubo_logical_energies(cell):
    emb = pair_chain_embedding(cell)
    q = Qubo(4, {0: 1.0, 2: -2.0}, {(0, 1): -1.5, (1, 3): 2.0, (2, 3): 1.0}, 0.0, (0, 1))
    ep = embed(q, emb, cell, 2.0)
    S = np.array(list(oracles.all_spin_configs(4)))
    X = spins_to_binary(S)
    assert np.allclose(ep.logical_energies(S, "qubo"), [q.energy(x) for x in X])
    assert np.allclose(ep.logical_energies(S, "problem"), [energy_problem(q, x) for x in X])
    with pytest.raises(ValidationError):
        ep.logical_energies(S, "nope")
