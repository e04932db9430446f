import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixconc.coupling import (
    BlockingInfeasible,
    CoupledPair,
    block_layout,
    coupling_discrepancy,
    extract_block_sequences,
    maximal_coupling,
    maximal_coupling_draws,
    sample_coupled_blocks,
    total_variation,
)
from mixconc.mixing import MarkovChainSpec
from oracles import audit_layout


def test_layout_examples():
    assert block_layout(10, 2).M == 5
    assert block_layout(12, 3).M == 4
    with pytest.raises(BlockingInfeasible):
        block_layout(5, 3)
    with pytest.raises(ValueError):
        block_layout(5, 0)
    with pytest.raises(ValueError):
        block_layout(5, 6)


def test_layout_audit_small():
    for T in range(1, 61):
        for n in range(1, T + 1):
            assert audit_layout(T, n), (T, n)


def test_extract_block_sequences():
    lay = block_layout(10, 2)
    z = np.arange(1, 11) * 10
    seqs = extract_block_sequences(z, lay)
    assert seqs.shape == (5, 3)
    assert seqs[0].tolist() == [-1, 50, 100]
    assert seqs[3].tolist() == [30, 80, -1]
    vec = np.stack([z, -z], axis=1)
    assert extract_block_sequences(vec, lay).shape == (5, 3, 2)
    with pytest.raises(ValueError):
        extract_block_sequences(z[:9], lay)


def test_total_variation():
    assert total_variation([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.25)
    assert total_variation([1, 0], [0, 1]) == 1.0


def test_coupled_pair_invariant():
    CoupledPair(1, 1, True)
    CoupledPair(1, 2, False)
    with pytest.raises(ValueError):
        CoupledPair(1, 2, True)


def test_maximal_coupling_single_draw():
    pair = maximal_coupling([0.2, 0.8], [0.2, 0.8], 3)
    assert pair.matched and pair.original == pair.copy
    pair = maximal_coupling([1.0, 0.0], [0.0, 1.0], 3)
    assert not pair.matched and (pair.original, pair.copy) == (0, 1)
    with pytest.raises(ValueError):
        maximal_coupling([0.5, 0.6], [0.5, 0.5], 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 100_000))
def test_maximal_coupling_marginals_and_mismatch(m, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(m), 2)
    x, y, matched = maximal_coupling_draws(p, q, 40_000, seed)
    assert np.array_equal(matched, x == y) or np.all(x[matched] == y[matched])
    assert np.allclose(np.bincount(x, minlength=m) / x.size, p, atol=0.015)
    assert np.allclose(np.bincount(y, minlength=m) / y.size, q, atol=0.015)
    assert abs(np.mean(x != y) - total_variation(p, q)) < 0.015


def test_coupled_blocks_copies_are_stationary():
    spec = MarkovChainSpec.two_state(0.3, 0.3)
    lay = block_layout(40, 4)  # M = 10
    rng = np.random.default_rng(0)
    W, Ws, tv = [], [], []
    for _ in range(4000):
        a, b, t = sample_coupled_blocks(spec, lay, 3, rng)
        W.append(a)
        Ws.append(b)
        tv.append(t)
    W, Ws, tv = map(np.array, (W, Ws, tv))
    real = ~lay.is_pad[:, 3]
    assert np.all(W[:, ~real] == -1) and np.all(Ws[:, ~real] == -1)
    # copies: each entry pi-distributed, entries uncorrelated
    assert np.allclose(Ws[:, real].mean(axis=0), 0.5, atol=0.03)
    c = np.corrcoef(Ws[:, real].T)
    assert np.all(np.abs(c[np.triu_indices_from(c, 1)]) < 0.06)
    # mismatch rate matches the conditional total variation
    assert abs(np.mean(W[:, real] != Ws[:, real]) - tv[:, real].mean()) < 0.01
    assert np.all(tv[:, np.flatnonzero(real)[0]] == 0)
    with pytest.raises(ValueError):
        sample_coupled_blocks(spec, lay, 10, 0)


def test_coupled_blocks_preserve_chain_law():
    # with M = 1 the column is the chain itself, so transitions follow P
    spec = MarkovChainSpec([[0.9, 0.1], [0.4, 0.6]])
    lay = block_layout(6, 6)
    assert lay.M == 1
    rng = np.random.default_rng(4)
    counts = np.zeros((2, 2))
    for _ in range(3000):
        W, _, _ = sample_coupled_blocks(spec, lay, 0, rng)
        w = W[~lay.is_pad[:, 0]]
        np.add.at(counts, (w[:-1], w[1:]), 1)
    assert np.allclose(counts / counts.sum(axis=1, keepdims=True), spec.P, atol=0.03)


def test_coupling_discrepancy():
    grid = np.linspace(-1, 1, 11)

    def g(v, th):
        return (np.asarray(v, float)[:, None] - th[None, :]) ** 2

    W = np.array([[0, 1, 1, 0]])
    assert coupling_discrepancy(g, W, W, grid) == 0.0
    Ws = np.array([[0, 1, 1, 1]])
    # one differing entry: sup_theta |(0-theta)^2 - (1-theta)^2| / n = max|2 theta - 1| / 3
    assert coupling_discrepancy(g, W, Ws, grid) == pytest.approx(3.0 / 3)
    Wp = np.array([[-1, 1, 1, 0]])
    Wsp = np.array([[-1, 1, 1, 0]])
    assert coupling_discrepancy(g, Wp, Wsp, grid, pad=-1) == 0.0
    with pytest.raises(ValueError):
        coupling_discrepancy(g, W, Ws[:, :3], grid)
    with pytest.raises(ValueError):
        coupling_discrepancy(g, W, Ws, np.array([]))
