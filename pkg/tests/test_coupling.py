import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfpsplit.coupling import (
    UnownedVariableError,
    build_coupling,
    consensus_project,
    consensus_residual,
    gather_average,
    scatter,
)
from conftest import dense_consensus_project, random_coupling


@pytest.fixture(scope="module")
def chain():
    return build_coupling([{0, 1}, {1, 2}, {2, 3}], 4)


class TestBuildCoupling:
    def test_pair_sharing_one_variable(self):
        c = build_coupling([{0}, {0}], 1)
        assert [list(a) for a in c.I] == [[0, 1]]
        assert list(c.Ne[0]) == [1] and list(c.Ne[1]) == [0]
        assert list(c.degree) == [2]

    def test_chain_overlap(self, chain):
        assert list(chain.degree) == [1, 2, 2, 1]
        assert list(chain.Ne[0]) == [1]
        assert list(chain.Ne[1]) == [0, 2]
        assert list(chain.Ne[2]) == [1]

    def test_unowned_variable(self):
        with pytest.raises(UnownedVariableError) as err:
            build_coupling([{0}, {1}], 3)
        assert err.value.variable == 2

    def test_out_of_range_and_duplicates(self):
        with pytest.raises(ValueError):
            build_coupling([{0, 5}], 3)
        with pytest.raises(ValueError):
            build_coupling([[0, 0, 1]], 2)

    def test_membership_duality(self):
        rng = np.random.default_rng(7)
        c = random_coupling(rng, 12, 5)
        for i, J in enumerate(c.J):
            for j in J:
                assert i in set(int(q) for q in c.I[j])
        for j, owners in enumerate(c.I):
            for i in owners:
                assert j in set(int(q) for q in c.J[i])

    def test_neighbor_symmetry(self):
        rng = np.random.default_rng(3)
        c = random_coupling(rng, 10, 6)
        for i, ne in enumerate(c.Ne):
            for k in ne:
                assert i in set(int(q) for q in c.Ne[k])


class TestScatterGather:
    def test_scatter_chain(self, chain):
        S = scatter(np.array([1.0, 3.0, 7.0, 10.0]), chain)
        assert np.array_equal(S, [1, 3, 3, 7, 7, 10])

    def test_scatter_pair(self):
        c = build_coupling([{0}, {0}], 1)
        assert np.array_equal(scatter(np.array([5.0]), c), [5, 5])

    def test_scatter_identity_coupling(self):
        c = build_coupling([set(range(6))], 6)
        v = np.arange(6.0)
        assert np.array_equal(scatter(v, c), v)

    def test_gather_pair_mean(self):
        c = build_coupling([{0}, {0}], 1)
        assert gather_average(np.array([2.0, 4.0]), c) == pytest.approx([3.0])

    def test_gather_chain_means(self, chain):
        v = gather_average(np.array([1.0, 2.0, 4.0, 6.0, 8.0, 10.0]), chain)
        assert v == pytest.approx([1.0, 3.0, 7.0, 10.0])

    def test_gather_consensual_exact(self, chain):
        v = np.array([0.5, -1.5, 2.25, 8.0])
        assert np.array_equal(gather_average(scatter(v, chain), chain), v)

    def test_gather_scatter_identity_random(self):
        # averaging d identical copies can round by one ulp unless d is a
        # power of two, so the identity is asserted at machine precision
        rng = np.random.default_rng(11)
        eps = np.finfo(float).eps
        for _ in range(20):
            c = random_coupling(rng, int(rng.integers(2, 15)), int(rng.integers(1, 7)))
            v = rng.normal(size=c.n_global)
            got = gather_average(scatter(v, c), c)
            assert np.max(np.abs(got - v)) <= 8 * eps * max(1.0, np.max(np.abs(v)))

    def test_length_mismatch(self, chain):
        with pytest.raises(ValueError):
            scatter(np.zeros(3), chain)
        with pytest.raises(ValueError):
            gather_average(np.zeros(5), chain)


class TestConsensusProject:
    def test_pair(self):
        c = build_coupling([{0}, {0}], 1)
        assert consensus_project(np.array([2.0, 4.0]), c) == pytest.approx([3.0, 3.0])

    def test_fixed_on_consensual(self, chain):
        S = scatter(np.array([1.0, 2.0, 3.0, 4.0]), chain)
        assert np.array_equal(consensus_project(S, chain), S)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            c = random_coupling(rng, int(rng.integers(2, 21)), int(rng.integers(1, 9)))
            S = rng.normal(size=c.total_local)
            got = consensus_project(S, c)
            want = dense_consensus_project(S, c)
            assert np.max(np.abs(got - want)) <= 1e-12

    def test_idempotent(self, chain):
        rng = np.random.default_rng(5)
        S = rng.normal(size=chain.total_local)
        P1 = consensus_project(S, chain)
        assert np.max(np.abs(consensus_project(P1, chain) - P1)) <= 1e-12

    def test_nonexpansive(self, chain):
        rng = np.random.default_rng(6)
        for _ in range(30):
            S, T = rng.normal(size=(2, chain.total_local))
            lhs = np.linalg.norm(consensus_project(S, chain) - consensus_project(T, chain))
            assert lhs <= np.linalg.norm(S - T) + 1e-12

    def test_linear(self, chain):
        rng = np.random.default_rng(8)
        S, T = rng.normal(size=(2, chain.total_local))
        a, b = 0.3, -1.7
        lhs = consensus_project(a * S + b * T, chain)
        rhs = a * consensus_project(S, chain) + b * consensus_project(T, chain)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_stack_gram_is_degree_diagonal(self):
        rng = np.random.default_rng(9)
        from conftest import dense_stack_matrix

        c = random_coupling(rng, 9, 5)
        E = dense_stack_matrix(c)
        assert np.array_equal(E.T @ E, np.diag(c.degree.astype(float)))


class TestConsensusResidual:
    def test_zero_on_consensual(self, chain):
        S = scatter(np.arange(4.0), chain)
        assert consensus_residual(S, chain) == 0.0

    def test_pair_value(self):
        c = build_coupling([{0}, {0}], 1)
        assert consensus_residual(np.array([2.0, 4.0]), c) == pytest.approx(np.sqrt(2))

    def test_chain_value(self, chain):
        S = np.array([1.0, 2.0, 4.0, 6.0, 8.0, 10.0])
        assert consensus_residual(S, chain) == pytest.approx(2.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
def test_roundtrip_property(vals):
    c = build_coupling([{0, 1}, {1, 2}, {2, 3}], 4)
    v = np.asarray(vals)
    assert np.array_equal(gather_average(scatter(v, c), c), v)
    S = scatter(v, c)
    assert np.array_equal(consensus_project(S, c), S)
