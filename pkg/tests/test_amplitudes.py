import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbnet.amplitudes import (
    BayesNet,
    MarkovNet,
    build_amplitude_from_bnet,
    build_amplitude_from_mnet,
    chain_dof,
    chain_factorize,
    conditional_amplitude,
    factor_product,
    factors_according_dag,
    factors_according_ug,
    fp_to_cp,
    has_real_row,
    mobius_forward,
    mobius_invert,
    powerset_lambda,
    replace_diag_with_traced_node,
    theta_field,
    vanishes_mod_2pi,
    wrap_phase,
)
from qbnet.config import settings_override
from qbnet.density import meta_density, reduced_density, superop
from qbnet.errors import (
    AllZeroAffinityProduct,
    GroundSetTooLarge,
    UnnormalizedNodeTable,
    ValidationError,
    ZeroAmplitudeStrictMode,
    ZeroConditionMass,
    ZeroReferenceAmplitude,
)
from qbnet.graph import Dag, VariableSpace, build_dag, build_ug, super_cliques
from qbnet.randomnets import random_amplitude, random_bnet, random_dag, random_mnet, random_ug, rng_for
from qbnet.tensor import AmplitudeTensor


def binary(n):
    return VariableSpace.binary([f"x{i + 1}" for i in range(n)])


class TestTheta:
    def test_wrap_phase(self):
        np.testing.assert_allclose(wrap_phase([np.pi, -np.pi, 3 * np.pi, 0.5]), [np.pi, np.pi, np.pi, 0.5])

    def test_relative_to_reference(self, rng):
        a = random_amplitude(rng, binary(2), positive=False)
        tf = theta_field(a)
        assert tf.theta[0, 0] == 0
        want = np.angle(a.values / a.values[0, 0])
        np.testing.assert_allclose(np.exp(1j * tf.theta), np.exp(1j * want), atol=1e-12)
        # amplitude() equals A up to the global phase of A(x°)
        np.testing.assert_allclose(tf.amplitude() * np.exp(1j * np.angle(a.values[0, 0])), a.values, atol=1e-12)

    def test_reference_fallback_and_errors(self):
        a = AmplitudeTensor.full(binary(2), np.array([0, 1, 1, 1]) / np.sqrt(3))
        tf = theta_field(a)
        assert tf.fallback and tf.reference == (0, 1)
        with pytest.raises(ZeroReferenceAmplitude):
            theta_field(a, (0, 0))
        assert theta_field(a, (0, 0), zero_reference="absolute").absolute
        with pytest.raises(ZeroReferenceAmplitude):
            theta_field(AmplitudeTensor.full(binary(1), [0, 0]))

    def test_conditional_modulus_is_conditional_probability(self, rng):
        a = random_amplitude(rng, binary(3), positive=False)
        tf = theta_field(a)
        table, _ = tf.conditional({0}, {2})
        p = np.abs(a.values) ** 2
        p02 = p.sum(axis=1)
        np.testing.assert_allclose(np.abs(table) ** 2, p02 / p02.sum(axis=0, keepdims=True), atol=1e-12)

    def test_conditional_amplitude_zero_mass(self):
        a = AmplitudeTensor.full(binary(2), np.array([1, 1, 0, 0]) / np.sqrt(2))
        tf = theta_field(a)
        with pytest.raises(ZeroConditionMass):
            conditional_amplitude(tf, {1}, {0}, {0: 1, 1: 0})
        with settings_override(eps=1e-14):
            assert conditional_amplitude(tf, {1}, {0}, {0: 1, 1: 0}) == 0


class TestChainRule:
    @given(st.integers(0, 2**32), st.integers(1, 4))
    def test_reconstructs(self, seed, n):
        rng = rng_for(seed)
        tf = theta_field(random_amplitude(rng, binary(n), positive=True))
        order = [int(v) for v in rng.permutation(n)]
        factors = chain_factorize(tf, order)
        assert np.max(np.abs(factor_product(tf.scope, factors) - tf.amplitude())) < 1e-10
        # every factor column is a unit vector
        for f in factors:
            axis = f.nodes.index(f.node)
            np.testing.assert_allclose(np.sum(np.abs(f.table) ** 2, axis=axis), 1.0, atol=1e-12)

    def test_zero_needs_eps(self):
        a = AmplitudeTensor.full(binary(2), np.array([1, 1, 1, 0]) / np.sqrt(3))
        with pytest.raises(ZeroAmplitudeStrictMode):
            chain_factorize(theta_field(a))

    def test_dof(self):
        assert chain_dof([2, 2, 2], [0, 1, 2]) == [1, 2, 4]
        assert chain_dof([3, 2], [1, 0]) == [1, 4]


class TestMobius:
    def test_hand_example(self):
        f = {frozenset(): 1, frozenset({0}): 3, frozenset({1}): 5, frozenset({0, 1}): 10}
        g = mobius_invert(f)
        assert g == {frozenset(): 1, frozenset({0}): 2, frozenset({1}): 4, frozenset({0, 1}): 3}
        assert mobius_forward(g) == f

    @given(st.integers(0, 2**32), st.integers(0, 6))
    def test_round_trip(self, seed, n):
        rng = np.random.default_rng(seed)
        f = {frozenset(s): complex(*rng.normal(size=2)) for r in range(n + 1) for s in itertools.combinations(range(n), r)}
        back = mobius_forward(mobius_invert(f))
        assert max(abs(back[k] - f[k]) for k in f) < 1e-12

    def test_ground_limit(self):
        big = {frozenset(range(21)): 0}
        with pytest.raises((GroundSetTooLarge, ValueError)):
            mobius_invert(big)


class TestPowerset:
    @given(st.integers(0, 2**32), st.integers(1, 4))
    def test_product_reconstructs(self, seed, n):
        tf = theta_field(random_amplitude(rng_for(seed), binary(n)))
        lam = powerset_lambda(tf)
        assert np.max(np.abs(lam.product() - tf.amplitude())) < 1e-10

    def test_lambda_vanishes_off_cliques(self, rng):
        for _ in range(10):
            ug = random_ug(rng, 4, 0.5)
            tf = theta_field(build_amplitude_from_mnet(random_mnet(rng, ug)))
            lam = powerset_lambda(tf)
            cliques = super_cliques(ug)
            for nodes, t in lam.tables.items():
                if not any(nodes <= c for c in cliques):
                    assert vanishes_mod_2pi(t, 1e-8)

    def test_ug_factorization(self, rng):
        space = binary(3)
        path = build_ug(space, [("x1", "x2"), ("x2", "x3")])
        tf = theta_field(build_amplitude_from_mnet(random_mnet(rng, path)))
        assert factors_according_ug(tf, path)
        assert factors_according_ug(tf, build_ug(space, [("x1", "x2"), ("x2", "x3"), ("x1", "x3")]))
        assert not factors_according_ug(tf, build_ug(space, [("x1", "x2")]))


class TestBayesNets:
    def brute(self, net):
        """Loop over assignments and multiply table entries."""
        space = net.space
        out = np.zeros(space.cards, dtype=complex)
        for x in itertools.product(*(range(c) for c in space.cards)):
            v = 1
            for j, t in net.tables.items():
                v *= t[(x[j],) + tuple(x[p] for p in sorted(net.dag.pa(j)))]
            out[x] = v
        return out

    def test_product_matches_loop(self, rng):
        for _ in range(10):
            dag = random_dag(rng, 4, 0.5)
            net = random_bnet(rng, dag, positive=False)
            np.testing.assert_allclose(build_amplitude_from_bnet(net).values, self.brute(net), atol=1e-14)

    def test_cp_tables_are_recovered(self, rng):
        dag = random_dag(rng, 4, 0.6)
        net = random_bnet(rng, dag)
        tf = theta_field(build_amplitude_from_bnet(net))
        assert factors_according_dag(tf, dag)
        for j in range(4):
            table, _ = tf.conditional({j}, dag.pa(j))
            nodes = tuple(sorted(dag.pa(j) | {j}))
            want = np.moveaxis(net.tables[j], 0, nodes.index(j))
            np.testing.assert_allclose(table, want, atol=1e-12)

    def test_factorization_fails_on_subgraph(self, rng):
        space = binary(3)
        full = build_dag(space, [("x1", "x2"), ("x2", "x3")])
        tf = theta_field(build_amplitude_from_bnet(random_bnet(rng, full)))
        assert not factors_according_dag(tf, Dag(space, frozenset()))

    def test_unnormalized_table(self):
        dag = build_dag(binary(1), [])
        with pytest.raises(UnnormalizedNodeTable):
            build_amplitude_from_bnet(BayesNet(dag, {0: np.array([1.0, 1.0])}))

    def test_wrong_shape(self):
        dag = build_dag(binary(2), [("x1", "x2")])
        with pytest.raises(ValidationError):
            BayesNet(dag, {0: np.array([1.0, 0.0]), 1: np.array([1.0, 0.0])})


class TestMarkovNets:
    def test_missing_clique(self):
        ug = build_ug(binary(3), [("x1", "x2"), ("x2", "x3")])
        with pytest.raises(ValidationError):
            MarkovNet(ug, {(0, 1): np.ones((2, 2))})

    def test_non_clique_key(self):
        ug = build_ug(binary(3), [("x1", "x2"), ("x2", "x3")])
        with pytest.raises(ValidationError):
            MarkovNet(ug, {(0, 1): np.ones((2, 2)), (1, 2): np.ones((2, 2)), (0, 2): np.ones((2, 2))})

    def test_all_zero(self):
        ug = build_ug(binary(2), [("x1", "x2")])
        with pytest.raises(AllZeroAffinityProduct):
            build_amplitude_from_mnet(MarkovNet(ug, {(0, 1): np.zeros((2, 2))}))

    def test_normalized(self, rng):
        a = build_amplitude_from_mnet(random_mnet(rng, random_ug(rng, 4, 0.5)))
        assert a.normalized


class TestRewrites:
    @pytest.mark.parametrize("kind", ["bayes", "markov"])
    def test_traced_copy_equals_diag(self, rng, kind):
        if kind == "bayes":
            net = random_bnet(rng, random_dag(rng, 3, 0.7), positive=False)
            build = build_amplitude_from_bnet
        else:
            net = random_mnet(rng, random_ug(rng, 3, 0.7))
            build = build_amplitude_from_mnet
        a = build(net)
        new, j = replace_diag_with_traced_node(net, 1)
        assert j == 3
        wide = build(new)
        np.testing.assert_allclose(
            reduced_density(wide, {0, 1, 2}).matrix, superop(meta_density(a), "diag", {1}).matrix, atol=1e-12
        )

    def test_single_state_noop(self):
        space = VariableSpace([("a", ("only",)), ("b", ("0", "1"))])
        net = BayesNet(build_dag(space, []), {0: np.array([1.0]), 1: np.array([1.0, 0.0])})
        assert replace_diag_with_traced_node(net, 0) == (net, None)

    def test_fp_to_cp(self, rng):
        f = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
        c1, c2, c3 = fp_to_cp(f)
        np.testing.assert_allclose(c1 @ c2 @ c3, f, atol=1e-12)
        assert has_real_row(c1) and has_real_row(c2) and has_real_row(c3)
        c1, c2, c3 = fp_to_cp(f[:, :1])
        np.testing.assert_allclose(c1 @ c2 @ c3, f[:, :1], atol=1e-12)
        assert not has_real_row(c3) or abs(np.angle(f[0, 0])) < 1e-12


def test_bnet_drift_warns_and_renormalizes():
    # each column is within the unit-norm tolerance but the product drifts further
    dag = build_dag(binary(2), [])
    col = np.array([1.0, np.sqrt(0.9e-9)])
    net = BayesNet(dag, {0: col, 1: col})
    with pytest.warns(UserWarning, match="renormalizing"):
        a = build_amplitude_from_bnet(net)
    assert abs(a.norm2 - 1) < 1e-15
