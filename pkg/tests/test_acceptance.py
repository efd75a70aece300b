"""Acceptance criteria, one test each, at the stated tolerances."""

import itertools
import time

import numpy as np

from qbnet.amplitudes import (
    build_amplitude_from_bnet,
    build_amplitude_from_mnet,
    chain_factorize,
    factor_product,
    factors_according_dag,
    factors_according_ug,
    mobius_forward,
    mobius_invert,
    powerset_lambda,
    theta_field,
)
from qbnet.density import (
    MeasurementPlan,
    measurement_distribution,
    meta_density,
    projector_distribution,
    purify,
    quantum_cmi,
    random_phase_dephase,
    schmidt,
    superop,
)
from qbnet.fixtures import generate
from qbnet.graph import (
    Dag,
    Independency,
    VariableSpace,
    all_dags,
    graphic_iset,
    iter_triples,
    moral_graph,
    separated,
)
from qbnet.harness import BASIC_CASES, basic_case_trial, decomposition_consistent, random_rule_model, second_graph
from qbnet.independence import check_rules, entanglement_zero_certificate, evaluate_tau
from qbnet.randomnets import (
    random_amplitude,
    random_bnet,
    random_dag,
    random_density,
    random_mnet,
    random_space,
    random_ug,
    rng_for,
    trial_seed,
)
from qbnet.tensor import AmplitudeTensor

XI = np.pi / 2
SEED = 2024


def rngs(tag: int, count: int):
    for t in range(count):
        yield rng_for(trial_seed(SEED * 100 + tag, t))


def binary(n):
    return VariableSpace.binary([f"x{i + 1}" for i in range(n)])


def eig_entropy(rho):
    """Oracle: numpy eigvalsh entropy in nats."""
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))


def test_criterion_01_dsep_truth_table(accept):
    start = time.perf_counter()
    bad = []
    worst_true = 0.0
    least_false = np.inf
    for row in range(len(BASIC_CASES)):
        for rng in rngs(1 + row, 50):
            r = basic_case_trial(rng, row)
            if not (r["sep"] == r["expected"] == r["tau_a"]):
                bad.append(r)
            if r["expected"]:
                worst_true = max(worst_true, r["residual"])
            else:
                least_false = min(least_false, r["residual"])
    elapsed = time.perf_counter() - start
    ok = not bad and worst_true < 1e-8 and elapsed < 10
    accept(1, "three-node separation table", ok,
           f"8 rows x 50 nets, mismatches={len(bad)}, max true-row residual={worst_true:.1e}, "
           f"min false-row residual={least_false:.1e}, {elapsed:.2f}s")


def test_criterion_02_counterexample_one(accept):
    nf = generate("counterexample-1", XI)
    tf = nf.theta_field()
    i = Independency.make({0}, {1})
    cmip = evaluate_tau("CMIP", tf, i)
    ta = evaluate_tau("A", tf, i)
    ok = cmip.holds and cmip.value < 1e-10 and not ta.holds and ta.value > 0.1
    accept(2, "counterexample 1", ok, f"CMI after diag={cmip.value:.1e} (<1e-10), tau^A residual={ta.value:.3f} (>0.1)")


def test_criterion_03_counterexample_two(accept):
    nf = generate("counterexample-2", XI)
    tf = nf.theta_field()
    i = Independency.make({0}, {1})
    ta = evaluate_tau("A", tf, i)
    cmip = evaluate_tau("CMIP", tf, i)
    # independent oracle: reduced states by reshaping, entropies by numpy eigvalsh
    psi = nf.amplitude().values.reshape(4, 2)
    rho12 = psi @ psi.conj().T
    r4 = rho12.reshape(2, 2, 2, 2)
    rho1 = np.einsum("ajbj->ab", r4)
    rho2 = np.einsum("iaib->ab", r4)
    oracle = eig_entropy(rho1) + eig_entropy(rho2) - eig_entropy(rho12)
    ok = ta.holds and ta.value < 1e-10 and not cmip.holds and cmip.value > 1e-3 and abs(cmip.value - oracle) < 1e-10
    accept(3, "counterexample 2", ok,
           f"tau^A residual={ta.value:.1e} (<1e-10), CMI after diag={cmip.value:.6f} (>1e-3), "
           f"eigvalsh oracle={oracle:.6f}")


def test_criterion_04_chain_and_powerset(accept):
    worst_chain = worst_power = worst_mobius = 0.0
    for rng in rngs(20, 100):
        n = int(rng.integers(1, 5))
        tf = theta_field(random_amplitude(rng, binary(n), positive=True))
        order = [int(v) for v in rng.permutation(n)]
        target = tf.amplitude()
        worst_chain = max(worst_chain, float(np.max(np.abs(factor_product(tf.scope, chain_factorize(tf, order)) - target))))
        lam = powerset_lambda(tf)
        worst_power = max(worst_power, float(np.max(np.abs(lam.product() - target))))
        f = {frozenset(s): complex(*rng.normal(size=2)) for r in range(n + 1) for s in itertools.combinations(range(n), r)}
        back = mobius_forward(mobius_invert(f))
        worst_mobius = max(worst_mobius, max(abs(back[k] - f[k]) for k in f))
    ok = worst_chain < 1e-8 and worst_power < 1e-8 and worst_mobius < 1e-12
    accept(4, "chain-rule and power-set reconstruction", ok,
           f"100 amplitudes, chain={worst_chain:.1e}, power-set={worst_power:.1e}, Mobius round trip={worst_mobius:.1e}")


def test_criterion_05_factorization_equivalences(accept):
    dag_bad = ug_bad = 0
    dag_seen, ug_seen = set(), set()
    for rng in rngs(50, 100):
        n = int(rng.integers(2, 6))
        g1 = random_dag(rng, n, float(rng.uniform(0.2, 0.8)))
        tf = theta_field(build_amplitude_from_bnet(random_bnet(rng, g1)))
        g2 = second_graph(rng, g1, directed=True)[0]
        fact = factors_according_dag(tf, g2)
        local = all(evaluate_tau("A", tf, i).holds for i in graphic_iset(g2, "loc"))
        dag_bad += fact != local
        dag_seen.add(fact)
    for rng in rngs(51, 100):
        n = int(rng.integers(2, 6))
        g1 = random_ug(rng, n, float(rng.uniform(0.2, 0.8)))
        tf = theta_field(build_amplitude_from_mnet(random_mnet(rng, g1, positive=True)))
        assert not tf.has_zeros
        g2 = second_graph(rng, g1, directed=False)[0]
        fact = factors_according_ug(tf, g2)
        pair = all(evaluate_tau("A", tf, i).holds for i in graphic_iset(g2, "pair"))
        ug_bad += fact != pair
        ug_seen.add(fact)
    ok = dag_bad == 0 and ug_bad == 0 and dag_seen == {True, False} and ug_seen == {True, False}
    accept(5, "factorization iff local / pairwise I-set", ok,
           f"100 DAG nets: {dag_bad} failures; 100 positive UG nets: {ug_bad} failures; both directions exercised")


def test_criterion_06_purify_and_schmidt(accept):
    worst_p = worst_s = 0.0
    for rng in rngs(60, 100):
        space = random_space(rng, 8)
        d = int(np.prod(space.cards))
        rho = random_density(rng, space, rank=int(rng.integers(1, d + 1)))
        worst_p = max(worst_p, float(np.max(np.abs(purify(rho).rebuild() - rho.matrix))))
    for rng in rngs(61, 100):
        space = VariableSpace.with_cards([int(rng.integers(2, 4)) for _ in range(int(rng.integers(2, 4)))])
        a = random_amplitude(rng, space, positive=False)
        cut = int(rng.integers(1, len(space)))
        s = schmidt(a, range(cut), range(cut, len(space)))
        m = a.values.reshape(int(np.prod(space.cards[:cut])), -1)
        worst_s = max(worst_s, float(np.max(np.abs(s.matrix() - m))))
    bell = AmplitudeTensor.full(binary(2), np.array([1, 0, 0, 1]) / np.sqrt(2))
    sv = schmidt(bell, {0}, {1}).weights
    bell_err = float(np.max(np.abs(sv - 1 / np.sqrt(2))))
    ok = worst_p < 1e-9 and worst_s < 1e-9 and bell_err < 1e-12
    accept(6, "purification and Schmidt", ok,
           f"purify max={worst_p:.1e}, Schmidt max={worst_s:.1e}, Bell singular values off by {bell_err:.1e}")


def test_criterion_07_superoperators(accept):
    worst_id = worst_meas = 0.0
    for rng in rngs(70, 100):
        space = random_space(rng, 16)
        rho = random_density(rng, space)
        target = [v for v in range(len(space)) if rng.random() < 0.5] or [0]
        lhs = superop(superop(rho, "diag", target), "entry_sum", target)
        rhs = superop(rho, "trace", target)
        gap = abs(lhs - rhs) if isinstance(lhs, complex) else float(np.max(np.abs(lhs.matrix - rhs.matrix)))
        worst_id = max(worst_id, gap)
    for rng in rngs(71, 100):
        space = random_space(rng, 32, max_vars=5)
        n = len(space)
        a = random_amplitude(rng, space, positive=False)
        labels = rng.integers(0, 3, size=n)
        labels[int(rng.integers(n))] = 0
        plan = MeasurementPlan(*({v for v in range(n) if labels[v] == c} for c in range(3)))
        worst_meas = max(worst_meas, float(np.max(np.abs(measurement_distribution(a, plan).values - projector_distribution(a, plan).values))))
    rng = next(rngs(72, 1))
    rho = meta_density(random_amplitude(rng, binary(2), positive=False))
    deph = random_phase_dephase(rho, {0}, 100_000, seed=SEED)
    off = float(np.max(np.abs(deph.matrix - superop(rho, "diag", {0}).matrix)))
    ok = worst_id < 1e-12 and worst_meas < 1e-9 and off < 0.02
    accept(7, "super-operator algebra", ok,
           f"entry-sum after diag vs trace max={worst_id:.1e}, measurement paths max={worst_meas:.1e}, "
           f"dephasing 1e5 samples max error={off:.4f}")


def test_criterion_08_rules(accept):
    summary = {}
    for kind, tag in (("P", 80), ("A", 81)):
        violations = fired = 0
        for rng in rngs(tag, 50):
            model, _ = random_rule_model(rng, 4, kind)
            rep = check_rules(kind, model)
            violations += rep.total_violations
            fired += sum(r.fired for r in rep.rules.values())
        summary[kind] = (violations, fired)
    ok = all(v == 0 and f > 0 for v, f in summary.values())
    accept(8, "reduction and combination rules", ok,
           f"50 positive 4-variable models each; tau^P violations={summary['P'][0]} (premises fired {summary['P'][1]}), "
           f"tau^A violations={summary['A'][0]} (premises fired {summary['A'][1]})")


def test_criterion_09_certificates(accept):
    start = time.perf_counter()
    names = ["x", "a", "y"]
    shapes = {
        "chain": [(0, 1), (1, 2)],
        "common-cause": [(1, 0), (1, 2)],
        "collider": [(0, 1), (2, 1)],
    }
    results = {}
    for tag, (shape, arrows) in enumerate(shapes.items()):
        space = VariableSpace.binary(names)
        dag = Dag(space, frozenset(arrows))
        certs = [entanglement_zero_certificate(random_bnet(rng, dag), {0}, {2}) for rng in rngs(90 + tag, 20)]
        certs.append(entanglement_zero_certificate(generate(shape).net, {0}, {2}))
        results[shape] = (all(c.certified_zero for c in certs), any(c.certified_zero for c in certs), max(c.upper_bound for c in certs))
    space4 = binary(4)
    dags = list(all_dags(space4))
    consistent = all(decomposition_consistent(g, 4) for g in dags)
    # oracle: with everything else as E, certification means no moral-graph edge between J and K
    everyone = frozenset(range(4))
    oracle_ok = True
    for g in dags:
        links = moral_graph(g).links
        for t in iter_triples(4, all_encompassing=True):
            direct = any((min(a, b), max(a, b)) in links for a in t.j for b in t.k)
            oracle_ok &= separated(g, Independency.make(t.j, t.k, everyone - t.j - t.k)) == (not direct)
    elapsed = time.perf_counter() - start
    ok = (
        results["chain"][0] and results["chain"][2] < 1e-8
        and results["common-cause"][0] and results["common-cause"][2] < 1e-8
        and not results["collider"][1]
        and len(dags) == 543 and consistent and oracle_ok and elapsed < 60
    )
    accept(9, "entanglement certificates", ok,
           f"chain bound={results['chain'][2]:.1e}, common-cause bound={results['common-cause'][2]:.1e}, "
           f"collider certified={results['collider'][1]}; decomposition consistent on {len(dags)} DAGs; {elapsed:.1f}s")


def test_criterion_10_cmi_chain_rule_ssa(accept):
    worst_chain = 0.0
    worst_neg = 0.0
    for rng in rngs(100, 200):
        n = int(rng.integers(3, 5))
        space = binary(n)
        d = 2**n
        rho = random_density(rng, space, rank=int(rng.integers(1, d + 1)))
        e = {3} if n == 4 else set()
        lhs = quantum_cmi(rho, {0}, {1, 2}, e)
        rhs = quantum_cmi(rho, {0}, {1}, {2} | e) + quantum_cmi(rho, {0}, {2}, e)
        worst_chain = max(worst_chain, abs(lhs - rhs))
        # CMI is symmetric in J and K, so unordered pairs cover every instance
        for j, k in itertools.combinations(range(n), 2):
            rest = set(range(n)) - {j, k}
            for r in range(len(rest) + 1):
                for ee in itertools.combinations(sorted(rest), r):
                    worst_neg = min(worst_neg, quantum_cmi(rho, {j}, {k}, set(ee)))
    ok = worst_chain < 1e-8 and worst_neg >= -1e-8
    accept(10, "CMI chain rule and strong subadditivity", ok,
           f"200 states dim<=16, chain-rule max={worst_chain:.1e}, min CMI={worst_neg:.1e}")
