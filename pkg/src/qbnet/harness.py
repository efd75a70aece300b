"""Randomized property checks with reproducible per-trial seeds.

Trial ``t`` of a run with master seed ``s`` draws from a Philox generator
keyed by ``splitmix64(splitmix64(s) + t)``, so any failing trial can be
replayed alone with :func:`run_trial`.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

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
from qbnet.config import get_settings
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
from qbnet.errors import UnknownCheck
from qbnet.graph import (
    Dag,
    Independency,
    Ug,
    VariableSpace,
    build_dag,
    d_separated_dag,
    graphic_iset,
    iter_triples,
    separated,
    separated_by_paths,
    separated_ug,
)
from qbnet.independence import (
    all_encompassing_agreement,
    check_rules,
    entanglement_zero_certificate,
    evaluate_tau,
)
from qbnet.network import NetworkFile, serialize_network
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
from qbnet.tensor import amp_to_prob


@dataclass
class TrialResult:
    ok: bool | None  # None for informational trials
    metric: float
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Check:
    name: str
    description: str
    trial: Callable
    metric: str
    tolerance: float | None = None
    informational: bool = False
    defaults: dict = field(default_factory=dict)


@dataclass
class HarnessReport:
    check: str
    seed: int
    trials: int
    params: dict
    failures: list
    metrics: list
    metric: str
    tolerance: float | None
    informational: bool
    elapsed: float
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.informational or not self.failures

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


REGISTRY: dict = {}


def register(name, description, metric, tolerance=None, informational=False, **defaults):
    def deco(fn):
        REGISTRY[name] = Check(name, description, fn, metric, tolerance, informational, defaults)
        return fn

    return deco


def _net_artifact(kind: str, net) -> str:
    return serialize_network(NetworkFile("harness-trial", kind, net))


def _size(rng, params, low=2) -> int:
    return int(rng.integers(low, params["max_nodes"] + 1))


# -- graph and independence checks -------------------------------------------------


def _soundness(rng, params, classical: bool) -> TrialResult:
    n = _size(rng, params)
    dag = random_dag(rng, n, float(rng.uniform(0.2, 0.8)))
    net = random_bnet(rng, dag, real=classical)
    a = build_amplitude_from_bnet(net)
    model = amp_to_prob(a) if classical else theta_field(a)
    kind = "P" if classical else "A"
    worst, worst_i, count = 0.0, None, 0
    for t in iter_triples(n):
        if d_separated_dag(dag, t):
            count += 1
            r = evaluate_tau(kind, model, t)
            if r.value >= worst:
                worst, worst_i = r.value, t
    ok = worst < params["tol"]
    detail = {"separated_triples": count}
    if not ok:
        detail.update(net=_net_artifact("bayesian", net), independency=worst_i.format(dag.space) if worst_i else "")
    return TrialResult(ok, worst, detail)


@register("dsep-soundness", "every d-separated triple satisfies tau^A on a random Bayesian net", "max tau^A residual", 1e-8, max_nodes=5, tol=1e-8)
def _dsep_soundness(rng, params):
    return _soundness(rng, params, classical=False)


@register("dsep-soundness-classical", "every d-separated triple satisfies tau^P on a random classical net", "max tau^P residual", 1e-8, max_nodes=5, tol=1e-8)
def _dsep_soundness_classical(rng, params):
    return _soundness(rng, params, classical=True)


@register("dsep-oracle", "reachability separation equals exhaustive path blocking (DAG and UG)", "mismatches", 0.5, max_nodes=6)
def _dsep_oracle(rng, params):
    n = _size(rng, params)
    p = float(rng.uniform(0.2, 0.7))
    dag, ug = random_dag(rng, n, p), random_ug(rng, n, p)
    bad = []
    for t in iter_triples(n):
        if d_separated_dag(dag, t) != separated_by_paths(dag, t):
            bad.append(("dag", t.format(dag.space)))
        if separated_ug(ug, t) != separated_by_paths(ug, t):
            bad.append(("ug", t.format(ug.space)))
    return TrialResult(not bad, float(len(bad)), {"mismatches": bad[:5]} if bad else {})


def _relabel(rng, g):
    perm = rng.permutation(g.n)
    if isinstance(g, Dag):
        return Dag(g.space, frozenset((int(perm[a]), int(perm[b])) for a, b in g.arrows))
    return Ug(g.space, frozenset(tuple(sorted((int(perm[a]), int(perm[b])))) for a, b in g.links))


def second_graph(rng, g1, directed: bool):
    """Same graph, a random supergraph, or an unrelated random graph."""
    mode = int(rng.integers(3))
    n = g1.n
    if mode == 0:
        return g1, "same"
    if mode == 1:
        extra = {(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < 0.4}
        if directed:
            order = g1.topological_order()
            pos = {v: i for i, v in enumerate(order)}
            extra = {(a, b) if pos[a] < pos[b] else (b, a) for a, b in extra}
            return Dag(g1.space, frozenset(set(g1.arrows) | extra)), "supergraph"
        return Ug(g1.space, frozenset(set(g1.links) | extra)), "supergraph"
    p = float(rng.uniform(0.2, 0.8))
    g = random_dag(rng, n, p) if directed else random_ug(rng, n, p)
    return _relabel(rng, g), "random"


@register("dag-factorization-iff-local", "A factors according to a DAG iff tau^A holds on its local I-set", "disagreements", 0.5, max_nodes=5)
def _dag_iff_local(rng, params):
    n = _size(rng, params)
    g1 = _relabel(rng, random_dag(rng, n, float(rng.uniform(0.2, 0.8))))
    net = random_bnet(rng, g1)
    tf = theta_field(build_amplitude_from_bnet(net))
    g2, mode = second_graph(rng, g1, directed=True)
    fact = factors_according_dag(tf, g2)
    local = all(evaluate_tau("A", tf, i).holds for i in graphic_iset(g2, "loc"))
    detail = {"mode": mode, "factors": fact, "local": local}
    if fact != local:
        detail["net"] = _net_artifact("bayesian", net)
    return TrialResult(fact == local, float(fact != local), detail)


@register("markov-factorization-iff-pairwise", "positive A factors according to a UG iff tau^A holds on its pairwise I-set", "disagreements", 0.5, max_nodes=5)
def _ug_iff_pairwise(rng, params):
    n = _size(rng, params)
    g1 = random_ug(rng, n, float(rng.uniform(0.2, 0.8)))
    net = random_mnet(rng, g1, positive=True)
    tf = theta_field(build_amplitude_from_mnet(net))
    g2, mode = second_graph(rng, g1, directed=False)
    fact = factors_according_ug(tf, g2)
    pair = all(evaluate_tau("A", tf, i).holds for i in graphic_iset(g2, "pair"))
    detail = {"mode": mode, "factors": fact, "pairwise": pair}
    if fact != pair:
        detail["net"] = _net_artifact("markov", net)
    return TrialResult(fact == pair, float(fact != pair), detail)


@register("markov-pairwise-equiv", "for positive A the global, local and pairwise UG I-sets hold together", "disagreements", 0.5, max_nodes=5)
def _markov_equiv(rng, params):
    n = _size(rng, params)
    g1 = random_ug(rng, n, float(rng.uniform(0.2, 0.8)))
    net = random_mnet(rng, g1, positive=True)
    tf = theta_field(build_amplitude_from_mnet(net))
    g2, mode = second_graph(rng, g1, directed=False)
    verdicts = {kind: all(evaluate_tau("A", tf, i).holds for i in graphic_iset(g2, kind)) for kind in ("glo", "loc", "pair")}
    ok = len(set(verdicts.values())) == 1
    if mode != "random" and not verdicts["glo"]:
        ok = False
    return TrialResult(ok, float(not ok), {"mode": mode, **verdicts})


BASIC_CASES = (
    # (shape, arrows, traced nodes, conditioning set, expected)
    ("chain", [("x", "a"), ("a", "y")], (), (), False),
    ("chain", [("x", "a"), ("a", "y")], (), ("a",), True),
    ("common-cause", [("a", "x"), ("a", "y")], (), (), False),
    ("common-cause", [("a", "x"), ("a", "y")], (), ("a",), True),
    ("collider", [("x", "a"), ("y", "a")], (), (), True),
    ("collider", [("x", "a"), ("y", "a")], (), ("a",), False),
    ("collider-descendant", [("x", "b"), ("y", "b"), ("b", "a")], ("b",), (), True),
    ("collider-descendant", [("x", "b"), ("y", "b"), ("b", "a")], ("b",), ("a",), False),
)


def basic_case_trial(rng, row: int) -> dict:
    shape, arrows, _, cond, expected = BASIC_CASES[row]
    names = ["x", "a", "y"] + (["b"] if shape == "collider-descendant" else [])
    space = VariableSpace.binary(names)
    dag = build_dag(space, arrows)
    i = Independency.make({space.index["x"]}, {space.index["y"]}, {space.index[c] for c in cond})
    tf = theta_field(build_amplitude_from_bnet(random_bnet(rng, dag)))
    r = evaluate_tau("A", tf, i)
    return {"row": row + 1, "shape": shape, "expected": expected, "sep": d_separated_dag(dag, i), "tau_a": r.holds, "residual": r.value}


@register("dsep-basic-cases", "serial, divergent, collider and collider-descendant nets, with and without grounding a", "max residual on rows expected true", 1e-8, rows=8)
def _basic_cases(rng, params):
    results = [basic_case_trial(rng, row) for row in range(len(BASIC_CASES))]
    ok = all(r["sep"] == r["expected"] == r["tau_a"] for r in results)
    worst = max((r["residual"] for r in results if r["expected"]), default=0.0)
    return TrialResult(ok, worst, {"rows": results} if not ok else {})


@register("rules-P", "decomposition, weak union, contraction and intersection hold for tau^P", "violations", 0.5, max_nodes=4)
def _rules_p(rng, params):
    return _rules(rng, params, "P")


@register("rules-A", "decomposition, weak union, contraction and intersection hold for tau^A", "violations", 0.5, max_nodes=4)
def _rules_a(rng, params):
    return _rules(rng, params, "A")


def random_rule_model(rng, n: int, kind: str):
    """Strictly positive model from a sparse random net, so premises fire."""
    dag = _relabel(rng, random_dag(rng, n, float(rng.uniform(0.15, 0.6))))
    net = random_bnet(rng, dag, positive=True, real=(kind == "P"))
    a = build_amplitude_from_bnet(net)
    return (amp_to_prob(a) if kind == "P" else theta_field(a)), net


def _rules(rng, params, kind):
    model, net = random_rule_model(rng, params["max_nodes"], kind)
    rep = check_rules(kind, model)
    fired = {k: v.fired for k, v in rep.rules.items()}
    detail = {"fired": fired}
    if rep.total_violations:
        detail["violations"] = {k: v.violations[:3] for k, v in rep.rules.items() if v.violations}
        detail["net"] = _net_artifact("bayesian", net)
    return TrialResult(rep.total_violations == 0, float(rep.total_violations), detail)


@register("cmi-rules-search", "search for rule violations under tau^CMIP (reported, never asserted)", "violations found", informational=True, max_nodes=3)
def _cmi_rules(rng, params):
    dag = _relabel(rng, random_dag(rng, params["max_nodes"], float(rng.uniform(0.2, 0.6))))
    tf = theta_field(build_amplitude_from_bnet(random_bnet(rng, dag)))
    rep = check_rules("CMIP", tf)
    return TrialResult(None, float(rep.total_violations), {k: len(v.violations) for k, v in rep.rules.items()})


@register("all-encompassing-agreement", "tau^A and tau^CMIP agree on independencies covering every variable", "disagreements", 0.5, max_nodes=4)
def _agreement(rng, params):
    n = _size(rng, params)
    dag = _relabel(rng, random_dag(rng, n, float(rng.uniform(0.2, 0.8))))
    tf = theta_field(build_amplitude_from_bnet(random_bnet(rng, dag)))
    bad = 0
    for t in iter_triples(n, all_encompassing=True):
        try:
            all_encompassing_agreement(tf, t)
        except Exception:
            bad += 1
    return TrialResult(bad == 0, float(bad))


@register("tau-cmi-implies-cmip", "vanishing CMI implies vanishing CMI after diagonalizing E (10x margin)", "violations", 0.5, max_nodes=4)
def _cmi_implies(rng, params):
    n = _size(rng, params, low=3)
    dag = _relabel(rng, random_dag(rng, n, float(rng.uniform(0.2, 0.7))))
    tf = theta_field(build_amplitude_from_bnet(random_bnet(rng, dag)))
    tol = get_settings().cmi_tol
    bad = 0
    for t in iter_triples(n):
        c = evaluate_tau("CMI", tf, t)
        if c.value < tol and evaluate_tau("CMIP", tf, t).value >= 10 * tol:
            bad += 1
    return TrialResult(bad == 0, float(bad))


@register("entanglement-certificates", "certified pairs have a vanishing CMI bound and decompose consistently", "max bound on certified pairs", 1e-8, max_nodes=4)
def _certificates(rng, params):
    n = _size(rng, params, low=3)
    dag = _relabel(rng, random_dag(rng, n, float(rng.uniform(0.2, 0.7))))
    net = random_bnet(rng, dag)
    worst, certified = 0.0, {}
    for t in iter_triples(n, all_encompassing=True):
        c = entanglement_zero_certificate(net, t.j, t.k)
        certified[(t.j, t.k)] = c.certified_zero
        if c.certified_zero:
            worst = max(worst, c.upper_bound)
    ok = worst < params.get("tol", 1e-8) and decomposition_consistent(dag, n)
    return TrialResult(ok, worst)


def decomposition_consistent(graph, n: int) -> bool:
    """``(J, K1 ∪ K2)`` certified iff ``(J, K1)`` and ``(J, K2)`` both are."""
    everyone = frozenset(range(n))

    def cert(j, k):
        return separated(graph, Independency.make(j, k, everyone - j - k))

    for assign in itertools.product(range(4), repeat=n):
        j = frozenset(v for v, a in enumerate(assign) if a == 1)
        k1 = frozenset(v for v, a in enumerate(assign) if a == 2)
        k2 = frozenset(v for v, a in enumerate(assign) if a == 3)
        if not j or not k1 or not k2:
            continue
        if cert(j, k1 | k2) != (cert(j, k1) and cert(j, k2)):
            return False
    return True


# -- amplitude checks ---------------------------------------------------------------


@register("chain-rule", "product of chain-rule factors reproduces a random nonzero amplitude", "max residual", 1e-8, max_nodes=4)
def _chain(rng, params):
    n = _size(rng, params, low=1)
    tf = theta_field(random_amplitude(rng, VariableSpace.binary([f"x{i + 1}" for i in range(n)])))
    order = [int(v) for v in rng.permutation(n)]
    res = float(np.max(np.abs(factor_product(tf.scope, chain_factorize(tf, order)) - tf.amplitude())))
    return TrialResult(res < 1e-8, res, {"order": order})


@register("powerset-rule", "product of exp(lambda) reproduces A; Mobius round trip is exact", "max residual", 1e-8, max_nodes=4)
def _powerset(rng, params):
    n = _size(rng, params, low=1)
    tf = theta_field(random_amplitude(rng, VariableSpace.binary([f"x{i + 1}" for i in range(n)])))
    res = float(np.max(np.abs(powerset_lambda(tf).product() - tf.amplitude())))
    f = {frozenset(s): complex(*rng.normal(size=2)) for r in range(n + 1) for s in itertools.combinations(range(n), r)}
    back = mobius_forward(mobius_invert(f))
    rt = max(abs(back[k] - f[k]) for k in f)
    return TrialResult(res < 1e-8 and rt < 1e-12, max(res, rt))


# -- density checks -----------------------------------------------------------------


@register("purify-roundtrip", "tracing out the purifying node rebuilds a random density matrix", "max residual", 1e-9, max_dim=8)
def _purify(rng, params):
    space = random_space(rng, params["max_dim"])
    rho = random_density(rng, space, rank=int(rng.integers(1, int(np.prod(space.cards)) + 1)))
    p = purify(rho)
    res = float(np.max(np.abs(p.rebuild() - rho.matrix)))
    return TrialResult(res < 1e-9, res, {"dims": list(space.cards)})


@register("schmidt", "Schmidt decomposition reconstructs a random bipartite amplitude", "max residual", 1e-9, max_dim=12)
def _schmidt(rng, params):
    space = random_space(rng, params["max_dim"])
    a = random_amplitude(rng, space, positive=False)
    n = len(space)
    cut = int(rng.integers(1, n)) if n > 1 else 1
    if n == 1:
        space = VariableSpace.with_cards(list(space.cards) + [2])
        a = random_amplitude(rng, space, positive=False)
        n = 2
    g1, g2 = range(cut), range(cut, n)
    s = schmidt(a, g1, g2)
    m = a.values.reshape(int(np.prod(space.cards[:cut])), -1)
    res = float(np.max(np.abs(s.matrix() - m)))
    return TrialResult(res < 1e-9, res)


@register("superop-identity", "entry-sum after diag equals the partial trace", "max residual", 1e-12, max_dim=16)
def _superop(rng, params):
    space = random_space(rng, params["max_dim"])
    rho = random_density(rng, space)
    n = len(space)
    target = [v for v in range(n) if rng.random() < 0.5] or [0]
    lhs = superop(superop(rho, "diag", target), "entry_sum", target)
    rhs = superop(rho, "trace", target)
    res = abs(lhs - rhs) if isinstance(lhs, complex) else float(np.max(np.abs(lhs.matrix - rhs.matrix)))
    return TrialResult(res < 1e-12, float(res))


def random_plan(rng, n: int) -> MeasurementPlan:
    labels = rng.integers(0, 3, size=n)
    labels[int(rng.integers(n))] = 0
    vis = {v for v in range(n) if labels[v] == 0}
    return MeasurementPlan(vis, {v for v in range(n) if labels[v] == 1}, {v for v in range(n) if labels[v] == 2})


@register("measurement-paths", "super-operator and projector routes give the same measurement distribution", "max residual", 1e-9, max_dim=32)
def _measurement(rng, params):
    space = random_space(rng, params["max_dim"], max_vars=5)
    a = random_amplitude(rng, space, positive=False)
    plan = random_plan(rng, len(space))
    res = float(np.max(np.abs(measurement_distribution(a, plan).values - projector_distribution(a, plan).values)))
    return TrialResult(res < 1e-9, res)


@register("dephasing", "random-phase dephasing approaches diag", "max off-diagonal error", 0.02, samples=100000)
def _dephasing(rng, params):
    space = VariableSpace.binary(["x", "y"])
    rho = meta_density(random_amplitude(rng, space, positive=False))
    seed = int(rng.integers(2**63))
    out = random_phase_dephase(rho, {0}, params["samples"], seed)
    res = float(np.max(np.abs(out.matrix - superop(rho, "diag", {0}).matrix)))
    return TrialResult(res < 0.02, res)


@register("cmi-chain-ssa", "CMI chain rule holds and CMI is nonnegative on random states", "max chain-rule residual", 1e-8, max_dim=16)
def _cmi_chain(rng, params):
    space = VariableSpace.binary(["x", "y1", "y2", "e"][: int(rng.integers(3, 5))])
    while int(np.prod(space.cards)) > params["max_dim"]:
        space = VariableSpace.binary(space.names[:-1])
    rho = random_density(rng, space, rank=int(rng.integers(1, int(np.prod(space.cards)) + 1)))
    e = {3} if len(space) == 4 else set()
    lhs = quantum_cmi(rho, {0}, {1, 2}, e)
    rhs = quantum_cmi(rho, {0}, {1}, {2} | e) + quantum_cmi(rho, {0}, {2}, e)
    res = abs(lhs - rhs)
    return TrialResult(res < 1e-8 and min(lhs, rhs) >= -1e-8, res)


# -- driver ---------------------------------------------------------------------------


def checks() -> list:
    return sorted(REGISTRY)


def _params(check: Check, params: dict | None) -> dict:
    out = dict(check.defaults)
    out.setdefault("tol", check.tolerance if check.tolerance is not None else 0.0)
    for k, v in (params or {}).items():
        if v is not None:
            out[k] = v
    return out


def run_trial(name: str, seed: int, trial: int, params: dict | None = None) -> TrialResult:
    if name not in REGISTRY:
        raise UnknownCheck(f"unknown check {name!r}; choose from {', '.join(checks())}")
    check = REGISTRY[name]
    return check.trial(rng_for(trial_seed(seed, trial)), _params(check, params))


def _run_one(args):
    name, seed, trial, params = args
    return run_trial(name, seed, trial, params)


def run_harness(name: str, trials: int = 20, seed: int = 0, params: dict | None = None, workers: int = 1) -> HarnessReport:
    """Run ``trials`` seeded trials of a registered check."""
    if name not in REGISTRY:
        raise UnknownCheck(f"unknown check {name!r}; choose from {', '.join(checks())}")
    check = REGISTRY[name]
    full = _params(check, params)
    start = time.perf_counter()
    jobs = [(name, seed, t, params) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    failures = []
    for t, r in enumerate(results):
        if r.ok is False:
            failures.append({"trial": t, "seed": trial_seed(seed, t), "metric": r.metric, **r.detail})
    notes = {}
    if check.informational:
        notes["total"] = float(sum(r.metric for r in results))
    return HarnessReport(
        check=name,
        seed=seed,
        trials=trials,
        params=full,
        failures=failures,
        metrics=[float(r.metric) for r in results],
        metric=check.metric,
        tolerance=check.tolerance,
        informational=check.informational,
        elapsed=time.perf_counter() - start,
        notes=notes,
    )
