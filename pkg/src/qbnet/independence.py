"""Four truth functions for conditional independence and what hangs off them.

``P`` and ``A`` compare conditional products entry by entry; ``CMI`` and
``CMIP`` threshold a quantum conditional mutual information, the latter after
diagonalizing the conditioning variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from qbnet.amplitudes import (
    BayesNet,
    ThetaField,
    amp_zero_threshold,
    build_amplitude_from_bnet,
    build_amplitude_from_mnet,
    replace_diag_with_traced_node,
)
from qbnet.config import get_settings
from qbnet.density import quantum_cmi_detail, reduced_density, superop
from qbnet.errors import (
    GraphTooLargeForGlobalEnumeration,
    IndeterminateResult,
    NotAllEncompassing,
    ScopeMismatch,
    SetsNotDisjoint,
    ToleranceInconsistency,
    ZeroDenominator,
)
from qbnet.graph import Independency, ISet, Ug, iter_triples, moral_graph, separated
from qbnet.tensor import AmplitudeTensor, ProbTensor, expand

TAU_KINDS = ("P", "A", "CMI", "CMIP")
RULES = ("decomposition", "weak_union", "contraction", "intersection")


@dataclass(frozen=True)
class TauResult:
    kind: str
    independency: Independency
    holds: bool
    value: float  # max residual (P, A) or CMI in nats
    skipped: int = 0  # zero-mass conditioning points ignored
    indeterminate: bool = False


def _as_independency(i) -> Independency:
    if isinstance(i, Independency):
        return i
    j, k, *e = i
    return Independency.make(j, k, e[0] if e else ())


def _factor_residual(jk_e, j_e, k_e, small) -> float:
    diff = np.abs(jk_e - j_e * k_e)
    diff = np.where(small, 0.0, diff)
    return float(diff.max()) if diff.size else 0.0


def _tau_p(p: ProbTensor, i: Independency) -> tuple:
    nodes = tuple(sorted(i.nodes))
    axes = tuple(a for a, v in enumerate(p.scope) if v not in i.nodes)
    pjke = p.values.sum(axis=axes) if axes else p.values

    def marg(sub):
        sub = tuple(sorted(sub))
        drop = tuple(a for a, v in enumerate(nodes) if v not in sub)
        return expand(pjke.sum(axis=drop) if drop else pjke, sub, nodes)

    pe = marg(i.e)
    small = np.broadcast_to(pe <= get_settings().zero_tol, pjke.shape)
    den = np.where(pe <= get_settings().zero_tol, 1.0, pe)
    res = _factor_residual(pjke / den, marg(i.j | i.e) / den, marg(i.k | i.e) / den, small)
    skipped = int(np.sum(pe <= get_settings().zero_tol))
    return res, skipped


def _tau_a(tf: ThetaField, i: Independency) -> tuple:
    nodes = tuple(sorted(i.nodes))
    jk, small = tf.conditional(i.j | i.k, i.e)
    j, _ = tf.conditional(i.j, i.e)
    k, _ = tf.conditional(i.k, i.e)
    j = expand(j, tuple(sorted(i.j | i.e)), nodes)
    k = expand(k, tuple(sorted(i.k | i.e)), nodes)
    res = _factor_residual(jk, j, k, small)
    e_small = tf.marginal(i.e) if i.e else np.array(1.0)
    skipped = int(np.sum(np.abs(e_small) <= amp_zero_threshold()))
    return res, skipped


def cmi_value(tf: ThetaField, i: Independency, diag_e: bool) -> float:
    rho = reduced_density(tf.base.normalize(), i.nodes)
    if diag_e and i.e:
        rho = superop(rho, "diag", i.e)
    return quantum_cmi_detail(rho, i.j, i.k, i.e).value


def evaluate_tau(kind: str, model, i, tol: float | None = None) -> TauResult:
    """Evaluate one truth function and report the underlying number."""
    if kind not in TAU_KINDS:
        raise ValueError(f"unknown tau kind {kind!r}")
    i = _as_independency(i)
    s = get_settings()
    if kind == "P":
        if not isinstance(model, ProbTensor):
            raise TypeError("tau^P needs a ProbTensor")
        i.check_range(len(model.space))
        res, skipped = _tau_p(model, i)
        tol = s.factor_tol if tol is None else tol
        return TauResult(kind, i, res < tol, res, skipped)
    if not isinstance(model, ThetaField):
        raise TypeError(f"tau^{kind} needs a ThetaField")
    i.check_range(len(model.space))
    if kind == "A":
        res, skipped = _tau_a(model, i)
        tol = s.factor_tol if tol is None else tol
        return TauResult(kind, i, res < tol, res, skipped)
    value = cmi_value(model, i, diag_e=(kind == "CMIP"))
    low = s.cmi_tol if tol is None else tol
    high = max(s.cmi_band, low) if tol is None else 10 * tol
    if low <= value <= high:
        return TauResult(kind, i, False, value, 0, indeterminate=True)
    return TauResult(kind, i, value < low, value)


def tau(kind: str, model, i, tol: float | None = None) -> bool:
    """Truth value; CMI values inside the hysteresis band raise :class:`IndeterminateResult`."""
    r = evaluate_tau(kind, model, i, tol)
    if r.indeterminate:
        s = get_settings()
        raise IndeterminateResult(r.value, s.cmi_tol if tol is None else tol, s.cmi_band if tol is None else 10 * tol)
    return r.holds


def _n_vars(model) -> int:
    return len(model.space)


def prob_iset(kind: str, model, tol: float | None = None, limit: int | None = None) -> ISet:
    """Every triple for which ``tau^kind`` holds (kinds ``P`` and ``A``)."""
    if kind not in ("P", "A"):
        raise ValueError("probabilistic I-sets are defined for kinds P and A")
    n = _n_vars(model)
    limit = get_settings().enum_limit if limit is None else limit
    if n > limit:
        raise GraphTooLargeForGlobalEnumeration(f"{n} variables exceeds enumeration limit {limit}")
    return ISet(t for t in iter_triples(n) if evaluate_tau(kind, model, t, tol).holds)


# -- reduction and combination rules ----------------------------------------


@dataclass
class RuleOutcome:
    checked: int = 0
    fired: int = 0
    violations: list = field(default_factory=list)
    skipped: bool = False
    note: str = ""


@dataclass
class RulesReport:
    kind: str
    rules: dict
    informational: bool
    indeterminate: int = 0

    @property
    def total_violations(self) -> int:
        return sum(len(r.violations) for r in self.rules.values())


def _model_has_zeros(model) -> bool:
    if isinstance(model, ProbTensor):
        return bool(np.any(model.values <= get_settings().zero_tol))
    return model.has_zeros


def check_rules(kind: str, model, tol: float | None = None, limit: int | None = None) -> RulesReport:
    """Test decomposition, weak union, contraction and intersection exhaustively.

    Every instantiation with nonempty ``x, y1, y2`` and any disjoint ``e`` is
    visited. Intersection is skipped when the model has zeros. For the CMI
    kinds the report only records what was found.
    """
    n = _n_vars(model)
    limit = get_settings().enum_limit if limit is None else limit
    if n > limit:
        raise GraphTooLargeForGlobalEnumeration(f"{n} variables exceeds enumeration limit {limit}")
    cache: dict = {}
    indeterminate = 0

    def t(j, k, e) -> bool:
        nonlocal indeterminate
        key = Independency.make(j, k, e)
        if key not in cache:
            r = evaluate_tau(kind, model, key, tol)
            indeterminate += r.indeterminate
            cache[key] = r.holds
        return cache[key]

    zeros = _model_has_zeros(model)
    out = {name: RuleOutcome() for name in RULES}
    if zeros:
        out["intersection"].skipped = True
        out["intersection"].note = "model has zeros; premise unmet"
    for assign in itertools.product(range(5), repeat=n):
        x = frozenset(v for v, a in enumerate(assign) if a == 1)
        y1 = frozenset(v for v, a in enumerate(assign) if a == 2)
        y2 = frozenset(v for v, a in enumerate(assign) if a == 3)
        e = frozenset(v for v, a in enumerate(assign) if a == 4)
        if not x or not y1 or not y2:
            continue
        inst = {"x": sorted(x), "y1": sorted(y1), "y2": sorted(y2), "e": sorted(e)}
        both = t(x, y1 | y2, e)
        checks = [
            ("decomposition", both, lambda: t(x, y2, e)),
            ("weak_union", both, lambda: t(x, y1, y2 | e)),
            ("contraction", None, lambda: t(x, y1 | y2, e)),
            ("intersection", None, lambda: t(x, y1 | y2, e)),
        ]
        for name, premise, conclusion in checks:
            rule = out[name]
            if rule.skipped:
                continue
            if name == "contraction":
                premise = t(x, y1, y2 | e) and t(x, y2, e)
            elif name == "intersection":
                premise = t(x, y1, y2 | e) and t(x, y2, y1 | e)
            rule.checked += 1
            if premise:
                rule.fired += 1
                if not conclusion():
                    rule.violations.append(inst)
    return RulesReport(kind, out, informational=kind in ("CMI", "CMIP"), indeterminate=indeterminate)


def all_encompassing_agreement(tf: ThetaField, i, tol: float | None = None) -> tuple:
    """``(tau^A, tau^CMIP)`` for an independency covering every variable.

    The two must agree; a mismatch raises :class:`ToleranceInconsistency`.
    """
    i = _as_independency(i)
    if not i.is_all_encompassing(len(tf.space)):
        raise NotAllEncompassing(f"{i} does not cover all {len(tf.space)} variables")
    a = evaluate_tau("A", tf, i, tol)
    c = evaluate_tau("CMIP", tf, i, tol)
    if c.indeterminate or a.holds != c.holds:
        raise ToleranceInconsistency(
            f"tau^A={a.holds} (residual {a.value:.3e}) but tau^CMIP={c.holds} (CMI {c.value:.3e}) for {i}"
        )
    return a.holds, c.holds


# -- entanglement certificates ------------------------------------------------

VISIBLE_MARKERS = ("visible_pre", "visible_post")
MARKERS = VISIBLE_MARKERS + ("asum", "psum", "entry", "entry_sum", "trace", "diag")


def canonical_marker(marker: str) -> tuple:
    """``(kind, state)`` with ``asum``/``psum`` folded into entry-sum/trace."""
    kind, _, state = marker.partition(":")
    if kind not in MARKERS:
        raise ValueError(f"unknown node marker {marker!r}")
    kind = {"asum": "entry_sum", "psum": "trace"}.get(kind, kind)
    return kind, (state or None)


@dataclass(frozen=True)
class Certificate:
    certified_zero: bool
    witness: frozenset | None
    upper_bound: float
    net: object = field(repr=False, default=None)
    eliminated: tuple = ()


def _eliminate(links: set, nodes: set, v: int) -> None:
    nbrs = sorted({b for a, b in links if a == v} | {a for a, b in links if b == v})
    links -= {l for l in list(links) if v in l}
    for a, b in itertools.combinations(nbrs, 2):
        links.add((min(a, b), max(a, b)))
    nodes.discard(v)


def entanglement_zero_certificate(net, j, k, markers: Mapping[int, str] | None = None, tol: float | None = None) -> Certificate:
    """Certify ``E^CMI(J:K) = 0`` from the graph and report ``½ S_{diag_E μ}(J:K|E)``.

    ``diag`` markers are first traded for traced copy nodes. Without entry or
    entry-sum markers the certificate is separation of ``J`` and ``K`` given
    every other node. Otherwise it is separation in the moral graph after
    deleting entry nodes and eliminating entry-summed ones.
    """
    j, k = frozenset(j), frozenset(k)
    if not j or not k or j & k:
        raise SetsNotDisjoint("J and K must be nonempty and disjoint")
    markers = {int(n): canonical_marker(m) for n, m in (markers or {}).items()}
    for node, (kind, _) in list(markers.items()):
        if kind == "diag":
            net, new = replace_diag_with_traced_node(net, node)
            markers.pop(node)
            if new is not None:
                markers[new] = ("trace", None)
    special = {n for n, (kind, _) in markers.items() if kind in ("entry", "entry_sum", "trace")}
    if (j | k) & special:
        raise SetsNotDisjoint("J and K must be visible nodes")
    space = net.space
    n = len(space)
    everyone = set(range(n))
    if not (j | k) <= everyone:
        raise ScopeMismatch("J and K must be nodes of the net")
    entry = {v: s for v, (kind, s) in markers.items() if kind == "entry"}
    esum = sorted(v for v, (kind, _) in markers.items() if kind == "entry_sum")

    graph = net.dag if isinstance(net, BayesNet) else net.ug
    if not entry and not esum:
        witness = frozenset(everyone - j - k)
        certified = separated(graph, Independency.make(j, k, witness))
    else:
        ug = moral_graph(graph) if isinstance(net, BayesNet) else graph
        links, nodes = set(ug.links), set(everyone)
        for v in entry:
            links -= {l for l in list(links) if v in l}
            nodes.discard(v)
        for v in esum:
            _eliminate(links, nodes, v)
        witness = frozenset(nodes - j - k)
        certified = separated(Ug(space, frozenset(links)), Independency.make(j, k, witness))

    a = build_amplitude_from_bnet(net) if isinstance(net, BayesNet) else build_amplitude_from_mnet(net)
    values = a.values
    index = []
    for pos in range(n):
        if pos in entry:
            index.append(space.state_index(pos, entry[pos]) if entry[pos] is not None else 0)
        else:
            index.append(slice(None))
    values = values[tuple(index)]
    kept = [v for v in range(n) if v not in entry]
    sum_axes = tuple(kept.index(v) for v in esum)
    if sum_axes:
        values = values.sum(axis=sum_axes)
    kept = tuple(v for v in kept if v not in esum)
    norm = np.sqrt(np.sum(np.abs(values) ** 2))
    if norm <= get_settings().zero_tol:
        raise ZeroDenominator("the marked state has zero norm")
    state = AmplitudeTensor(space, kept, values / norm)
    e = frozenset(kept) - j - k
    rho = reduced_density(state, kept)
    if e:
        rho = superop(rho, "diag", e)
    bound = 0.5 * quantum_cmi_detail(rho, j, k, e).value
    tol = get_settings().cmi_tol if tol is None else tol
    if certified and bound >= tol:
        raise ToleranceInconsistency(f"certified pair has CMI upper bound {bound:.3e}")
    return Certificate(certified, witness if certified else None, bound, net, tuple(esum))


def certified_pairs(graph) -> set:
    """All canonical ``(J, K)`` certified from the graph alone (no markers)."""
    out = set()
    for t in iter_triples(graph.n, all_encompassing=True):
        if separated(graph, t):
            out.add((t.j, t.k))
    return out
