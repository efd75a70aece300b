"""Phases, conditional amplitudes, chain and power-set rules, and nets.

Phases are anchored at a reference assignment: ``θ(x.)`` is the phase of
``A(x.)`` relative to ``A(x°)``. Marginal amplitudes on a subset ``J`` use the
phase at ``(x_J, x°_{J^c})`` together with the marginal probability, and
conditional amplitudes are ratios of marginals.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from qbnet.config import get_settings
from qbnet.errors import (
    AllZeroAffinityProduct,
    GroundSetTooLarge,
    ScopeMismatch,
    SetsNotDisjoint,
    UnnormalizedNodeTable,
    ValidationError,
    ZeroAmplitudeStrictMode,
    ZeroConditionMass,
    ZeroReferenceAmplitude,
)
from qbnet.graph import Dag, Ug, VariableSpace, super_cliques
from qbnet.tensor import AmplitudeTensor, expand

MOBIUS_LIMIT = 20


def wrap_phase(x):
    """Map angles into ``(-π, π]``."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)


def amp_zero_threshold() -> float:
    return max(10 * get_settings().eps, 1e-12)


@dataclass(frozen=True)
class ThetaField:
    """Reference-anchored phases and probabilities of an amplitude.

    ``fallback`` records that the default reference was unusable and the
    lexicographically smallest nonzero assignment was taken instead;
    ``absolute`` that phases are the raw phases of ``A`` (reference amplitude
    zero, anchored by declaration only).
    """

    base: AmplitudeTensor
    reference: tuple
    theta: np.ndarray = field(repr=False)
    prob: np.ndarray = field(repr=False)
    zero: np.ndarray = field(repr=False)
    fallback: bool = False
    absolute: bool = False

    @property
    def space(self) -> VariableSpace:
        return self.base.space

    @property
    def scope(self) -> tuple:
        return self.base.scope

    @property
    def has_zeros(self) -> bool:
        return bool(self.zero.any())

    @classmethod
    def from_polar(cls, space, prob, theta, reference=None, zero_reference="error") -> "ThetaField":
        """Field of ``√P e^{iθ}`` given over the whole space."""
        amp = np.sqrt(np.asarray(prob, dtype=float)) * np.exp(1j * np.asarray(theta, dtype=float))
        return theta_field(AmplitudeTensor.full(space, amp), reference, zero_reference)

    def amplitude(self) -> np.ndarray:
        """``e^{iθ} √P`` over the full scope (equals ``A`` up to a global phase)."""
        return np.exp(1j * self.theta) * np.sqrt(self.prob)

    def _axes(self, nodes: Iterable[int]) -> tuple:
        nodes = frozenset(nodes)
        if not nodes <= set(self.scope):
            raise ScopeMismatch(f"variables {sorted(nodes - set(self.scope))} outside scope")
        return tuple(sorted(nodes))

    def marginal(self, nodes: Iterable[int]) -> np.ndarray:
        """``A(x_J)`` as an array over ``J`` (ascending)."""
        nodes = self._axes(nodes)
        sum_axes = tuple(p for p, i in enumerate(self.scope) if i not in nodes)
        p = self.prob.sum(axis=sum_axes)
        index = tuple(slice(None) if i in nodes else self.reference[pos] for pos, i in enumerate(self.scope))
        return np.exp(1j * self.theta[index]) * np.sqrt(p)

    def conditional(self, j1: Iterable[int], j2: Iterable[int]) -> tuple:
        """``A(x_J1 | x_J2)`` over ``J1 ∪ J2`` and the mask of zero-mass conditions."""
        j1, j2 = frozenset(j1), frozenset(j2)
        if j1 & j2:
            raise SetsNotDisjoint("J1 and J2 must be disjoint")
        both = self._axes(j1 | j2)
        num = self.marginal(both)
        den = expand(self.marginal(j2), self._axes(j2), both)
        small = np.abs(den) <= amp_zero_threshold()
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(small, 0.0, num / np.where(small, 1.0, den))
        return out, np.broadcast_to(small, out.shape)


def _all_first(scope: tuple) -> tuple:
    return tuple(0 for _ in scope)


def theta_field(
    a: AmplitudeTensor,
    reference: Mapping[int, int] | Sequence[int] | None = None,
    zero_reference: str = "error",
) -> ThetaField:
    """Phase field of ``a``.

    With no ``reference`` the all-first-states assignment is used, falling
    back to the lexicographically smallest nonzero assignment. An explicit
    reference with zero amplitude raises :class:`ZeroReferenceAmplitude`
    unless ``zero_reference="absolute"``, in which case raw phases are kept.
    """
    values = a.values
    mag = np.abs(values)
    thr = amp_zero_threshold()
    zero = mag <= thr
    if zero.all():
        raise ZeroReferenceAmplitude("amplitude vanishes everywhere")
    fallback = absolute = False
    if reference is None:
        ref = _all_first(a.scope)
        if zero[ref]:
            ref = tuple(int(v) for v in np.argwhere(~zero)[0])
            fallback = True
    else:
        if isinstance(reference, Mapping):
            ref = tuple(int(reference[i]) for i in a.scope)
        else:
            ref = tuple(int(v) for v in reference)
        if len(ref) != len(a.scope) or any(not 0 <= v < n for v, n in zip(ref, values.shape)):
            raise ScopeMismatch("reference must assign a valid state to every variable")
        if zero[ref]:
            if zero_reference != "absolute":
                raise ZeroReferenceAmplitude(f"A vanishes at reference {ref}")
            absolute = True
    if absolute:
        theta = np.where(zero, 0.0, wrap_phase(np.angle(values)))
    else:
        theta = np.where(zero, 0.0, wrap_phase(np.angle(values) - np.angle(values[ref])))
    prob = mag**2
    for arr in (theta, prob, zero):
        arr.setflags(write=False)
    return ThetaField(a, ref, theta, prob, zero, fallback, absolute)


def conditional_amplitude(tf: ThetaField, j1, j2, x: Mapping[int, int]) -> complex:
    table, small = tf.conditional(j1, j2)
    nodes = tuple(sorted(set(j1) | set(j2)))
    index = tuple(x[i] for i in nodes)
    if small[index]:
        if get_settings().eps > 0:
            return 0j
        raise ZeroConditionMass(f"A(x_J2) vanishes at {dict(zip(nodes, index))}")
    return complex(table[index])


# -- chain rule ------------------------------------------------------------


@dataclass(frozen=True)
class ChainFactor:
    node: int
    given: tuple
    table: np.ndarray = field(repr=False)  # over sorted(given + (node,))

    @property
    def nodes(self) -> tuple:
        return tuple(sorted(self.given + (self.node,)))


def _require_nonzero(tf: ThetaField) -> None:
    if tf.has_zeros and get_settings().eps <= 0:
        raise ZeroAmplitudeStrictMode("amplitude has zeros; enable eps-mode to proceed")


def chain_factorize(tf: ThetaField, order: Sequence[int] | None = None) -> list:
    """Factors ``A(x_j | x_{predecessors})`` along ``order``."""
    _require_nonzero(tf)
    order = list(tf.scope if order is None else order)
    if sorted(order) != list(tf.scope):
        raise ScopeMismatch("order must be a permutation of the scope")
    factors = []
    for pos, j in enumerate(order):
        given = tuple(order[:pos])
        table, _ = tf.conditional({j}, given)
        factors.append(ChainFactor(j, given, table))
    return factors


def factor_product(scope: tuple, factors: Iterable) -> np.ndarray:
    out = np.ones(tuple(1 for _ in scope), dtype=complex)
    for f in factors:
        out = out * expand(f.table, f.nodes, scope)
    return out


def chain_dof(cards: Sequence[int], order: Sequence[int]) -> list:
    """Free complex slots per factor: ``(N_j - 1) × Π N_pred``."""
    out = []
    for pos, j in enumerate(order):
        out.append((cards[j] - 1) * int(np.prod([cards[i] for i in order[:pos]], dtype=np.int64)))
    return out


# -- Möbius inversion and the power-set rule --------------------------------


def _ground(f: Mapping[frozenset, object]) -> tuple:
    ground = tuple(sorted(set().union(*f.keys()))) if f else ()
    if len(ground) > MOBIUS_LIMIT:
        raise GroundSetTooLarge(f"ground set of {len(ground)} elements exceeds {MOBIUS_LIMIT}")
    if len(f) != 1 << len(ground):
        raise ValueError("function must be given on every subset of the ground set")
    return ground


def _transform(f: Mapping[frozenset, object], sign: int) -> dict:
    ground = _ground(f)
    n = len(ground)
    masks = [None] * (1 << n)
    for key, val in f.items():
        m = sum(1 << ground.index(i) for i in key)
        masks[m] = val
    for b in range(n):
        bit = 1 << b
        for m in range(1 << n):
            if m & bit:
                masks[m] = masks[m] + sign * masks[m ^ bit]
    return {frozenset(ground[b] for b in range(n) if m >> b & 1): masks[m] for m in range(1 << n)}


def mobius_invert(f: Mapping[frozenset, object]) -> dict:
    """``g(J) = Σ_{J'⊆J} (-1)^{|J-J'|} f(J')``; values may be numbers or arrays."""
    return _transform(f, -1)


def mobius_forward(g: Mapping[frozenset, object]) -> dict:
    """``f(J) = Σ_{J'⊆J} g(J')``."""
    return _transform(g, +1)


@dataclass(frozen=True)
class LambdaTable:
    """``λ(x_J)`` for every subset ``J``; arrays broadcast over the full scope."""

    scope: tuple
    tables: dict = field(repr=False)

    def table(self, nodes: Iterable[int]) -> np.ndarray:
        nodes = frozenset(nodes)
        axes = tuple(p for p, i in enumerate(self.scope) if i not in nodes)
        return np.squeeze(self.tables[nodes], axis=axes) if axes else self.tables[nodes]

    def log_amplitude(self) -> np.ndarray:
        total = 0
        for t in self.tables.values():
            total = total + t
        return total

    def product(self) -> np.ndarray:
        """``Π_J e^{λ(x_J)}`` evaluated factor by factor."""
        out = 1
        for t in self.tables.values():
            out = out * np.exp(t)
        return out


def log_amplitude(tf: ThetaField) -> np.ndarray:
    """``ln|A| + iθ`` with the phase taken from the field."""
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(tf.prob) + 1j * tf.theta


def powerset_lambda(tf: ThetaField) -> LambdaTable:
    """Alternating sums of ``ln A(x_J', x°_{J'^c})`` over ``J' ⊆ J``."""
    _require_nonzero(tf)
    s = get_settings()
    prob = np.where(tf.zero, s.eps**2, tf.prob) if tf.has_zeros else tf.prob
    with np.errstate(divide="ignore"):
        logs = 0.5 * np.log(prob) + 1j * tf.theta
    f = {}
    for r in range(len(tf.scope) + 1):
        for sub in itertools.combinations(tf.scope, r):
            index = tuple(slice(None) if i in sub else slice(tf.reference[p], tf.reference[p] + 1) for p, i in enumerate(tf.scope))
            f[frozenset(sub)] = logs[index]
    return LambdaTable(tf.scope, mobius_invert(f))


def vanishes_mod_2pi(values: np.ndarray, tol: float) -> bool:
    v = np.asarray(values)
    if not np.all(np.isfinite(v.real)):
        return False
    im = wrap_phase(v.imag)
    return bool(np.all(np.abs(v.real) < tol) and np.all(np.abs(im) < tol))


def _close(x: np.ndarray, y: np.ndarray) -> bool:
    s = get_settings()
    return bool(np.all(np.abs(x - y) <= s.rel_tol * np.abs(y) + s.abs_tol))


def factors_according_dag(tf: ThetaField, g: Dag, tol: float | None = None) -> bool:
    """Does ``Π_j A(x_j | x_pa(j))`` reproduce the amplitude?"""
    if g.n != len(tf.scope):
        raise ScopeMismatch("graph and amplitude have different variable counts")
    factors = []
    for j in range(g.n):
        table, _ = tf.conditional({j}, g.pa(j))
        factors.append(ChainFactor(j, tuple(sorted(g.pa(j))), table))
    prod = factor_product(tf.scope, factors)
    target = tf.amplitude()
    if tol is None:
        return _close(prod, target)
    return bool(np.max(np.abs(prod - target)) < tol)


def factors_according_ug(tf: ThetaField, g: Ug, tol: float | None = None) -> bool:
    """λ vanishes (mod 2πi) on every subset not inside a super-clique."""
    if g.n != len(tf.scope):
        raise ScopeMismatch("graph and amplitude have different variable counts")
    tol = get_settings().factor_tol if tol is None else tol
    cliques = super_cliques(g)
    lam = powerset_lambda(tf)
    for nodes, table in lam.tables.items():
        if any(nodes <= c for c in cliques):
            continue
        if not vanishes_mod_2pi(table, tol):
            return False
    return True


# -- nets ------------------------------------------------------------------


@dataclass(frozen=True)
class BayesNet:
    """DAG with node tables ``tables[j]`` of shape ``(N_j, *N_pa)``, parents ascending."""

    dag: Dag
    tables: dict = field(repr=False)

    def __post_init__(self):
        space = self.dag.space
        tables = {}
        for j in range(self.dag.n):
            if j not in self.tables:
                raise ValidationError(f"tables.{space.name(j)}", "missing node table")
            shape = (space.cards[j],) + tuple(space.cards[p] for p in sorted(self.dag.pa(j)))
            t = np.asarray(self.tables[j], dtype=complex)
            if t.shape != shape:
                raise ValidationError(f"tables.{space.name(j)}", f"shape {t.shape}, expected {shape}")
            t.setflags(write=False)
            tables[j] = t
        object.__setattr__(self, "tables", tables)

    @property
    def space(self) -> VariableSpace:
        return self.dag.space

    def check_tables(self, tol: float | None = None) -> None:
        tol = get_settings().norm_tol if tol is None else tol
        for j, t in self.tables.items():
            norms = np.sum(np.abs(t) ** 2, axis=0)
            bad = np.abs(norms - 1) > tol
            if np.any(bad):
                where = tuple(int(v) for v in np.argwhere(bad)[0])
                raise UnnormalizedNodeTable(
                    f"node {self.space.name(j)}: column {where} has squared norm {norms[where]:.12f}"
                )


@dataclass(frozen=True)
class MarkovNet:
    """UG with affinity arrays keyed by sorted clique tuples."""

    ug: Ug
    affinities: dict = field(repr=False)

    def __post_init__(self):
        space = self.ug.space
        cliques = super_cliques(self.ug)
        affs = {}
        for key, arr in self.affinities.items():
            key = tuple(sorted(key))
            path = "affinities." + ",".join(space.name(i) for i in key)
            if not any(set(key) <= c for c in cliques):
                raise ValidationError(path, "node set is not fully connected")
            shape = tuple(space.cards[i] for i in key)
            t = np.asarray(arr, dtype=complex)
            if t.shape != shape:
                raise ValidationError(path, f"shape {t.shape}, expected {shape}")
            t.setflags(write=False)
            affs[key] = t
        for c in cliques:
            if tuple(sorted(c)) not in affs:
                raise ValidationError(
                    "affinities", f"no affinity for super-clique {{{space.format_set(c)}}}"
                )
        object.__setattr__(self, "affinities", affs)

    @property
    def space(self) -> VariableSpace:
        return self.ug.space


def build_amplitude_from_bnet(net: BayesNet) -> AmplitudeTensor:
    net.check_tables()
    scope = tuple(range(net.dag.n))
    out = np.ones(tuple(1 for _ in scope), dtype=complex)
    for j, t in net.tables.items():
        nodes = (j,) + tuple(sorted(net.dag.pa(j)))
        order = sorted(range(len(nodes)), key=lambda a: nodes[a])
        out = out * expand(np.transpose(t, order), tuple(sorted(nodes)), scope)
    out = np.broadcast_to(out, net.space.cards)
    norm2 = float(np.sum(np.abs(out) ** 2))
    if abs(norm2 - 1) > 1e-9:
        warnings.warn(f"Bayesian product drifted from unit norm by {abs(norm2 - 1):.2e}; renormalizing")
        out = out / np.sqrt(norm2)
    return AmplitudeTensor.full(net.space, out)


def build_amplitude_from_mnet(net: MarkovNet) -> AmplitudeTensor:
    scope = tuple(range(net.ug.n))
    out = np.ones(tuple(1 for _ in scope), dtype=complex)
    for key, t in net.affinities.items():
        out = out * expand(t, key, scope)
    out = np.broadcast_to(out, net.space.cards)
    norm = np.sqrt(np.sum(np.abs(out) ** 2))
    if norm <= get_settings().zero_tol:
        raise AllZeroAffinityProduct("affinity product vanishes everywhere")
    return AmplitudeTensor.full(net.space, out / norm)


def replace_diag_with_traced_node(net, node: int, name: str | None = None):
    """Trade ``diag`` on ``node`` for an appended copy node to be traced out.

    Returns ``(new_net, j)`` where ``j`` is the new node's index, or
    ``(net, None)`` when the variable has a single state (diag is a no-op).
    In a Bayesian net the copy node takes over the node's parents and table
    and the node itself becomes a Kronecker-delta child of it; in a Markov
    net the copy is linked to the node by a delta affinity.
    """
    space = net.space
    space.check(node)
    n = space.cards[node]
    if n == 1:
        return net, None
    name = name or f"{space.name(node)}_diag"
    new_space = space.extended(name, space.states(node))
    j = len(space)
    delta = np.eye(n, dtype=complex)
    if isinstance(net, BayesNet):
        arrows = {(a, b) for a, b in net.dag.arrows if b != node}
        arrows |= {(p, j) for p in net.dag.pa(node)}
        arrows.add((j, node))
        tables = dict(net.tables)
        tables[j] = net.tables[node]
        tables[node] = delta
        return BayesNet(Dag(new_space, frozenset(arrows)), tables), j
    links = set(net.ug.links) | {(node, j)}
    affs = dict(net.affinities)
    affs[(node, j)] = delta
    return MarkovNet(Ug(new_space, frozenset(links)), affs), j


# -- FP to CP --------------------------------------------------------------


def fp_to_cp(f) -> tuple:
    """Split a free-phase table into three constrained-phase factors.

    ``C1 = F diag(e^{-iφ})`` has a real first row; ``C2 = diag(1, e^{iφ_2}, ...)``
    and ``C3 = diag(e^{iφ_1}, 1, ...)`` are diagonal phase matrices, so that
    ``C1 C2 C3 = F``. With a single column ``C3`` carries the lone phase and has
    no real row.
    """
    f = np.asarray(f, dtype=complex)
    if f.ndim != 2 or f.shape[0] < 1:
        raise ValueError("table must be a matrix with at least one row")
    phi = np.where(np.abs(f[0]) > 0, np.angle(f[0]), 0.0)
    c1 = f * np.exp(-1j * phi)[None, :]
    c1[0] = np.abs(f[0])
    c2 = np.diag(np.concatenate([[1.0], np.exp(1j * phi[1:])]))
    c3 = np.diag(np.concatenate([[np.exp(1j * phi[0])], np.ones(len(phi) - 1)]))
    return c1, c2, c3


def has_real_row(m, tol: float = 1e-12) -> bool:
    m = np.asarray(m)
    return bool(np.any(np.all(np.abs(m.imag) <= tol, axis=1)))
