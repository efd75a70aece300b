"""Density matrices, measurement super-operators, purification and CMI.

An operator over scope ``(i1, ..., ik)`` is a ``d × d`` matrix whose row and
column index is the row-major joint state of the scope. Internally it is
often viewed as a ``2k``-axis tensor: row axes first, then column axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from qbnet.config import get_settings
from qbnet.errors import (
    MissingValue,
    NegativeCMI,
    NotHermitian,
    NotNormalized,
    ScopeMismatch,
    ScopePartitionInvalid,
    SetsNotDisjoint,
    TraceNotOne,
    NegativeEigenvalueBeyondTolerance,
    ZeroDenominator,
)
from qbnet.graph import VariableSpace
from qbnet.numlin import HERMITIAN_TOL, hermitian_eig, spectral_entropy, svd
from qbnet.tensor import AmplitudeTensor, ProbTensor, joint_states, safe_divide

SUPEROPS = ("entry", "entry_sum", "trace", "diag")


@dataclass(frozen=True)
class Operator:
    """A matrix acting on the joint space of ``scope``; no validation."""

    space: VariableSpace
    scope: tuple
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        scope = tuple(self.scope)
        if list(scope) != sorted(set(scope)):
            raise ScopeMismatch(f"scope {scope} must be strictly ascending")
        d = joint_states(self.space, scope)
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (d, d):
            raise ScopeMismatch(f"matrix shape {m.shape} does not match joint state count {d}")
        m.setflags(write=False)
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "matrix", m)

    @property
    def dims(self) -> tuple:
        return tuple(self.space.cards[i] for i in self.scope)

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.dims + self.dims)

    def with_tensor(self, scope: tuple, t: np.ndarray) -> "Operator":
        d = joint_states(self.space, scope)
        return Operator(self.space, scope, np.asarray(t).reshape(d, d))

    def normalized(self) -> "DensityMatrix":
        tr = np.trace(self.matrix).real
        if abs(tr) <= get_settings().zero_tol:
            raise ZeroDenominator("operator has zero trace")
        return DensityMatrix(self.space, self.scope, self.matrix / tr)


@dataclass(frozen=True)
class DensityMatrix(Operator):
    """Hermitian, positive semidefinite, unit trace (checked unless ``check=False``)."""

    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        super().__post_init__()
        if self.check:
            self.validate()

    def validate(self) -> None:
        m = self.matrix
        if m.size and np.max(np.abs(m - m.conj().T)) >= HERMITIAN_TOL:
            raise NotHermitian("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1) > get_settings().norm_tol:
            raise TraceNotOne(f"trace {tr:.12f}")
        w, _ = hermitian_eig(m)
        if w.size and w.min() < -1e-9:
            raise NegativeEigenvalueBeyondTolerance(f"eigenvalue {w.min():.3e}")

    def eigenvalues(self) -> np.ndarray:
        return hermitian_eig(self.matrix)[0]


def _subset(op: Operator, nodes: Iterable[int]) -> frozenset:
    nodes = frozenset(nodes)
    if not nodes <= set(op.scope):
        raise ScopeMismatch(f"variables {sorted(nodes - set(op.scope))} not in scope {op.scope}")
    return nodes


def meta_density(a: AmplitudeTensor) -> DensityMatrix:
    """Projector onto the amplitude vector."""
    if not a.normalized:
        raise NotNormalized(f"amplitude has squared norm {a.norm2:.12f}")
    v = a.flat
    return DensityMatrix(a.space, a.scope, np.outer(v, v.conj()), check=False)


def superop(rho: Operator, kind: str, target: Iterable[int], value: Mapping[int, int] | None = None):
    """Apply ``entry``, ``entry_sum``, ``trace`` or ``diag`` over ``target``.

    The first three remove the target from the scope; ``diag`` keeps it and
    zeroes the off-diagonal blocks. Nothing is renormalized. When the scope
    empties a complex scalar is returned.
    """
    if kind not in SUPEROPS:
        raise ValueError(f"unknown super-operator {kind!r}")
    target = _subset(rho, target)
    if kind == "entry":
        value = dict(value or {})
        missing = target - set(value)
        if missing:
            raise MissingValue(f"entry needs a value for {sorted(missing)}")
    t = rho.tensor()
    k = len(rho.scope)
    rows = list(range(k))
    cols = list(range(k, 2 * k))
    operands = [t, rows + cols]
    out_rows, out_cols = [], []
    keep = []
    for pos, i in enumerate(rho.scope):
        if i not in target:
            out_rows.append(rows[pos])
            out_cols.append(cols[pos])
            keep.append(i)
            continue
        n = rho.space.cards[i]
        if kind == "entry":
            w = np.zeros((n, n))
            w[value[i], value[i]] = 1.0
        elif kind == "entry_sum":
            w = np.ones((n, n))
        elif kind == "trace":
            w = np.eye(n)
        else:
            w = np.eye(n)
            out_rows.append(rows[pos])
            out_cols.append(cols[pos])
            keep.append(i)
        operands += [w, [rows[pos], cols[pos]]]
    result = np.einsum(*operands, out_rows + out_cols)
    if not keep:
        return complex(result)
    return rho.with_tensor(tuple(keep), result)


def partial_trace(rho: Operator, drop: Iterable[int]) -> Operator:
    drop = _subset(rho, drop)
    if not drop:
        return rho
    out = superop(rho, "trace", drop)
    if isinstance(out, complex):
        raise ScopeMismatch("partial trace over the whole scope leaves a scalar; use superop")
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(out.space, out.scope, out.matrix, check=False)
    return out


# -- measurement -----------------------------------------------------------


@dataclass(frozen=True)
class MeasurementPlan:
    """Split of all variables into visible, amplitude-summed and probability-summed."""

    vis: frozenset
    asum: frozenset = frozenset()
    psum: frozenset = frozenset()
    pre: frozenset = frozenset()

    def __post_init__(self):
        for name in ("vis", "asum", "psum", "pre"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if self.vis & self.asum or self.vis & self.psum or self.asum & self.psum:
            raise SetsNotDisjoint("measurement plan sets overlap")
        if not self.pre <= self.vis:
            raise ScopeMismatch("pre-measured variables must be visible")

    @property
    def post(self) -> frozenset:
        return self.vis - self.pre

    def check(self, scope: Iterable[int]) -> None:
        if self.vis | self.asum | self.psum != frozenset(scope):
            raise ScopeMismatch("measurement plan does not cover the variable set exactly")


def measurement_distribution(a: AmplitudeTensor, plan: MeasurementPlan) -> ProbTensor:
    """Normalized probabilities of every visible outcome.

    Computed by tracing the probability-summed variables out of the meta
    density matrix, entry-summing the amplitude-summed ones, and reading the
    diagonal (one ``entry`` per outcome) of what is left.
    """
    plan.check(a.scope)
    mu = Operator(a.space, a.scope, np.outer(a.flat, a.flat.conj()))
    op = superop(mu, "trace", plan.psum) if plan.psum else mu
    if plan.asum:
        op = superop(op, "entry_sum", plan.asum)
    if isinstance(op, complex):
        raise ScopeMismatch("no visible variables to measure")
    raw = np.real(np.diagonal(op.matrix)).copy()
    total = raw.sum()
    if total <= get_settings().zero_tol:
        raise ZeroDenominator("all measurement outcomes have zero weight")
    raw = np.clip(raw, 0.0, None) / total
    return ProbTensor(a.space, op.scope, raw)


def projector_distribution(a: AmplitudeTensor, plan: MeasurementPlan) -> ProbTensor:
    """Same distribution as :func:`measurement_distribution`, via ``⟨ψ|π|ψ⟩``.

    For each visible outcome the projector is the product of the outcome
    projector, the projector onto the uniform superposition of the
    amplitude-summed variables (normalized by their joint state count), and
    the identity on the probability-summed ones.
    """
    plan.check(a.scope)
    psi = a.values
    vis = tuple(i for i in a.scope if i in plan.vis)
    vis_dims = tuple(a.space.cards[i] for i in vis)
    raw = np.zeros(vis_dims)
    for outcome in np.ndindex(*vis_dims):
        chosen = dict(zip(vis, outcome))
        phi = psi
        for pos in reversed(range(len(a.scope))):
            i = a.scope[pos]
            n = a.space.cards[i]
            if i in plan.vis:
                p = np.zeros((n, n))
                p[chosen[i], chosen[i]] = 1.0
            elif i in plan.asum:
                p = np.full((n, n), 1.0 / n)
            else:
                continue
            phi = np.moveaxis(np.tensordot(p, phi, axes=([1], [pos])), 0, pos)
        raw[outcome] = np.real(np.vdot(psi, phi))
    total = raw.sum()
    if total <= get_settings().zero_tol:
        raise ZeroDenominator("all measurement outcomes have zero weight")
    return ProbTensor(a.space, vis, np.clip(raw, 0.0, None) / total)


def measurement_prob(a: AmplitudeTensor, plan: MeasurementPlan, outcome: Mapping[int, int]) -> float:
    dist = measurement_distribution(a, plan)
    missing = set(dist.scope) - set(outcome)
    if missing:
        raise MissingValue(f"outcome lacks values for {sorted(missing)}")
    return float(dist.at(outcome))


def conditional_measurement_prob(
    a: AmplitudeTensor, plan: MeasurementPlan, post: Mapping[int, int], pre: Mapping[int, int]
) -> float:
    if set(pre) != plan.pre or set(post) != plan.post:
        raise ScopeMismatch("outcomes must cover the plan's post and pre variables exactly")
    dist = measurement_distribution(a, plan)
    joint = float(dist.at({**post, **pre}))
    index = tuple(pre[i] if i in pre else slice(None) for i in dist.scope)
    mass = float(np.sum(dist.values[index]))
    ratio, _ = safe_divide(np.float64(joint), np.float64(mass), "pre-measurement outcome")
    return float(ratio)


def expected_value(
    a: AmplitudeTensor,
    plan: MeasurementPlan,
    eigenvalues: Mapping[tuple, float] | Callable[[dict], float],
    pre: Mapping[int, int] | None = None,
) -> float:
    """``Σ_post λ(post, pre) P(post | pre)``.

    ``eigenvalues`` maps outcome tuples over the post variables (ascending
    order) to real numbers, or is a callable taking the outcome dict.
    """
    pre = dict(pre or {})
    post_vars = tuple(sorted(plan.post))
    total = 0.0
    for outcome in np.ndindex(*(a.space.cards[i] for i in post_vars)):
        chosen = dict(zip(post_vars, outcome))
        if callable(eigenvalues):
            lam = eigenvalues({**chosen, **pre})
        else:
            if outcome not in eigenvalues:
                raise MissingValue(f"no eigenvalue for outcome {outcome}")
            lam = eigenvalues[outcome]
        total += lam * conditional_measurement_prob(a, plan, chosen, pre)
    return float(total)


# -- purification and Schmidt ---------------------------------------------


@dataclass(frozen=True)
class Purification:
    """``ρ = tr_j |ψ⟩⟨ψ|`` with ``ψ(x, j) = A(x|j) A(j)``.

    ``cond[:, j]`` is the unit column ``A(·|j)``; ``weights[j] = A(j) ≥ 0``.
    """

    scope: tuple
    cond: np.ndarray
    weights: np.ndarray

    def state(self) -> np.ndarray:
        return self.cond * self.weights[None, :]

    def rebuild(self) -> np.ndarray:
        psi = self.state()
        return psi @ psi.conj().T


def purify(rho: DensityMatrix) -> Purification:
    w, u = hermitian_eig(rho.matrix)
    if w.size and w.min() < -1e-9:
        raise NegativeEigenvalueBeyondTolerance(f"eigenvalue {w.min():.3e}")
    return Purification(rho.scope, u, np.sqrt(np.clip(w, 0.0, None)))


@dataclass(frozen=True)
class SchmidtDecomposition:
    """``A(x, y) = Σ_j A(x|j) A(y|j) A(j)`` with columns indexed by ``j``."""

    group1: tuple
    group2: tuple
    x_given_j: np.ndarray
    weights: np.ndarray
    y_given_j: np.ndarray

    def matrix(self) -> np.ndarray:
        return (self.x_given_j * self.weights[None, :]) @ self.y_given_j.T


def schmidt(a: AmplitudeTensor, group1: Iterable[int], group2: Iterable[int]) -> SchmidtDecomposition:
    g1, g2 = tuple(sorted(set(group1))), tuple(sorted(set(group2)))
    if not g1 or not g2 or set(g1) & set(g2) or set(g1) | set(g2) != set(a.scope):
        raise ScopePartitionInvalid("groups must be nonempty and partition the amplitude's scope")
    order = [a.scope.index(i) for i in g1 + g2]
    d1, d2 = joint_states(a.space, g1), joint_states(a.space, g2)
    m = np.transpose(a.values, order).reshape(d1, d2)
    u, s, v = svd(m)
    r = min(d1, d2)
    return SchmidtDecomposition(g1, g2, u[:, :r], s[:r], v[:, :r].conj())


# -- entropies -------------------------------------------------------------


def von_neumann_entropy(rho: Operator) -> float:
    w, _ = hermitian_eig(rho.matrix)
    return spectral_entropy(w)


@dataclass(frozen=True)
class CmiResult:
    value: float
    raw: float
    clamped: bool
    entropies: dict


def _check_sets(scope, j, k, e) -> tuple:
    j, k, e = frozenset(j), frozenset(k), frozenset(e)
    if j & k or j & e or k & e:
        raise SetsNotDisjoint("J, K and E must be disjoint")
    if not j or not k:
        raise SetsNotDisjoint("J and K must be nonempty")
    if not (j | k | e) <= set(scope):
        raise ScopeMismatch("sets must lie inside the scope")
    return j, k, e


def _clamp_cmi(raw: float, tol: float) -> tuple:
    if raw >= 0:
        return raw, False
    if raw >= -tol:
        return 0.0, True
    raise NegativeCMI(f"CMI {raw:.3e} below -{tol:g}")


def quantum_cmi_detail(rho: Operator, j, k, e=()) -> CmiResult:
    j, k, e = _check_sets(rho.scope, j, k, e)
    rest = set(rho.scope) - j - k - e
    state = partial_trace(rho, rest)

    def entropy(nodes: frozenset) -> float:
        if not nodes:
            return 0.0
        return von_neumann_entropy(partial_trace(state, set(state.scope) - nodes))

    parts = {"JE": entropy(j | e), "KE": entropy(k | e), "JKE": entropy(j | k | e), "E": entropy(e)}
    raw = parts["JE"] + parts["KE"] - parts["JKE"] - parts["E"]
    value, clamped = _clamp_cmi(raw, 1e-8)
    return CmiResult(value, raw, clamped, parts)


def quantum_cmi(rho: Operator, j, k, e=()) -> float:
    """``S(J:K|E)`` in nats after tracing out every other variable."""
    return quantum_cmi_detail(rho, j, k, e).value


def shannon_entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def classical_cmi(p: ProbTensor, j, k, e=()) -> float:
    j, k, e = _check_sets(p.scope, j, k, e)

    def entropy(nodes: frozenset) -> float:
        axes = tuple(a for a, i in enumerate(p.scope) if i not in nodes)
        return shannon_entropy(p.values.sum(axis=axes)) if nodes else 0.0

    raw = entropy(j | e) + entropy(k | e) - entropy(j | k | e) - entropy(e)
    return _clamp_cmi(raw, 1e-10)[0]


# -- diag implementations --------------------------------------------------


def _target_state_index(space: VariableSpace, scope: tuple, target: frozenset) -> tuple:
    """Joint index of the target sub-assignment for every row of the scope."""
    dims = tuple(space.cards[i] for i in scope)
    tvars = [pos for pos, i in enumerate(scope) if i in target]
    tdims = tuple(dims[p] for p in tvars)
    grid = np.indices(dims).reshape(len(dims), -1)
    if not tvars:
        return np.zeros(grid.shape[1], dtype=int), 1
    return np.ravel_multi_index(tuple(grid[p] for p in tvars), tdims), int(np.prod(tdims))


def random_phase_dephase(rho: Operator, target: Iterable[int], samples: int, seed: int) -> Operator:
    """Average of ``D ρ D†`` over random diagonal phase unitaries on ``target``.

    Each target variable gets an independent phase per state, uniform on
    ``[0, 2π)``, drawn from a Philox generator keyed by ``seed``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    target = _subset(rho, target)
    rng = np.random.Generator(np.random.Philox(seed))
    tpos = [i for i in rho.scope if i in target]
    tcards = [rho.space.cards[i] for i in tpos]
    grid = np.indices(tcards).reshape(len(tcards), -1) if tpos else np.zeros((0, 1), dtype=int)
    acc = np.zeros((grid.shape[1], grid.shape[1]), dtype=complex)
    chunk = 20000
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        theta = np.zeros((m, grid.shape[1]))
        for axis, n in enumerate(tcards):
            phases = rng.uniform(0.0, 2 * np.pi, size=(m, n))
            theta += phases[:, grid[axis]]
        f = np.exp(1j * theta)
        acc += f.T @ f.conj()
        done += m
    mask_t = acc / samples
    idx, _ = _target_state_index(rho.space, rho.scope, target)
    mask = mask_t[np.ix_(idx, idx)]
    return type(rho)(rho.space, rho.scope, rho.matrix * mask, **({"check": False} if isinstance(rho, DensityMatrix) else {}))


def diag_as_traced_node(a: AmplitudeTensor, target: int, name: str | None = None) -> AmplitudeTensor:
    """Append a copy node ``j`` with ``Ã(x., j) = A(x.) δ(x_target, j)``.

    Tracing ``j`` out of the new meta density matrix gives ``diag_target μ``.
    """
    space = a.space
    space.check(target)
    if target not in a.scope:
        raise ScopeMismatch(f"variable {target} not in scope")
    if list(a.scope) != list(range(len(space))):
        raise ScopeMismatch("diag rewrite needs an amplitude over the whole space")
    name = name or f"{space.name(target)}_diag"
    new_space = space.extended(name, space.states(target))
    n = space.cards[target]
    delta = np.eye(n)
    pos = a.scope.index(target)
    shape = [1] * len(a.scope) + [n]
    shape[pos] = n
    values = a.values[..., None] * delta.reshape(shape)
    return AmplitudeTensor(new_space, tuple(range(len(new_space))), values, a.regularized)


def reduced_density(a: AmplitudeTensor, keep: Iterable[int]) -> DensityMatrix:
    """``tr_rest |A⟩⟨A|`` computed straight from the amplitude."""
    keep = tuple(sorted(set(keep)))
    if not set(keep) <= set(a.scope):
        raise ScopeMismatch("kept variables must lie inside the amplitude's scope")
    pos = [a.scope.index(i) for i in keep]
    rest = [p for p in range(len(a.scope)) if p not in pos]
    m = np.transpose(a.values, pos + rest).reshape(joint_states(a.space, keep), -1)
    return DensityMatrix(a.space, keep, m @ m.conj().T, check=False)
