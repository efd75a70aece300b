"""Dense tables over joint assignments of a variable subset.

A table over scope ``(i1, i2, ...)`` (always ascending) is a numpy array with
one axis per scope variable, so flattening it gives the row-major joint
enumeration used by every matrix in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from qbnet.config import get_settings
from qbnet.errors import ScopeMismatch, TooManyJointStates, ZeroConditionMass
from qbnet.graph import VariableSpace


@dataclass(frozen=True)
class Assignment:
    """State indices for an ordered set of variables."""

    scope: tuple
    values: tuple

    @classmethod
    def of(cls, mapping: Mapping[int, int] | "Assignment") -> "Assignment":
        if isinstance(mapping, Assignment):
            return mapping
        scope = tuple(sorted(mapping))
        return cls(scope, tuple(int(mapping[i]) for i in scope))

    def as_dict(self) -> dict:
        return dict(zip(self.scope, self.values))

    def check(self, space: VariableSpace) -> None:
        for i, v in zip(self.scope, self.values):
            if not 0 <= v < len(space.states(i)):
                raise ScopeMismatch(f"state {v} out of range for {space.name(i)}")


def joint_states(space: VariableSpace, scope: Iterable[int]) -> int:
    return int(np.prod([space.cards[i] for i in scope], dtype=np.int64))


def _check_size(space: VariableSpace, scope: tuple) -> None:
    limit = get_settings().max_joint_states
    if joint_states(space, scope) > limit:
        raise TooManyJointStates(f"{joint_states(space, scope)} joint states exceeds limit {limit}")


def expand(values: np.ndarray, scope: tuple, target: tuple) -> np.ndarray:
    """View ``values`` over ``scope`` as broadcastable against ``target``."""
    missing = [i for i in scope if i not in target]
    if missing:
        raise ScopeMismatch(f"variables {missing} not in target scope")
    shape = [values.shape[scope.index(i)] if i in scope else 1 for i in target]
    order = sorted(range(len(scope)), key=lambda a: target.index(scope[a]))
    return np.transpose(values, order).reshape(shape)


def take(values: np.ndarray, scope: tuple, given: Mapping[int, int]) -> tuple:
    """Slice ``values`` at the assignment ``given`` (restricted to scope)."""
    index = tuple(given[i] if i in given else slice(None) for i in scope)
    rest = tuple(i for i in scope if i not in given)
    return values[index], rest


class _Table:
    space: VariableSpace
    scope: tuple
    values: np.ndarray

    def _setup(self, dtype):
        scope = tuple(sorted(self.scope))
        if len(set(scope)) != len(scope):
            raise ScopeMismatch("repeated variable in scope")
        for i in scope:
            self.space.check(i)
        _check_size(self.space, scope)
        shape = tuple(self.space.cards[i] for i in scope)
        values = np.asarray(self.values, dtype=dtype)
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise ScopeMismatch(f"{values.size} entries for joint state count {int(np.prod(shape))}")
        values = values.reshape(shape)
        values.setflags(write=False)
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def at(self, assignment: Mapping[int, int]) -> complex:
        return self.values[tuple(assignment[i] for i in self.scope)]

    def _check_subset(self, nodes: frozenset) -> None:
        if not nodes <= set(self.scope):
            raise ScopeMismatch(f"variables {sorted(nodes - set(self.scope))} not in scope {self.scope}")


@dataclass(frozen=True)
class AmplitudeTensor(_Table):
    space: VariableSpace
    scope: tuple
    values: np.ndarray = field(repr=False)
    regularized: bool = False

    def __post_init__(self):
        self._setup(complex)

    @classmethod
    def full(cls, space: VariableSpace, values) -> "AmplitudeTensor":
        return cls(space, tuple(range(len(space))), values)

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))

    @property
    def normalized(self) -> bool:
        return abs(self.norm2 - 1.0) <= get_settings().norm_tol

    def normalize(self) -> "AmplitudeTensor":
        n = np.sqrt(self.norm2)
        if n == 0:
            raise ZeroConditionMass("cannot normalize an all-zero amplitude")
        return AmplitudeTensor(self.space, self.scope, self.values / n, self.regularized)


@dataclass(frozen=True)
class ProbTensor(_Table):
    space: VariableSpace
    scope: tuple
    values: np.ndarray = field(repr=False)
    regularized: bool = False

    def __post_init__(self):
        self._setup(float)
        if np.any(self.values < 0):
            raise ValueError("probabilities must be nonnegative")

    @classmethod
    def full(cls, space: VariableSpace, values) -> "ProbTensor":
        return cls(space, tuple(range(len(space))), values)

    @property
    def total(self) -> float:
        return float(np.sum(self.values))

    @property
    def normalized(self) -> bool:
        return abs(self.total - 1.0) <= get_settings().norm_tol


def marginalize(p: ProbTensor, drop: Iterable[int]) -> ProbTensor:
    drop = frozenset(drop)
    p._check_subset(drop)
    axes = tuple(a for a, i in enumerate(p.scope) if i in drop)
    keep = tuple(i for i in p.scope if i not in drop)
    return ProbTensor(p.space, keep, p.values.sum(axis=axes), p.regularized)


def safe_divide(num: np.ndarray, den: np.ndarray, what: str = "conditioning event") -> tuple:
    """``num / den`` with the package's zero-mass policy.

    Returns ``(ratio, regularized)``. Strict mode raises
    :class:`ZeroConditionMass` if any denominator is at or below
    ``zero_tol``; ε-mode substitutes ε there.
    """
    s = get_settings()
    den = np.asarray(den)
    small = np.abs(den) <= s.zero_tol
    if not np.any(small):
        return num / den, False
    if s.eps <= 0:
        raise ZeroConditionMass(f"{what} has zero mass")
    den = np.where(small, s.eps, den)
    return num / den, True


def condition(p: ProbTensor, given: Mapping[int, int] | Assignment) -> ProbTensor:
    """``P(rest | given)`` over the variables not fixed by ``given``."""
    given = Assignment.of(given).as_dict()
    p._check_subset(frozenset(given))
    sliced, rest = take(p.values, p.scope, given)
    mass = sliced.sum()
    ratio, reg = safe_divide(sliced, mass)
    return ProbTensor(p.space, rest, ratio, p.regularized or reg)


def amp_to_prob(a: AmplitudeTensor) -> ProbTensor:
    return ProbTensor(a.space, a.scope, np.abs(a.values) ** 2, a.regularized)
