"""Seeded generators for random graphs, nets and states.

Node tables are drawn in constrained-phase form: the first state's row of
every column is real and nonnegative. Combined with the all-first-states
reference, this is the form under which graph factorization and the
separation theorems are stated for amplitudes.
"""

from __future__ import annotations

import itertools

import numpy as np

from qbnet.amplitudes import BayesNet, MarkovNet
from qbnet.density import DensityMatrix
from qbnet.graph import Dag, Ug, VariableSpace, super_cliques
from qbnet.tensor import AmplitudeTensor

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 output function."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master: int, trial: int) -> int:
    """Seed of trial ``trial`` derived from ``master``."""
    return splitmix64((splitmix64(master & MASK64) + trial) & MASK64)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_dag(rng: np.random.Generator, n: int, p: float = 0.5, names=None) -> Dag:
    """Arrows only go from lower to higher position, each with probability ``p``."""
    space = VariableSpace.binary(names or [f"x{i + 1}" for i in range(n)])
    arrows = {(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < p}
    return Dag(space, frozenset(arrows))


def random_ug(rng: np.random.Generator, n: int, p: float = 0.5, names=None) -> Ug:
    space = VariableSpace.binary(names or [f"x{i + 1}" for i in range(n)])
    links = {(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < p}
    return Ug(space, frozenset(links))


def random_unit_columns(rng: np.random.Generator, shape: tuple, *, cp: bool = True, positive: bool = True) -> np.ndarray:
    """Random table with unit-norm columns along axis 0.

    ``cp`` makes the first row real and nonnegative; ``positive`` keeps every
    magnitude away from zero.
    """
    if positive:
        mag = rng.uniform(0.2, 1.0, size=shape)
    else:
        mag = np.abs(rng.normal(size=shape))
    phase = rng.uniform(-np.pi, np.pi, size=shape)
    t = mag * np.exp(1j * phase)
    if cp:
        t[0] = np.abs(t[0])
    return t / np.sqrt(np.sum(np.abs(t) ** 2, axis=0, keepdims=True))


def random_bnet(rng: np.random.Generator, dag: Dag, *, cp: bool = True, positive: bool = True, real: bool = False) -> BayesNet:
    tables = {}
    for j in range(dag.n):
        shape = (dag.space.cards[j],) + tuple(dag.space.cards[p] for p in sorted(dag.pa(j)))
        t = random_unit_columns(rng, shape, cp=cp, positive=positive)
        if real:
            t = np.abs(t)
            t = t / np.sqrt(np.sum(t**2, axis=0, keepdims=True))
        tables[j] = t
    return BayesNet(dag, tables)


def random_mnet(rng: np.random.Generator, ug: Ug, *, positive: bool = True) -> MarkovNet:
    affs = {}
    for c in super_cliques(ug):
        key = tuple(sorted(c))
        shape = tuple(ug.space.cards[i] for i in key)
        mag = rng.uniform(0.3, 1.0, size=shape) if positive else np.abs(rng.normal(size=shape))
        affs[key] = mag * np.exp(1j * rng.uniform(-np.pi, np.pi, size=shape))
    return MarkovNet(ug, affs)


def random_amplitude(rng: np.random.Generator, space: VariableSpace, *, positive: bool = True) -> AmplitudeTensor:
    shape = space.cards
    mag = rng.uniform(0.2, 1.0, size=shape) if positive else np.abs(rng.normal(size=shape))
    a = mag * np.exp(1j * rng.uniform(-np.pi, np.pi, size=shape))
    return AmplitudeTensor.full(space, a / np.linalg.norm(a))


def random_density(rng: np.random.Generator, space: VariableSpace, rank: int | None = None) -> DensityMatrix:
    """Random density matrix ``G G† / tr`` with ``G`` complex Gaussian."""
    d = int(np.prod(space.cards))
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityMatrix(space, tuple(range(len(space))), m / np.trace(m).real, check=False)


def random_space(rng: np.random.Generator, max_dim: int, max_vars: int = 4) -> VariableSpace:
    """Variables with 2–3 states whose joint count stays within ``max_dim``."""
    cards = []
    while len(cards) < max_vars:
        c = int(rng.integers(2, 4))
        if int(np.prod(cards + [c])) > max_dim:
            if int(np.prod(cards + [2])) > max_dim:
                break
            c = 2
        cards.append(c)
        if len(cards) >= 2 and rng.random() < 0.3:
            break
    return VariableSpace.with_cards(cards)
