"""Built-in example networks.

Each fixture is generated here and also shipped as a ``.qbn`` file in
``qbnet/fixtures``; the test suite checks the two stay identical. The two
counterexample nets take a phase parameter ``xi``.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from qbnet.amplitudes import BayesNet, MarkovNet
from qbnet.graph import VariableSpace, build_dag, build_ug
from qbnet.network import NetworkFile, parse_network, serialize_network

DEFAULT_XI = float(np.pi / 2)

_R = 1 / np.sqrt(2)


def _col(p0: float, phase1: float = 0.0) -> list:
    """Unit column ``(√p0, e^{i·phase1} √(1-p0))``, first entry real."""
    return [np.sqrt(p0), np.exp(1j * phase1) * np.sqrt(1 - p0)]


def _table(*cols) -> np.ndarray:
    """Stack columns (one per parent assignment, row-major) into ``(N, *parents)``."""
    arr = np.array(cols, dtype=complex).T
    n_par = len(cols)
    if n_par == 1:
        return arr.reshape(2)
    k = int(round(np.log2(n_par)))
    return arr.reshape((2,) + (2,) * k)


def diamond_bayes() -> NetworkFile:
    space = VariableSpace.binary(["x1", "x2", "x3", "x4"])
    dag = build_dag(space, [("x1", "x2"), ("x1", "x3"), ("x2", "x4"), ("x3", "x4")])
    tables = {
        0: _table(_col(0.6, 0.4)),
        1: _table(_col(0.7, 1.1), _col(0.2, -0.5)),
        2: _table(_col(0.5, 0.3), _col(0.9, 2.0)),
        3: _table(_col(0.3, 0.7), _col(0.8, -1.2), _col(0.4, 0.2), _col(0.1, 2.5)),
    }
    return NetworkFile(
        "diamond-bayes", "bayesian", BayesNet(dag, tables),
        description="Four-node diamond Bayesian net x1 -> {x2, x3} -> x4.",
    )


def diamond_markov() -> NetworkFile:
    space = VariableSpace.binary(["x1", "x2", "x3", "x4"])
    ug = build_ug(space, [("x1", "x2"), ("x1", "x3"), ("x2", "x4"), ("x3", "x4")])
    phases = {(0, 1): 0.3, (0, 2): -0.8, (1, 3): 1.4, (2, 3): 0.5}
    affs = {}
    for n, (key, ph) in enumerate(sorted(phases.items())):
        mags = np.array([[1.0, 0.5 + 0.1 * n], [0.7, 1.2 - 0.1 * n]])
        affs[key] = mags * np.exp(1j * ph * np.array([[0, 1], [1, 2]]))
    return NetworkFile(
        "diamond-markov", "markov", MarkovNet(ug, affs),
        description="Four-node diamond Markov net with pairwise affinities.",
    )


def _three(name: str, arrows, desc: str) -> NetworkFile:
    space = VariableSpace.binary(["x", "a", "y"])
    dag = build_dag(space, arrows)
    cols = {
        "x": [_col(0.45, 0.9), _col(0.25, -1.3)],
        "a": [_col(0.6, 0.2), _col(0.3, 1.7), _col(0.75, -0.6), _col(0.15, 2.2)],
        "y": [_col(0.35, -0.4), _col(0.8, 1.0)],
    }
    tables = {}
    for j, var in enumerate(space.names):
        k = len(dag.pa(j))
        tables[j] = _table(*cols[var][: 1 << k]) if k else _table(cols[var][0])
    return NetworkFile(name, "bayesian", BayesNet(dag, tables), description=desc)


def chain() -> NetworkFile:
    return _three("chain", [("x", "a"), ("a", "y")], "Serial node: x -> a -> y.")


def common_cause() -> NetworkFile:
    return _three("common-cause", [("a", "x"), ("a", "y")], "Divergence node: x <- a -> y.")


def collider() -> NetworkFile:
    return _three("collider", [("x", "a"), ("y", "a")], "Collider: x -> a <- y.")


def collider_descendant() -> NetworkFile:
    space = VariableSpace.binary(["x", "a", "y", "b"])
    dag = build_dag(space, [("x", "b"), ("y", "b"), ("b", "a")])
    tables = {
        0: _table(_col(0.45, 0.9)),
        1: _table(_col(0.85, 0.4), _col(0.2, -1.9)),
        2: _table(_col(0.35, -0.4)),
        3: _table(_col(0.6, 0.2), _col(0.3, 1.7), _col(0.75, -0.6), _col(0.15, 2.2)),
    }
    return NetworkFile(
        "collider-descendant", "bayesian", BayesNet(dag, tables), markers={3: "trace"},
        description="Descendant a of collider b: x -> b <- y, b -> a; b is traced out.",
    )


def counterexample_1(xi: float = DEFAULT_XI) -> NetworkFile:
    """``A = δ(x1=1) δ(x2=1) e^{iξ δ(a=0)} / √2`` with reference ``(0, 0, 0)``."""
    space = VariableSpace.binary(["x1", "x2", "a"])
    dag = build_dag(space, [("x1", "x2"), ("x1", "a"), ("x2", "a")])
    one, zero = [1.0, 0.0], [0.0, 1.0]
    tables = {
        0: np.array(zero, dtype=complex),
        1: _table(one, zero),
        2: _table(one, one, one, [np.exp(1j * xi) * _R, _R]),
    }
    return NetworkFile(
        "counterexample-1", "bayesian", BayesNet(dag, tables), reference={0: 0, 1: 0, 2: 0},
        description="Vanishing CMI after diagonalizing E, yet tau^A fails for (x1 ⊥ x2).",
    )


def counterexample_2(xi: float = DEFAULT_XI) -> NetworkFile:
    """``A = e^{iξ δ(x1=1, x2=1, a=1)} / √8``."""
    space = VariableSpace.binary(["x1", "x2", "a"])
    dag = build_dag(space, [("x1", "x2"), ("x1", "a"), ("x2", "a")])
    tables = {
        0: np.array([_R, _R], dtype=complex),
        1: _table([_R, _R], [_R, _R]),
        2: _table([_R, _R], [_R, _R], [_R, _R], [_R, np.exp(1j * xi) * _R]),
    }
    return NetworkFile(
        "counterexample-2", "bayesian", BayesNet(dag, tables),
        description="tau^A holds for (x1 ⊥ x2), yet the CMI after diagonalizing E is positive.",
    )


GENERATORS = {
    "diamond-bayes": diamond_bayes,
    "diamond-markov": diamond_markov,
    "chain": chain,
    "common-cause": common_cause,
    "collider": collider,
    "collider-descendant": collider_descendant,
    "counterexample-1": counterexample_1,
    "counterexample-2": counterexample_2,
}
PARAMETRIZED = {"counterexample-1", "counterexample-2"}


def builtin_names() -> list:
    return sorted(GENERATORS)


def generate(name: str, xi: float | None = None) -> NetworkFile:
    if name not in GENERATORS:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(builtin_names())}")
    if name in PARAMETRIZED:
        return GENERATORS[name](DEFAULT_XI if xi is None else xi)
    return GENERATORS[name]()


def fixture_text(name: str) -> str:
    return resources.files("qbnet").joinpath("fixtures", f"{name}.qbn").read_text(encoding="utf-8")


def load_builtin(name: str, xi: float | None = None) -> NetworkFile:
    """The shipped file, or a freshly generated net when ``xi`` is given."""
    if xi is not None:
        return generate(name, xi)
    if name not in GENERATORS:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(builtin_names())}")
    return parse_network(fixture_text(name))


def write_fixtures(directory) -> list:
    """Regenerate every ``.qbn`` file under ``directory``."""
    from pathlib import Path

    out = []
    for name in builtin_names():
        path = Path(directory) / f"{name}.qbn"
        path.write_text(serialize_network(generate(name)), encoding="utf-8")
        out.append(path)
    return out
