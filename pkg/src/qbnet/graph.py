"""Graphs over a space of discrete variables, and graphical separation.

Nodes are 0-based positions into a :class:`VariableSpace`. Every set handed
back to callers is a ``frozenset`` of positions; anything that has an order
(cliques, I-sets, pair lists) comes back sorted by position.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

from qbnet.config import get_settings
from qbnet.errors import (
    CycleDetected,
    DuplicateEdge,
    GraphTooLargeForGlobalEnumeration,
    IndexOutOfRange,
    SelfEdge,
    SetsNotDisjoint,
)

NodeRef = Union[int, str]


@dataclass(frozen=True)
class VariableSpace:
    """Ordered, named discrete variables with ordered state labels."""

    variables: tuple  # ((name, (state, ...)), ...)
    index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __init__(self, variables: Iterable):
        items = []
        for entry in variables:
            name, states = entry
            items.append((str(name), tuple(str(s) for s in states)))
        object.__setattr__(self, "variables", tuple(items))
        index = {}
        for pos, (name, states) in enumerate(items):
            if name in index:
                raise ValueError(f"duplicate variable name {name!r}")
            if not states:
                raise ValueError(f"variable {name!r} has no states")
            if len(set(states)) != len(states):
                raise ValueError(f"variable {name!r} has repeated state names")
            index[name] = pos
        object.__setattr__(self, "index", index)

    @classmethod
    def binary(cls, names: Iterable[str]) -> "VariableSpace":
        return cls((n, ("0", "1")) for n in names)

    @classmethod
    def with_cards(cls, cards: Sequence[int], prefix: str = "x") -> "VariableSpace":
        return cls((f"{prefix}{i + 1}", tuple(str(s) for s in range(c))) for i, c in enumerate(cards))

    def __len__(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.variables)

    @property
    def cards(self) -> tuple:
        return tuple(len(states) for _, states in self.variables)

    def name(self, i: int) -> str:
        return self.variables[self.check(i)][0]

    def states(self, i: int) -> tuple:
        return self.variables[self.check(i)][1]

    def check(self, i: int) -> int:
        if not isinstance(i, (int,)) or isinstance(i, bool) or not 0 <= i < len(self.variables):
            raise IndexOutOfRange(f"variable index {i!r} out of range for {len(self.variables)} variables")
        return i

    def resolve(self, ref: NodeRef) -> int:
        if isinstance(ref, str):
            if ref in self.index:
                return self.index[ref]
            raise IndexOutOfRange(f"unknown variable {ref!r}")
        return self.check(int(ref))

    def resolve_set(self, refs: Iterable[NodeRef] | None) -> frozenset:
        if refs is None:
            return frozenset()
        if isinstance(refs, (str, int)):
            refs = [refs]
        return frozenset(self.resolve(r) for r in refs)

    def state_index(self, i: int, state) -> int:
        states = self.states(i)
        if isinstance(state, str):
            if state in states:
                return states.index(state)
            raise IndexOutOfRange(f"variable {self.name(i)!r} has no state {state!r}")
        s = int(state)
        if not 0 <= s < len(states):
            raise IndexOutOfRange(f"state {s} out of range for {self.name(i)!r}")
        return s

    def format_set(self, nodes: Iterable[int]) -> str:
        return ",".join(self.name(i) for i in sorted(nodes))

    def extended(self, name: str, states: Sequence[str]) -> "VariableSpace":
        return VariableSpace(list(self.variables) + [(name, tuple(states))])


# -- independencies ---------------------------------------------------------


@dataclass(frozen=True, order=False)
class Independency:
    """The triple ``(J ⊥ K | E)`` in canonical form.

    Build through :meth:`make`, which strips any overlap with ``E`` and orders
    the pair so that ``min(J) < min(K)``.
    """

    j: frozenset
    k: frozenset
    e: frozenset = frozenset()

    @classmethod
    def make(cls, j: Iterable[int], k: Iterable[int], e: Iterable[int] = ()) -> "Independency":
        j, k, e = frozenset(j), frozenset(k), frozenset(e)
        if j & k:
            raise SetsNotDisjoint(f"J and K overlap in {sorted(j & k)}")
        j, k = j - e, k - e
        if not j or not k:
            raise SetsNotDisjoint("J and K must be nonempty after removing E")
        if min(k) < min(j):
            j, k = k, j
        return cls(j, k, e)

    @property
    def nodes(self) -> frozenset:
        return self.j | self.k | self.e

    def is_all_encompassing(self, n: int) -> bool:
        return len(self.j) + len(self.k) + len(self.e) == n

    def sort_key(self):
        return (tuple(sorted(self.j)), tuple(sorted(self.k)), tuple(sorted(self.e)))

    def check_range(self, n: int) -> None:
        for i in self.nodes:
            if not 0 <= i < n:
                raise IndexOutOfRange(f"variable index {i} out of range for {n} variables")

    def format(self, space: VariableSpace | None = None) -> str:
        fmt = space.format_set if space is not None else (lambda s: ",".join(str(i) for i in sorted(s)))
        return f"({fmt(self.j)} ⊥ {fmt(self.k)} | {fmt(self.e)})"

    def __str__(self) -> str:
        return self.format()


class ISet:
    """Immutable, canonically ordered collection of independencies."""

    __slots__ = ("members", "_set")

    def __init__(self, members: Iterable[Independency] = ()):
        uniq = set(members)
        self.members = tuple(sorted(uniq, key=Independency.sort_key))
        self._set = frozenset(uniq)

    def __iter__(self) -> Iterator[Independency]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, item) -> bool:
        return item in self._set

    def __eq__(self, other) -> bool:
        return isinstance(other, ISet) and self._set == other._set

    def __hash__(self):
        return hash(self._set)

    def __le__(self, other: "ISet") -> bool:
        return self._set <= other._set

    def issubset(self, other: "ISet") -> bool:
        return self._set <= other._set

    def __repr__(self) -> str:
        return "ISet([" + ", ".join(map(str, self.members)) + "])"


def iter_triples(n: int, *, all_encompassing: bool = False) -> Iterator[Independency]:
    """Yield every canonical triple of disjoint sets over ``n`` nodes."""
    labels = (1, 2, 3) if all_encompassing else (0, 1, 2, 3)
    for assign in itertools.product(labels, repeat=n):
        j = [i for i, a in enumerate(assign) if a == 1]
        k = [i for i, a in enumerate(assign) if a == 2]
        if not j or not k or j[0] > k[0]:
            continue
        e = [i for i, a in enumerate(assign) if a == 3]
        yield Independency(frozenset(j), frozenset(k), frozenset(e))


def _check_enumeration(n: int, limit: int | None) -> None:
    limit = get_settings().enum_limit if limit is None else limit
    if n > limit:
        raise GraphTooLargeForGlobalEnumeration(f"{n} nodes exceeds enumeration limit {limit}")


# -- graphs -----------------------------------------------------------------


@dataclass(frozen=True)
class Dag:
    space: VariableSpace
    arrows: frozenset  # {(parent, child)}
    _pa: tuple = field(init=False, repr=False, compare=False)
    _ch: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.space)
        pa = [set() for _ in range(n)]
        ch = [set() for _ in range(n)]
        for a, b in self.arrows:
            pa[b].add(a)
            ch[a].add(b)
        object.__setattr__(self, "_pa", tuple(frozenset(s) for s in pa))
        object.__setattr__(self, "_ch", tuple(frozenset(s) for s in ch))

    @property
    def n(self) -> int:
        return len(self.space)

    def pa(self, j: int) -> frozenset:
        return self._pa[self.space.check(j)]

    def ch(self, j: int) -> frozenset:
        return self._ch[self.space.check(j)]

    def adjacency(self) -> list:
        return [set(self._pa[i] | self._ch[i]) for i in range(self.n)]

    def topological_order(self) -> list:
        indeg = [len(p) for p in self._pa]
        ready = [i for i in range(self.n) if indeg[i] == 0]
        order = []
        while ready:
            ready.sort()
            v = ready.pop(0)
            order.append(v)
            for c in sorted(self._ch[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return order

    def descendants(self, j: int) -> frozenset:
        return _closure(self._ch, j)

    def ancestors(self, j: int) -> frozenset:
        return _closure(self._pa, j)

    def skeleton(self) -> "Ug":
        return Ug(self.space, frozenset(tuple(sorted(a)) for a in self.arrows))


@dataclass(frozen=True)
class Ug:
    space: VariableSpace
    links: frozenset  # {(a, b)} with a < b
    _ne: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ne = [set() for _ in range(len(self.space))]
        for a, b in self.links:
            ne[a].add(b)
            ne[b].add(a)
        object.__setattr__(self, "_ne", tuple(frozenset(s) for s in ne))

    @property
    def n(self) -> int:
        return len(self.space)

    def ne(self, j: int) -> frozenset:
        return self._ne[self.space.check(j)]

    def adjacency(self) -> list:
        return [set(s) for s in self._ne]


Graph = Union[Dag, Ug]


def _closure(step: Sequence[frozenset], j: int) -> frozenset:
    seen = set()
    todo = list(step[j])
    while todo:
        v = todo.pop()
        if v not in seen:
            seen.add(v)
            todo.extend(step[v])
    return frozenset(seen)


def _find_cycle(n: int, children: Sequence[set]) -> list | None:
    color = [0] * n
    parent = [-1] * n
    for root in range(n):
        if color[root]:
            continue
        stack = [(root, iter(sorted(children[root])))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
            elif color[nxt] == 1:
                cycle = [nxt]
                u = v
                while u != nxt:
                    cycle.append(u)
                    u = parent[u]
                cycle.append(nxt)
                return cycle[::-1]
            elif color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = v
                stack.append((nxt, iter(sorted(children[nxt]))))
    return None


def build_dag(space: VariableSpace, arrows: Iterable[tuple]) -> Dag:
    """Validate ``arrows`` (parent, child) and return a :class:`Dag`.

    Names are accepted in place of positions. Raises :class:`SelfEdge`,
    :class:`DuplicateEdge`, :class:`IndexOutOfRange` or :class:`CycleDetected`.
    """
    seen = set()
    children = [set() for _ in range(len(space))]
    for a, b in arrows:
        a, b = space.resolve(a), space.resolve(b)
        if a == b:
            raise SelfEdge(f"self-arrow on {space.name(a)}")
        if (a, b) in seen:
            raise DuplicateEdge(f"duplicate arrow {space.name(a)}->{space.name(b)}")
        seen.add((a, b))
        children[a].add(b)
    cycle = _find_cycle(len(space), children)
    if cycle is not None:
        raise CycleDetected([space.name(i) for i in cycle])
    return Dag(space, frozenset(seen))


def all_dags(space: VariableSpace) -> Iterator[Dag]:
    """Every labelled DAG on ``space`` (543 for four nodes)."""
    n = len(space)
    pairs = list(itertools.combinations(range(n), 2))
    for choice in itertools.product(range(3), repeat=len(pairs)):
        arrows = [(a, b) if c == 1 else (b, a) for (a, b), c in zip(pairs, choice) if c]
        children = [set() for _ in range(n)]
        for a, b in arrows:
            children[a].add(b)
        if _find_cycle(n, children) is None:
            yield Dag(space, frozenset(arrows))


def build_ug(space: VariableSpace, links: Iterable[tuple]) -> Ug:
    seen = set()
    for a, b in links:
        a, b = space.resolve(a), space.resolve(b)
        if a == b:
            raise SelfEdge(f"self-link on {space.name(a)}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise DuplicateEdge(f"duplicate link {space.name(a)}-{space.name(b)}")
        seen.add(key)
    return Ug(space, frozenset(seen))


# -- relatives --------------------------------------------------------------


@dataclass(frozen=True)
class RelativeSets:
    node: int
    pa: frozenset
    ch: frozenset
    an: frozenset
    de: frozenset
    neg_de: frozenset
    neg_an: frozenset

    def bar(self, name: str) -> frozenset:
        """Closure ``s(j) ∪ {j}`` of one of the six sets, e.g. ``bar("de")``."""
        return getattr(self, name) | {self.node}


def relatives(dag: Dag, j: NodeRef) -> RelativeSets:
    j = dag.space.resolve(j)
    everyone = frozenset(range(dag.n))
    an = dag.ancestors(j)
    de = dag.descendants(j)
    return RelativeSets(
        node=j,
        pa=dag.pa(j),
        ch=dag.ch(j),
        an=an,
        de=de,
        neg_de=everyone - de - {j},
        neg_an=everyone - an - {j},
    )


def neighbors(ug: Ug, j: NodeRef) -> frozenset:
    return ug.ne(ug.space.resolve(j))


def super_cliques(g: Graph) -> list:
    """Maximal fully connected node sets, arrow direction ignored.

    Bron–Kerbosch with pivoting; output is a list of frozensets sorted by
    their sorted member tuples.
    """
    adj = g.adjacency()
    found = []

    def expand(r, p, x):
        if not p and not x:
            found.append(frozenset(r))
            return
        pivot = max(p | x, key=lambda u: len(adj[u] & p))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(range(g.n)), set())
    return sorted(found, key=lambda c: tuple(sorted(c)))


def moral_graph(dag: Dag) -> Ug:
    links = {tuple(sorted(a)) for a in dag.arrows}
    for v in range(dag.n):
        for a, b in itertools.combinations(sorted(dag.pa(v)), 2):
            links.add((a, b))
    return Ug(dag.space, frozenset(links))


# -- separation -------------------------------------------------------------


def _validated(g: Graph, i: Independency) -> Independency:
    if not isinstance(i, Independency):
        j, k, e = i
        i = Independency.make(j, k, e)
    i.check_range(g.n)
    if i.j & i.k:
        raise SetsNotDisjoint("J and K overlap")
    return i


def d_separated_dag(dag: Dag, i: Independency) -> bool:
    """Directed separation by reachability over (node, direction) states.

    A ball enters a node either from a child ("up") or from a parent
    ("down"). Non-colliders pass unless observed; a collider passes only when
    it or one of its descendants is in E.
    """
    i = _validated(dag, i)
    e = i.e
    opens_collider = set(e)
    for v in e:
        opens_collider |= dag.ancestors(v)

    up, down = 0, 1
    todo = deque((s, up) for s in i.j)
    visited = set()
    while todo:
        v, came = todo.popleft()
        if (v, came) in visited:
            continue
        visited.add((v, came))
        if v not in e and v in i.k:
            return False
        if came == up:
            if v not in e:
                todo.extend((p, up) for p in dag.pa(v))
                todo.extend((c, down) for c in dag.ch(v))
        else:
            if v not in e:
                todo.extend((c, down) for c in dag.ch(v))
            if v in opens_collider:
                todo.extend((p, up) for p in dag.pa(v))
    return True


def separated_ug(ug: Ug, i: Independency) -> bool:
    """True iff deleting E disconnects J from K."""
    i = _validated(ug, i)
    seen = set(i.j)
    todo = deque(i.j)
    while todo:
        v = todo.popleft()
        for w in ug.ne(v):
            if w in i.e or w in seen:
                continue
            if w in i.k:
                return False
            seen.add(w)
            todo.append(w)
    return True


def separated(g: Graph, i: Independency) -> bool:
    return d_separated_dag(g, i) if isinstance(g, Dag) else separated_ug(g, i)


def all_simple_paths(g: Graph, source: int, target: int) -> Iterator[tuple]:
    adj = g.adjacency()
    stack = [(source, (source,))]
    while stack:
        v, path = stack.pop()
        if v == target:
            yield path
            continue
        for w in sorted(adj[v], reverse=True):
            if w not in path:
                stack.append((w, path + (w,)))


def path_blocked(g: Graph, path: Sequence[int], e: frozenset) -> bool:
    """Blocking test for one path, straight from the definition."""
    if isinstance(g, Ug):
        return any(v in e for v in path)
    for pos in range(1, len(path) - 1):
        prev, v, nxt = path[pos - 1], path[pos], path[pos + 1]
        collider = (prev, v) in g.arrows and (nxt, v) in g.arrows
        if collider:
            if not ((g.descendants(v) | {v}) & e):
                return True
        elif v in e:
            return True
    return False


def separated_by_paths(g: Graph, i: Independency) -> bool:
    """Exhaustive oracle: enumerate every simple path from J to K."""
    i = _validated(g, i)
    for s in i.j:
        for t in i.k:
            for path in all_simple_paths(g, s, t):
                if not path_blocked(g, path, i.e):
                    return False
    return True


# -- graphic I-sets ---------------------------------------------------------


def graphic_iset(g: Graph, kind: str, limit: int | None = None) -> ISet:
    """``loc`` / ``pair`` / ``glo`` independencies read off a graph.

    ``pair`` is only defined for undirected graphs. ``glo`` enumerates every
    disjoint triple and is guarded by ``limit`` (default: settings).
    """
    n = g.n
    everyone = frozenset(range(n))
    members = []
    if kind == "loc":
        for j in range(n):
            if isinstance(g, Dag):
                rel = relatives(g, j)
                k, e = rel.neg_de - rel.pa, rel.pa
            else:
                e = g.ne(j)
                k = everyone - e - {j}
            if k:
                members.append(Independency.make({j}, k, e))
    elif kind == "pair":
        if isinstance(g, Dag):
            raise ValueError("pairwise I-set is defined for undirected graphs only")
        for a, b in itertools.combinations(range(n), 2):
            if b not in g.ne(a):
                members.append(Independency.make({a}, {b}, everyone - {a, b}))
    elif kind == "glo":
        _check_enumeration(n, limit)
        members = [t for t in iter_triples(n) if separated(g, t)]
    else:
        raise ValueError(f"unknown graphic I-set kind {kind!r}")
    return ISet(members)


def d_glo(g: Graph, limit: int | None = None) -> list:
    """Pairs (J, K) separated given everything else, in canonical order."""
    _check_enumeration(g.n, limit)
    return [(t.j, t.k) for t in iter_triples(g.n, all_encompassing=True) if separated(g, t)]
