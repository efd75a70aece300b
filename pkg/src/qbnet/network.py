"""The ``.qbn`` network file format.

A ``.qbn`` file is a YAML document tagged ``format: qbn/1``. Complex numbers
are two-element ``[re, im]`` lists. See ``docs/qbn-format.md`` for the full
grammar; :func:`serialize_network` writes the canonical form.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from qbnet.amplitudes import (
    BayesNet,
    MarkovNet,
    ThetaField,
    build_amplitude_from_bnet,
    build_amplitude_from_mnet,
    replace_diag_with_traced_node,
    theta_field,
)
from qbnet.config import get_settings
from qbnet.density import MeasurementPlan
from qbnet.errors import NetworkSyntaxError, QbnetError, ValidationError
from qbnet.graph import Dag, Ug, VariableSpace, build_dag, build_ug
from qbnet.independence import MARKERS, canonical_marker
from qbnet.tensor import AmplitudeTensor

FORMAT_TAG = "qbn/1"
KINDS = ("bayesian", "markov")
_TOP_KEYS = ("format", "name", "description", "kind", "variables", "edges", "tables", "affinities", "markers", "reference")


@dataclass(frozen=True)
class NetworkFile:
    name: str
    kind: str
    net: object  # BayesNet or MarkovNet
    markers: dict = field(default_factory=dict)  # node index -> marker string
    reference: dict | None = None  # node index -> state index
    description: str = ""

    @property
    def space(self) -> VariableSpace:
        return self.net.space

    @property
    def graph(self):
        return self.net.dag if self.kind == "bayesian" else self.net.ug

    def amplitude(self) -> AmplitudeTensor:
        if self.kind == "bayesian":
            return build_amplitude_from_bnet(self.net)
        return build_amplitude_from_mnet(self.net)

    def theta_field(self, reference: dict | None = None) -> ThetaField:
        """Phase field; a reference declared in the file is honoured even where A vanishes."""
        if reference is not None:
            return theta_field(self.amplitude(), reference)
        if self.reference is not None:
            return theta_field(self.amplitude(), self.reference, zero_reference="absolute")
        return theta_field(self.amplitude())

    def plan(self) -> MeasurementPlan:
        vis, asum, psum, pre = set(), set(), set(), set()
        for v in range(len(self.space)):
            marker = self.markers.get(v)
            kind = canonical_marker(marker)[0] if marker else "visible_post"
            if kind == "entry_sum":
                asum.add(v)
            elif kind == "trace":
                psum.add(v)
            else:
                vis.add(v)
                if kind == "visible_pre":
                    pre.add(v)
        return MeasurementPlan(vis, asum, psum, pre)


# -- parsing ---------------------------------------------------------------


def _plain(node, path: str, lines: dict):
    """Convert a composed YAML node to Python, recording each path's line."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
            key = str(key)
            out[key] = _plain(v, f"{path}.{key}" if path else key, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


class _Ctx:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: str, reason: str):
        line = self.lines.get(path)
        probe = path
        while line is None and probe:
            probe = probe.rpartition(".")[0] if "." in probe else probe.rpartition("[")[0]
            line = self.lines.get(probe)
        raise ValidationError(path, reason, line)


def _complex(ctx, value, path) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, list)
        and len(value) == 2
        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        return complex(float(value[0]), float(value[1]))
    ctx.fail(path, "expected a number or an [re, im] pair")


def _state_index(ctx, space, var, state, path) -> int:
    states = space.states(var)
    if str(state) not in states:
        ctx.fail(path, f"variable {space.name(var)!r} has no state {state!r}")
    return states.index(str(state))


def parse_network(text: str) -> NetworkFile:
    """Parse and validate a ``.qbn`` document."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise NetworkSyntaxError(str(getattr(exc, "problem", exc)), mark.line + 1 if mark else None) from None
    if node is None:
        raise NetworkSyntaxError("empty document", 1)
    lines: dict = {}
    data = _plain(node, "", lines)
    ctx = _Ctx(lines)
    if not isinstance(data, dict):
        ctx.fail("", "top level must be a mapping")
    for key in data:
        if key not in _TOP_KEYS:
            ctx.fail(key, "unknown field")
    if data.get("format") != FORMAT_TAG:
        ctx.fail("format", f"expected {FORMAT_TAG!r}")
    kind = data.get("kind")
    if kind not in KINDS:
        ctx.fail("kind", f"expected one of {', '.join(KINDS)}")

    raw_vars = data.get("variables")
    if not isinstance(raw_vars, list) or not raw_vars:
        ctx.fail("variables", "expected a nonempty list")
    items = []
    for i, v in enumerate(raw_vars):
        path = f"variables[{i}]"
        if not isinstance(v, dict) or set(v) != {"name", "states"}:
            ctx.fail(path, "expected a mapping with 'name' and 'states'")
        if not isinstance(v["states"], list) or not v["states"]:
            ctx.fail(f"{path}.states", "expected a nonempty list")
        items.append((str(v["name"]), [str(s) for s in v["states"]]))
    try:
        space = VariableSpace(items)
    except ValueError as exc:
        ctx.fail("variables", str(exc))

    edges = []
    for i, e in enumerate(data.get("edges") or []):
        if not isinstance(e, list) or len(e) != 2:
            ctx.fail(f"edges[{i}]", "expected a [from, to] pair")
        for end in e:
            if str(end) not in space.index:
                ctx.fail(f"edges[{i}]", f"unknown variable {end!r}")
        edges.append((str(e[0]), str(e[1])))
    try:
        graph = build_dag(space, edges) if kind == "bayesian" else build_ug(space, edges)
    except QbnetError as exc:
        ctx.fail("edges", str(exc))

    if kind == "bayesian":
        if "affinities" in data:
            ctx.fail("affinities", "bayesian nets take 'tables'")
        net = BayesNet(graph, _parse_tables(ctx, space, graph, data.get("tables")))
        for j, t in net.tables.items():
            norms = np.sum(np.abs(t) ** 2, axis=0)
            bad = np.abs(norms - 1) > get_settings().norm_tol
            if np.any(bad):
                where = tuple(int(v) for v in np.argwhere(bad)[0]) if bad.ndim else ()
                ctx.fail(f"tables.{space.name(j)}", f"column {where} has squared norm {norms[where]:.12f}, expected 1")
    else:
        if "tables" in data:
            ctx.fail("tables", "markov nets take 'affinities'")
        affs = _parse_affinities(ctx, space, graph, data.get("affinities"))
        try:
            net = MarkovNet(graph, affs)
        except ValidationError as exc:
            ctx.fail(exc.path, exc.reason)

    markers = {}
    raw_markers = data.get("markers") or {}
    if not isinstance(raw_markers, dict):
        ctx.fail("markers", "expected a mapping")
    for name, marker in raw_markers.items():
        path = f"markers.{name}"
        if name not in space.index:
            ctx.fail(path, "unknown variable")
        marker = str(marker)
        try:
            m_kind, state = canonical_marker(marker)
        except ValueError:
            ctx.fail(path, f"marker must be one of {', '.join(MARKERS)}")
        if state is not None:
            if m_kind != "entry":
                ctx.fail(path, "only 'entry' markers take a state")
            _state_index(ctx, space, space.index[name], state, path)
        markers[space.index[name]] = marker

    reference = None
    if data.get("reference") is not None:
        raw = data["reference"]
        if not isinstance(raw, dict) or set(raw) != set(space.names):
            ctx.fail("reference", "must assign a state to every variable")
        reference = {space.index[n]: _state_index(ctx, space, space.index[n], s, f"reference.{n}") for n, s in raw.items()}

    return NetworkFile(
        name=str(data.get("name") or ""),
        kind=kind,
        net=net,
        markers=markers,
        reference=reference,
        description=str(data.get("description") or ""),
    )


def _parse_tables(ctx, space, dag: Dag, raw) -> dict:
    if not isinstance(raw, dict):
        ctx.fail("tables", "expected a mapping from node name to table rows")
    tables = {}
    for name in raw:
        if name not in space.index:
            ctx.fail(f"tables.{name}", "unknown variable")
    for j in range(len(space)):
        name = space.name(j)
        path = f"tables.{name}"
        if name not in raw:
            ctx.fail("tables", f"missing table for node {name!r}")
        parents = sorted(dag.pa(j))
        shape = (space.cards[j],) + tuple(space.cards[p] for p in parents)
        table = np.zeros(shape, dtype=complex)
        seen = set()
        rows = raw[name]
        if not isinstance(rows, list):
            ctx.fail(path, "expected a list of {given, amp} rows")
        for r, row in enumerate(rows):
            rpath = f"{path}[{r}]"
            if not isinstance(row, dict) or not set(row) <= {"given", "amp"} or "amp" not in row:
                ctx.fail(rpath, "expected a mapping with 'given' and 'amp'")
            given = row.get("given") or {}
            if not isinstance(given, dict) or set(given) != {space.name(p) for p in parents}:
                ctx.fail(f"{rpath}.given", f"must assign exactly the parents [{', '.join(space.name(p) for p in parents)}]")
            key = tuple(_state_index(ctx, space, p, given[space.name(p)], f"{rpath}.given") for p in parents)
            if key in seen:
                ctx.fail(f"{rpath}.given", "duplicate parent assignment")
            seen.add(key)
            amp = row["amp"]
            if not isinstance(amp, list) or len(amp) != space.cards[j]:
                ctx.fail(f"{rpath}.amp", f"expected {space.cards[j]} amplitudes")
            for s, val in enumerate(amp):
                table[(s,) + key] = _complex(ctx, val, f"{rpath}.amp[{s}]")
        expected = int(np.prod(shape[1:], dtype=np.int64))
        if len(seen) != expected:
            ctx.fail(path, f"{len(seen)} parent assignments given, {expected} required")
        tables[j] = table
    return tables


def _parse_affinities(ctx, space, ug: Ug, raw) -> dict:
    if not isinstance(raw, list):
        ctx.fail("affinities", "expected a list of {clique, values}")
    affs = {}
    for r, item in enumerate(raw):
        path = f"affinities[{r}]"
        if not isinstance(item, dict) or set(item) != {"clique", "values"}:
            ctx.fail(path, "expected a mapping with 'clique' and 'values'")
        names = item["clique"]
        if not isinstance(names, list) or not names:
            ctx.fail(f"{path}.clique", "expected a nonempty list of variable names")
        for n in names:
            if str(n) not in space.index:
                ctx.fail(f"{path}.clique", f"unknown variable {n!r}")
        key = tuple(sorted(space.index[str(n)] for n in names))
        if key in affs:
            ctx.fail(f"{path}.clique", "duplicate clique")
        shape = tuple(space.cards[i] for i in key)
        vals = item["values"]
        size = int(np.prod(shape, dtype=np.int64))
        if not isinstance(vals, list) or len(vals) != size:
            ctx.fail(f"{path}.values", f"expected {size} values in row-major order")
        arr = np.array([_complex(ctx, v, f"{path}.values[{s}]") for s, v in enumerate(vals)]).reshape(shape)
        affs[key] = arr
    return affs


def load_network(path) -> NetworkFile:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


# -- serialization ---------------------------------------------------------


def _num(x: float):
    x = float(x)
    return 0.0 if x == 0 else x


def _pair(z: complex) -> list:
    return [_num(z.real), _num(z.imag)]


class _Dumper(yaml.SafeDumper):
    pass


def _flow_list(dumper, data):
    flow = all(not isinstance(x, (list, dict)) for x in data) or all(
        isinstance(x, list) and all(not isinstance(y, (list, dict)) for y in x) for x in data
    )
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _flow_list)


def to_document(nf: NetworkFile) -> dict:
    space = nf.space
    doc = {"format": FORMAT_TAG, "name": nf.name}
    if nf.description:
        doc["description"] = nf.description
    doc["kind"] = nf.kind
    doc["variables"] = [{"name": n, "states": list(s)} for n, s in space.variables]
    if nf.kind == "bayesian":
        arrows = sorted(nf.graph.arrows, key=lambda e: (e[1], e[0]))
        doc["edges"] = [[space.name(a), space.name(b)] for a, b in arrows]
        tables = {}
        for j in range(len(space)):
            parents = sorted(nf.graph.pa(j))
            rows = []
            t = nf.net.tables[j]
            for key in itertools.product(*(range(space.cards[p]) for p in parents)):
                given = {space.name(p): space.states(p)[s] for p, s in zip(parents, key)}
                rows.append({"given": given, "amp": [_pair(t[(s,) + key]) for s in range(space.cards[j])]})
            tables[space.name(j)] = rows
        doc["tables"] = tables
    else:
        doc["edges"] = [[space.name(a), space.name(b)] for a, b in sorted(nf.graph.links)]
        doc["affinities"] = [
            {"clique": [space.name(i) for i in key], "values": [_pair(z) for z in nf.net.affinities[key].reshape(-1)]}
            for key in sorted(nf.net.affinities)
        ]
    if nf.markers:
        doc["markers"] = {space.name(v): nf.markers[v] for v in sorted(nf.markers)}
    if nf.reference is not None:
        doc["reference"] = {space.name(v): space.states(v)[nf.reference[v]] for v in range(len(space))}
    return doc


def serialize_network(nf: NetworkFile) -> str:
    """Canonical text: fixed field order, parents row-major, shortest float repr."""
    return yaml.dump(to_document(nf), Dumper=_Dumper, sort_keys=False, allow_unicode=True, width=100)


def save_network(nf: NetworkFile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_network(nf))


def rewrite_diag(nf: NetworkFile) -> NetworkFile:
    """Replace every ``diag`` marker by an appended, traced copy node."""
    net, markers = nf.net, dict(nf.markers)
    reference = None if nf.reference is None else dict(nf.reference)
    for node in sorted(v for v, m in nf.markers.items() if canonical_marker(m)[0] == "diag"):
        net, new = replace_diag_with_traced_node(net, node)
        markers.pop(node)
        if new is not None:
            markers[new] = "trace"
            if reference is not None:
                reference[new] = reference[node]
    return replace(nf, net=net, markers=markers, reference=reference)
