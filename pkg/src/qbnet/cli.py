"""Command-line interface: ``qbnet <subcommand> ...``.

Exit codes: 0 query true or success, 1 query false, 2 error or indeterminate
result, 64 usage error. ``--format json`` emits one ``qbnet.report/1`` record.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

import numpy as np

from qbnet.amplitudes import (
    chain_factorize,
    factor_product,
    factors_according_dag,
    factors_according_ug,
    powerset_lambda,
)
from qbnet.config import settings_override
from qbnet.density import (
    measurement_distribution,
    projector_distribution,
    purify,
    quantum_cmi_detail,
    reduced_density,
    schmidt,
    superop,
    von_neumann_entropy,
)
from qbnet.errors import QbnetError
from qbnet.graph import Dag, Independency, graphic_iset, separated, separated_by_paths
from qbnet.harness import checks, run_harness
from qbnet.independence import check_rules, entanglement_zero_certificate, evaluate_tau, prob_iset
from qbnet.network import NetworkFile, load_network, rewrite_diag, serialize_network
from qbnet.numlin import hermitian_eig
from qbnet.tensor import amp_to_prob

SCHEMA = "qbnet.report/1"
EXIT_TRUE, EXIT_FALSE, EXIT_ERROR, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers --------------------------------------------------------------------


def load_net(ref: str, xi: float | None = None) -> NetworkFile:
    """A ``.qbn`` path or ``builtin:<name>``."""
    if ref.startswith("builtin:"):
        from qbnet.fixtures import load_builtin

        try:
            return load_builtin(ref.split(":", 1)[1], xi)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    try:
        return load_network(ref)
    except FileNotFoundError:
        raise UsageError(f"no such network file: {ref}") from None


def _names(text: str | None) -> list:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _nodes(nf: NetworkFile, text: str | None) -> frozenset:
    return nf.space.resolve_set(_names(text))


def _assignment(nf: NetworkFile, text: str | None) -> dict:
    """``"x1=0,x2=1"`` to ``{index: state}``."""
    out = {}
    for item in _names(text):
        name, sep, state = item.partition("=")
        if not sep:
            raise UsageError(f"expected name=state, got {item!r}")
        v = nf.space.resolve(name)
        out[v] = nf.space.state_index(v, state)
    return out


def _reference(nf: NetworkFile, text: str | None):
    if not text:
        return None
    ref = _assignment(nf, text)
    if set(ref) != set(range(len(nf.space))):
        raise UsageError("--reference must assign every variable")
    return ref


def _independency(nf: NetworkFile, args) -> Independency:
    j, k = _nodes(nf, args.j), _nodes(nf, args.k)
    if not j or not k:
        raise UsageError("--j and --k are required")
    return Independency.make(j, k, _nodes(nf, args.e))


def _label(nf: NetworkFile, scope, idx) -> str:
    return ",".join(f"{nf.space.name(v)}={nf.space.states(v)[s]}" for v, s in zip(scope, idx))


def _cx(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


# -- subcommands ----------------------------------------------------------------
# Each returns (verdict, fields, rows); verdict None means plain success.


def cmd_dsep(args):
    nf = load_net(args.net, args.xi)
    if not isinstance(nf.graph, Dag):
        raise UsageError("dsep needs a Bayesian network; use sep for Markov networks")
    return _sep_common(nf, args)


def cmd_sep(args):
    return _sep_common(load_net(args.net, args.xi), args)


def _sep_common(nf, args):
    i = _independency(nf, args)
    fast = separated(nf.graph, i)
    fields = {"independency": i.format(nf.space), "separated": fast}
    if args.oracle:
        slow = separated_by_paths(nf.graph, i)
        fields["path_oracle"] = slow
        if slow != fast:
            raise QbnetError("reachability and path oracle disagree")
    return fast, fields, []


def cmd_indep(args):
    nf = load_net(args.net, args.xi)
    i = _independency(nf, args)
    tf = nf.theta_field(_reference(nf, args.reference))
    model = amp_to_prob(nf.amplitude()) if args.tau == "P" else tf
    r = evaluate_tau(args.tau, model, i, args.tol)
    fields = {
        "tau": args.tau,
        "independency": i.format(nf.space),
        "holds": r.holds,
        "value": r.value,
        "skipped_zero_points": r.skipped,
        "indeterminate": r.indeterminate,
        "reference": _label(nf, tf.scope, tf.reference),
        "reference_fallback": tf.fallback,
    }
    return (None if r.indeterminate else r.holds), fields, []


def cmd_iset(args):
    nf = load_net(args.net, args.xi)
    if args.kind in ("loc", "pair", "glo"):
        iset = graphic_iset(nf.graph, args.kind, args.limit)
    else:
        model = amp_to_prob(nf.amplitude()) if args.kind == "P" else nf.theta_field(_reference(nf, args.reference))
        iset = prob_iset(args.kind, model, args.tol, args.limit)
    rows = [{"independency": t.format(nf.space)} for t in iset]
    fields = {"kind": args.kind, "size": len(iset)}
    verdict = None
    if args.within:
        model = amp_to_prob(nf.amplitude()) if args.within == "P" else nf.theta_field(_reference(nf, args.reference))
        missing = [t for t in iset if not evaluate_tau(args.within, model, t, args.tol).holds]
        fields["within"] = args.within
        fields["not_holding"] = [t.format(nf.space) for t in missing]
        verdict = not missing
    return verdict, fields, rows


def cmd_factorcheck(args):
    nf = load_net(args.net, args.xi)
    graph = load_net(args.graph, args.xi).graph if args.graph else nf.graph
    if graph.space.names != nf.space.names:
        raise UsageError("the graph's variables must match the network's")
    tf = nf.theta_field(_reference(nf, args.reference))
    ok = factors_according_dag(tf, graph, args.tol) if isinstance(graph, Dag) else factors_according_ug(tf, graph, args.tol)
    kind = "dag" if isinstance(graph, Dag) else "ug"
    return ok, {"graph": kind, "factors": ok}, []


def cmd_chain(args):
    nf = load_net(args.net, args.xi)
    tf = nf.theta_field(_reference(nf, args.reference))
    order = [nf.space.resolve(n) for n in _names(args.order)] or list(range(len(nf.space)))
    factors = chain_factorize(tf, order)
    res = float(np.max(np.abs(factor_product(tf.scope, factors) - tf.amplitude())))
    rows = [
        {"node": nf.space.name(f.node), "given": nf.space.format_set(f.given), "entries": int(np.size(f.table))}
        for f in factors
    ]
    tol = 1e-8 if args.tol is None else args.tol
    return res < tol, {"order": [nf.space.name(v) for v in order], "residual": res}, rows


def cmd_powerset(args):
    nf = load_net(args.net, args.xi)
    tf = nf.theta_field(_reference(nf, args.reference))
    lam = powerset_lambda(tf)
    res = float(np.max(np.abs(lam.product() - tf.amplitude())))
    rows = [
        {"subset": nf.space.format_set(s) or "{}", "max_abs_lambda": float(np.max(np.abs(t)))}
        for s, t in sorted(lam.tables.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
    ]
    tol = 1e-8 if args.tol is None else args.tol
    return res < tol, {"residual": res}, rows


def _reduced(nf, args):
    keep = _nodes(nf, args.keep) or frozenset(range(len(nf.space)))
    return reduced_density(nf.amplitude().normalize(), keep), keep


def cmd_purify(args):
    nf = load_net(args.net, args.xi)
    rho, keep = _reduced(nf, args)
    p = purify(rho)
    res = float(np.max(np.abs(p.rebuild() - rho.matrix)))
    rows = [{"j": j, "weight": float(w)} for j, w in enumerate(p.weights)]
    tol = 1e-9 if args.tol is None else args.tol
    return res < tol, {"keep": nf.space.format_set(keep), "residual": res}, rows


def cmd_schmidt(args):
    nf = load_net(args.net, args.xi)
    g1 = _nodes(nf, args.group1)
    g2 = _nodes(nf, args.group2) or frozenset(range(len(nf.space))) - g1
    a = nf.amplitude().normalize()
    s = schmidt(a, g1, g2)
    order = [a.scope.index(i) for i in s.group1 + s.group2]
    m = np.transpose(a.values, order).reshape(s.x_given_j.shape[0], -1)
    res = float(np.max(np.abs(s.matrix() - m)))
    rows = [{"j": j, "singular_value": float(w)} for j, w in enumerate(s.weights)]
    fields = {
        "group1": nf.space.format_set(g1),
        "group2": nf.space.format_set(g2),
        "schmidt_rank": int(np.sum(s.weights > 1e-12)),
        "residual": res,
    }
    return None, fields, rows


def cmd_entropy(args):
    nf = load_net(args.net, args.xi)
    rho, keep = _reduced(nf, args)
    eigs = hermitian_eig(rho.matrix)[0]
    rows = [{"j": j, "eigenvalue": float(w)} for j, w in enumerate(eigs)]
    fields = {"keep": nf.space.format_set(keep), "entropy_nats": von_neumann_entropy(rho)}
    if args.figures:
        from qbnet.plotting import spectrum_figure

        path = spectrum_figure(eigs, f"{nf.name}: spectrum of rho[{fields['keep']}]", Path(args.figures) / f"entropy-{nf.name}.png")
        fields["figure"] = str(path)
    return None, fields, rows


def cmd_cmi(args):
    nf = load_net(args.net, args.xi)
    i = _independency(nf, args)
    rho = reduced_density(nf.amplitude().normalize(), i.nodes)
    if args.diag_e and i.e:
        rho = superop(rho, "diag", i.e)
    r = quantum_cmi_detail(rho, i.j, i.k, i.e)
    fields = {"independency": i.format(nf.space), "diag_e": args.diag_e, "cmi_nats": r.value, "clamped": r.clamped}
    return None, fields, []


def cmd_measure(args):
    nf = load_net(args.net, args.xi)
    plan = nf.plan()
    a = nf.amplitude()
    dist = measurement_distribution(a, plan)
    other = projector_distribution(a, plan)
    gap = float(np.max(np.abs(dist.values - other.values)))
    rows = [
        {"outcome": _label(nf, dist.scope, idx), "probability": float(dist.values[idx])}
        for idx in np.ndindex(*dist.values.shape)
    ]
    fields = {
        "visible": nf.space.format_set(plan.vis),
        "amplitude_summed": nf.space.format_set(plan.asum),
        "probability_summed": nf.space.format_set(plan.psum),
        "path_gap": gap,
    }
    if args.outcome:
        outcome = _assignment(nf, args.outcome)
        pre = {v: s for v, s in outcome.items() if v in plan.pre}
        post = {v: s for v, s in outcome.items() if v not in plan.pre}
        from qbnet.density import conditional_measurement_prob

        fields["probability"] = conditional_measurement_prob(a, plan, post, pre)
    if args.figures:
        from qbnet.plotting import distribution_figure

        path = distribution_figure(
            [r["outcome"] for r in rows], [r["probability"] for r in rows], f"{nf.name}: measurement distribution",
            Path(args.figures) / f"measure-{nf.name}.png",
        )
        fields["figure"] = str(path)
    return None, fields, rows


def cmd_entangle_cert(args):
    nf = load_net(args.net, args.xi)
    j, k = _nodes(nf, args.j), _nodes(nf, args.k)
    if not j or not k:
        raise UsageError("--j and --k are required")
    c = entanglement_zero_certificate(nf.net, j, k, nf.markers, args.tol)
    fields = {
        "j": nf.space.format_set(j),
        "k": nf.space.format_set(k),
        "certified_zero": c.certified_zero,
        "witness": None if c.witness is None else c.net.space.format_set(c.witness),
        "upper_bound": c.upper_bound,
    }
    return c.certified_zero, fields, []


def cmd_rules(args):
    nf = load_net(args.net, args.xi)
    model = amp_to_prob(nf.amplitude()) if args.tau == "P" else nf.theta_field(_reference(nf, args.reference))
    rep = check_rules(args.tau, model, args.tol, args.limit)
    rows = [
        {"rule": name, "checked": r.checked, "fired": r.fired, "violations": len(r.violations), "note": r.note}
        for name, r in rep.rules.items()
    ]
    fields = {"tau": args.tau, "informational": rep.informational, "violations": rep.total_violations, "indeterminate": rep.indeterminate}
    return (None if rep.informational else rep.total_violations == 0), fields, rows


def cmd_harness(args):
    if args.list:
        return None, {"checks": checks()}, []
    if not args.check:
        raise UsageError("harness needs a check name (see --list)")
    params = {"max_nodes": args.max_nodes, "max_dim": args.max_dim, "samples": args.samples, "tol": args.tol}
    rep = run_harness(args.check, trials=args.nets, seed=args.seed, params=params, workers=args.workers)
    fields = {k: v for k, v in rep.to_dict().items() if k not in ("metrics", "failures")}
    fields["max_metric"] = max(rep.metrics) if rep.metrics else 0.0
    fields["failures"] = len(rep.failures)
    if args.figures:
        from qbnet.plotting import harness_figure

        fields["figure"] = str(harness_figure(rep, args.figures))
    rows = [
        {"trial": f["trial"], "seed": f["seed"], "metric": f["metric"], "net": f.get("net", ""), "independency": f.get("independency", "")}
        for f in rep.failures
    ]
    return (None if rep.informational else rep.passed), fields, rows


def cmd_rewrite_diag(args):
    nf = load_net(args.net, args.xi)
    out = rewrite_diag(nf)
    text = serialize_network(out)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        return None, {"written": args.out, "variables": list(out.space.names)}, []
    return None, {"network": text}, []


# -- parser and output ----------------------------------------------------------


def _add_ijk(p, e=True):
    p.add_argument("--j", help="comma-separated variable names")
    p.add_argument("--k", help="comma-separated variable names")
    if e:
        p.add_argument("--e", help="comma-separated conditioning variables")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("table", "json"), default="table")
    common.add_argument("--eps", type=float, default=None, help="infinitesimal for vanishing masses (default 0: strict)")
    common.add_argument("--tol", type=float, default=None, help="decision tolerance (default per quantity)")
    common.add_argument("--limit", type=int, default=None, help="node limit for exhaustive enumeration (default 8)")
    common.add_argument("--reference", help="reference assignment for phases, e.g. x1=0,x2=0,a=0")
    common.add_argument("--xi", type=float, default=None, help="phase parameter for the counterexample fixtures")
    common.add_argument("--figures", help="directory for PNG figures")

    parser = _Parser(prog="qbnet", description="Quantum and classical Bayesian/Markov network checks.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_text, net=True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if net:
            p.add_argument("net", help="network file or builtin:<name>")
        p.set_defaults(func=fn)
        return p

    p = add("dsep", cmd_dsep, "d-separation in a Bayesian network")
    _add_ijk(p)
    p.add_argument("--oracle", action="store_true", help="cross-check with exhaustive path enumeration")
    p = add("sep", cmd_sep, "graphical separation (DAG or UG)")
    _add_ijk(p)
    p.add_argument("--oracle", action="store_true")
    p = add("indep", cmd_indep, "evaluate one independence truth function")
    _add_ijk(p)
    p.add_argument("--tau", choices=("P", "A", "CMI", "CMIP"), default="A")
    p = add("iset", cmd_iset, "list a graphic or probabilistic I-set")
    p.add_argument("--kind", choices=("loc", "pair", "glo", "P", "A"), default="loc")
    p.add_argument("--within", choices=("P", "A"), help="check every member holds under this truth function")
    p = add("factorcheck", cmd_factorcheck, "does the amplitude factor according to a graph")
    p.add_argument("--graph", help="network whose graph to test against (default: its own)")
    p = add("chain", cmd_chain, "chain-rule factorization and residual")
    p.add_argument("--order", help="comma-separated variable order")
    add("powerset", cmd_powerset, "power-set (lambda) expansion and residual")
    p = add("purify", cmd_purify, "purify a reduced density matrix")
    p.add_argument("--keep", help="variables kept in the reduced density matrix")
    p = add("schmidt", cmd_schmidt, "Schmidt decomposition of the amplitude")
    p.add_argument("--group1", required=True)
    p.add_argument("--group2")
    p = add("entropy", cmd_entropy, "von Neumann entropy of a reduced density matrix")
    p.add_argument("--keep")
    p = add("cmi", cmd_cmi, "quantum conditional mutual information")
    _add_ijk(p)
    p.add_argument("--diag-e", action="store_true", help="diagonalize the conditioning variables first")
    p = add("measure", cmd_measure, "measurement distribution under the file's node markers")
    p.add_argument("--outcome", help="e.g. x=0,y=1 (pre-measured variables are conditioned on)")
    p = add("entangle-cert", cmd_entangle_cert, "certify vanishing CMI entanglement")
    _add_ijk(p, e=False)
    p = add("rules", cmd_rules, "check the reduction and combination rules")
    p.add_argument("--tau", choices=("P", "A", "CMI", "CMIP"), default="A")
    p = add("harness", cmd_harness, "run a randomized property check", net=False)
    p.add_argument("check", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("--nets", type=int, default=20, help="number of trials")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-nodes", type=int, default=None)
    p.add_argument("--max-dim", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p = add("rewrite-diag", cmd_rewrite_diag, "replace diag markers by traced copy nodes")
    p.add_argument("--out", help="output path (default: print)")
    return parser


def _json_default(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, (set, frozenset, tuple)):
        return sorted(x) if isinstance(x, (set, frozenset)) else list(x)
    return str(x)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return ", ".join(_fmt(x) for x in v) if v else "-"
    return "-" if v is None or v == "" else str(v)


def render_table(record: dict) -> str:
    lines = [f"# {record['command']}"]
    for key, value in record["result"].items():
        if key == "network":
            lines.append(value.rstrip("\n"))
            continue
        lines.append(f"{key}: {_fmt(value)}")
    rows = record["rows"]
    if rows:
        cols = list(rows[0])
        cells = [[_fmt(r[c]).replace("\n", " ") if c != "net" else ("<net>" if r[c] else "-") for c in cols] for r in rows]
        width = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        lines.append("")
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, width)).rstrip())
        lines.append("  ".join("-" * w for w in width))
        lines.extend("  ".join(x.ljust(w) for x, w in zip(row, width)).rstrip() for row in cells)
    verdict = record["verdict"]
    lines.append(f"verdict: {'-' if verdict is None else str(verdict).lower()}")
    return "\n".join(lines)


def emit(record: dict, fmt: str, stream) -> None:
    if fmt == "json":
        stream.write(json.dumps(record, default=_json_default, sort_keys=True) + "\n")
    else:
        stream.write(render_table(record) + "\n")


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    overrides = {}
    if args.eps is not None:
        overrides["eps"] = args.eps
    if args.limit is not None:
        overrides["enum_limit"] = args.limit
    record = {"schema": SCHEMA, "command": args.command}
    try:
        with settings_override(**overrides) if overrides else contextlib.nullcontext():
            verdict, fields, rows = args.func(args)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (QbnetError, ValueError, TypeError) as exc:
        record.update(verdict=None, status="error", error={"type": type(exc).__name__, "message": str(exc)}, result={}, rows=[])
        if args.format == "json":
            emit(record, "json", stdout)
        stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR
    indeterminate = bool(fields.get("indeterminate")) and args.command == "indep"
    record.update(verdict=verdict, status="indeterminate" if indeterminate else "ok", result=fields, rows=rows)
    emit(record, args.format, stdout)
    if indeterminate:
        return EXIT_ERROR
    return EXIT_FALSE if verdict is False else EXIT_TRUE


if __name__ == "__main__":
    sys.exit(main())
