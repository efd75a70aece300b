import io
import json

import pytest

from qbnet.cli import EXIT_ERROR, EXIT_FALSE, EXIT_TRUE, EXIT_USAGE, main
from qbnet.fixtures import fixture_text


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def run_json(*argv):
    code, out, err = run(*argv, "--format", "json")
    return code, json.loads(out)


@pytest.fixture
def diamond_file(tmp_path):
    path = tmp_path / "diamond.qbn"
    path.write_text(fixture_text("diamond-bayes"))
    return str(path)


def test_dsep_diamond_true(diamond_file):
    code, rec = run_json("dsep", diamond_file, "--j", "x1", "--k", "x4", "--e", "x2,x3", "--oracle")
    assert code == EXIT_TRUE
    assert rec["schema"] == "qbnet.report/1"
    assert rec["result"]["separated"] is True and rec["result"]["path_oracle"] is True


def test_dsep_false(diamond_file):
    code, rec = run_json("dsep", diamond_file, "--j", "x2", "--k", "x3", "--e", "x1,x4")
    assert code == EXIT_FALSE and rec["verdict"] is False


def test_indep_counterexamples():
    code, rec = run_json("indep", "builtin:counterexample-1", "--tau", "A", "--j", "x1", "--k", "x2")
    assert code == EXIT_FALSE and rec["result"]["value"] > 0.1
    code, rec = run_json("indep", "builtin:counterexample-1", "--tau", "CMIP", "--j", "x1", "--k", "x2")
    assert code == EXIT_TRUE
    code, rec = run_json("indep", "builtin:counterexample-2", "--tau", "CMIP", "--j", "x1", "--k", "x2")
    assert code == EXIT_FALSE


def test_indep_indeterminate_exit():
    code, rec = run_json("indep", "builtin:counterexample-2", "--tau", "CMIP", "--j", "x1", "--k", "x2", "--tol", "0.1")
    assert code == EXIT_ERROR and rec["status"] == "indeterminate"


def test_reference_flag():
    code, rec = run_json("indep", "builtin:counterexample-1", "--tau", "A", "--j", "x1", "--k", "x2", "--e", "a", "--reference", "x1=1,x2=1,a=0")
    assert code == EXIT_TRUE
    assert rec["result"]["reference"] == "x1=1,x2=1,a=0"


def test_xi_flag():
    _, a = run_json("cmi", "builtin:counterexample-2", "--j", "x1", "--k", "x2", "--xi", "3.14159")
    _, b = run_json("cmi", "builtin:counterexample-2", "--j", "x1", "--k", "x2")
    assert a["result"]["cmi_nats"] != b["result"]["cmi_nats"]


@pytest.mark.parametrize(
    "argv,code",
    [
        (["sep", "builtin:diamond-markov", "--j", "x1", "--k", "x4", "--e", "x2,x3"], EXIT_TRUE),
        (["iset", "builtin:diamond-bayes", "--kind", "loc", "--within", "A"], EXIT_TRUE),
        (["iset", "builtin:chain", "--kind", "P"], EXIT_TRUE),
        (["factorcheck", "builtin:diamond-markov"], EXIT_TRUE),
        (["factorcheck", "builtin:chain", "--graph", "builtin:collider"], EXIT_FALSE),
        (["chain", "builtin:diamond-bayes", "--order", "x4,x3,x2,x1"], EXIT_TRUE),
        (["powerset", "builtin:diamond-markov"], EXIT_TRUE),
        (["purify", "builtin:diamond-bayes", "--keep", "x1,x2"], EXIT_TRUE),
        (["schmidt", "builtin:diamond-bayes", "--group1", "x1"], EXIT_TRUE),
        (["entropy", "builtin:chain", "--keep", "x"], EXIT_TRUE),
        (["measure", "builtin:collider-descendant", "--outcome", "x=0,a=1,y=0"], EXIT_TRUE),
        (["entangle-cert", "builtin:chain", "--j", "x", "--k", "y"], EXIT_TRUE),
        (["entangle-cert", "builtin:collider", "--j", "x", "--k", "y"], EXIT_FALSE),
        (["rules", "builtin:diamond-bayes", "--tau", "P"], EXIT_TRUE),
        (["rules", "builtin:chain", "--tau", "CMIP"], EXIT_TRUE),
        (["rewrite-diag", "builtin:chain"], EXIT_TRUE),
        (["harness", "--list"], EXIT_TRUE),
    ],
)
def test_subcommands(argv, code):
    got, out, err = run(*argv)
    assert got == code, err
    assert out.rstrip().splitlines()[-1].startswith("verdict:")


def test_harness_report_and_figure(tmp_path):
    code, rec = run_json("harness", "dsep-soundness", "--nets", "30", "--max-nodes", "5", "--seed", "7", "--figures", str(tmp_path))
    assert code == EXIT_TRUE
    assert rec["result"]["failures"] == 0 and rec["result"]["trials"] == 30
    assert (tmp_path / "harness-dsep-soundness.png").stat().st_size > 0


def test_harness_informational():
    code, rec = run_json("harness", "cmi-rules-search", "--nets", "2")
    assert code == EXIT_TRUE and rec["verdict"] is None and rec["result"]["informational"]


def test_deterministic_output():
    a = run("harness", "chain-rule", "--nets", "5", "--seed", "3", "--format", "json")[1]
    b = run("harness", "chain-rule", "--nets", "5", "--seed", "3", "--format", "json")[1]
    strip = lambda s: {k: v for k, v in json.loads(s)["result"].items() if k != "elapsed"}
    assert strip(a) == strip(b)


def test_rewrite_diag_writes(tmp_path):
    src = tmp_path / "in.qbn"
    src.write_text(fixture_text("chain") + "markers:\n  a: diag\n")
    dst = tmp_path / "out.qbn"
    code, _, _ = run("rewrite-diag", str(src), "--out", str(dst))
    assert code == EXIT_TRUE
    assert "a_diag" in dst.read_text()


def test_figures_for_measure(tmp_path):
    code, out, _ = run("measure", "builtin:chain", "--figures", str(tmp_path))
    assert code == EXIT_TRUE and (tmp_path / "measure-chain.png").exists()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["nosuch"],
        ["dsep", "builtin:diamond-markov", "--j", "x1", "--k", "x4"],
        ["dsep", "missing.qbn", "--j", "x", "--k", "y"],
        ["dsep", "builtin:nosuch", "--j", "x", "--k", "y"],
        ["indep", "builtin:chain", "--j", "x"],
        ["harness"],
        ["indep", "builtin:chain", "--tau", "Z", "--j", "x", "--k", "y"],
    ],
)
def test_usage_errors(argv):
    assert run(*argv)[0] == EXIT_USAGE


def test_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.qbn"
    bad.write_text("format: qbn/1\nkind: bayesian\nvariables: []\n")
    code, out, err = run("dsep", str(bad), "--j", "x", "--k", "y", "--format", "json")
    assert code == EXIT_ERROR
    assert json.loads(out)["error"]["type"] == "ValidationError"
    assert "line" in err
    assert run("harness", "nosuch-check")[0] == EXIT_ERROR
    assert run("dsep", "builtin:chain", "--j", "x", "--k", "zz")[0] == EXIT_ERROR
