import itertools
import textwrap

import numpy as np
import pytest

from qbnet.errors import NetworkSyntaxError, ValidationError
from qbnet.fixtures import builtin_names, fixture_text, generate, load_builtin, write_fixtures
from qbnet.network import load_network, parse_network, rewrite_diag, save_network, serialize_network
from qbnet.randomnets import random_bnet, random_dag, random_mnet, random_ug, rng_for
from qbnet.network import NetworkFile

SMALL = textwrap.dedent(
    """\
    format: qbn/1
    name: tiny
    kind: bayesian
    variables:
    - name: x
      states: ['0', '1']
    - name: y
      states: ['0', '1']
    edges: [[x, y]]
    tables:
      x:
      - given: {}
        amp: [0.6, 0.8]
      y:
      - given: {x: '0'}
        amp: [1, 0]
      - given: {x: '1'}
        amp: [[0, 0], [0, 1]]
    """
)


@pytest.mark.parametrize("name", builtin_names())
def test_fixture_files_match_generators(name):
    assert fixture_text(name) == serialize_network(generate(name))


@pytest.mark.parametrize("name", builtin_names())
def test_fixture_round_trip(name):
    text = fixture_text(name)
    nf = parse_network(text)
    again = serialize_network(nf)
    assert again == text
    assert serialize_network(parse_network(again)) == again
    assert nf.amplitude().normalized


def test_diamond_is_product_of_four_factors():
    nf = load_builtin("diamond-bayes")
    t = nf.net.tables
    a = nf.amplitude().values
    for x1, x2, x3, x4 in itertools.product(range(2), repeat=4):
        want = t[0][x1] * t[1][x2, x1] * t[2][x3, x1] * t[3][x4, x2, x3]
        assert a[x1, x2, x3, x4] == pytest.approx(want, abs=1e-15)


def test_parse_small():
    nf = parse_network(SMALL)
    assert nf.space.names == ("x", "y")
    np.testing.assert_allclose(nf.amplitude().values, [[0.6, 0], [0, 0.8j]])


@pytest.mark.parametrize("seed", range(5))
def test_random_round_trip(tmp_path, seed):
    rng = rng_for(seed)
    bayes = NetworkFile("b", "bayesian", random_bnet(rng, random_dag(rng, 4, 0.5)), markers={1: "entry:1"})
    markov = NetworkFile("m", "markov", random_mnet(rng, random_ug(rng, 4, 0.5)), reference={0: 0, 1: 1, 2: 0, 3: 0})
    for nf in (bayes, markov):
        path = tmp_path / f"{nf.name}.qbn"
        save_network(nf, path)
        back = load_network(path)
        assert serialize_network(back) == path.read_text()
        np.testing.assert_allclose(back.amplitude().values, nf.amplitude().values, atol=1e-15)
        assert back.markers == nf.markers and back.reference == nf.reference


def _broken(old, new):
    assert old in SMALL
    return SMALL.replace(old, new)


@pytest.mark.parametrize(
    "old,new,path,line",
    [
        ("kind: bayesian", "kind: bayes", "kind", 3),
        ("name: tiny", "name: tiny\ncolour: red", "colour", 3),
        ("amp: [0.6, 0.8]", "amp: [0.6, 0.7]", "tables.x", 12),
        ("amp: [1, 0]", "amp: [1, 0, 0]", "tables.y[0].amp", 16),
        ("given: {x: '1'}", "given: {x: '2'}", "tables.y[1].given", 17),
        ("given: {x: '1'}", "given: {x: '0'}", "tables.y[1].given", 17),
        ("edges: [[x, y]]", "edges: [[x, y], [y, x]]", "edges", 9),
        ("edges: [[x, y]]", "edges: [[x, z]]", "edges[0]", 9),
    ],
)
def test_validation_errors(old, new, path, line):
    with pytest.raises(ValidationError) as exc:
        parse_network(_broken(old, new))
    assert exc.value.path == path
    assert exc.value.line == line


def test_syntax_error_has_line():
    with pytest.raises(NetworkSyntaxError) as exc:
        parse_network("format: qbn/1\nkind: [bayesian\n")
    assert exc.value.line is not None


def test_markov_missing_clique():
    text = fixture_text("diamond-markov")
    cut = text.index("- clique", text.index("- clique") + 1)
    end = text.index("- clique", cut + 1)
    with pytest.raises(ValidationError) as exc:
        parse_network(text[:cut] + text[end:])
    assert "super-clique" in exc.value.reason


def test_markers_and_plan():
    nf = load_builtin("collider-descendant")
    plan = nf.plan()
    assert plan.psum == {3} and plan.vis == {0, 1, 2}
    with pytest.raises(ValidationError):
        parse_network(SMALL + "markers:\n  x: sideways\n")
    with pytest.raises(ValidationError):
        parse_network(SMALL + "markers:\n  x: trace:1\n")
    assert parse_network(SMALL + "markers:\n  x: entry:1\n").markers == {0: "entry:1"}


def test_rewrite_diag():
    nf = parse_network(SMALL + "markers:\n  x: diag\n")
    out = rewrite_diag(nf)
    assert out.space.names == ("x", "y", "x_diag")
    assert out.markers == {2: "trace"}
    assert (2, 0) in out.graph.arrows


def test_reference_declared_kept_absolute():
    nf = load_builtin("counterexample-1")
    assert nf.reference == {0: 0, 1: 0, 2: 0}
    assert nf.theta_field().absolute


def test_xi_parameter():
    a = load_builtin("counterexample-2", xi=np.pi).amplitude().values
    assert a[1, 1, 1] == pytest.approx(-1 / np.sqrt(8))


def test_write_fixtures(tmp_path):
    paths = write_fixtures(tmp_path)
    assert len(paths) == len(builtin_names())
    for p in paths:
        assert p.read_text() == fixture_text(p.stem)
