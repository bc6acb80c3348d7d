import pytest
import sympy

from mvfield.dsl import ProblemError, load_problem, parse_problem, parse_vector_field
from mvfield.geometry import ChartSpec


def test_example_file_parses(problems_dir):
    prob = load_problem(problems_dir / "example_2_3.prob")
    assert prob.chart.base == ("x1", "x2")
    assert [name for name, _ in prob.multivector] == ["Y1", "Y2"]
    Y1 = prob.multivector[0][1]
    assert Y1["x1"] == 1 and Y1["y1"] == sympy.sympify("y1 - x1 - x2")
    assert prob.numeric["p0"] == [0, 0, 1, -0.5]


def test_semicolons_and_comments():
    prob = parse_problem("# header\nbundle { base = [x]; fiber = [y] }  # trailing\nlagrangian { L = v1_1^2/2 }\n")
    assert prob.chart.is_jet
    assert prob.lagrangian == sympy.Symbol("v1_1") ** 2 / 2


def test_jet_names_follow_labels():
    prob = parse_problem("bundle { base = [x1, x2]; fiber = [y]; jet = true }")
    assert prob.chart.jet_names == ("v1_1", "v1_2")
    prob = parse_problem("bundle { base = [t]; fiber = [q1, q2]; jet = true }")
    assert prob.chart.jet_names == ("v1_1", "v2_1")


def test_connection_block_kinds():
    prob = parse_problem("bundle { base = [x1, x2]; fiber = [y] }\nconnection { Gamma[y, x1] = y }")
    assert prob.connection["kind"] == "connection"
    assert not prob.chart.is_jet
    prob = parse_problem("bundle { base = [x0]; fiber = [y0] }\nconnection { G[y0, x0, x0] = -y0 }")
    assert prob.connection["kind"] == "jetfield" and prob.chart.is_jet
    assert prob.connection["F"] == [[sympy.Symbol("v0_0")]]


def test_symmetry_block():
    prob = parse_problem("bundle { base = [x0, x1]; fiber = [y0] }\nlagrangian { L = v0_0 }\n"
                         "symmetry { X = d/dx0; xi[x0] = x0 }")
    assert prob.symmetry["X"]["x0"] == 1
    assert prob.symmetry["xi"]["x1"] == sympy.Symbol("x0")


def test_vector_field_must_be_linear():
    chart = ChartSpec.make(["x"], ["y"])
    assert parse_vector_field("x*d/dx + d/dy", chart)["x"] == sympy.Symbol("x")
    with pytest.raises(ProblemError):
        parse_vector_field("d/dx*d/dy", chart)
    with pytest.raises(ProblemError):
        parse_vector_field("d/dx + 1", chart)
    with pytest.raises(ProblemError):
        parse_vector_field("d/dz", chart)


@pytest.mark.parametrize("text, fragment", [
    ("multivector { }", "exactly one bundle"),
    ("bundle { base = [x] }", "base and fiber"),
    ("bundle { base = [x]; fiber = [y] }\nwidget { }", "unknown block"),
    ("bundle { base = [x]; fiber = [y] }\nbundle { base = [x]; fiber = [y] }", "more than once"),
    ("bundle { base = [x]; fiber = [y] }\nsection { y = z }", "unknown variable"),
    ("bundle { base = [x]; fiber = [y] }\nsection { }", "misses"),
    ("bundle { base = [x]; fiber = [y]\n", "unterminated"),
    ("bundle { base = [x]; fiber = [y] }\nconnection { Gamma[y, x] = 1; F[y, x] = 1 }", "mix"),
    ("bundle { base = [x]; fiber = [y] }\nnumeric { h = oops }", "bad value"),
])
def test_input_errors(text, fragment):
    with pytest.raises(ProblemError) as info:
        parse_problem(text, "t.prob")
    assert fragment in str(info.value)
    assert str(info.value).startswith("t.prob")


def test_errors_carry_line_numbers():
    text = "bundle { base = [x]; fiber = [y] }\n\nmultivector {\n  Y = d/dx + (y +) * d/dy\n}\n"
    with pytest.raises(ProblemError) as info:
        parse_problem(text, "t.prob")
    assert info.value.line == 4
    assert str(info.value).startswith("t.prob:4:")


def test_missing_file():
    with pytest.raises(ProblemError):
        load_problem("/nonexistent/file.prob")
