import pytest

from src.errors import ConstantTerm, ParseError, PreconditionViolation
from src.ingest import (
    clean_expression,
    load_problem,
    parse_group_expression,
    parse_polynomial,
    parse_problem,
    tokenize,
)
from src.patching import Exponent

MOD = 5 ** 10

RING = """
name = "sample"

[ring]
variables = ["s", "t"]
relations = ["p^2*s + s*t"]
declared_ci = true

[module]
generators = 2
relations = [["p", "t"]]
"""


def test_tokenize_columns():
    tokens = tokenize("p^2*t", line=1, offset=10)
    assert [t.text for t in tokens] == ["p", "^", "2", "*", "t", ""]
    assert tokens[0].column == 11
    assert tokens[-1].kind == "end"


def test_parse_polynomial():
    f = parse_polynomial("p^2*s - 3*s*t^2 + t^4", ["s", "t"], 5, MOD, 16)
    assert f.as_dict() == {(1, 0): 25, (1, 2): MOD - 3, (0, 4): 1}


def test_typographic_signs_are_accepted():
    assert clean_expression("p·t − t**2") == "p*t - t^2"
    f = parse_polynomial("p·t − t**2", ["t"], 5, MOD, 16)
    assert f.as_dict() == {(1,): 5, (2,): MOD - 1}


@pytest.mark.parametrize("text", ["p^", "s +", "s $ t", "2*", "s t"])
def test_malformed_polynomials(text):
    with pytest.raises(ParseError):
        parse_polynomial(text, ["s", "t"], 5, MOD, 16)


def test_unknown_variable_position():
    with pytest.raises(ParseError) as caught:
        parse_polynomial("s + u", ["s", "t"], 5, MOD, 16, line=4, offset=12)
    assert caught.value.line == 4
    assert caught.value.column == 17


def test_group_expressions():
    expr = parse_group_expression("2*g1^(l^(n+1)) - g2^3 + p", 3)
    assert expr.variables() == [0, 1]
    assert expr.augmentation() == 2 - 1 + 3
    (_, factors), = [term for term in expr.terms if term[0] == 2]
    assert factors == ((0, Exponent(scale=1, l_power=1, uses_n=True)),)


@pytest.mark.parametrize("text", ["g0 - 1", "g1^x", "g1^(l^m)", "h1"])
def test_malformed_group_expressions(text):
    with pytest.raises(ParseError):
        parse_group_expression(text, 3)


def test_parse_problem(config):
    problem = parse_problem(RING, config=config)
    assert problem.name == "sample"
    assert problem.algebra.variables == ("s", "t")
    assert problem.algebra.declared_ci
    assert problem.module.generators == 2
    assert len(problem.module.relations) == 1
    assert problem.system is None


def test_module_defaults_to_free(config):
    problem = parse_problem('[ring]\nvariables = ["t"]\nrelations = ["p*t"]\n', config=config)
    assert problem.module.generators == 1
    assert not problem.module.relations


def test_precision_section_overrides(config):
    problem = parse_problem('[precision]\np = 7\nN = 10\n\n[ring]\nvariables = ["t"]\n', config=config)
    assert (problem.config.p, problem.config.N) == (7, 10)
    assert problem.algebra.config.p == 7


def test_invalid_precision(config):
    with pytest.raises(PreconditionViolation) as caught:
        parse_problem('[precision]\np = 4\n\n[ring]\nvariables = ["t"]\n', config=config)
    assert caught.value.details["errors"]


def test_unknown_precision_key(config):
    with pytest.raises(PreconditionViolation):
        parse_problem('[precision]\nq = 4\n\n[ring]\nvariables = ["t"]\n', config=config)


def test_toml_error_has_position(config):
    with pytest.raises(ParseError) as caught:
        parse_problem('[ring]\nvariables = = ["t"]\n', config=config)
    assert caught.value.line == 2


def test_relation_error_points_into_file(config):
    source = '[ring]\nvariables = ["t"]\nrelations = ["p*t + q"]\n'
    with pytest.raises(ParseError) as caught:
        parse_problem(source, config=config)
    assert caught.value.line == 3


def test_p_is_reserved(config):
    with pytest.raises(ParseError):
        parse_problem('[ring]\nvariables = ["p", "t"]\n', config=config)


def test_augmentation_shift(config):
    source = '[ring]\nvariables = ["a", "b"]\nrelations = ["a*b"]\naugmentation = [0, 25]\n'
    algebra = parse_problem(source, config=config).algebra
    assert algebra.relations[0].as_dict() == {(1, 0): 25, (1, 1): 1}
    assert algebra.codim == 1


def test_augmentation_must_lie_in_p(config):
    source = '[ring]\nvariables = ["a", "b"]\nrelations = ["a*b"]\naugmentation = [0, 1]\n'
    with pytest.raises(PreconditionViolation):
        parse_problem(source, config=config)


def test_constant_term_is_reported(config):
    with pytest.raises(ConstantTerm):
        parse_problem('[ring]\nvariables = ["t"]\nrelations = ["p + t^2"]\n', config=config)


def test_empty_file(config):
    with pytest.raises(PreconditionViolation):
        parse_problem('name = "nothing"\n', config=config)


def test_module_without_ring(config):
    with pytest.raises(PreconditionViolation):
        parse_problem('[module]\ngenerators = 1\n', config=config)


def test_wrong_relation_width(config):
    source = '[ring]\nvariables = ["t"]\n\n[module]\ngenerators = 2\nrelations = [["t"]]\n'
    with pytest.raises(PreconditionViolation):
        parse_problem(source, config=config)


def test_load_problem(tmp_path, config):
    path = tmp_path / "hyper.toml"
    path.write_text('[ring]\nvariables = ["t"]\nrelations = ["p^2*t"]\n', encoding="utf-8")
    problem = load_problem(str(path), config)
    assert problem.name == "hyper"
    assert problem.algebra.cotangent.phi.torsion_exponents == (2,)


def test_load_missing_file(tmp_path, config):
    with pytest.raises(PreconditionViolation):
        load_problem(str(tmp_path / "absent.toml"), config)


def test_patch_section(config):
    source = """
[precision]
p = 3

[patch]
ell0 = 1
offsets = [2]
levels = 2

[patch.ranks]
0 = 1
1 = 1

[patch.differentials]
1 = [["g1^(l^n) - 1"]]
"""
    problem = parse_problem(source, "tower", config)
    assert problem.levels == 2
    assert problem.system.tower.offsets == (2,)
    assert problem.system.rank(1) == 1
    assert problem.algebra is None
