import pytest

from src.errors import HomologySpread, NoRecurringClass, PreconditionViolation, TransferFailed
from src.evaluate import SPREAD_TOWER
from src.ingest import parse_group_expression, parse_problem
from src.patching import (
    GroupRingExpr,
    PatchTower,
    check_duality,
    check_quotient_iso,
    dual_system,
    endomorphism_transfer,
    level_complex,
    patch,
    residue_homology,
    same_system,
)


@pytest.fixture
def system(member):
    def build(name):
        problem = member(name)
        return problem.system, problem.config

    return build


@pytest.mark.parametrize("name, levels, lengths, free", [
    ("patch-constant", 3, [3, 18, 81], [True, True, True]),
    ("patch-two-term", 3, [3, 12, 27], [True, False, False]),
    ("patch-rank-two", 2, [18, 324], [True, True]),
])
def test_patched_module(system, name, levels, lengths, free):
    sys_, config = system(name)
    patched = patch(sys_, s_max=levels, config=config)
    assert [lv.length for lv in patched.levels] == lengths
    assert [lv.free for lv in patched.levels] == free
    assert patched.top == levels


def test_patched_length_matches_ring_length(system):
    sys_, config = system("patch-constant")
    patched = patch(sys_, s_max=2, config=config)
    for row in patched.summary():
        assert row["length"] == row["ring_length"]
        assert row["minimal_generators"] == 1


def test_minimal_generators_count_cyclic_summands(system):
    sys_, config = system("patch-rank-two")
    patched = patch(sys_, s_max=2, config=config)
    assert [row["minimal_generators"] for row in patched.summary()] == [2, 2]
    assert all(lv.free for lv in patched.levels)


def test_two_term_level_two(system):
    sys_, config = system("patch-two-term")
    level = patch(sys_, s_max=2, config=config).level(2)
    assert level.klass.torsion_exponents == (2,) * 6
    assert level.recurring_from == 2
    assert level.minimal_generators == 1
    assert not level.free


def test_missing_level(system):
    sys_, config = system("patch-constant")
    with pytest.raises(PreconditionViolation):
        patch(sys_, s_max=1, config=config).level(2)


def test_no_recurring_class(system):
    sys_, config = system("patch-no-recurrence")
    assert len(patch(sys_, s_max=2, config=config).levels) == 2
    with pytest.raises(NoRecurringClass) as caught:
        patch(sys_, s_max=3, config=config)
    assert caught.value.details["s"] == 3


def test_strict_window_needs_longer_runs(system):
    sys_, config = system("patch-no-recurrence")
    with pytest.raises(NoRecurringClass):
        patch(sys_, s_max=2, config=config.overridden(strictness="strict"))


def test_homology_outside_window(config):
    problem = parse_problem(SPREAD_TOWER, "spread", config)
    assert residue_homology(problem.system) == {0: 1, 1: 1}
    with pytest.raises(HomologySpread):
        patch(problem.system, s_max=1, config=problem.config)


def test_quotient_iso(system):
    sys_, config = system("patch-two-term")
    report = check_quotient_iso(patch(sys_, s_max=2, config=config))
    assert report.holds
    assert report.details["levels"][0]["patched"] == report.details["levels"][0]["base"]


@pytest.mark.parametrize("name", ["patch-constant", "patch-two-term"])
def test_duality(system, name):
    sys_, config = system(name)
    report = check_duality(sys_, s_max=2, config=config)
    assert report.holds
    assert report.details["involutive"]


def test_dual_is_involutive(system):
    sys_, _ = system("patch-rank-two")
    dual = dual_system(sys_)
    assert dual.name == "patch-rank-two-dual"
    assert same_system(dual_system(dual), sys_)


def test_transfer(system):
    sys_, config = system("patch-rank-two")
    tau = parse_group_expression("g1*g2", 3)
    report = endomorphism_transfer(sys_, sys_.operator("T"), tau, s_max=1, config=config)
    assert report.holds


def test_transfer_failure(system):
    sys_, config = system("patch-constant")
    with pytest.raises(TransferFailed):
        endomorphism_transfer(sys_, sys_.operator("T"), GroupRingExpr.constant(1), s_max=1, config=config)


def test_unknown_operator(system):
    sys_, _ = system("patch-constant")
    with pytest.raises(PreconditionViolation):
        sys_.operator("W")
    assert sys_.operator("identity").name == "identity"


def test_group_expression_evaluation():
    tower = PatchTower(p=3)
    expr = parse_group_expression("g1^l - 1", 3)
    assert expr.evaluate(tower, n=0, s=1) == ()
    assert expr.evaluate(tower, n=0, s=2) == (((0,), 8), ((3,), 1))
    assert expr.augmentation() == 0
    assert expr.render() == "g1^l - 1"


def test_moving_exponent():
    tower = PatchTower(p=3, offsets=(2,))
    expr = parse_group_expression("g1^(l^(n-1)) - 1", 3)
    assert expr.evaluate(tower, n=2, s=2) == (((0,), 8), ((3,), 1))


def test_tower_bookkeeping():
    tower = PatchTower(p=3, r=2, j=1)
    assert tower.group_order(2) == 81
    assert tower.framing(2) == 2
    assert tower.ring_length(2) == 2 * 81 * 2
    assert tower.truncation(1) == ["p^1", "(1+y1)^(l^1) - 1", "(1+y2)^(l^1) - 1", "w1^1"]
    assert tower.admissible(1, 1)
    assert not tower.admissible(1, 2)


@pytest.mark.parametrize("fields", [{"r": 0}, {"offsets": (1,), "r": 2}, {"j": -1}])
def test_tower_validation(fields):
    with pytest.raises(PreconditionViolation):
        PatchTower(p=3, **fields)


def test_level_size_cap(system):
    sys_, _ = system("patch-rank-two")
    with pytest.raises(PreconditionViolation) as caught:
        level_complex(sys_, 4, 4)
    assert caught.value.details["dimension"] == 2 * 3 ** 8
