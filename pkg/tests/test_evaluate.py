import numpy as np
import pytest

from src.errors import PreconditionViolation
from src.evaluate import (
    SUITES,
    CaseResult,
    SuiteReport,
    bareiss_determinant,
    ci_family,
    ci_name,
    oracle_exponents,
    random_matrices,
    render_report_card,
    run_case,
    run_suite,
    snf_batch,
    suite_cases,
    summary_frame,
)


@pytest.mark.parametrize(
    "rows, det",
    [
        ([[3]], 3),
        ([[1, 2], [3, 4]], -2),
        ([[0, 1], [1, 0]], -1),
        ([[2, 0, 0], [0, 3, 0], [0, 0, 5]], 30),
        ([[1, 2], [2, 4]], 0),
    ],
)
def test_bareiss_determinant(rows, det):
    assert bareiss_determinant(rows) == det


def test_oracle_on_diagonal():
    entries = np.array([[25, 0, 0], [0, 1, 0], [0, 0, 5]], dtype=object)
    assert oracle_exponents(entries, 5, 8) == [0, 1, 2]


def test_oracle_drops_exponents_at_precision():
    entries = np.array([[5 ** 8, 0], [0, 5]], dtype=object)
    assert oracle_exponents(entries, 5, 8) == [1]


def test_random_matrices_are_seeded():
    first = random_matrices(5, 5, 8, seed=3)
    second = random_matrices(5, 5, 8, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(first, second))
    assert all(max(m.shape) <= 6 for m in first)


def test_snf_batch_agrees_with_oracle(config):
    report = snf_batch(10, config, seed=1)
    assert report.holds
    assert report.lhs == report.rhs == 10


def test_ci_family():
    family = ci_family()
    assert len(family) == 21
    assert ci_name((1,), 0) == "ci-d1-c0"
    assert ci_name((1, 3), 1) == "ci-d13-c1"


def test_unknown_suite(config):
    with pytest.raises(PreconditionViolation) as caught:
        suite_cases("everything", config, 0)
    assert caught.value.details["suites"] == list(SUITES)


def _suite(failed: int) -> SuiteReport:
    cases = [CaseResult(suite="core", case="a", holds=True, lhs=1, rhs=1)]
    cases += [CaseResult(suite="core", case=f"bad-{i}", holds=False, error="iso_failed") for i in range(failed)]
    return SuiteReport(suite="core", seed=0, cases=cases, passed=1, failed=failed)


def test_exit_code():
    assert _suite(0).exit_code == 0
    assert _suite(2).exit_code == 5


def test_report_card():
    assert "ALL IDENTITIES HOLD" in render_report_card(_suite(0))
    card = render_report_card(_suite(1))
    assert "1 FAILING CASES" in card
    assert "bad-0" in card


def test_summary_frame_columns():
    frame = summary_frame(_suite(1))
    assert list(frame.columns) == ["case", "holds", "lhs", "rhs", "error"]
    assert len(frame) == 2


def test_defect_suite(config):
    report = run_suite("defect", config)
    assert report.failed == 0, [c for c in report.cases if not c.holds]


def test_domain_suite(config):
    report = run_suite("domain", config)
    assert report.failed == 0, [c for c in report.cases if not c.holds]


@pytest.mark.slow
@pytest.mark.parametrize("suite", SUITES)
def test_every_suite_holds(config, suite):
    report = run_suite(suite, config)
    assert report.exit_code == 0, [c for c in report.cases if not c.holds]


def test_rank_profile_covers_the_family(config):
    labels = [label for label, _ in suite_cases("ci", config, 0)]
    assert all(f"{ci_name(f, c)}-ext" in labels for f, c in ci_family())


@pytest.mark.parametrize("name", ["ci-d1-c2-ext", pytest.param("ci-d12-c1-ext", marks=pytest.mark.slow)])
def test_rank_profile_beyond_one_relation(config, name):
    report = dict(suite_cases("ci", config, 0))[name]()
    assert report.holds, report.details


def test_cases_escalate_precision(config):
    report, used = run_case("ci", "ci-d13-c0", config, 0)
    assert report.holds, report.details
    assert used.N > config.N
