import pytest

from src.congruence import (
    STRATEGIES,
    change_of_congruence,
    ci_isomorphism_check,
    congruence_module,
    defect_formula_check,
    diamond_congruence_c0,
    diamond_quotient,
    endomorphism_consistency,
    ext_module,
    faithful_invariance_check,
    invariance_of_domain_check,
    mu_rank,
    split_free_variables,
    torsion_free_ext_check,
    wiles_defect,
)
from src.dvr_core import length
from src.errors import DepthCertificateFailed, PreconditionViolation
from src.ingest import poly_in
from src.local_algebra import ModulePresentation


def _matrix(algebra, rows):
    return [[poly_in(algebra, x) for x in row] for row in rows]


@pytest.mark.parametrize("name, phi, psi, delta", [
    ("hypersurface-d2", 2, 2, 0),
    ("hypersurface-d3", 3, 3, 0),
    ("noncomplete-intersection", 2, 1, 1),
    ("unipotent-b1", 1, 1, 0),
])
def test_defect_values(member, name, phi, psi, delta):
    problem = member(name)
    report = wiles_defect(problem.algebra, problem.module, "direct")
    assert (report.phi_length, report.psi.length, report.delta) == (phi, psi, delta)


def test_all_strategies_agree_on_hypersurface(hypersurface):
    report = wiles_defect(hypersurface, ModulePresentation.free(hypersurface), "all")
    assert set(report.strategies) == set(STRATEGIES)
    assert {o.delta for o in report.strategies.values()} == {0}
    assert report.diamond_quotient_length == 2
    assert report.verdicts.ci is True


def test_all_strategies_agree_on_cubed_hypersurface(member):
    problem = member("hypersurface-d3")
    report = wiles_defect(problem.algebra, problem.module, "all")
    assert "diamond" in report.strategies
    assert report.diamond_quotient_length == 3
    assert not any(w.startswith("diamond skipped") for w in report.warnings)


def test_power_series_is_regular(make_ring):
    A = make_ring(["t"], [], declared_ci=True)
    report = wiles_defect(A, ModulePresentation.free(A), "all")
    assert (report.codimension, report.mu, report.delta) == (1, 1, 0)
    assert report.fc_rank == 1


def test_reduce_strategy_records_steps(member):
    problem = member("unipotent-b2")
    report = wiles_defect(problem.algebra, problem.module, "reduce", seed=3)
    steps = report.strategies["reduce"].steps
    assert len(steps) == 1
    assert steps[0].codim_after == 0
    assert report.delta == 0


def test_free_variables_are_split(member):
    problem = member("local-deformation")
    split = split_free_variables(problem.algebra, problem.module)
    assert split.dropped == ("x", "y")
    assert split.algebra.codim == problem.algebra.codim - 2


def test_unknown_strategy(hypersurface):
    with pytest.raises(PreconditionViolation):
        wiles_defect(hypersurface, ModulePresentation.free(hypersurface), "guess")


def test_diamond_example_depth_zero(member):
    problem = member("diamond-example")
    A, M = problem.algebra, problem.module
    assert mu_rank(A, M) == 0
    result = diamond_quotient(A, M)
    assert length(result.klass) == 1
    assert not result.certificate.passed
    with pytest.raises(DepthCertificateFailed):
        diamond_congruence_c0(A, M)
    with pytest.raises(DepthCertificateFailed):
        wiles_defect(A, M, "diamond")


def test_diamond_is_skipped_with_warning(member):
    problem = member("diamond-example")
    report = wiles_defect(problem.algebra, problem.module, "all")
    assert "diamond" not in report.strategies
    assert report.diamond_quotient_length == 1
    assert report.psi.length == 0
    assert any(w.startswith("diamond skipped") for w in report.warnings)


def test_diamond_needs_codimension_zero(make_ring):
    A = make_ring(["t"], [])
    with pytest.raises(PreconditionViolation):
        diamond_quotient(A, ModulePresentation.free(A))


def test_congruence_module_of_hypersurface(hypersurface):
    result = congruence_module(hypersurface, ModulePresentation.free(hypersurface))
    assert result.psi.torsion_exponents == (2,)
    assert result.stabilized_at >= 2


def test_ext_of_residue_over_power_series(make_ring):
    A = make_ring(["t"], [], declared_ci=True)
    residue = ModulePresentation.residue(A)
    assert [ext_module(A, residue, i).free_rank for i in range(3)] == [1, 1, 0]


def test_defect_formula(hypersurface):
    report = defect_formula_check(hypersurface, ModulePresentation.free(hypersurface, 2))
    assert report.holds
    assert report.details["mu"] == 2


def test_change_of_congruence(hypersurface):
    target = ModulePresentation.cyclic(hypersurface, [poly_in(hypersurface, "p*t")])
    report = change_of_congruence(hypersurface, ModulePresentation.free(hypersurface), target,
                                  _matrix(hypersurface, [["1"]]))
    assert report.holds


def test_change_of_congruence_rejects_non_maps(hypersurface):
    with pytest.raises(PreconditionViolation):
        change_of_congruence(hypersurface, ModulePresentation.free(hypersurface),
                             ModulePresentation.free(hypersurface), _matrix(hypersurface, [["p"]]))


def test_endomorphism_consistency(hypersurface):
    pi = _matrix(hypersurface, [["1 + t", "0"], ["t", "1"]])
    assert endomorphism_consistency(hypersurface, ModulePresentation.free(hypersurface, 2), pi).holds


def test_invariance_of_domain(make_ring):
    A = make_ring(["t"], ["p^3*t"])
    B = make_ring(["t"], ["p*t"])
    report = invariance_of_domain_check(A, B, ModulePresentation.free(B))
    assert report.lhs == report.rhs == 1
    assert report.details["delta_gap"] == -2


def test_faithful_invariance(make_ring):
    A = make_ring(["t"], ["p^3*t"])
    M = ModulePresentation.cyclic(A, [poly_in(A, "p*t")])
    assert faithful_invariance_check(A, M).holds


def test_ci_isomorphism(make_ring):
    A = make_ring(["t"], ["p^2*t"])
    report = ci_isomorphism_check(A, make_ring(["t"], ["p^2*t + p^2*t^2"], declared_ci=True))
    assert (report.lhs, report.rhs) == (1, 1)
    proper = ci_isomorphism_check(A, make_ring(["t"], ["p*t"], declared_ci=True))
    assert (proper.lhs, proper.rhs) == (0, 0)


def test_torsion_free_ext(member):
    problem = member("unipotent-b1")
    assert torsion_free_ext_check(problem.algebra, problem.module).holds


def test_torsion_free_ext_needs_depth(member):
    problem = member("diamond-example")
    with pytest.raises(DepthCertificateFailed) as caught:
        torsion_free_ext_check(problem.algebra, problem.module)
    assert caught.value.kind == "depth_certificate_failed"


def test_domain_needs_same_variables(make_ring):
    A = make_ring(["t"], ["p^2*t"])
    B = make_ring(["s"], ["p*s"])
    with pytest.raises(PreconditionViolation):
        invariance_of_domain_check(A, B, ModulePresentation.free(B))
