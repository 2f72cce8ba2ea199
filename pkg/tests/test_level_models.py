import pytest

from src.errors import DegreeCapExceeded, PreconditionViolation
from src.ingest import poly_in
from src.level_models import (
    ci_cover_search,
    depth_certificate,
    faithful_quotient,
    generic_linear_forms,
    grade_certificate,
    is_regular_on,
    is_regular_sequence,
    level_model,
    module_level_model,
)
from src.local_algebra import ModulePresentation


def test_level_model_of_hypersurface(hypersurface):
    model = level_model(hypersurface, 3)
    assert model.block == 3
    klass = model.module_class()
    assert klass.free_rank == 1
    assert klass.torsion_exponents == (2, 2)


def test_level_beyond_degree_cap(hypersurface):
    with pytest.raises(DegreeCapExceeded):
        level_model(hypersurface, hypersurface.config.D + 2)


def test_residue_model_has_one_level(hypersurface):
    model = module_level_model(ModulePresentation.residue(hypersurface), 5)
    assert model.level == 1
    assert model.module_class().free_rank == 1


def test_regular_and_zero_divisor(hypersurface):
    free = ModulePresentation.free(hypersurface)
    assert not is_regular_on(poly_in(hypersurface, "t"), free).regular
    assert not is_regular_on(hypersurface.constant(5), free).regular
    assert is_regular_on(poly_in(hypersurface, "t + p"), free).regular


def test_truncation_artifacts_are_not_witnesses(make_ring):
    A = make_ring(["t"], ["p^3*t"], declared_ci=True)
    free = ModulePresentation.free(A)
    for k in (4, 5, 6):
        assert is_regular_on(poly_in(A, "p + t"), free, k).regular
    assert not is_regular_on(poly_in(A, "t"), free).regular


def test_zero_divisor_comes_with_witness(hypersurface):
    verdict = is_regular_on(poly_in(hypersurface, "t"), ModulePresentation.free(hypersurface))
    assert verdict.witness is not None
    assert not verdict.witness[0].is_zero()


def test_regular_sequence(make_ring):
    A = make_ring(["s", "t"], [])
    assert is_regular_sequence(A, [poly_in(A, "p*s"), poly_in(A, "p*t")]).regular is False
    assert is_regular_sequence(A, [poly_in(A, "p^2*s"), poly_in(A, "t^2")]).regular


def test_depth_certificates(hypersurface, member):
    assert depth_certificate(ModulePresentation.free(hypersurface), 1).passed
    diamond = member("diamond-example")
    certificate = depth_certificate(diamond.module, 1)
    assert not certificate.passed
    assert certificate.status() == "failed"


def test_grade_certificate_on_power_series(make_ring):
    A = make_ring(["t"], [])
    certificate = grade_certificate(ModulePresentation.free(A), A.codim)
    assert certificate.passed
    assert certificate.status() == "level-certified"
    assert len(certificate.sequence) == 1


def test_grade_certificate_can_be_waived(hypersurface):
    module = ModulePresentation(hypersurface, 1, (), waive_freeness=True)
    assert grade_certificate(module, 1).status() == "waived"


def test_generic_forms_follow_the_seed(make_ring):
    A = make_ring(["s", "t"], [])
    assert generic_linear_forms(A, 3, seed=4) == generic_linear_forms(A, 3, seed=4)


def test_ci_cover(make_ring):
    A = make_ring(["t"], ["p^2*t", "p^2*t^2"], declared_dimension=1)
    cover = ci_cover_search(A)
    assert cover.selected == (0,)
    assert cover.algebra.m == 1


def test_ci_cover_needs_dimension(make_ring):
    with pytest.raises(PreconditionViolation):
        ci_cover_search(make_ring(["t"], ["p^2*t"]))


def test_faithful_quotient(make_ring):
    A = make_ring(["t"], ["p^3*t"])
    quotient = faithful_quotient(A, ModulePresentation.cyclic(A, [poly_in(A, "p*t")]))
    assert quotient.annihilator
    assert quotient.algebra.cotangent.phi.torsion_exponents == (1,)
    assert faithful_quotient(A, ModulePresentation.free(A)).annihilator == ()
