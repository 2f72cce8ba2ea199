import numpy as np
import pytest

from src.errors import ConstantTerm, NotRegularDirection, PreconditionViolation, UnitLinearTerm
from src.ingest import poly_in
from src.local_algebra import (
    ModulePresentation,
    TruncatedPoly,
    class_in_cotangent,
    eliminate_unit_relations,
    fitting_invariants,
    in_symbolic_square,
    is_nice_form,
    monomials_below,
    nice_form,
    order_ideal_valuation,
    quotient_by,
    shift_augmentation,
    substitute_augmentation,
)

MOD = 5 ** 10


def test_truncation_drops_high_degrees():
    t = TruncatedPoly.variable(0, 1, MOD, 2)
    assert (t * t).degree() == 2
    assert (t * t * t).is_zero()


def test_terms_merge_and_reduce():
    f = TruncatedPoly(2, [((1, 0), 3), ((1, 0), MOD - 3), ((0, 1), 2)], MOD, 4)
    assert f.terms == (((0, 1), 2),)
    assert f.linear_part() == [0, 2]


def test_substitute_composes():
    x = TruncatedPoly.variable(0, 1, MOD, 4)
    one = TruncatedPoly.constant(1, 1, MOD, 4)
    square = x * x
    shifted = square.substitute([x + one])
    assert shifted.as_dict() == {(0,): 1, (1,): 2, (2,): 1}


def test_monomials_below_counts():
    assert len(monomials_below(2, 3)) == 6


def test_render_uses_p(hypersurface):
    assert hypersurface.render_relations() == ["p^2*t"]


def test_hypersurface_cotangent(hypersurface):
    assert hypersurface.codim == 0
    assert fitting_invariants(hypersurface) == [2]
    assert hypersurface.is_complete_intersection()


def test_power_series_is_free(make_ring):
    A = make_ring(["t"], [])
    assert A.codim == 1
    assert A.cotangent.phi.is_zero


def test_non_complete_intersection(make_ring):
    A = make_ring(["s", "t"], ["p*s", "p*t", "s*t"])
    assert A.codim == 0
    assert A.cotangent.phi.torsion_exponents == (1, 1)
    assert not A.is_complete_intersection()


def test_unit_linear_term_is_rejected(make_ring):
    with pytest.raises(UnitLinearTerm) as caught:
        make_ring(["t"], ["t + t^2"])
    assert caught.value.details["variable"] == "t"


def test_constant_term_is_rejected(make_ring):
    with pytest.raises(ConstantTerm):
        make_ring(["t"], ["p + t^2"])


def test_class_in_cotangent(make_ring):
    A = make_ring(["s", "t"], ["p^2*s"])
    klass = class_in_cotangent(A, poly_in(A, "p*s + t"))
    assert klass.torsion == ((5, 2),)
    assert len(klass.free) == 1
    assert in_symbolic_square(A, poly_in(A, "s*t"))


def test_nice_form_moves_free_directions_last(make_ring):
    A = make_ring(["s", "t"], ["p*s + p*t"])
    assert not is_nice_form(A)
    nice = nice_form(A)
    assert is_nice_form(nice.algebra)
    assert nice.algebra.codim == A.codim == 1
    assert nice.algebra.cotangent.phi.same_class(A.cotangent.phi)
    assert nice.algebra.variables == ("s'", "t'")


def test_eliminate_unit_relations():
    s = TruncatedPoly.variable(0, 2, MOD, 6)
    t = TruncatedPoly.variable(1, 2, MOD, 6)
    relation = s - t * t
    variables, relations, module_relations, eliminated = eliminate_unit_relations(
        ["s", "t"], [relation, s * t], [], 5)
    assert variables == ("t",)
    assert eliminated == ["s"]
    assert relations[0].as_dict() == {(3,): 1}


def test_quotient_by_drops_codimension(make_ring):
    A = make_ring(["t", "x"], ["p^2*t"])
    M = ModulePresentation.free(A)
    B, N = quotient_by(A, poly_in(A, "x"), M)
    assert B.codim == 0
    assert B.variables == ("t",)
    assert N.generators == 1


def test_quotient_by_rejects_square(make_ring):
    A = make_ring(["t", "x"], ["p^2*t"])
    with pytest.raises(NotRegularDirection):
        quotient_by(A, poly_in(A, "x^2"), ModulePresentation.free(A))


def test_module_specialization(make_ring):
    A = make_ring(["t"], ["p^2*t"])
    M = ModulePresentation(A, 2, ((poly_in(A, "p^3"), poly_in(A, "t")),))
    klass = M.specialization_class()
    assert klass.free_rank == 1
    assert klass.torsion_exponents == (3,)
    assert np.asarray(M.specialization().entries).shape == (2, 1)


def test_residue_module_is_killed_by_augmentation(hypersurface):
    residue = ModulePresentation.residue(hypersurface)
    assert residue.killed_by_augmentation
    assert residue.specialization_class().free_rank == 1


def test_substitute_augmentation_keeps_phi(make_ring):
    A = make_ring(["t"], ["t^2 - p*t"])
    B = substitute_augmentation(A, [5])
    assert B.relations == (poly_in(B, "t^2 + p*t"),)
    assert B.cotangent.phi.same_class(A.cotangent.phi)
    assert substitute_augmentation(B, [-5]).relations == A.relations


def test_substitute_augmentation_needs_a_zero(hypersurface):
    with pytest.raises(ConstantTerm):
        substitute_augmentation(hypersurface, [5])


def test_shift_rejects_unit_values(hypersurface):
    with pytest.raises(PreconditionViolation):
        shift_augmentation(list(hypersurface.relations), [1], 5)


def test_cotangent_class_ignores_the_symbolic_square(make_ring):
    A = make_ring(["s", "t"], ["p^2*s"])
    for text in ("p*s + t", "s", "p^3*t", "s*t"):
        base = class_in_cotangent(A, poly_in(A, text))
        moved = class_in_cotangent(A, poly_in(A, f"{text} + s*t + 7*t^2 + p*s^3"))
        assert moved == base
        assert in_symbolic_square(A, poly_in(A, text)) == in_symbolic_square(A, poly_in(A, f"{text} + t^2"))


def test_order_ideal_valuation(make_ring):
    A = make_ring(["s", "t"], ["p^2*s"])
    assert order_ideal_valuation(A, poly_in(A, "t")) == 0
    assert order_ideal_valuation(A, poly_in(A, "s + p^3*t")) == 3
    with pytest.raises(NotRegularDirection):
        order_ideal_valuation(A, poly_in(A, "s*t"))
