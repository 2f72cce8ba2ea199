import numpy as np
import pytest

from src.complexes import (
    FiniteComplex,
    FreeComplexOverA,
    hom_into_level,
    homology,
    koszul_complex,
    minimal_resolution_at_level,
    resolution_homology,
    split_relation,
    tate_basis,
    tate_complex,
    tate_rank,
    tensor_with_level,
    theta_generator,
    verify_d_squared,
)
from src.congruence import resolution_for, theta_in_nice_form
from src.dvr_core import Precision
from src.errors import D2NotZero, NotNiceForm
from src.ingest import poly_in
from src.local_algebra import ModulePresentation


@pytest.mark.parametrize("n", [1, 2, 4])
@pytest.mark.parametrize("m", [0, 1, 2])
def test_tate_rank_counts_basis(n, m):
    for degree in range(6):
        assert len(tate_basis(n, m, degree)) == tate_rank(n, m, degree)


def test_tate_ranks_four_variables_one_relation():
    assert [tate_rank(4, 1, j) for j in (2, 3, 4)] == [7, 8, 8]


def test_tate_complex_ranks_and_square(make_ring):
    A = make_ring(["a", "b", "c", "d"], ["p*a + b*c"])
    complex_, data = tate_complex(A, 4)
    assert complex_.ranks == [1, 4, 7, 8, 8]
    assert data.divided == ("y1",)
    verify_d_squared(complex_)


def test_koszul_ranks(make_ring):
    A = make_ring(["a", "b", "c"], [])
    assert koszul_complex(A).ranks == [1, 3, 3, 1]


def test_split_relation_recovers_relation(make_ring):
    A = make_ring(["s", "t"], ["p*s + s*t + t^3"])
    f = A.relations[0]
    pieces = split_relation(f)
    total = A.zero()
    for i, g in enumerate(pieces):
        total = total + g * A.variable(i)
    assert total == f


def test_d_squared_failure_is_reported(make_ring):
    A = make_ring(["t"], [])
    t, one = A.variable(0), A.constant(1)
    bad = FreeComplexOverA(A, "test", (("e0",), ("e1",), ("e2",)), (((t,),), ((one,),)))
    with pytest.raises(D2NotZero) as caught:
        verify_d_squared(bad)
    assert caught.value.details["degree"] == 2


def test_minimal_resolution_of_non_complete_intersection(make_ring):
    A = make_ring(["s", "t"], ["p*s", "p*t", "s*t"])
    F = resolution_for(A, 3)
    assert F.kind == "minimal"
    assert F.ranks[:3] == [1, 2, 4]


def test_minimal_resolution_at_its_stable_level(make_ring):
    A = make_ring(["s", "t"], ["p*s", "p*t", "s*t"])
    F = resolution_for(A, 3)
    G = minimal_resolution_at_level(A, F.top, F.stabilized_at)
    assert G.ranks == F.ranks
    assert G.ranks[:3] == [1, 2, 4]
    verify_d_squared(G, G.stabilized_at)


def test_tate_resolution_is_acyclic_in_low_degrees(hypersurface):
    F, _ = tate_complex(hypersurface, 3)
    assert resolution_homology(F, 1, 3).is_zero


def test_finite_complex_homology():
    prec = Precision(5, 10)
    complex_ = FiniteComplex.from_matrices("chain", {1: np.array([[25]], dtype=object)}, prec)
    assert homology(complex_, 0).klass.torsion_exponents == (2,)
    assert homology(complex_, 1).klass.is_zero


def test_hom_complex_is_a_complex(hypersurface):
    F, _ = tate_complex(hypersurface, 3)
    assert hom_into_level(F, ModulePresentation.free(hypersurface), 3).composites_vanish()
    assert tensor_with_level(F, ModulePresentation.free(hypersurface), 3).composites_vanish()


def test_theta_generates_for_power_series(make_ring):
    assert theta_in_nice_form(make_ring(["t"], [])) is True


def test_theta_undefined_in_codimension_zero(hypersurface):
    assert theta_in_nice_form(hypersurface) is None


def test_theta_needs_nice_form(make_ring):
    A = make_ring(["s", "t"], ["p*s + p*t"])
    complex_, data = tate_complex(A, A.codim + 1)
    with pytest.raises(NotNiceForm):
        theta_generator(A, complex_, data)


def test_render_differential(make_ring):
    A = make_ring(["t"], ["p^2*t"])
    F, _ = tate_complex(A, 2)
    assert F.render(1) == [["t"]]
    assert poly_in(A, "t").render(A.variables) == "t"
