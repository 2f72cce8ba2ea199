import numpy as np
import pytest

from src.dvr_core import (
    FgModuleClass,
    MatrixO,
    Precision,
    Scalar,
    class_from_exponents,
    cokernel_class,
    int_valuation,
    length,
    o_length_at_precision,
    smith_normal_form,
    smith_reduce,
)
from src.errors import InfiniteLength, PrecisionInsufficient
from src.evaluate import oracle_exponents, random_matrices

PREC = Precision(5, 8)


def test_valuations():
    assert int_valuation(50, 5, 8) == 2
    assert int_valuation(0, 5, 8) == 8
    assert Scalar(0, PREC).render_valuation() == ">= 8"
    assert Scalar(125 * 3, PREC).valuation() == 3
    assert Scalar(7, PREC).is_unit()


def test_scalars_reduce_mod_p_n():
    x = Scalar(5 ** 8 + 4, PREC)
    assert x.representative == 4
    assert (x * Scalar(2, PREC)).representative == 8


def test_scalars_refuse_mixed_precision():
    with pytest.raises(ValueError):
        Scalar(1, PREC) + Scalar(1, PREC.with_N(6))


def test_guard_band():
    assert PREC.in_guard_band(7)
    assert not PREC.in_guard_band(6)
    assert not PREC.in_guard_band(8)
    assert PREC.raised().N == 10


def test_guard_band_floor_at_low_reading_precision():
    reading = Precision(5, 1, 2)
    assert reading.band_floor == 0
    assert not reading.in_guard_band(0)
    assert class_from_exponents([0], 1, reading).is_zero


def test_diagonal_smith_form():
    red = smith_reduce(np.array([[25, 0], [0, 5]], dtype=object), 5, 8)
    assert red.exponents == [1, 2]


def test_smith_normal_form_factors():
    rng = np.random.default_rng(3)
    A = MatrixO(rng.integers(0, 5 ** 4, size=(4, 3)) * 5, PREC)
    form = smith_normal_form(A)
    assert form.P @ A @ form.Q == form.S
    assert form.U @ form.S @ form.V == A
    assert list(form.S.entries.diagonal()) == [5 ** e for e in form.exponents] + [0] * (3 - form.rank)


def test_diagonal_valuations_pad_with_n():
    form = smith_normal_form(MatrixO.from_rows([[5, 0], [0, 0]], PREC))
    assert form.diagonal_valuations == (1, 8)


@pytest.mark.parametrize("seed", range(5))
def test_smith_reduce_matches_determinantal_divisors(seed):
    for matrix in random_matrices(20, 5, 8, seed):
        assert smith_reduce(matrix, 5, 8).exponents == oracle_exponents(matrix, 5, 8)


@pytest.mark.slow
def test_smith_reduce_matches_oracle_on_a_thousand_matrices():
    for p, N in ((3, 6), (5, 8), (7, 5)):
        for matrix in random_matrices(1000 // 3 + 1, p, N, seed=p * N):
            assert smith_reduce(matrix, p, N).exponents == oracle_exponents(matrix, p, N)


def test_cokernel_class():
    klass = cokernel_class(MatrixO.from_rows([[25, 0], [0, 1], [0, 0]], PREC))
    assert klass.free_rank == 1
    assert klass.torsion_exponents == (2,)
    assert klass.render() == "O^1 + O/p^2"


def test_cokernel_of_empty_presentation_is_free():
    assert cokernel_class(MatrixO.zeros(2, 0, PREC)).free_rank == 2


def test_guard_band_exponent_needs_more_precision():
    with pytest.raises(PrecisionInsufficient) as caught:
        cokernel_class(MatrixO.from_rows([[5 ** 7]], PREC))
    assert caught.value.details["valuations"] == [7]


def test_free_part_confirmed_at_raised_precision():
    matrix = [[5, 0], [0, 5 ** 8]]
    with pytest.raises(PrecisionInsufficient):
        cokernel_class(MatrixO.from_rows(matrix, PREC), recheck=MatrixO.from_rows(matrix, PREC.raised()))


def test_lengths():
    torsion = FgModuleClass(torsion_exponents=(3, 1))
    assert torsion.torsion_exponents == (1, 3)
    assert length(torsion) == 4
    assert o_length_at_precision(FgModuleClass(free_rank=1, torsion_exponents=(9,)), 8) == 16
    with pytest.raises(InfiniteLength):
        length(FgModuleClass(free_rank=1))


def test_module_classes_compare_by_invariants():
    a = FgModuleClass(free_rank=1, torsion_exponents=(2,))
    b = FgModuleClass(torsion_exponents=(2,)).direct_sum(FgModuleClass(free_rank=1))
    assert a.same_class(b)
    assert a.torsion().is_torsion
    assert FgModuleClass().is_zero


def _unimodular(size, rng):
    lower = np.tril(rng.integers(0, 5 ** 8, size=(size, size)), -1).astype(object) + np.eye(size, dtype=object)
    upper = np.triu(rng.integers(0, 5 ** 8, size=(size, size)), 1).astype(object) + np.eye(size, dtype=object)
    return MatrixO(lower, PREC) @ MatrixO(upper, PREC)


def test_smith_normal_form_is_idempotent():
    for matrix in random_matrices(10, 5, 8, seed=4):
        form = smith_normal_form(MatrixO(matrix, PREC))
        again = smith_normal_form(form.S)
        assert again.exponents == form.exponents
        assert again.S == form.S


@pytest.mark.parametrize("seed", range(3))
def test_cokernel_class_ignores_change_of_basis(seed):
    rng = np.random.default_rng(seed)
    for matrix in random_matrices(10, 5, 8, seed):
        A = MatrixO(matrix, PREC)
        moved = _unimodular(A.rows, rng) @ A @ _unimodular(A.cols, rng)
        klass = cokernel_class(A, allow_uncertified=True)
        assert cokernel_class(moved, allow_uncertified=True).same_class(klass)
