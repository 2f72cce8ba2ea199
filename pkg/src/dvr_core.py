"""
Arithmetic over O = Z_p known modulo p^N.

Everything downstream reduces to three primitives defined here: the Smith
normal form over the local ring Z/p^N, the isomorphism class of a finitely
generated O-module read off a presentation, and coordinates inside a lattice
(used for subquotients such as homology).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, validator

from src.errors import InfiniteLength, PrecisionInsufficient

INT64_BUDGET = 2 ** 62


@dataclass(frozen=True)
class Precision:
    p: int
    N: int
    guard: int = 2

    @property
    def modulus(self) -> int:
        return self.p ** self.N

    def with_N(self, N: int) -> "Precision":
        return Precision(self.p, N, self.guard)

    def raised(self) -> "Precision":
        return self.with_N(self.N + self.guard)

    @property
    def band_floor(self) -> int:
        """Exponents above this and below N are unreliable; unit pivots never are."""
        return max(self.N - self.guard, 0)

    def in_guard_band(self, exponent: int) -> bool:
        return self.band_floor < exponent < self.N


def int_valuation(value: int, p: int, cap: int) -> int:
    """Exponent of p in value, saturating at cap (value 0 gives cap)."""
    value = int(value)
    if value == 0:
        return cap
    e = 0
    while e < cap and value % p == 0:
        value //= p
        e += 1
    return e


@dataclass(frozen=True)
class Scalar:
    representative: int
    precision: Precision

    def __post_init__(self):
        object.__setattr__(self, "representative", int(self.representative) % self.precision.modulus)

    def valuation(self) -> int:
        return int_valuation(self.representative, self.precision.p, self.precision.N)

    def is_unit(self) -> bool:
        return self.representative % self.precision.p != 0

    def render_valuation(self) -> str:
        e = self.valuation()
        return f">= {e}" if e == self.precision.N else str(e)

    def _check(self, other: "Scalar") -> None:
        if other.precision != self.precision:
            raise ValueError("scalars carry different precisions")

    def __add__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.representative + other.representative, self.precision)

    def __sub__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.representative - other.representative, self.precision)

    def __mul__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.representative * other.representative, self.precision)

    def __neg__(self) -> "Scalar":
        return Scalar(-self.representative, self.precision)


def valuation(x: Scalar) -> int:
    """p-adic valuation of x; zero reports N (read as ">= N")."""
    return x.valuation()


# --- numpy plumbing ---

def int64_safe(modulus: int, inner: int) -> bool:
    return (max(inner, 1) + 1) * modulus * modulus < INT64_BUDGET


def as_array(values, modulus: int, inner: Optional[int] = None) -> np.ndarray:
    """Integer array reduced mod modulus, int64 when products cannot overflow."""
    array = np.array(values, dtype=object)
    if array.ndim == 1 and array.size == 0:
        array = array.reshape(0)
    if inner is None:
        inner = max(array.shape) if array.ndim else 1
    array = array % modulus
    if int64_safe(modulus, inner):
        return array.astype(np.int64)
    return array


def matmul_mod(a: np.ndarray, b: np.ndarray, modulus: int) -> np.ndarray:
    inner = a.shape[1] if a.ndim == 2 else a.shape[0]
    if a.dtype == np.int64 and b.dtype == np.int64 and int64_safe(modulus, inner):
        return (a @ b) % modulus
    return (a.astype(object).dot(b.astype(object))) % modulus


def array_valuations(array: np.ndarray, p: int, cap: int) -> np.ndarray:
    """Elementwise valuation, saturating at cap."""
    flat = [int_valuation(x, p, cap) for x in np.asarray(array).ravel()]
    return np.array(flat, dtype=np.int64).reshape(np.shape(array))


def min_valuation(array: np.ndarray, p: int, cap: int) -> int:
    if np.size(array) == 0:
        return cap
    return int(array_valuations(array, p, cap).min())


@dataclass(frozen=True)
class MatrixO:
    entries: np.ndarray
    precision: Precision

    def __post_init__(self):
        array = as_array(self.entries, self.precision.modulus)
        if array.ndim != 2:
            array = array.reshape(len(array), -1) if array.size else np.zeros((0, 0), dtype=np.int64)
        array.setflags(write=False)
        object.__setattr__(self, "entries", array)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], precision: Precision, cols: Optional[int] = None) -> "MatrixO":
        if len(rows) == 0:
            return cls(np.zeros((0, cols or 0), dtype=np.int64), precision)
        return cls(np.array([[int(x) for x in row] for row in rows], dtype=object), precision)

    @classmethod
    def zeros(cls, rows: int, cols: int, precision: Precision) -> "MatrixO":
        return cls(np.zeros((rows, cols), dtype=np.int64), precision)

    @classmethod
    def identity(cls, size: int, precision: Precision) -> "MatrixO":
        return cls(np.eye(size, dtype=np.int64), precision)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    def entry(self, i: int, j: int) -> Scalar:
        return Scalar(int(self.entries[i, j]), self.precision)

    def transpose(self) -> "MatrixO":
        return MatrixO(self.entries.T.copy(), self.precision)

    def __matmul__(self, other: "MatrixO") -> "MatrixO":
        return MatrixO(matmul_mod(self.entries, other.entries, self.precision.modulus), self.precision)

    def reduce_to(self, precision: Precision) -> "MatrixO":
        return MatrixO(self.entries.astype(object) % precision.modulus, precision)

    def tolist(self) -> List[List[int]]:
        return [[int(x) for x in row] for row in self.entries]

    def is_zero(self) -> bool:
        return not np.any(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatrixO):
            return NotImplemented
        return self.precision == other.precision and self.tolist() == other.tolist()

    def __hash__(self) -> int:
        return hash((self.precision, tuple(map(tuple, self.tolist()))))


# --- Smith normal form ---

class _Reduction(NamedTuple):
    exponents: List[int]
    P: Optional[np.ndarray]
    P_inv: Optional[np.ndarray]
    Q: Optional[np.ndarray]
    Q_inv: Optional[np.ndarray]


def _identity(size: int, dtype) -> np.ndarray:
    eye = np.zeros((size, size), dtype=dtype)
    for i in range(size):
        eye[i, i] = 1
    return eye


def smith_reduce(entries: np.ndarray, p: int, N: int, *, rows_transform: bool = False,
                 cols_transform: bool = False, inverses: bool = False) -> _Reduction:
    """
    Diagonalize over Z/p^N by row and column operations.

    Pivot: an entry of minimal valuation in the remaining block, first in
    (row, col) order. Returns the pivot exponents and, on request, P, Q with
    P·A·Q = S and their inverses.
    """
    modulus = p ** N
    a = np.array(entries, dtype=object)
    n_rows, n_cols = (a.shape if a.ndim == 2 else (0, 0))
    inner = max(n_rows, n_cols, 1)
    dtype = np.int64 if int64_safe(modulus, inner) else object
    a = (a % modulus).astype(dtype) if a.size else np.zeros((n_rows, n_cols), dtype=dtype)

    P = _identity(n_rows, dtype) if rows_transform else None
    P_inv = _identity(n_rows, dtype) if rows_transform and inverses else None
    Q = _identity(n_cols, dtype) if cols_transform else None
    Q_inv = _identity(n_cols, dtype) if cols_transform and inverses else None

    exponents: List[int] = []
    level = 0
    for r in range(min(n_rows, n_cols)):
        block = a[r:, r:]
        pivot = None
        while level < N:
            mask = (block % (p ** (level + 1))) != 0
            if np.any(mask):
                flat = int(np.argmax(mask.ravel()))
                pivot = divmod(flat, block.shape[1])
                break
            level += 1
        if pivot is None:
            break
        pi, pj = pivot[0] + r, pivot[1] + r

        if pi != r:
            a[[r, pi]] = a[[pi, r]]
            if P is not None:
                P[[r, pi]] = P[[pi, r]]
            if P_inv is not None:
                P_inv[:, [r, pi]] = P_inv[:, [pi, r]]
        if pj != r:
            a[:, [r, pj]] = a[:, [pj, r]]
            if Q is not None:
                Q[:, [r, pj]] = Q[:, [pj, r]]
            if Q_inv is not None:
                Q_inv[[r, pj]] = Q_inv[[pj, r]]

        scale = p ** level
        unit = int(a[r, r]) // scale
        unit_inv = pow(unit, -1, modulus)
        if unit_inv != 1:
            a[r] = (a[r] * unit_inv) % modulus
            if P is not None:
                P[r] = (P[r] * unit_inv) % modulus
            if P_inv is not None:
                P_inv[:, r] = (P_inv[:, r] * (unit % modulus)) % modulus

        # clear column r below the pivot
        factors = a[r + 1:, r] // scale
        if np.any(factors):
            a[r + 1:, r:] = (a[r + 1:, r:] - np.outer(factors, a[r, r:])) % modulus
            if P is not None:
                P[r + 1:] = (P[r + 1:] - np.outer(factors, P[r])) % modulus
            if P_inv is not None:
                P_inv[:, r] = (P_inv[:, r] + matmul_mod(P_inv[:, r + 1:], factors, modulus)) % modulus

        # clear row r right of the pivot
        shifts = a[r, r + 1:] // scale
        if np.any(shifts):
            a[r, r + 1:] = 0
            if Q is not None:
                Q[:, r + 1:] = (Q[:, r + 1:] - np.outer(Q[:, r], shifts)) % modulus
            if Q_inv is not None:
                Q_inv[r] = (Q_inv[r] + matmul_mod(shifts, Q_inv[r + 1:], modulus)) % modulus

        exponents.append(level)

    return _Reduction(exponents, P, P_inv, Q, Q_inv)


@dataclass(frozen=True)
class SmithForm:
    """A = U·S·V with P = U^-1 and Q = V^-1, so that P·A·Q = S."""
    U: MatrixO
    S: MatrixO
    V: MatrixO
    P: MatrixO
    Q: MatrixO
    exponents: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.exponents)

    @property
    def diagonal_valuations(self) -> Tuple[int, ...]:
        N = self.S.precision.N
        return self.exponents + (N,) * (min(self.S.shape) - self.rank)


def smith_normal_form(matrix: MatrixO) -> SmithForm:
    prec = matrix.precision
    red = smith_reduce(matrix.entries, prec.p, prec.N, rows_transform=True, cols_transform=True, inverses=True)
    S = np.zeros(matrix.shape, dtype=object)
    for i, e in enumerate(red.exponents):
        S[i, i] = prec.p ** e
    return SmithForm(
        U=MatrixO(red.P_inv, prec),
        S=MatrixO(S, prec),
        V=MatrixO(red.Q_inv, prec),
        P=MatrixO(red.P, prec),
        Q=MatrixO(red.Q, prec),
        exponents=tuple(red.exponents),
    )


# --- module classes ---

class FgModuleClass(BaseModel):
    """Isomorphism class O^r + O/p^d1 + ... + O/p^dk."""
    free_rank: int = 0
    torsion_exponents: Tuple[int, ...] = ()
    certified: bool = True

    class Config:
        allow_mutation = False

    @validator("torsion_exponents", pre=True)
    def _sorted_positive(cls, value):
        exps = tuple(sorted(int(e) for e in value))
        if any(e <= 0 for e in exps):
            raise ValueError("torsion exponents must be positive")
        return exps

    @property
    def is_zero(self) -> bool:
        return self.free_rank == 0 and not self.torsion_exponents

    @property
    def is_torsion(self) -> bool:
        return self.free_rank == 0

    def torsion(self) -> "FgModuleClass":
        return FgModuleClass(torsion_exponents=self.torsion_exponents, certified=self.certified)

    def direct_sum(self, other: "FgModuleClass") -> "FgModuleClass":
        return FgModuleClass(
            free_rank=self.free_rank + other.free_rank,
            torsion_exponents=self.torsion_exponents + other.torsion_exponents,
            certified=self.certified and other.certified,
        )

    def render(self) -> str:
        parts = [f"O^{self.free_rank}"] if self.free_rank else []
        parts += [f"O/p^{d}" for d in self.torsion_exponents]
        return " + ".join(parts) if parts else "0"

    def same_class(self, other: "FgModuleClass") -> bool:
        return self.free_rank == other.free_rank and self.torsion_exponents == other.torsion_exponents


def length(module: FgModuleClass) -> int:
    if module.free_rank > 0:
        raise InfiniteLength(f"{module.render()} has infinite length", {"free_rank": module.free_rank})
    return sum(module.torsion_exponents)


def o_length_at_precision(module: FgModuleClass, N: int) -> int:
    """Length of module/p^N: free summands count N."""
    return module.free_rank * N + sum(min(d, N) for d in module.torsion_exponents)


def class_from_exponents(exponents: Sequence[int], n_rows: int, precision: Precision,
                         allow_uncertified: bool = False) -> FgModuleClass:
    band = [e for e in exponents if precision.in_guard_band(e)]
    if band and not allow_uncertified:
        raise PrecisionInsufficient(
            f"diagonal valuations {band} fall in the guard band ({precision.band_floor}, {precision.N})",
            {"N": precision.N, "guard": precision.guard, "valuations": band},
        )
    torsion = tuple(e for e in exponents if 0 < e < precision.N)
    return FgModuleClass(free_rank=n_rows - len(exponents), torsion_exponents=torsion, certified=not band)


def cokernel_class(matrix: MatrixO, *, recheck: Optional[MatrixO] = None,
                   allow_uncertified: bool = False) -> FgModuleClass:
    """
    Class of coker(matrix: O^cols -> O^rows).

    When the class has free rank and the same matrix is supplied at a higher
    precision in `recheck`, both readings must agree before the free part is
    accepted.
    """
    prec = matrix.precision
    red = smith_reduce(matrix.entries, prec.p, prec.N)
    result = class_from_exponents(red.exponents, matrix.rows, prec, allow_uncertified)
    if result.free_rank and recheck is not None:
        high = recheck.precision
        again = smith_reduce(recheck.entries, high.p, high.N)
        confirmed = class_from_exponents(again.exponents, recheck.rows, high, True)
        if not confirmed.same_class(result):
            raise PrecisionInsufficient(
                "free part not confirmed at raised precision",
                {"N": prec.N, "raised_N": high.N, "at_N": result.render(), "raised": confirmed.render()},
            )
    return result


@dataclass(frozen=True)
class TfMap:
    """Map between free O-modules in chosen bases; matrix is target x source."""
    source_rank: int
    target_rank: int
    matrix: MatrixO

    def __post_init__(self):
        if self.matrix.shape != (self.target_rank, self.source_rank):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match ranks "
                             f"{self.target_rank}x{self.source_rank}")

    def compose(self, first: "TfMap") -> "TfMap":
        """self ∘ first"""
        return TfMap(first.source_rank, self.target_rank, self.matrix @ first.matrix)


def tf_map_cokernel(f: TfMap) -> FgModuleClass:
    return cokernel_class(f.matrix)


@dataclass(frozen=True)
class TorsionSplit:
    torsion: FgModuleClass
    tf_rank: int
    projection: TfMap


def torsion_split(presentation: MatrixO) -> TorsionSplit:
    """Split coker(presentation) into torsion and the projection onto its free quotient."""
    prec = presentation.precision
    red = smith_reduce(presentation.entries, prec.p, prec.N, rows_transform=True)
    module = class_from_exponents(red.exponents, presentation.rows, prec)
    rank = len(red.exponents)
    projection = MatrixO(red.P[rank:], prec) if presentation.rows > rank else \
        MatrixO.zeros(0, presentation.rows, prec)
    return TorsionSplit(
        torsion=module.torsion(),
        tf_rank=module.free_rank,
        projection=TfMap(presentation.rows, module.free_rank, projection),
    )


def determinant_valuation(matrix: MatrixO) -> int:
    """Valuation of det for a square matrix, saturating at N."""
    if matrix.rows != matrix.cols:
        raise ValueError("determinant of a non-square matrix")
    prec = matrix.precision
    red = smith_reduce(matrix.entries, prec.p, prec.N)
    if len(red.exponents) < matrix.rows:
        return prec.N
    return min(sum(red.exponents), prec.N)


# --- lattices inside O^a ---

@dataclass(frozen=True, eq=False)
class Lattice:
    """
    The O-span of the columns of `generators` inside O^ambient.

    `basis` holds the columns P^-1 e_i s_i; `coordinates` expresses vectors of
    the span in that basis (dividing by s_i lowers the known precision).
    """
    generators: np.ndarray
    precision: Precision
    exponents: Tuple[int, ...] = field(init=False)
    P: np.ndarray = field(init=False, repr=False)
    P_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        prec = self.precision
        gens = np.asarray(self.generators, dtype=object)
        red = smith_reduce(gens, prec.p, prec.N, rows_transform=True, inverses=True)
        object.__setattr__(self, "exponents", tuple(red.exponents))
        object.__setattr__(self, "P", red.P)
        object.__setattr__(self, "P_inv", red.P_inv)

    @property
    def ambient(self) -> int:
        return self.P.shape[0]

    @property
    def rank(self) -> int:
        return len(self.exponents)

    @property
    def coordinate_precision(self) -> Precision:
        drop = max(self.exponents, default=0)
        return self.precision.with_N(self.precision.N - drop)

    def basis(self) -> np.ndarray:
        prec = self.precision
        cols = [np.array(self.P_inv[:, i], dtype=object) * prec.p ** e for i, e in enumerate(self.exponents)]
        if not cols:
            return np.zeros((self.ambient, 0), dtype=object)
        return np.stack(cols, axis=1) % prec.modulus

    def coordinates(self, vectors: np.ndarray) -> MatrixO:
        """Coordinates (rank x k) of the columns of `vectors`, which must lie in the lattice."""
        prec = self.precision
        target = self.coordinate_precision
        vectors = np.asarray(vectors, dtype=object)
        if vectors.ndim == 1:
            vectors = vectors.reshape(-1, 1)
        if self.rank == 0:
            return MatrixO.zeros(0, vectors.shape[1], target)
        image = matmul_mod(np.asarray(self.P[: self.rank], dtype=object), vectors % prec.modulus, prec.modulus)
        out = np.empty(image.shape, dtype=object)
        for i, e in enumerate(self.exponents):
            out[i] = image[i] // prec.p ** e
        return MatrixO(out % target.modulus, target)

    def free_directions(self) -> np.ndarray:
        """Rows of P beyond the rank: coordinates on the free part of O^ambient / lattice."""
        return np.asarray(self.P[self.rank:], dtype=object)


@dataclass(frozen=True, eq=False)
class SpanTest:
    """Membership in span(relations) + p^noise O^a for vectors known modulo p^N."""
    relations: np.ndarray
    precision: Precision
    noise: int

    @cached_property
    def _reduction(self) -> _Reduction:
        prec = self.precision
        return smith_reduce(np.asarray(self.relations, dtype=object), prec.p, prec.N, rows_transform=True)

    def outside(self, vectors: np.ndarray) -> np.ndarray:
        """For each column, whether it is nonzero modulo the span (noise ignored)."""
        vectors = np.asarray(vectors, dtype=object)
        if vectors.ndim == 1:
            vectors = vectors.reshape(-1, 1)
        if vectors.shape[1] == 0:
            return np.zeros(0, dtype=bool)
        red = self._reduction
        prec = self.precision
        image = matmul_mod(np.asarray(red.P, dtype=object), vectors % prec.modulus, prec.modulus)
        vals = array_valuations(image, prec.p, prec.N)
        floor = np.full(vectors.shape[0], self.noise, dtype=np.int64)
        for i, e in enumerate(red.exponents):
            floor[i] = min(e, self.noise)
        return np.any(vals < floor[:, None], axis=0)


def kernel_basis(matrix: np.ndarray, precision: Precision) -> np.ndarray:
    """Columns spanning the O-kernel (approximated at precision N)."""
    matrix = np.asarray(matrix, dtype=object)
    n_cols = matrix.shape[1]
    if matrix.shape[0] == 0:
        return _identity(n_cols, object)
    red = smith_reduce(matrix, precision.p, precision.N, cols_transform=True)
    return np.asarray(red.Q[:, len(red.exponents):], dtype=object)


def subquotient_class(cycles: np.ndarray, boundaries: np.ndarray, precision: Precision,
                      allow_uncertified: bool = False) -> Tuple[FgModuleClass, Lattice, MatrixO]:
    """Class of span(cycles)/span(boundaries), with boundaries inside the cycle span."""
    lattice = Lattice(np.asarray(cycles, dtype=object), precision)
    coords = lattice.coordinates(boundaries) if np.size(boundaries) else \
        MatrixO.zeros(lattice.rank, 0, lattice.coordinate_precision)
    if coords.rows == 0:
        return FgModuleClass(), lattice, coords
    return cokernel_class(coords, allow_uncertified=allow_uncertified), lattice, coords


@dataclass(frozen=True, eq=False)
class SubquotientFrame:
    """
    span(cycles)/span(boundaries) with noise-level directions discarded.

    `tf_rows` maps lattice coordinates onto the free quotient; the class is read
    `guard` digits below the coordinate precision.
    """
    lattice: Lattice
    klass: FgModuleClass
    tf_rows: np.ndarray
    reading: Precision

    @property
    def free_rank(self) -> int:
        return self.klass.free_rank

    def coordinates(self, vectors: np.ndarray) -> np.ndarray:
        coords = self.lattice.coordinates(vectors).entries.astype(object)
        return coords % self.reading.modulus

    def tf_coordinates(self, vectors: np.ndarray) -> np.ndarray:
        """Images of the columns of `vectors` (cycles) in the free quotient, at the reading precision."""
        coords = self.coordinates(vectors)
        if self.tf_rows.shape[0] == 0:
            return np.zeros((0, coords.shape[1]), dtype=object)
        return matmul_mod(self.tf_rows.astype(object), coords, self.reading.modulus)


def _clean_lattice(generators: np.ndarray, precision: Precision, noise: int) -> Lattice:
    lattice = Lattice(generators, precision)
    kept = [i for i, e in enumerate(lattice.exponents) if e < noise]
    if len(kept) == lattice.rank:
        return lattice
    return Lattice(lattice.basis()[:, kept], precision)


def subquotient_frame(cycles: np.ndarray, boundaries: np.ndarray, precision: Precision,
                      noise: int) -> SubquotientFrame:
    """
    Class of span(cycles)/span(boundaries) computed from approximate generators.

    Cycle directions of valuation >= noise are dropped; boundary coordinates are
    read at (coordinate precision - guard), so guard-band exponents there raise
    PrecisionInsufficient.
    """
    cycles = np.asarray(cycles, dtype=object)
    if cycles.ndim == 1:
        cycles = cycles.reshape(-1, 1)
    lattice = _clean_lattice(cycles, precision, noise) if cycles.shape[1] else Lattice(cycles, precision)
    reading = lattice.coordinate_precision.with_N(lattice.coordinate_precision.N - precision.guard)
    if reading.N < 1:
        raise PrecisionInsufficient("coordinates lost all precision inside the cycle lattice",
                                    {"N": precision.N, "max_exponent": max(lattice.exponents, default=0)})
    if lattice.rank == 0:
        return SubquotientFrame(lattice, FgModuleClass(), np.zeros((0, 0), dtype=object), reading)
    boundaries = np.asarray(boundaries, dtype=object)
    if boundaries.size:
        coords = lattice.coordinates(boundaries).entries.astype(object) % reading.modulus
    else:
        coords = np.zeros((lattice.rank, 0), dtype=object)
    red = smith_reduce(coords, reading.p, reading.N, rows_transform=True)
    klass = class_from_exponents(red.exponents, lattice.rank, reading)
    tf_rows = np.asarray(red.P, dtype=object)[len(red.exponents):]
    return SubquotientFrame(lattice, klass, tf_rows, reading)
