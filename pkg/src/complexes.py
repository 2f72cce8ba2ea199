"""
Free resolutions of O over A and their finite images.

Koszul and Tate complexes are written down in closed form from the relations;
non-complete-intersections get a minimal resolution extracted level by level.
Hom and tensor complexes against level models turn these into finite complexes
of O-modules whose homology is read by Smith normal form.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sympy import binomial

from src.dvr_core import (
    MatrixO,
    Precision,
    SpanTest,
    SubquotientFrame,
    int_valuation,
    kernel_basis,
    matmul_mod,
    min_valuation,
    subquotient_frame,
)
from src.errors import D2NotZero, NotNiceForm, PreconditionViolation, Unstabilized
from src.level_models import LevelModel, level_model, module_level_model, truncation_matrix
from src.local_algebra import (
    AugmentedAlgebra,
    ModulePresentation,
    TruncatedPoly,
    is_nice_form,
    monomials_of_degree,
)
from src.telemetry import log_event

PolyMatrix = Tuple[Tuple[TruncatedPoly, ...], ...]
TateMonomial = Tuple[Tuple[int, ...], Tuple[int, ...]]


# --- free complexes over A ---

@dataclass(frozen=True, eq=False)
class FreeComplexOverA:
    """F_0 <- F_1 <- ... <- F_top; differentials[j - 1] is d_j with rows F_{j-1} and columns F_j."""
    algebra: AugmentedAlgebra
    kind: str
    labels: Tuple[Tuple[str, ...], ...]
    differentials: Tuple[PolyMatrix, ...]
    stabilized_at: Optional[int] = None

    @property
    def top(self) -> int:
        return len(self.labels) - 1

    def rank(self, j: int) -> int:
        return len(self.labels[j]) if 0 <= j <= self.top else 0

    @property
    def ranks(self) -> List[int]:
        return [self.rank(j) for j in range(self.top + 1)]

    def d(self, j: int) -> Optional[PolyMatrix]:
        return self.differentials[j - 1] if 1 <= j <= self.top else None

    def truncated(self, top: int) -> "FreeComplexOverA":
        top = min(top, self.top)
        return FreeComplexOverA(self.algebra, self.kind, self.labels[:top + 1], self.differentials[:top],
                                self.stabilized_at)

    def render(self, j: int) -> List[List[str]]:
        names, p = self.algebra.variables, self.algebra.config.p
        return [[entry.render(names, p) for entry in row] for row in self.d(j) or ()]


def _poly_matmul(left: PolyMatrix, right: PolyMatrix, zero: TruncatedPoly) -> PolyMatrix:
    inner = len(right)
    cols = len(right[0]) if right else 0
    out = []
    for row in left:
        entries = []
        for c in range(cols):
            total = zero
            for k in range(inner):
                if not row[k].is_zero() and not right[k][c].is_zero():
                    total = total + row[k] * right[k][c]
            entries.append(total)
        out.append(tuple(entries))
    return tuple(out)


def _check_level(algebra: AugmentedAlgebra) -> int:
    top_degree = max((f.degree() for f in algebra.relations), default=1)
    return min(algebra.config.k_max, max(2, top_degree + 1))


def verify_d_squared(complex_: FreeComplexOverA, level: Optional[int] = None) -> int:
    """Checks d_{j-1} d_j = 0 in A/(t)^level for every j; returns the level used."""
    algebra = complex_.algebra
    level = level or _check_level(algebra)
    model = level_model(algebra, level)
    for j in range(2, complex_.top + 1):
        product = _poly_matmul(complex_.d(j - 1), complex_.d(j), algebra.zero())
        entries = [(a, b, e) for a, row in enumerate(product) for b, e in enumerate(row) if not e.is_zero()]
        if not entries:
            continue
        vectors = np.stack([model.encode([e]) for _, _, e in entries], axis=1)
        bad = model.outside_span(vectors)
        if np.any(bad):
            a, b, e = entries[int(np.argmax(bad))]
            raise D2NotZero(f"d_{j - 1} d_{j} does not vanish in A",
                            {"degree": j, "row": a, "column": b, "kind": complex_.kind,
                             "entry": e.render(algebra.variables, algebra.config.p), "level": level})
    return level


# --- Koszul and Tate ---

@dataclass(frozen=True, eq=False)
class TateData:
    exterior: Tuple[str, ...]
    divided: Tuple[str, ...]
    splitting: Tuple[Tuple[TruncatedPoly, ...], ...]  # f_j = sum_i splitting[j][i] * t_i
    bases: Tuple[Tuple[TateMonomial, ...], ...]

    def index(self, degree: int, monomial: TateMonomial) -> int:
        return self.bases[degree].index(monomial)

    def cycles(self, names: Sequence[str], p: int) -> List[str]:
        """z_j = sum_i g'_{ji} x_i, rendered."""
        out = []
        for row in self.splitting:
            parts = [f"({g.render(names, p)})*{x}" for g, x in zip(row, self.exterior) if not g.is_zero()]
            out.append(" + ".join(parts) if parts else "0")
        return out


def split_relation(f: TruncatedPoly) -> Tuple[TruncatedPoly, ...]:
    """g'_i with f = sum_i g'_i t_i, extracting from each monomial its lowest-index variable."""
    buckets: List[List[Tuple[Tuple[int, ...], int]]] = [[] for _ in range(f.n)]
    for alpha, coeff in f.terms:
        i = next(k for k, e in enumerate(alpha) if e)
        lowered = tuple(e - 1 if k == i else e for k, e in enumerate(alpha))
        buckets[i].append((lowered, coeff))
    return tuple(f.like(tuple(terms)) for terms in buckets)


def tate_basis(n: int, m: int, degree: int) -> List[TateMonomial]:
    """Monomials x_S y^(beta) with |S| + 2|beta| = degree."""
    out: List[TateMonomial] = []
    for e in range(degree // 2 + 1):
        size = degree - 2 * e
        if size > n:
            continue
        for beta in monomials_of_degree(m, e):
            for S in combinations(range(n), size):
                out.append((S, beta))
    return out


def tate_rank(n: int, m: int, degree: int) -> int:
    """Closed-form count of tate_basis(n, m, degree)."""
    if m == 0:
        return int(binomial(n, degree))
    return sum(int(binomial(n, degree - 2 * e)) * int(binomial(e + m - 1, m - 1))
               for e in range(degree // 2 + 1) if degree - 2 * e <= n)


def _label(monomial: TateMonomial) -> str:
    S, beta = monomial
    parts = [f"x{i + 1}" for i in S]
    parts += [f"y{j + 1}" if e == 1 else f"y{j + 1}^({e})" for j, e in enumerate(beta) if e]
    return "*".join(parts) if parts else "1"


def _tate_differential(algebra: AugmentedAlgebra, splitting, source: List[TateMonomial],
                       target: List[TateMonomial]) -> PolyMatrix:
    zero = algebra.zero()
    rows = {mono: r for r, mono in enumerate(target)}
    entries: Dict[Tuple[int, int], TruncatedPoly] = {}

    def add(row: int, col: int, value: TruncatedPoly) -> None:
        entries[(row, col)] = entries.get((row, col), zero) + value

    for col, (S, beta) in enumerate(source):
        for pos, i in enumerate(S):
            sign = -1 if pos % 2 else 1
            add(rows[(S[:pos] + S[pos + 1:], beta)], col, algebra.variable(i).scale(sign))
        outer = -1 if len(S) % 2 else 1
        for j, e in enumerate(beta):
            if not e:
                continue
            lowered = tuple(x - 1 if k == j else x for k, x in enumerate(beta))
            for i, g in enumerate(splitting[j]):
                if i in S or g.is_zero():
                    continue
                swaps = sum(1 for s in S if s > i)
                sign = outer * (-1 if swaps % 2 else 1)
                add(rows[(tuple(sorted(S + (i,))), lowered)], col, g.scale(sign))
    return tuple(tuple(entries.get((r, c), zero) for c in range(len(source))) for r in range(len(target)))


def _exterior_divided(algebra: AugmentedAlgebra, top: int, splitting, kind: str):
    n, m = algebra.n, len(splitting)
    bases = [tate_basis(n, m, q) for q in range(top + 1)]
    differentials = tuple(_tate_differential(algebra, splitting, bases[q], bases[q - 1]) for q in range(1, top + 1))
    labels = tuple(tuple(_label(mono) for mono in basis) for basis in bases)
    complex_ = FreeComplexOverA(algebra, kind, labels, differentials)
    verify_d_squared(complex_)
    return complex_, bases


def koszul_complex(algebra: AugmentedAlgebra) -> FreeComplexOverA:
    complex_, _ = _exterior_divided(algebra, algebra.n, (), "koszul")
    return complex_


def tate_complex(algebra: AugmentedAlgebra, top: Optional[int] = None) -> Tuple[FreeComplexOverA, TateData]:
    """The Koszul complex on t with divided-power variables y_j, d(y_j) = z_j, through degree top."""
    top = algebra.codim + 2 if top is None else top
    splitting = tuple(split_relation(f) for f in algebra.relations)
    complex_, bases = _exterior_divided(algebra, top, splitting, "tate")
    data = TateData(
        exterior=tuple(f"x{i + 1}" for i in range(algebra.n)),
        divided=tuple(f"y{j + 1}" for j in range(algebra.m)),
        splitting=splitting,
        bases=tuple(tuple(b) for b in bases),
    )
    log_event("complex_built", kind="tate", ranks=complex_.ranks)
    return complex_, data


# --- minimal resolutions from level models ---

def _map_on_models(ring: LevelModel, matrix: PolyMatrix, source: LevelModel, target: LevelModel) -> np.ndarray:
    block = ring.block
    out = np.zeros((target.size, source.size), dtype=object)
    for a, row in enumerate(matrix):
        for b, entry in enumerate(row):
            if not entry.is_zero():
                out[a * block:(a + 1) * block, b * block:(b + 1) * block] = ring.multiplication(entry)
    return out


def _column_order(model: LevelModel, column: np.ndarray) -> int:
    p, noise = model.precision.p, model.noise_valuation
    degrees = [sum(model.monomials[pos % model.block]) for pos, x in enumerate(column)
               if int_valuation(x, p, noise) < noise]
    return min(degrees, default=model.level)


def _syzygy_generators(algebra: AugmentedAlgebra, d_prev: PolyMatrix, source_rank: int, target_rank: int,
                       level: int) -> List[Tuple[TruncatedPoly, ...]]:
    """Minimal generators of ker(d_prev) read at `level`, returned truncated to level - 1."""
    ring = level_model(algebra, level)
    source = module_level_model(ModulePresentation.free(algebra, source_rank), level)
    target = module_level_model(ModulePresentation.free(algebra, target_rank), level)
    low = module_level_model(ModulePresentation.free(algebra, source_rank), level - 1)
    modulus = ring.precision.modulus

    D = _map_on_models(ring, d_prev, source, target)
    stacked = np.concatenate([D, target.relations], axis=1)
    kernel = kernel_basis(stacked, ring.precision)[:source.size]
    Z = matmul_mod(truncation_matrix(source, low), kernel, modulus)

    shifted = [(Z * low.precision.p) % modulus]
    shifted += [matmul_mod(low.operator(i), Z, modulus) for i in range(algebra.n)]
    span = low.extended(np.concatenate(shifted, axis=1))

    order = sorted(range(Z.shape[1]), key=lambda j: (_column_order(low, Z[:, j]), j))
    chosen = []
    for j in order:
        column = Z[:, j]
        if span.outside_span(column)[0]:
            chosen.append(low.decode(column, algebra.zero()))
            span = span.extended(column)
    return chosen


def _resolve(algebra: AugmentedAlgebra, length: int, level: int) -> FreeComplexOverA:
    n = algebra.n
    d1 = (tuple(algebra.variable(i) for i in range(n)),)
    differentials = [d1]
    ranks = [1, n]
    for j in range(2, length + 1):
        working = level + length - j + 1
        generators = _syzygy_generators(algebra, differentials[-1], ranks[-1], ranks[-2], working)
        if not generators:
            break
        dj = tuple(tuple(g[a] for g in generators) for a in range(ranks[-1]))
        for a, row in enumerate(dj):
            for b, entry in enumerate(row):
                if entry.constant_term % algebra.config.p:
                    raise Unstabilized("syzygy generator with a unit entry; the level is too low",
                                       {"degree": j, "row": a, "column": b, "level": working})
        differentials.append(dj)
        ranks.append(len(generators))
    labels = tuple(tuple(f"e{j}_{k + 1}" for k in range(r)) for j, r in enumerate(ranks))
    return FreeComplexOverA(algebra, "minimal", labels, tuple(differentials), stabilized_at=level)


def minimal_resolution_at_level(algebra: AugmentedAlgebra, length: int, level: int) -> FreeComplexOverA:
    """First `length` steps of a minimal resolution of O, accurate modulo (t)^level; Betti ranks checked at level + 1."""
    first = _resolve(algebra, length, level)
    second = _resolve(algebra, length, level + 1)
    if first.ranks != second.ranks:
        raise Unstabilized("Betti ranks differ between consecutive levels",
                           {"level": level, "ranks": first.ranks, "next_ranks": second.ranks})
    verify_d_squared(first, level)
    log_event("complex_built", kind="minimal", ranks=first.ranks, level=level)
    return first


# --- finite complexes of O-modules ---

def block_diagonal(matrix: np.ndarray, count: int) -> np.ndarray:
    rows, cols = matrix.shape
    out = np.zeros((rows * count, cols * count), dtype=object)
    for b in range(count):
        out[b * rows:(b + 1) * rows, b * cols:(b + 1) * cols] = matrix
    return out


@dataclass(frozen=True, eq=False)
class FiniteComplex:
    """
    Term j is O^dims[j] / span(relations[j]).

    differentials[j] leaves degree j: towards j + 1 for cochain complexes,
    towards j - 1 for chain complexes.
    """
    kind: str
    dims: Dict[int, int]
    relations: Dict[int, np.ndarray]
    differentials: Dict[int, np.ndarray]
    precision: Precision
    model: Optional[LevelModel] = None
    blocks: Dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_matrices(cls, kind: str, differentials: Dict[int, np.ndarray], precision: Precision) -> "FiniteComplex":
        step = 1 if kind == "cochain" else -1
        dims: Dict[int, int] = {}
        mats = {}
        for j, matrix in differentials.items():
            matrix = np.asarray(matrix, dtype=object) % precision.modulus
            dims[j] = matrix.shape[1]
            dims[j + step] = matrix.shape[0]
            mats[j] = matrix
        relations = {j: np.zeros((d, 0), dtype=object) for j, d in dims.items()}
        return cls(kind, dims, relations, mats, precision)

    @property
    def step(self) -> int:
        return 1 if self.kind == "cochain" else -1

    @property
    def noise(self) -> int:
        return self.model.noise_valuation if self.model is not None else self.precision.N - self.precision.guard

    @property
    def degrees(self) -> List[int]:
        return sorted(self.dims)

    def cycles(self, j: int) -> np.ndarray:
        dim = self.dims.get(j, 0)
        rel = self.relations.get(j, np.zeros((dim, 0), dtype=object))
        D = self.differentials.get(j)
        if D is None or dim == 0:
            return np.concatenate([np.eye(dim, dtype=object), rel], axis=1)
        target = j + self.step
        stacked = np.concatenate([D, self.relations[target]], axis=1)
        kernel = kernel_basis(stacked, self.precision)[:dim]
        return np.concatenate([kernel, rel], axis=1)

    def boundaries(self, j: int) -> np.ndarray:
        dim = self.dims.get(j, 0)
        parts = [self.relations.get(j, np.zeros((dim, 0), dtype=object))]
        incoming = self.differentials.get(j - self.step)
        if incoming is not None:
            parts.insert(0, incoming)
        return np.concatenate(parts, axis=1)

    def composites_vanish(self) -> bool:
        for j, D in self.differentials.items():
            after = self.differentials.get(j + self.step)
            if after is None:
                continue
            product = matmul_mod(after, D, self.precision.modulus)
            span = SpanTest(self.relations[j + 2 * self.step], self.precision, self.noise)
            if np.any(span.outside(product)):
                return False
        return True

    def truncation_to(self, other: "FiniteComplex", j: int) -> np.ndarray:
        """Block-diagonal projection from this complex's degree-j term onto the lower-level one."""
        return block_diagonal(truncation_matrix(self.model, other.model), self.blocks[j])


def homology(complex_: FiniteComplex, j: int) -> SubquotientFrame:
    """H_j (or H^j) with the lattice data needed to push classes through maps."""
    return subquotient_frame(complex_.cycles(j), complex_.boundaries(j), complex_.precision, complex_.noise)


def stable_homology(high: FiniteComplex, low: FiniteComplex, j: int) -> SubquotientFrame:
    """Image of H_j at the higher level inside H_j at the lower level."""
    boundaries = low.boundaries(j)
    lifted = matmul_mod(high.truncation_to(low, j), high.cycles(j), low.precision.modulus)
    cycles = np.concatenate([lifted, boundaries], axis=1)
    return subquotient_frame(cycles, boundaries, low.precision, low.noise)


def _multiplier(model: LevelModel):
    cache: Dict[TruncatedPoly, np.ndarray] = {}

    def mult(f: TruncatedPoly) -> np.ndarray:
        if f not in cache:
            cache[f] = model.multiplication(f)
        return cache[f]

    return mult


def hom_into_level(F: FreeComplexOverA, module: ModulePresentation, k: int,
                   top: Optional[int] = None) -> FiniteComplex:
    """Hom_A(F, M/(t)^k M): term j is (M_k)^{b_j}, with (delta phi)(e_b) = sum_a d_{j+1}[a][b] phi(e_a)."""
    top = F.top if top is None else min(top, F.top)
    model = module_level_model(module, k)
    size = model.size
    mult = _multiplier(model)
    dims = {j: F.rank(j) * size for j in range(top + 1)}
    relations = {j: block_diagonal(model.relations, F.rank(j)) for j in range(top + 1)}
    differentials = {}
    for j in range(top):
        d = F.d(j + 1)
        D = np.zeros((dims[j + 1], dims[j]), dtype=object)
        for a, row in enumerate(d):
            for b, entry in enumerate(row):
                if not entry.is_zero():
                    D[b * size:(b + 1) * size, a * size:(a + 1) * size] = mult(entry)
        differentials[j] = D
    blocks = {j: F.rank(j) for j in range(top + 1)}
    return FiniteComplex("cochain", dims, relations, differentials, model.precision, model, blocks)


def tensor_with_level(F: FreeComplexOverA, module: ModulePresentation, k: int) -> FiniteComplex:
    """F (x)_A M/(t)^k M as a chain complex."""
    model = module_level_model(module, k)
    size = model.size
    mult = _multiplier(model)
    dims = {j: F.rank(j) * size for j in range(F.top + 1)}
    relations = {j: block_diagonal(model.relations, F.rank(j)) for j in range(F.top + 1)}
    differentials = {}
    for j in range(1, F.top + 1):
        D = np.zeros((dims[j - 1], dims[j]), dtype=object)
        for a, row in enumerate(F.d(j)):
            for b, entry in enumerate(row):
                if not entry.is_zero():
                    D[a * size:(a + 1) * size, b * size:(b + 1) * size] = mult(entry)
        differentials[j] = D
    blocks = {j: F.rank(j) for j in range(F.top + 1)}
    return FiniteComplex("chain", dims, relations, differentials, model.precision, model, blocks)


def resolution_homology(F: FreeComplexOverA, j: int, k: int, lift: int = 2):
    """H_j(F) seen through A/(t)^k: classes of cycles that survive from level k + lift."""
    free = ModulePresentation.free(F.algebra, 1)
    high = tensor_with_level(F, free, k + lift)
    low = tensor_with_level(F, free, k)
    return stable_homology(high, low, j).klass


# --- theta ---

@dataclass(frozen=True, eq=False)
class ThetaCochain:
    degree: int
    support: Tuple[int, ...]
    row: MatrixO
    generates: bool


def theta_generator(algebra: AugmentedAlgebra, complex_: FreeComplexOverA, tate: TateData) -> ThetaCochain:
    """The cochain dual to x_{n-c+1}...x_n; in nice form it is a cocycle generating F^c_A(O)."""
    c, n = algebra.codim, algebra.n
    if c < 1:
        raise PreconditionViolation("theta is defined only in positive codimension", {"codim": c})
    if not is_nice_form(algebra):
        raise NotNiceForm("the free cotangent directions are not the last variables; apply nice_form first",
                          {"codim": c})
    if complex_.top < c + 1:
        raise PreconditionViolation("the Tate complex must reach degree c + 1", {"top": complex_.top, "codim": c})
    support = tuple(range(n - c, n))
    index = tate.index(c, (support, (0,) * algebra.m))
    prec = algebra.precision
    row = np.zeros((1, complex_.rank(c)), dtype=object)
    row[0, index] = 1

    for b, entry in enumerate(complex_.d(c + 1)[index]):
        if entry.constant_term % prec.modulus:
            raise NotNiceForm("theta is not a cocycle", {"column": complex_.labels[c + 1][b]})

    cochains = hom_into_level(complex_, ModulePresentation.residue(algebra), 1, top=c + 1)
    frame = homology(cochains, c)
    coords = frame.tf_coordinates(row.T)
    generates = frame.free_rank >= 1 and min_valuation(coords, prec.p, frame.reading.N) == 0
    log_event("theta_generator", codim=c, generates=generates, free_rank=frame.free_rank)
    return ThetaCochain(degree=c, support=support, row=MatrixO(row, prec), generates=generates)
