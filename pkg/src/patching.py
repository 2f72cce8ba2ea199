"""
Toy-scale patching.

A tower of finite free complexes C_n over the group algebras
Lambda_n = O[prod Z/l^e(i,n)] (l = p) is reduced modulo the cofinal family
a_s = (p^s, (1+y_i)^(l^s) - 1, w^s). At each level the reduced complexes are
scanned along the tower; the class that persists to the end of the tower is
the level-s piece of the patched complex and P = H_d of it.

Group algebras are handled through their regular representation over Z/p^s,
so every module here is a finite abelian p-group read off by Smith normal
form modulo p^s. The framing variables w enter only as a free multiplicity
s^j of the Z/p^s-module structure.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import SessionConfig, settings
from src.congruence import IdentityReport
from src.dvr_core import FgModuleClass, as_array, matmul_mod, smith_reduce
from src.errors import (
    DualityFailed,
    HomologySpread,
    IdentityFailed,
    IsoFailed,
    NoRecurringClass,
    PreconditionViolation,
    TransferFailed,
)
from src.telemetry import log_event

MAX_LEVEL_DIMENSION = 2048


# --- group-ring expressions ---

@dataclass(frozen=True)
class Exponent:
    """scale * l^(l_power [+ n]): an exponent of g_i that may move with the tower index."""
    scale: int = 1
    l_power: int = 0
    uses_n: bool = False

    def value(self, n: int, l: int) -> int:
        power = self.l_power + (n if self.uses_n else 0)
        if power < 0:
            raise PreconditionViolation("exponent l^(n+k) is negative at this tower index",
                                        {"n": n, "offset": self.l_power})
        return self.scale * l ** power

    def render(self) -> str:
        if not self.uses_n and self.l_power == 0:
            return str(self.scale)
        if self.uses_n:
            power = "n" if self.l_power == 0 else f"(n{self.l_power:+d})"
        else:
            power = str(self.l_power)
        base = "l" if power == "1" else f"l^{power}"
        return base if self.scale == 1 else f"{self.scale}*{base}"


Factor = Tuple[int, Exponent]
Element = Tuple[Tuple[Tuple[int, ...], int], ...]


@dataclass(frozen=True)
class GroupRingExpr:
    """Integer combination of monomials prod g_i^E_i with g_i = 1 + y_i (variables 0-based)."""
    terms: Tuple[Tuple[int, Tuple[Factor, ...]], ...] = ()

    @classmethod
    def constant(cls, value: int) -> "GroupRingExpr":
        return cls(((int(value), ()),)) if value else cls()

    @classmethod
    def generator(cls, index: int, exponent: Optional[Exponent] = None) -> "GroupRingExpr":
        return cls(((1, ((index, exponent or Exponent()),)),))

    def __add__(self, other: "GroupRingExpr") -> "GroupRingExpr":
        return GroupRingExpr(self.terms + other.terms)

    def __neg__(self) -> "GroupRingExpr":
        return GroupRingExpr(tuple((-c, f) for c, f in self.terms))

    def __sub__(self, other: "GroupRingExpr") -> "GroupRingExpr":
        return self + (-other)

    def variables(self) -> List[int]:
        return sorted({i for _, factors in self.terms for i, _ in factors})

    def augmentation(self) -> int:
        """Image under g_i -> 1; independent of the tower index."""
        return sum(c for c, _ in self.terms)

    def evaluate(self, tower: "PatchTower", n: int, s: int) -> Element:
        """The image in (Z/p^s)[(Z/l^s)^r]: sorted (group element, coefficient) pairs."""
        base, modulus = tower.l ** s, tower.p ** s
        out: Dict[Tuple[int, ...], int] = {}
        for coeff, factors in self.terms:
            shift = [0] * tower.r
            for index, exponent in factors:
                shift[index] += exponent.value(n, tower.l)
            key = tuple(v % base for v in shift)
            out[key] = (out.get(key, 0) + coeff) % modulus
        return tuple(sorted((k, v) for k, v in out.items() if v))

    def render(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for coeff, factors in self.terms:
            monomial = "*".join(f"g{i + 1}" if e == Exponent() else f"g{i + 1}^{e.render()}"
                                for i, e in factors)
            if not monomial:
                parts.append(str(coeff))
            elif coeff == 1:
                parts.append(monomial)
            elif coeff == -1:
                parts.append(f"-{monomial}")
            else:
                parts.append(f"{coeff}*{monomial}")
        return " + ".join(parts).replace("+ -", "- ")


ExprMatrix = Tuple[Tuple[GroupRingExpr, ...], ...]


def _transpose(matrix: ExprMatrix, rows: int, cols: int) -> ExprMatrix:
    return tuple(tuple(matrix[a][b] for a in range(rows)) for b in range(cols))


# --- tower ---

@lru_cache(maxsize=32)
def _group_grid(base: int, r: int) -> np.ndarray:
    """All elements of (Z/base)^r in row-major order, shape (base^r, r)."""
    axes = np.indices((base,) * r).reshape(r, -1).T
    return axes.astype(np.int64)


@dataclass(frozen=True)
class PatchTower:
    """
    Rings of the construction: Lambda_n with e(i, n) = n + offsets[i], the
    truncations S/a_s, and the bookkeeping for j framing variables.
    """
    p: int
    r: int = 1
    j: int = 0
    d: int = 0
    ell0: int = 0
    offsets: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.r < 1:
            raise PreconditionViolation("a tower needs at least one group variable", {"r": self.r})
        if self.j < 0 or self.d < 0 or self.ell0 < 0:
            raise PreconditionViolation("j, d and l_0 must be natural numbers",
                                        {"j": self.j, "d": self.d, "ell0": self.ell0})
        offsets = tuple(self.offsets) or (0,) * self.r
        if len(offsets) != self.r or any(o < 0 for o in offsets):
            raise PreconditionViolation("one non-negative exponent offset per group variable",
                                        {"offsets": list(offsets), "r": self.r})
        object.__setattr__(self, "offsets", offsets)

    @property
    def l(self) -> int:
        return self.p

    def exponent(self, i: int, n: int) -> int:
        return n + self.offsets[i]

    def admissible(self, n: int, s: int) -> bool:
        """Lambda_n surjects onto S/a_s exactly when every e(i, n) >= s."""
        return all(self.exponent(i, n) >= s for i in range(self.r))

    def group_order(self, s: int) -> int:
        return self.l ** (s * self.r)

    def framing(self, s: int) -> int:
        return s ** self.j

    def ring_length(self, s: int) -> int:
        """O-length of S/a_s."""
        return s * self.group_order(s) * self.framing(s)

    def truncation(self, s: int) -> List[str]:
        gens = [f"p^{s}"] + [f"(1+y{i + 1})^(l^{s}) - 1" for i in range(self.r)]
        return gens + [f"w{k + 1}^{s}" for k in range(self.j)]

    def regular_matrix(self, element: Element, s: int) -> np.ndarray:
        """Multiplication by a group-algebra element on (Z/p^s)[(Z/l^s)^r]."""
        base, modulus = self.l ** s, self.p ** s
        grid = _group_grid(base, self.r)
        size = grid.shape[0]
        out = np.zeros((size, size), dtype=np.int64)
        cols = np.arange(size)
        for shift, coeff in element:
            rows = np.ravel_multi_index(tuple(((grid + np.array(shift)) % base).T), (base,) * self.r)
            out[rows, cols] = (out[rows, cols] + coeff) % modulus
        return out

    def generator_minus_one(self, i: int, power: int, s: int) -> Element:
        """g_i^(l^power) - 1 in S/a_s."""
        shift = [0] * self.r
        shift[i] = self.l ** power % self.l ** s
        modulus = self.p ** s
        if shift[i] == 0:
            return ()
        return tuple(sorted({tuple(shift): 1, (0,) * self.r: modulus - 1}.items()))


# --- systems ---

@dataclass(frozen=True)
class Operator:
    """A family of chain endomorphisms f_n, one square matrix per degree."""
    name: str
    matrices: Dict[int, ExprMatrix]

    @classmethod
    def scalar(cls, system_ranks: Dict[int, int], value: int, name: Optional[str] = None) -> "Operator":
        matrices = {
            deg: tuple(tuple(GroupRingExpr.constant(value if a == b else 0) for b in range(rank))
                       for a in range(rank))
            for deg, rank in system_ranks.items()
        }
        return cls(name or ("identity" if value == 1 else f"scalar({value})"), matrices)


@dataclass(frozen=True)
class PatchingSystem:
    """
    Complexes C_n (n = 0..n_max) with ranks fixed along the tower.

    differentials[i] is d_i: C_i -> C_(i-1) (rows rank(i-1), columns rank(i)).
    O (x) C_n is the same complex for every n, which is the base-change
    isomorphism alpha_n.
    """
    name: str
    tower: PatchTower
    ranks: Dict[int, int]
    differentials: Dict[int, ExprMatrix] = field(default_factory=dict)
    operators: Tuple[Operator, ...] = ()
    n_max: int = 8

    def __post_init__(self):
        ranks = {int(k): int(v) for k, v in self.ranks.items() if v}
        object.__setattr__(self, "ranks", ranks)
        for deg, matrix in self.differentials.items():
            rows, cols = self.rank(deg - 1), self.rank(deg)
            if len(matrix) != rows or any(len(row) != cols for row in matrix):
                raise PreconditionViolation(f"differential d_{deg} must be {rows}x{cols}",
                                            {"degree": deg, "rows": len(matrix)})
            self._check_variables(matrix, f"d_{deg}")
        for op in self.operators:
            for deg, matrix in op.matrices.items():
                size = self.rank(deg)
                if len(matrix) != size or any(len(row) != size for row in matrix):
                    raise PreconditionViolation(f"operator {op.name} must be {size}x{size} in degree {deg}",
                                                {"operator": op.name, "degree": deg})
                self._check_variables(matrix, op.name)

    def _check_variables(self, matrix: ExprMatrix, label: str) -> None:
        used = {i for row in matrix for entry in row for i in entry.variables()}
        if used and max(used) >= self.tower.r:
            raise PreconditionViolation(f"{label} uses g{max(used) + 1} but the tower has r = {self.tower.r}",
                                        {"r": self.tower.r})

    def rank(self, degree: int) -> int:
        return self.ranks.get(degree, 0)

    @property
    def degrees(self) -> List[int]:
        return sorted(self.ranks)

    def differential(self, degree: int) -> ExprMatrix:
        if degree in self.differentials:
            return self.differentials[degree]
        zero = GroupRingExpr()
        return tuple(tuple(zero for _ in range(self.rank(degree))) for _ in range(self.rank(degree - 1)))

    def operator(self, name: str) -> Operator:
        for op in self.operators:
            if op.name == name:
                return op
        if name == "identity":
            return Operator.scalar(self.ranks, 1)
        raise PreconditionViolation(f"unknown operator {name!r}", {"known": [op.name for op in self.operators]})

    def reduced_key(self, n: int, s: int) -> tuple:
        """Normal form of S/a_s (x) C_n: exact entries of every differential and operator."""
        def evaluate(matrix: ExprMatrix):
            return tuple(tuple(entry.evaluate(self.tower, n, s) for entry in row) for row in matrix)

        diffs = tuple((deg, evaluate(m)) for deg, m in sorted(self.differentials.items()))
        ops = tuple((op.name, tuple((deg, evaluate(m)) for deg, m in sorted(op.matrices.items())))
                    for op in self.operators)
        return diffs, ops


def _augmented(matrix: ExprMatrix, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols), dtype=object)
    for a in range(rows):
        for b in range(cols):
            out[a, b] = matrix[a][b].augmentation()
    return out


def residue_homology(system: PatchingSystem) -> Dict[int, int]:
    """Dimension over k of H_i(k (x) C_n); the same for every n."""
    p = system.tower.p
    ranks = {}
    for deg in system.differentials:
        matrix = _augmented(system.differential(deg), system.rank(deg - 1), system.rank(deg))
        ranks[deg] = len(smith_reduce(matrix, p, 1).exponents) if matrix.size else 0
    return {deg: system.rank(deg) - ranks.get(deg, 0) - ranks.get(deg + 1, 0) for deg in system.degrees}


def check_concentration(system: PatchingSystem) -> Dict[int, int]:
    tower = system.tower
    dims = residue_homology(system)
    outside = {deg: dim for deg, dim in dims.items() if dim and not tower.d <= deg <= tower.d + tower.ell0}
    if outside:
        raise HomologySpread(
            f"k (x) C_n has homology outside degrees [{tower.d}, {tower.d + tower.ell0}]",
            {"homology": {str(k): v for k, v in sorted(outside.items())}, "d": tower.d, "ell0": tower.ell0},
        )
    return dims


def dual_system(system: PatchingSystem) -> PatchingSystem:
    """Hom into Lambda_n regraded by i -> 2d + l_0 - i: transposed differentials and operators."""
    tower = system.tower
    shift = 2 * tower.d + tower.ell0
    ranks = {shift - deg: rank for deg, rank in system.ranks.items()}
    differentials = {}
    for deg, matrix in system.differentials.items():
        # d_deg: C_deg -> C_(deg-1) dualizes to C^(deg-1) -> C^deg
        differentials[shift - deg + 1] = _transpose(matrix, system.rank(deg - 1), system.rank(deg))
    operators = tuple(
        Operator(op.name, {shift - deg: _transpose(m, system.rank(deg), system.rank(deg))
                           for deg, m in op.matrices.items()})
        for op in system.operators
    )
    name = system.name[:-5] if system.name.endswith("-dual") else f"{system.name}-dual"
    return PatchingSystem(name, tower, ranks, differentials, operators, system.n_max)


def same_system(first: PatchingSystem, second: PatchingSystem) -> bool:
    if first.ranks != second.ranks or first.tower != second.tower:
        return False
    keys = set(first.differentials) | set(second.differentials)
    if any(first.differential(k) != second.differential(k) for k in keys):
        return False
    return [(op.name, op.matrices) for op in first.operators] == [(op.name, op.matrices) for op in second.operators]


# --- exact linear algebra over Z/p^s ---

def _columns(vectors: np.ndarray, modulus: int) -> np.ndarray:
    vectors = np.asarray(vectors)
    if vectors.ndim == 1:
        vectors = vectors.reshape(-1, 1)
    return as_array(vectors, modulus, max(vectors.shape[0], 1))


def _finite_class(exponents: Sequence[int], rows: int, s: int, multiplicity: int = 1) -> FgModuleClass:
    exps = [e for e in exponents if e > 0] + [s] * (rows - len(exponents))
    return FgModuleClass(torsion_exponents=tuple(exps) * multiplicity)


@dataclass(frozen=True, eq=False)
class CycleGroup:
    """
    ker(outgoing) inside (Z/p^s)^dim as a finite p-group: generators Q_i * p^shift_i
    of additive order p^order_i, with coordinates read through Q^-1.
    """
    outgoing: np.ndarray
    dim: int
    p: int
    s: int
    generators: np.ndarray = field(init=False, repr=False)
    orders: Tuple[int, ...] = field(init=False)
    _rows: np.ndarray = field(init=False, repr=False)
    _shifts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        modulus = self.p ** self.s
        if self.outgoing.shape[0] == 0 or self.dim == 0:
            exponents: List[int] = []
            Q = Q_inv = np.eye(self.dim, dtype=np.int64)
        else:
            red = smith_reduce(self.outgoing, self.p, self.s, cols_transform=True, inverses=True)
            exponents, Q, Q_inv = red.exponents, red.Q, red.Q_inv
        picks = [(i, e, self.s - e) for i, e in enumerate(exponents) if e > 0]
        picks += [(i, self.s, 0) for i in range(len(exponents), self.dim)]
        cols = [i for i, _, _ in picks]
        shifts = np.array([self.p ** sh for _, _, sh in picks], dtype=np.int64)
        Q = as_array(Q, modulus, self.dim)
        gens = (Q[:, cols] * shifts[None, :]) % modulus if cols else np.zeros((self.dim, 0), dtype=np.int64)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "orders", tuple(o for _, o, _ in picks))
        object.__setattr__(self, "_rows", as_array(Q_inv, modulus, self.dim)[cols])
        object.__setattr__(self, "_shifts", shifts)

    @property
    def count(self) -> int:
        return len(self.orders)

    def coordinates(self, vectors: np.ndarray) -> np.ndarray:
        modulus = self.p ** self.s
        vectors = _columns(vectors, modulus)
        if self.count == 0:
            return np.zeros((0, vectors.shape[1]), dtype=np.int64)
        image = matmul_mod(self._rows, vectors, modulus)
        if np.any(image % self._shifts[:, None]):
            raise IdentityFailed("vector is not a cycle", {"s": self.s})
        orders = np.array([self.p ** o for o in self.orders], dtype=np.int64)
        return (image // self._shifts[:, None]) % orders[:, None]

    def quotient(self, relations: Optional[np.ndarray] = None) -> Tuple[int, ...]:
        """Smith exponents of span(generators) / span(relations)."""
        if self.count == 0:
            return ()
        modulus = self.p ** self.s
        coords = self.coordinates(relations) if relations is not None and np.size(relations) else \
            np.zeros((self.count, 0), dtype=np.int64)
        orders = np.diag([self.p ** o % modulus for o in self.orders]).astype(np.int64)
        return tuple(smith_reduce(np.hstack([coords, orders]), self.p, self.s).exponents)

    def quotient_class(self, relations: Optional[np.ndarray] = None, multiplicity: int = 1) -> FgModuleClass:
        return _finite_class(self.quotient(relations), self.count, self.s, multiplicity)


def in_image(matrix: np.ndarray, vectors: np.ndarray, p: int, s: int) -> np.ndarray:
    """For each column of vectors, whether it lies in the Z/p^s-span of the columns of matrix."""
    modulus = p ** s
    vectors = _columns(vectors, modulus)
    if matrix.shape[1] == 0 or matrix.shape[0] == 0:
        return ~np.any(vectors, axis=0)
    red = smith_reduce(matrix, p, s, rows_transform=True)
    image = matmul_mod(as_array(red.P, modulus, matrix.shape[0]), vectors, modulus)
    floors = np.full(matrix.shape[0], modulus, dtype=np.int64)
    for i, e in enumerate(red.exponents):
        floors[i] = p ** e
    return ~np.any(image % floors[:, None], axis=0)


# --- level complexes ---

@dataclass(frozen=True, eq=False)
class LevelComplex:
    """S/a_s (x) C_n on the regular representation (framing factored out)."""
    system: PatchingSystem
    n: int
    s: int
    differentials: Dict[int, np.ndarray]
    operators: Dict[str, Dict[int, np.ndarray]]

    @property
    def modulus(self) -> int:
        return self.system.tower.p ** self.s

    def dim(self, degree: int) -> int:
        return self.system.rank(degree) * self.system.tower.group_order(self.s)

    def outgoing(self, degree: int) -> np.ndarray:
        if degree in self.differentials:
            return self.differentials[degree]
        return np.zeros((self.dim(degree - 1), self.dim(degree)), dtype=np.int64)

    def incoming(self, degree: int) -> np.ndarray:
        if degree + 1 in self.differentials:
            return self.differentials[degree + 1]
        return np.zeros((self.dim(degree), 0), dtype=np.int64)

    def cycles(self, degree: int) -> CycleGroup:
        return CycleGroup(self.outgoing(degree), self.dim(degree), self.system.tower.p, self.s)

    def homology(self, degree: int) -> FgModuleClass:
        return self.cycles(degree).quotient_class(self.incoming(degree))

    def scalar_action(self, element: Element, degree: int) -> np.ndarray:
        tower = self.system.tower
        return np.kron(np.eye(self.system.rank(degree), dtype=np.int64), tower.regular_matrix(element, self.s))

    def operator(self, name: str, degree: int) -> np.ndarray:
        if name == "identity" and name not in self.operators:
            return np.eye(self.dim(degree), dtype=np.int64)
        return self.operators[name].get(degree, np.zeros((self.dim(degree), self.dim(degree)), dtype=np.int64))


def _regular_block(tower: PatchTower, matrix: ExprMatrix, rows: int, cols: int, n: int, s: int) -> np.ndarray:
    size = tower.group_order(s)
    out = np.zeros((rows * size, cols * size), dtype=np.int64)
    for a in range(rows):
        for b in range(cols):
            element = matrix[a][b].evaluate(tower, n, s)
            if element:
                out[a * size:(a + 1) * size, b * size:(b + 1) * size] = tower.regular_matrix(element, s)
    return out


def level_complex(system: PatchingSystem, n: int, s: int) -> LevelComplex:
    tower = system.tower
    if not tower.admissible(n, s):
        raise PreconditionViolation(f"Lambda_{n} does not surject onto S/a_{s}", {"n": n, "s": s})
    largest = max(system.ranks.values(), default=0) * tower.group_order(s)
    if largest > MAX_LEVEL_DIMENSION:
        raise PreconditionViolation(
            f"level {s} needs {largest} coordinates per term (limit {MAX_LEVEL_DIMENSION})",
            {"s": s, "r": tower.r, "p": tower.p, "dimension": largest},
        )
    diffs = {deg: _regular_block(tower, system.differential(deg), system.rank(deg - 1), system.rank(deg), n, s)
             for deg in system.differentials}
    ops = {op.name: {deg: _regular_block(tower, m, system.rank(deg), system.rank(deg), n, s)
                     for deg, m in op.matrices.items()}
           for op in system.operators}
    return LevelComplex(system, n, s, diffs, ops)


def _check_chain_maps(complex_: LevelComplex) -> None:
    """Every operator commutes with the differentials."""
    modulus = complex_.modulus
    for name in complex_.operators:
        for deg in complex_.differentials:
            d = complex_.differentials[deg]
            left = matmul_mod(d, complex_.operator(name, deg), modulus)
            right = matmul_mod(complex_.operator(name, deg - 1), d, modulus)
            if np.any((left - right) % modulus):
                raise PreconditionViolation(f"operator {name} does not commute with d_{deg}",
                                            {"operator": name, "degree": deg, "n": complex_.n, "s": complex_.s})


# --- patching ---

@dataclass(frozen=True, eq=False)
class PatchedLevel:
    """P(c) modulo a_s with its R-operators in cycle coordinates."""
    s: int
    recurring_from: int
    distinct_classes: int
    complex: LevelComplex
    cycles: CycleGroup
    group_class: FgModuleClass
    klass: FgModuleClass
    minimal_generators: int
    free: bool
    operators: Dict[str, np.ndarray]

    @property
    def length(self) -> int:
        return sum(self.klass.torsion_exponents)

    def quotient(self, *relations: np.ndarray) -> FgModuleClass:
        """Group part of P_s modulo boundaries and the given extra relations."""
        pieces = [self.complex.incoming(self.complex.system.tower.d)] + [r for r in relations if np.size(r)]
        return self.cycles.quotient_class(np.hstack(pieces) if pieces else None)

    def images(self, action: np.ndarray) -> np.ndarray:
        return matmul_mod(as_array(action, self.complex.modulus), self.cycles.generators, self.complex.modulus)


@dataclass(frozen=True, eq=False)
class PatchedModule:
    system: PatchingSystem
    levels: Tuple[PatchedLevel, ...]
    mcm: str = "not evaluated"

    @property
    def top(self) -> int:
        return self.levels[-1].s

    def level(self, s: int) -> PatchedLevel:
        for level in self.levels:
            if level.s == s:
                return level
        raise PreconditionViolation(f"level {s} was not assembled", {"s_max": self.top})

    def summary(self) -> List[dict]:
        return [
            {
                "s": lv.s,
                "recurring_from": lv.recurring_from,
                "distinct_classes": lv.distinct_classes,
                "module": lv.klass.render(),
                "length": lv.length,
                "minimal_generators": lv.minimal_generators,
                "free": lv.free,
                "ring_length": self.system.tower.ring_length(lv.s),
            }
            for lv in self.levels
        ]


def _recurring_index(system: PatchingSystem, s: int, window: int) -> Tuple[int, int]:
    """Start of the run of equal reduced complexes that reaches the end of the tower."""
    indices = [n for n in range(system.n_max + 1) if system.tower.admissible(n, s)]
    if not indices:
        raise NoRecurringClass(f"no tower index reaches level {s}", {"s": s, "n_max": system.n_max})
    keys = [system.reduced_key(n, s) for n in indices]
    start = len(keys) - 1
    while start > 0 and keys[start - 1] == keys[-1]:
        start -= 1
    run = len(keys) - start
    distinct = len(set(keys))
    if run < window:
        raise NoRecurringClass(
            f"no class of S/a_{s} (x) C_n recurs {window} times before n = {system.n_max}",
            {"s": s, "n_max": system.n_max, "tail_run": run, "distinct": distinct},
        )
    return indices[start], distinct


def _minimal_generators(level_cycles: CycleGroup, complex_: LevelComplex) -> int:
    """Cyclic summands of P_s / (p, g_i - 1) P_s, a vector space over k."""
    tower = complex_.system.tower
    d = tower.d
    p = tower.p
    relations = [complex_.incoming(d), (p * level_cycles.generators) % complex_.modulus]
    for i in range(tower.r):
        action = complex_.scalar_action(tower.generator_minus_one(i, 0, complex_.s), d)
        relations.append(matmul_mod(action, level_cycles.generators, complex_.modulus))
    return len(level_cycles.quotient_class(np.hstack(relations)).torsion_exponents)


def _patch_level(system: PatchingSystem, s: int, window: int) -> PatchedLevel:
    tower = system.tower
    n, distinct = _recurring_index(system, s, window)
    complex_ = level_complex(system, n, s)
    _check_chain_maps(complex_)
    cycles = complex_.cycles(tower.d)
    group_class = cycles.quotient_class(complex_.incoming(tower.d))
    mu = _minimal_generators(cycles, complex_)
    free = sum(group_class.torsion_exponents) == mu * s * tower.group_order(s)
    operators = {
        name: cycles.coordinates(matmul_mod(complex_.operator(name, tower.d), cycles.generators, complex_.modulus))
        for name in complex_.operators
    }
    klass = FgModuleClass(torsion_exponents=group_class.torsion_exponents * tower.framing(s))
    return PatchedLevel(s, n, distinct, complex_, cycles, group_class, klass, mu, free, operators)


def _check_transition(level: PatchedLevel, previous: PatchedLevel) -> None:
    """P_s (x) S/a_(s-1) has the class of P_(s-1)."""
    tower = level.complex.system.tower
    s, modulus = level.s, level.complex.modulus
    relations = [(tower.p ** (s - 1) * level.cycles.generators) % modulus]
    for i in range(tower.r):
        action = level.complex.scalar_action(tower.generator_minus_one(i, s - 1, s), tower.d)
        relations.append(matmul_mod(action, level.cycles.generators, modulus))
    reduced = level.quotient(*relations)
    if not reduced.same_class(previous.group_class):
        raise IdentityFailed(
            f"level {s} does not reduce to level {s - 1}",
            {"s": s, "reduced": reduced.render(), "previous": previous.group_class.render()},
        )


def patch(system: PatchingSystem, tower: Optional[PatchTower] = None, s_max: int = 3,
          config: SessionConfig = settings) -> PatchedModule:
    """Assemble P(c) = H_d of the patched complex at levels 1..s_max."""
    if tower is not None and tower != system.tower:
        raise PreconditionViolation("system was built over a different tower", {"system": system.name})
    if s_max < 1:
        raise PreconditionViolation("s_max must be positive", {"s_max": s_max})
    check_concentration(system)
    levels: List[PatchedLevel] = []
    for s in range(1, s_max + 1):
        level = _patch_level(system, s, config.stabilization_window)
        if levels:
            _check_transition(level, levels[-1])
        if system.tower.ell0 == 0 and not level.free:
            raise IdentityFailed(f"P is not free over S/a_{s} although l_0 = 0",
                                 {"s": s, "module": level.klass.render(), "generators": level.minimal_generators})
        log_event("patch_level", system=system.name, s=s, recurring_from=level.recurring_from,
                  module=level.klass.render(), length=level.length, free=level.free)
        levels.append(level)
    return PatchedModule(system, tuple(levels))


# --- checks ---

def _coinvariant_relations(level: PatchedLevel) -> List[np.ndarray]:
    """(g_i - 1) applied to the cycle generators."""
    tower = level.complex.system.tower
    return [level.images(level.complex.scalar_action(tower.generator_minus_one(i, 0, level.s), tower.d))
            for i in range(tower.r)]


def _base_level(system: PatchingSystem, s: int) -> Tuple[CycleGroup, np.ndarray, Dict[str, np.ndarray]]:
    """C_0 (x) Z/p^s over O: cycles in degree d, boundaries and R_0-operators."""
    d, p, modulus = system.tower.d, system.tower.p, system.tower.p ** s
    size = system.rank(d)
    outgoing = _columns(_augmented(system.differential(d), system.rank(d - 1), size), modulus)
    incoming = _columns(_augmented(system.differential(d + 1), size, system.rank(d + 1)), modulus)
    ops = {}
    for op in system.operators:
        matrix = _augmented(op.matrices[d], size, size) if d in op.matrices else np.zeros((size, size))
        ops[op.name] = _columns(matrix, modulus)
    return CycleGroup(outgoing, size, p, s), incoming, ops


def check_quotient_iso(patched: PatchedModule, system: Optional[PatchingSystem] = None) -> IdentityReport:
    """P/nP against H_d(C_0) level by level, together with the cokernels of the R_0-operators."""
    system = system or patched.system
    rows = []
    lhs = rhs = FgModuleClass()
    for level in patched.levels:
        coinvariants = _coinvariant_relations(level)
        lhs = level.quotient(*coinvariants)
        base_cycles, base_boundaries, base_ops = _base_level(system, level.s)
        rhs = base_cycles.quotient_class(base_boundaries)
        row = {"s": level.s, "patched": lhs.render(), "base": rhs.render(), "operators": {}}
        agree = lhs.same_class(rhs)
        for name in level.operators:
            op_image = level.images(level.complex.operator(name, system.tower.d))
            left = level.quotient(*coinvariants, op_image)
            base_image = matmul_mod(base_ops[name], base_cycles.generators, level.complex.modulus)
            right = base_cycles.quotient_class(np.hstack([base_boundaries, base_image]))
            row["operators"][name] = {"patched": left.render(), "base": right.render()}
            agree = agree and left.same_class(right)
        rows.append(row)
        if not agree:
            raise IsoFailed(f"P/nP and H_{system.tower.d}(C_0) differ at level {level.s}", {"levels": rows})
    log_event("identity_checked", name="quotient_iso", system=system.name, holds=True)
    return IdentityReport(name="quotient_iso", lhs=sum(lhs.torsion_exponents), rhs=sum(rhs.torsion_exponents),
                          holds=True, details={"system": system.name, "levels": rows})


def _linear_dual(level: PatchedLevel) -> LevelComplex:
    """Hom_(Z/p^s)(-, Z/p^s) of the patched level, regraded by i -> 2d + l_0 - i."""
    complex_ = level.complex
    tower = complex_.system.tower
    shift = 2 * tower.d + tower.ell0
    diffs = {shift - deg + 1: np.ascontiguousarray(m.T) for deg, m in complex_.differentials.items()}
    ops = {name: {shift - deg: np.ascontiguousarray(m.T) for deg, m in mats.items()}
           for name, mats in complex_.operators.items()}
    dual_ranks = {shift - deg: rank for deg, rank in complex_.system.ranks.items()}
    shell = PatchingSystem(f"{complex_.system.name}-linear-dual", tower, dual_ranks, {}, (), complex_.system.n_max)
    return LevelComplex(shell, complex_.n, complex_.s, diffs, ops)


def check_duality(system: PatchingSystem, tower: Optional[PatchTower] = None, s_max: int = 3,
                  config: SessionConfig = settings) -> IdentityReport:
    """P(c^dagger) against the linear dual of the patched complex at every level, with operators."""
    patched = patch(system, tower, s_max, config)
    dual = dual_system(system)
    patched_dual = patch(dual, tower, s_max, config)
    involutive = same_system(dual_system(dual), system)
    d = system.tower.d
    rows = []
    for level, dual_level in zip(patched.levels, patched_dual.levels):
        linear = _linear_dual(level)
        cycles = linear.cycles(d)
        lhs = dual_level.group_class
        rhs = cycles.quotient_class(linear.incoming(d))
        row = {"s": level.s, "patched_dual": lhs.render(), "dual_of_patched": rhs.render(), "operators": {}}
        agree = lhs.same_class(rhs)
        for name in level.operators:
            left = dual_level.quotient(dual_level.images(dual_level.complex.operator(name, d)))
            image = matmul_mod(linear.operator(name, d), cycles.generators, linear.modulus)
            right = cycles.quotient_class(np.hstack([linear.incoming(d), image]))
            row["operators"][name] = {"patched_dual": left.render(), "dual_of_patched": right.render()}
            agree = agree and left.same_class(right)
        rows.append(row)
        if not agree:
            raise DualityFailed(f"P(c^dagger) and P(c)^dual differ at level {level.s}", {"levels": rows})
    if not involutive:
        raise DualityFailed("the double dual does not return the system", {"system": system.name})
    top, dual_top = patched.levels[-1], patched_dual.levels[-1]
    log_event("identity_checked", name="duality", system=system.name, holds=True)
    return IdentityReport(name="duality", lhs=dual_top.length, rhs=top.length, holds=True,
                          details={"system": system.name, "dual": dual.name, "involutive": involutive,
                                   "levels": rows})


def endomorphism_transfer(system: PatchingSystem, f: Operator, tau: GroupRingExpr,
                          tower: Optional[PatchTower] = None, s_max: int = 3,
                          config: SessionConfig = settings) -> IdentityReport:
    """P(f) equals multiplication by tau on P at every level."""
    operators = tuple(op for op in system.operators if op.name != f.name) + (f,)
    with_f = PatchingSystem(system.name, system.tower, system.ranks, system.differentials, operators, system.n_max)
    patched = patch(with_f, tower, s_max, config)
    d = system.tower.d
    rows = []
    for level in patched.levels:
        complex_ = level.complex
        tau_action = complex_.scalar_action(tau.evaluate(system.tower, complex_.n, level.s), d)
        difference = (complex_.operator(f.name, d) - tau_action) % complex_.modulus
        vanishes = in_image(complex_.incoming(d), level.images(difference), system.tower.p, level.s)
        rows.append({"s": level.s, "n": complex_.n, "failing_generators": int(np.sum(~vanishes))})
        if not np.all(vanishes):
            raise TransferFailed(f"P({f.name}) differs from {tau.render()} at level {level.s}",
                                 {"levels": rows, "operator": f.name, "tau": tau.render()})
    log_event("identity_checked", name="endomorphism_transfer", system=system.name, operator=f.name, holds=True)
    return IdentityReport(name="endomorphism_transfer", lhs=0, rhs=0, holds=True,
                          details={"system": system.name, "operator": f.name, "tau": tau.render(), "levels": rows})
