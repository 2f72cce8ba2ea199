"""
Augmented algebras A = O[[t_1..t_n]]/(f_1..f_m) with augmentation t_i -> 0,
finitely presented A-modules, and the cotangent module p_A/p_A^2.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.config import SessionConfig
from src.dvr_core import (
    FgModuleClass,
    MatrixO,
    Precision,
    class_from_exponents,
    cokernel_class,
    int_valuation,
    smith_reduce,
)
from src.errors import ConstantTerm, NotRegularDirection, PreconditionViolation, UnitLinearTerm
from src.telemetry import log_event

Monomial = Tuple[int, ...]


def monomial_key(alpha: Monomial) -> Tuple[int, Tuple[int, ...]]:
    """Degree-lexicographic key with t_1 < ... < t_n."""
    return sum(alpha), tuple(reversed(alpha))


def _compositions(total: int, slots: int):
    if slots == 0:
        if total == 0:
            yield ()
        return
    for e in range(total, -1, -1):
        for rest in _compositions(total - e, slots - 1):
            yield (e,) + rest


def monomials_of_degree(n: int, degree: int) -> List[Monomial]:
    return sorted(_compositions(degree, n), key=monomial_key)


def monomials_below(n: int, level: int) -> List[Monomial]:
    """All monomials in n variables of total degree < level, in deg-lex order."""
    out: List[Monomial] = []
    for degree in range(level):
        out.extend(monomials_of_degree(n, degree))
    return out


@dataclass(frozen=True)
class TruncatedPoly:
    n: int
    terms: Tuple[Tuple[Monomial, int], ...]
    modulus: int
    degree_cap: int

    def __post_init__(self):
        raw = self.terms.items() if isinstance(self.terms, Mapping) else self.terms
        merged: Dict[Monomial, int] = {}
        for alpha, coeff in raw:
            alpha = tuple(int(e) for e in alpha)
            if len(alpha) != self.n:
                raise ValueError(f"monomial {alpha} has wrong arity for {self.n} variables")
            if sum(alpha) > self.degree_cap:
                continue
            merged[alpha] = (merged.get(alpha, 0) + int(coeff)) % self.modulus
        cleaned = tuple(sorted(((a, c) for a, c in merged.items() if c), key=lambda item: monomial_key(item[0])))
        object.__setattr__(self, "terms", cleaned)

    # --- constructors ---
    @classmethod
    def zero(cls, n: int, modulus: int, degree_cap: int) -> "TruncatedPoly":
        return cls(n, (), modulus, degree_cap)

    @classmethod
    def constant(cls, value: int, n: int, modulus: int, degree_cap: int) -> "TruncatedPoly":
        return cls(n, (((0,) * n, value),), modulus, degree_cap)

    @classmethod
    def variable(cls, i: int, n: int, modulus: int, degree_cap: int) -> "TruncatedPoly":
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, ((tuple(alpha), 1),), modulus, degree_cap)

    def like(self, terms) -> "TruncatedPoly":
        return TruncatedPoly(self.n, terms, self.modulus, self.degree_cap)

    # --- inspection ---
    def as_dict(self) -> Dict[Monomial, int]:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, alpha: Monomial) -> int:
        return self.as_dict().get(tuple(alpha), 0)

    @property
    def constant_term(self) -> int:
        return self.coefficient((0,) * self.n)

    def linear_part(self) -> List[int]:
        coeffs = self.as_dict()
        out = []
        for i in range(self.n):
            alpha = [0] * self.n
            alpha[i] = 1
            out.append(coeffs.get(tuple(alpha), 0))
        return out

    def order(self) -> int:
        """Lowest total degree of a nonzero term (degree_cap + 1 for zero)."""
        return min((sum(a) for a, _ in self.terms), default=self.degree_cap + 1)

    def t_order(self) -> int:
        """Lowest positive total degree of a nonzero term."""
        return min((sum(a) for a, _ in self.terms if sum(a) > 0), default=self.degree_cap + 1)

    def degree(self) -> int:
        return max((sum(a) for a, _ in self.terms), default=0)

    def uses_variable(self, j: int) -> bool:
        return any(a[j] for a, _ in self.terms)

    # --- arithmetic ---
    def __add__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        return self.like(self.terms + other.terms)

    def __neg__(self) -> "TruncatedPoly":
        return self.like(tuple((a, -c) for a, c in self.terms))

    def __sub__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        return self + (-other)

    def scale(self, factor: int) -> "TruncatedPoly":
        return self.like(tuple((a, c * factor) for a, c in self.terms))

    def shift(self, alpha: Monomial) -> "TruncatedPoly":
        return self.like(tuple((tuple(x + y for x, y in zip(a, alpha)), c) for a, c in self.terms))

    def __mul__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        out: Dict[Monomial, int] = {}
        for a, c in self.terms:
            da = sum(a)
            for b, d in other.terms:
                if da + sum(b) > self.degree_cap:
                    continue
                key = tuple(x + y for x, y in zip(a, b))
                out[key] = out.get(key, 0) + c * d
        return self.like(tuple(out.items()))

    def reduce(self, modulus: int) -> "TruncatedPoly":
        return TruncatedPoly(self.n, self.terms, modulus, self.degree_cap)

    def substitute(self, images: Sequence["TruncatedPoly"]) -> "TruncatedPoly":
        """Compose: t_i -> images[i] (all images share one ring)."""
        if len(images) != self.n:
            raise ValueError("need one image per variable")
        target_n = images[0].n if images else self.n
        one = TruncatedPoly.constant(1, target_n, self.modulus, self.degree_cap)
        powers: Dict[Tuple[int, int], TruncatedPoly] = {}

        def power(i: int, e: int) -> TruncatedPoly:
            if e == 0:
                return one
            if (i, e) not in powers:
                powers[(i, e)] = power(i, e - 1) * images[i]
            return powers[(i, e)]

        total = TruncatedPoly.zero(target_n, self.modulus, self.degree_cap)
        for alpha, coeff in self.terms:
            term = one.scale(coeff)
            for i, e in enumerate(alpha):
                if e:
                    term = term * power(i, e)
            total = total + term
        return total

    def drop_variable(self, j: int) -> "TruncatedPoly":
        if self.uses_variable(j):
            raise ValueError(f"polynomial still uses variable {j}")
        return TruncatedPoly(self.n - 1, tuple((a[:j] + a[j + 1:], c) for a, c in self.terms),
                             self.modulus, self.degree_cap)

    def keep_variables(self, keep: Sequence[int]) -> "TruncatedPoly":
        return TruncatedPoly(len(keep), tuple((tuple(a[i] for i in keep), c) for a, c in self.terms),
                             self.modulus, self.degree_cap)

    def render(self, names: Sequence[str], p: Optional[int] = None) -> str:
        if not self.terms:
            return "0"
        pieces = []
        for alpha, coeff in self.terms:
            sign = "+"
            if coeff > self.modulus // 2:
                coeff, sign = self.modulus - coeff, "-"
            mono = "*".join(
                (names[i] if e == 1 else f"{names[i]}^{e}") for i, e in enumerate(alpha) if e
            )
            coeff_text = _render_coefficient(coeff, p)
            if mono and coeff_text == "1":
                body = mono
            elif mono:
                body = f"{coeff_text}*{mono}"
            else:
                body = coeff_text
            pieces.append((sign, body))
        text = pieces[0][1] if pieces[0][0] == "+" else f"-{pieces[0][1]}"
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text


def _render_coefficient(coeff: int, p: Optional[int]) -> str:
    if p is None or coeff <= 1:
        return str(coeff)
    e = int_valuation(coeff, p, 64)
    if p ** e == coeff:
        return "p" if e == 1 else f"p^{e}"
    return str(coeff)


# --- cotangent module ---

@dataclass(frozen=True, eq=False)
class CotangentData:
    """p_A/p_A^2 = coker(U^T : O^m -> O^n), with the SNF transform used for coordinates."""
    module: FgModuleClass
    phi: FgModuleClass
    exponents: Tuple[int, ...]
    P: np.ndarray
    P_inv: np.ndarray
    precision: Precision

    @property
    def rank(self) -> int:
        return len(self.exponents)

    @property
    def codim(self) -> int:
        return self.module.free_rank

    def free_directions(self) -> np.ndarray:
        """Linear forms (columns, length n) mapping to the free basis of the cotangent module."""
        return np.asarray(self.P_inv[:, self.rank:], dtype=object)


@dataclass(frozen=True)
class CotangentClass:
    torsion: Tuple[Tuple[int, int], ...]  # (coordinate mod p^e, e) for each torsion summand
    free: Tuple[int, ...]


def _cotangent(linear: List[List[int]], n: int, config: SessionConfig) -> CotangentData:
    prec = Precision(config.p, config.N, config.guard)
    transposed = np.array(linear, dtype=object).reshape(len(linear), n).T if linear else np.zeros((n, 0), dtype=object)
    red = smith_reduce(transposed, prec.p, prec.N, rows_transform=True, inverses=True)
    module = class_from_exponents(red.exponents, n, prec)
    if module.free_rank:
        raised = prec.raised()
        cokernel_class(MatrixO(transposed, prec), recheck=MatrixO(transposed, raised))
    return CotangentData(module=module, phi=module.torsion(), exponents=tuple(red.exponents),
                         P=red.P, P_inv=red.P_inv, precision=prec)


# --- algebras ---

@dataclass(frozen=True, eq=False)
class AugmentedAlgebra:
    variables: Tuple[str, ...]
    relations: Tuple[TruncatedPoly, ...]
    config: SessionConfig
    declared_ci: bool = False
    declared_dimension: Optional[int] = None
    declared_gorenstein: bool = False
    linear_matrix: MatrixO = field(init=False)
    cotangent: CotangentData = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "relations", tuple(r for r in self.relations if not r.is_zero()))
        p = self.config.p
        for index, f in enumerate(self.relations):
            if f.n != self.n:
                raise ValueError(f"relation {index} lives in {f.n} variables, expected {self.n}")
            if f.constant_term % f.modulus:
                raise ConstantTerm(f"relation {index + 1} has a nonzero constant term",
                                   {"relation": f.render(self.variables, p)})
            for j, coeff in enumerate(f.linear_part()):
                if coeff % p:
                    raise UnitLinearTerm(
                        f"relation {index + 1} has a unit coefficient on {self.variables[j]}; "
                        f"eliminate {self.variables[j]} before presenting the ring",
                        {"relation": f.render(self.variables, p), "variable": self.variables[j]},
                    )
        linear = [f.linear_part() for f in self.relations]
        prec = Precision(p, self.config.N, self.config.guard)
        object.__setattr__(self, "linear_matrix",
                           MatrixO(np.array(linear, dtype=object).reshape(len(linear), self.n), prec))
        object.__setattr__(self, "cotangent", _cotangent(linear, self.n, self.config))

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def m(self) -> int:
        return len(self.relations)

    @property
    def codim(self) -> int:
        return self.cotangent.codim

    @property
    def precision(self) -> Precision:
        return Precision(self.config.p, self.config.N, self.config.guard)

    @property
    def working_precision(self) -> Precision:
        return self.precision.raised()

    @property
    def coefficient_modulus(self) -> int:
        return self.config.p ** (self.config.N + self.config.guard)

    def poly(self, terms) -> TruncatedPoly:
        return TruncatedPoly(self.n, terms, self.coefficient_modulus, self.config.D)

    def zero(self) -> TruncatedPoly:
        return TruncatedPoly.zero(self.n, self.coefficient_modulus, self.config.D)

    def constant(self, value: int) -> TruncatedPoly:
        return TruncatedPoly.constant(value, self.n, self.coefficient_modulus, self.config.D)

    def variable(self, i: int) -> TruncatedPoly:
        return TruncatedPoly.variable(i, self.n, self.coefficient_modulus, self.config.D)

    def is_complete_intersection(self) -> bool:
        """Declared, or presumed when the relation count equals the height n - c."""
        return self.declared_ci or self.m == self.n - self.codim

    def with_relations(self, extra: Iterable[TruncatedPoly]) -> "AugmentedAlgebra":
        return AugmentedAlgebra(self.variables, self.relations + tuple(extra), self.config,
                                declared_ci=False, declared_dimension=self.declared_dimension,
                                declared_gorenstein=False)

    def with_config(self, config: SessionConfig) -> "AugmentedAlgebra":
        modulus = config.p ** (config.N + config.guard)
        return AugmentedAlgebra(
            self.variables,
            tuple(TruncatedPoly(f.n, f.terms, modulus, config.D) for f in self.relations),
            config, self.declared_ci, self.declared_dimension, self.declared_gorenstein,
        )

    def render_relations(self) -> List[str]:
        return [f.render(self.variables, self.config.p) for f in self.relations]


def validate_presentation(variables: Sequence[str], relations: Sequence[TruncatedPoly], config: SessionConfig,
                          declared_ci: bool = False, declared_dimension: Optional[int] = None,
                          declared_gorenstein: bool = False) -> AugmentedAlgebra:
    algebra = AugmentedAlgebra(tuple(variables), tuple(relations), config, declared_ci,
                               declared_dimension, declared_gorenstein)
    log_event("presentation_validated", n=algebra.n, m=algebra.m, codim=algebra.codim,
              phi=algebra.cotangent.phi.render())
    return algebra


# --- modules ---

@dataclass(frozen=True, eq=False)
class ModulePresentation:
    """M = A^g / (relations); each relation is a vector of g polynomials."""
    algebra: AugmentedAlgebra
    generators: int
    relations: Tuple[Tuple[TruncatedPoly, ...], ...] = ()
    killed_by_augmentation: bool = False
    waive_freeness: bool = False

    def __post_init__(self):
        cleaned = tuple(tuple(r) for r in self.relations if any(not x.is_zero() for x in r))
        for r in cleaned:
            if len(r) != self.generators:
                raise ValueError(f"module relation has {len(r)} entries, expected {self.generators}")
        object.__setattr__(self, "relations", cleaned)

    @classmethod
    def free(cls, algebra: AugmentedAlgebra, rank: int = 1) -> "ModulePresentation":
        return cls(algebra, rank, ())

    @classmethod
    def cyclic(cls, algebra: AugmentedAlgebra, polys: Sequence[TruncatedPoly]) -> "ModulePresentation":
        """A/(polys)."""
        return cls(algebra, 1, tuple((f,) for f in polys))

    @classmethod
    def residue(cls, algebra: AugmentedAlgebra) -> "ModulePresentation":
        """O viewed as an A-module through the augmentation."""
        return cls(algebra, 1, tuple((algebra.variable(i),) for i in range(algebra.n)), killed_by_augmentation=True)

    def direct_sum(self, other: "ModulePresentation") -> "ModulePresentation":
        zero = self.algebra.zero()
        left = tuple(tuple(r) + (zero,) * other.generators for r in self.relations)
        right = tuple((zero,) * self.generators + tuple(r) for r in other.relations)
        return ModulePresentation(self.algebra, self.generators + other.generators, left + right,
                                  self.killed_by_augmentation and other.killed_by_augmentation,
                                  self.waive_freeness or other.waive_freeness)

    def over(self, algebra: AugmentedAlgebra) -> "ModulePresentation":
        """Same generators and relations, regarded over another algebra on the same variables."""
        return ModulePresentation(algebra, self.generators, self.relations, self.killed_by_augmentation,
                                  self.waive_freeness)

    def full_relations(self) -> List[Tuple[TruncatedPoly, ...]]:
        """Module relations plus f_i * e_s, i.e. a presentation over the power series ring."""
        zero = self.algebra.zero()
        out = list(self.relations)
        for f in self.algebra.relations:
            for s in range(self.generators):
                out.append(tuple(f if k == s else zero for k in range(self.generators)))
        return out

    def specialization(self) -> MatrixO:
        """Constant terms of the relations: M/p_A M = coker of this g x r matrix."""
        prec = self.algebra.working_precision
        cols = [[x.constant_term for x in r] for r in self.relations]
        if not cols:
            return MatrixO.zeros(self.generators, 0, prec)
        return MatrixO(np.array(cols, dtype=object).T, prec)

    def specialization_class(self) -> FgModuleClass:
        special = self.specialization()
        return cokernel_class(special.reduce_to(self.algebra.precision), recheck=special)


# --- cotangent coordinates ---

def cotangent_module(algebra: AugmentedAlgebra) -> CotangentData:
    return algebra.cotangent


def fitting_invariants(algebra: AugmentedAlgebra) -> List[int]:
    return list(algebra.cotangent.phi.torsion_exponents)


def class_in_cotangent(algebra: AugmentedAlgebra, f: TruncatedPoly) -> CotangentClass:
    if f.constant_term % f.modulus:
        raise ConstantTerm("element is not in the augmentation ideal", {"element": f.render(algebra.variables)})
    cot = algebra.cotangent
    prec = cot.precision
    linear = np.array(f.linear_part(), dtype=object) % prec.modulus
    coords = (np.asarray(cot.P, dtype=object).dot(linear)) % prec.modulus if algebra.n else np.zeros(0, dtype=object)
    torsion = tuple((int(coords[i]) % prec.p ** e, e) for i, e in enumerate(cot.exponents) if e > 0)
    free = tuple(int(x) for x in coords[cot.rank:])
    return CotangentClass(torsion=torsion, free=free)


def in_symbolic_square(algebra: AugmentedAlgebra, f: TruncatedPoly) -> bool:
    return all(x == 0 for x in class_in_cotangent(algebra, f).free)


def order_ideal_valuation(algebra: AugmentedAlgebra, f: TruncatedPoly) -> int:
    klass = class_in_cotangent(algebra, f)
    if all(x == 0 for x in klass.free):
        raise NotRegularDirection("element lies in the symbolic square of p_A",
                                  {"element": f.render(algebra.variables, algebra.config.p)})
    p, N = algebra.config.p, algebra.config.N
    return min(int_valuation(x, p, N) for x in klass.free)


# --- changes of presentation ---

def shift_augmentation(polys: Sequence[TruncatedPoly], values: Sequence[int], p: int) -> List[TruncatedPoly]:
    """Substitute t_i -> t_i + a_i in each polynomial; every a_i must lie in (p)."""
    for a in values:
        if int(a) % p:
            raise PreconditionViolation("augmentation values must lie in (p)", {"values": [int(v) for v in values]})
    if not polys or not any(int(a) for a in values):
        return list(polys)
    sample = polys[0]
    images = [TruncatedPoly.variable(i, sample.n, sample.modulus, sample.degree_cap)
              + TruncatedPoly.constant(int(a), sample.n, sample.modulus, sample.degree_cap)
              for i, a in enumerate(values)]
    return [f.substitute(images) for f in polys]


def substitute_augmentation(algebra: AugmentedAlgebra, values: Sequence[int]) -> AugmentedAlgebra:
    """Move the augmentation t_i -> a_i to t_i -> 0 via t_i -> t_i + a_i."""
    p = algebra.config.p
    if len(values) != algebra.n:
        raise PreconditionViolation("one augmentation value per variable is required", {"n": algebra.n})
    shifted = shift_augmentation(algebra.relations, values, p)
    for index, (f, g) in enumerate(zip(algebra.relations, shifted)):
        if g.constant_term % g.modulus:
            raise ConstantTerm(f"relation {index + 1} does not vanish at the augmentation point",
                               {"relation": f.render(algebra.variables, p), "value": g.constant_term})
    return AugmentedAlgebra(algebra.variables, tuple(shifted), algebra.config, algebra.declared_ci,
                            algebra.declared_dimension, algebra.declared_gorenstein)


@dataclass(frozen=True, eq=False)
class NiceForm:
    algebra: AugmentedAlgebra
    variable_change: np.ndarray  # t = Q t'
    relation_change: np.ndarray  # f' = P f


def is_nice_form(algebra: AugmentedAlgebra) -> bool:
    """The last c variables carry no linear terms, so they are the free cotangent directions."""
    c = algebra.codim
    if c == 0:
        return True
    tail = np.asarray(algebra.linear_matrix.entries)[:, algebra.n - c:]
    return not np.any(tail)


def nice_form(algebra: AugmentedAlgebra) -> NiceForm:
    modulus = algebra.coefficient_modulus
    p = algebra.config.p
    n, m = algebra.n, algebra.m
    linear = np.array([f.linear_part() for f in algebra.relations], dtype=object).reshape(m, n)
    red = smith_reduce(linear, p, algebra.config.N + algebra.config.guard, rows_transform=True, cols_transform=True)
    Q = np.asarray(red.Q, dtype=object)
    P = np.asarray(red.P, dtype=object)
    images = []
    for i in range(n):
        image = algebra.zero()
        for j in range(n):
            if Q[i, j] % modulus:
                image = image + algebra.variable(j).scale(int(Q[i, j]))
        images.append(image)
    substituted = [f.substitute(images) for f in algebra.relations]
    recombined = []
    for i in range(m):
        g = algebra.zero()
        for k in range(m):
            if P[i, k] % modulus:
                g = g + substituted[k].scale(int(P[i, k]))
        recombined.append(g)
    names = tuple(f"{v}'" for v in algebra.variables)
    result = AugmentedAlgebra(names, tuple(recombined), algebra.config, algebra.declared_ci,
                              algebra.declared_dimension, algebra.declared_gorenstein)
    return NiceForm(algebra=result, variable_change=Q, relation_change=P)


def _unit_linear_position(f: TruncatedPoly, p: int) -> Optional[int]:
    linear = f.linear_part()
    units = [j for j, c in enumerate(linear) if c % p]
    return units[-1] if units else None


def _solve_for_variable(f: TruncatedPoly, j: int) -> TruncatedPoly:
    """t_j as a series in the other variables with f = 0 (fixed-point iteration to the degree cap)."""
    u = f.linear_part()[j]
    u_inv = pow(u, -1, f.modulus)
    linear_j = TruncatedPoly.variable(j, f.n, f.modulus, f.degree_cap).scale(u)
    rest = f - linear_j
    images = [TruncatedPoly.variable(i, f.n, f.modulus, f.degree_cap) for i in range(f.n)]
    phi = TruncatedPoly.zero(f.n, f.modulus, f.degree_cap)
    for _ in range(f.degree_cap + 1):
        images[j] = phi
        updated = rest.substitute(images).scale(-u_inv)
        if updated == phi:
            break
        phi = updated
    return phi


def eliminate_unit_relations(variables: Sequence[str], relations: Sequence[TruncatedPoly],
                             module_relations: Sequence[Tuple[TruncatedPoly, ...]], p: int):
    """
    Remove variables solvable from relations with a unit linear coefficient.

    Works on raw presentation data; returns (variables, relations, module_relations, eliminated names).
    """
    variables = list(variables)
    relations = [f for f in relations if not f.is_zero()]
    module_relations = [tuple(r) for r in module_relations]
    eliminated: List[str] = []
    while True:
        target = next(((i, j) for i, f in enumerate(relations)
                       if (j := _unit_linear_position(f, p)) is not None), None)
        if target is None:
            break
        index, j = target
        phi = _solve_for_variable(relations[index], j)
        n = len(variables)
        images = [TruncatedPoly.variable(i, n, phi.modulus, phi.degree_cap) for i in range(n)]
        images[j] = phi

        def push(g: TruncatedPoly) -> TruncatedPoly:
            return g.substitute(images).drop_variable(j)

        relations = [push(f) for k, f in enumerate(relations) if k != index]
        relations = [f for f in relations if not f.is_zero()]
        module_relations = [tuple(push(x) for x in r) for r in module_relations]
        eliminated.append(variables.pop(j))
    return tuple(variables), tuple(relations), tuple(module_relations), eliminated


def quotient_by(algebra: AugmentedAlgebra, f: TruncatedPoly, module: ModulePresentation):
    """(A/fA, M/fM), re-normalized so that the new presentation is admissible."""
    if in_symbolic_square(algebra, f):
        raise NotRegularDirection("element lies in the symbolic square of p_A",
                                  {"element": f.render(algebra.variables, algebra.config.p)})
    variables, relations, module_relations, eliminated = eliminate_unit_relations(
        algebra.variables, list(algebra.relations) + [f], module.relations, algebra.config.p,
    )
    quotient = AugmentedAlgebra(variables, relations, algebra.config, declared_ci=algebra.declared_ci,
                                declared_dimension=None if algebra.declared_dimension is None
                                else algebra.declared_dimension - 1)
    if quotient.codim != algebra.codim - 1:
        raise NotRegularDirection("codimension did not drop by one",
                                  {"before": algebra.codim, "after": quotient.codim})
    reduced = ModulePresentation(quotient, module.generators, module_relations,
                                 module.killed_by_augmentation, module.waive_freeness)
    log_event("quotient_formed", n=quotient.n, codim=quotient.codim, eliminated=eliminated)
    return quotient, reduced
