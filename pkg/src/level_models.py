"""
Artinian level models M/(t)^k M and the finite-level certificates built on them.

A level model is the O-module O^{g*B} / span{x^a * r truncated}, where B runs over
monomials of degree < k. Answers that depend on the level are accepted only once
consecutive levels agree.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import SessionConfig
from src.dvr_core import (
    FgModuleClass,
    MatrixO,
    Precision,
    SpanTest,
    cokernel_class,
    int_valuation,
    kernel_basis,
    matmul_mod,
    o_length_at_precision,
)
from src.errors import (
    DegreeCapExceeded,
    NotFound,
    PreconditionViolation,
    Unstabilized,
)
from src.local_algebra import (
    AugmentedAlgebra,
    ModulePresentation,
    Monomial,
    TruncatedPoly,
    eliminate_unit_relations,
    monomials_below,
)
from src.telemetry import log_event


@dataclass(frozen=True, eq=False)
class LevelModel:
    level: int
    n: int
    generators: int
    monomials: Tuple[Monomial, ...]
    relations: np.ndarray
    precision: Precision
    index: Dict[Monomial, int] = field(repr=False)

    @property
    def block(self) -> int:
        return len(self.monomials)

    @property
    def size(self) -> int:
        return self.generators * self.block

    @property
    def noise_valuation(self) -> int:
        """Coordinates of at least this valuation are indistinguishable from zero."""
        return self.precision.N - self.precision.guard

    def position(self, s: int, alpha: Monomial) -> Optional[int]:
        i = self.index.get(tuple(alpha))
        return None if i is None else s * self.block + i

    def encode(self, vector: Sequence[TruncatedPoly]) -> np.ndarray:
        out = np.zeros(self.size, dtype=object)
        for s, f in enumerate(vector):
            for alpha, coeff in f.terms:
                pos = self.position(s, alpha)
                if pos is not None:
                    out[pos] = (out[pos] + coeff) % self.precision.modulus
        return out

    def decode(self, column: np.ndarray, template: TruncatedPoly) -> Tuple[TruncatedPoly, ...]:
        out = []
        for s in range(self.generators):
            terms = [(alpha, int(column[s * self.block + i])) for i, alpha in enumerate(self.monomials)]
            out.append(TruncatedPoly(template.n, terms, template.modulus, template.degree_cap))
        return tuple(out)

    def multiplication(self, f: TruncatedPoly) -> np.ndarray:
        """Matrix of multiplication by f on O^{g*B} (truncating degrees >= level)."""
        mat = np.zeros((self.size, self.size), dtype=object)
        modulus = self.precision.modulus
        for j, alpha in enumerate(self.monomials):
            for beta, coeff in f.terms:
                target = self.index.get(tuple(a + b for a, b in zip(alpha, beta)))
                if target is None:
                    continue
                for s in range(self.generators):
                    row, col = s * self.block + target, s * self.block + j
                    mat[row, col] = (mat[row, col] + coeff) % modulus
        return mat

    def operator(self, i: int) -> np.ndarray:
        alpha = [0] * self.n
        alpha[i] = 1
        return self.multiplication(TruncatedPoly(self.n, ((tuple(alpha), 1),), self.precision.modulus, self.level))

    def p_operator(self) -> np.ndarray:
        return np.eye(self.size, dtype=object) * self.precision.p

    @cached_property
    def _span(self) -> SpanTest:
        return SpanTest(self.relations, self.precision, self.noise_valuation)

    def outside_span(self, vectors: np.ndarray) -> np.ndarray:
        """For each column, whether it is nonzero in the level model (noise ignored)."""
        return self._span.outside(vectors)

    def extended(self, columns: np.ndarray) -> "LevelModel":
        """Same basis with extra relation columns."""
        columns = np.asarray(columns, dtype=object).reshape(self.size, -1)
        return LevelModel(self.level, self.n, self.generators, self.monomials,
                          np.concatenate([self.relations, columns], axis=1), self.precision, self.index)

    def module_class(self) -> FgModuleClass:
        prec = self.precision
        low = prec.with_N(prec.N - prec.guard)
        return cokernel_class(MatrixO(self.relations, prec).reduce_to(low), allow_uncertified=True)

    def o_length(self) -> int:
        return o_length_at_precision(self.module_class(), self.noise_valuation)


def _relation_order(vector: Sequence[TruncatedPoly]) -> int:
    return min(f.order() for f in vector)


def module_level_model(module: ModulePresentation, k: int, precision: Optional[Precision] = None) -> LevelModel:
    algebra = module.algebra
    config = algebra.config
    if k - 1 > config.D:
        raise DegreeCapExceeded(f"level {k} needs degree {k - 1} beyond the cap D = {config.D}",
                                {"level": k, "D": config.D})
    level = 1 if module.killed_by_augmentation else k
    prec = precision or algebra.working_precision
    monos = monomials_below(algebra.n, level)
    model = LevelModel(level=level, n=algebra.n, generators=module.generators, monomials=tuple(monos),
                       relations=np.zeros((0, 0), dtype=object), precision=prec,
                       index={m: i for i, m in enumerate(monos)})
    columns = []
    for rel in module.full_relations():
        order = _relation_order(rel)
        for alpha in monos:
            if sum(alpha) + order >= level:
                break
            col = model.encode([f.shift(alpha) for f in rel])
            if np.any(col):
                columns.append(col)
    rel_matrix = np.stack(columns, axis=1) if columns else np.zeros((model.size, 0), dtype=object)
    object.__setattr__(model, "relations", rel_matrix)
    return model


def level_model(algebra: AugmentedAlgebra, k: int, precision: Optional[Precision] = None) -> LevelModel:
    return module_level_model(ModulePresentation.free(algebra, 1), k, precision)


def truncation_matrix(source: LevelModel, target: LevelModel) -> np.ndarray:
    """Projection O^{g*B_source} -> O^{g*B_target} dropping monomials absent from the target."""
    mat = np.zeros((target.size, source.size), dtype=object)
    for s in range(source.generators):
        for i, alpha in enumerate(source.monomials):
            pos = target.position(s, alpha)
            if pos is not None:
                mat[pos, s * source.block + i] = 1
    return mat


def kernel_of_operators(model: LevelModel, operators: Sequence[np.ndarray]) -> np.ndarray:
    """Vectors x with op(x) in the relation span for every operator (columns, length model.size)."""
    size, rel = model.size, model.relations
    r = rel.shape[1]
    blocks = len(operators)
    stacked = np.zeros((size * blocks, size + r * blocks), dtype=object)
    for b, op in enumerate(operators):
        stacked[b * size:(b + 1) * size, :size] = op
        stacked[b * size:(b + 1) * size, size + b * r:size + (b + 1) * r] = rel
    kernel = kernel_basis(stacked, model.precision)
    return kernel[:size]


# --- regularity ---

@dataclass(frozen=True)
class RegularityVerdict:
    regular: bool
    level: int
    witness: Optional[Tuple[TruncatedPoly, ...]] = None


def _degree_shift(f: TruncatedPoly) -> int:
    order = f.t_order()
    return 1 if order > f.degree_cap else order


def _projected_kernel(f: TruncatedPoly, module: ModulePresentation, level: int, low: LevelModel) -> np.ndarray:
    """Kernel of f at `level`, truncated to the model `low`."""
    high = module_level_model(module, level)
    kernel = kernel_of_operators(high, [high.multiplication(f)])
    return matmul_mod(truncation_matrix(high, low), kernel, low.precision.modulus)


def _regularity_at(f: TruncatedPoly, module: ModulePresentation, level: int) -> RegularityVerdict:
    """
    Truncation creates kernel vectors near the top degree, so the kernel is
    projected to a lower model from rising levels until the image stops shrinking.
    """
    config = module.algebra.config
    low = module_level_model(module, max(1, level - _degree_shift(f) - 1))
    cap = min(config.D + 1, level + config.N)
    image = _projected_kernel(f, module, level, low)
    high = level
    while image.shape[1] and np.any(low.outside_span(image)) and high < cap:
        high += 1
        narrower = _projected_kernel(f, module, high, low)
        stable = narrower.shape[1] == 0 or not np.any(low.extended(narrower).outside_span(image))
        image = narrower
        if stable:
            break
    outside = low.outside_span(image) if image.shape[1] else np.zeros(0, dtype=bool)
    if not np.any(outside):
        return RegularityVerdict(True, level)
    column = image[:, int(np.argmax(outside))]
    return RegularityVerdict(False, level, low.decode(column, module.algebra.zero()))


def is_regular_on(f: TruncatedPoly, module: ModulePresentation, k: int = 4) -> RegularityVerdict:
    """Finite-level test that f is not a zero-divisor on M; two consecutive levels must agree."""
    k_max = module.algebra.config.k_max
    level = max(k, _degree_shift(f) + 2)
    previous = None
    while level <= k_max:
        current = _regularity_at(f, module, level)
        if previous is not None and previous.regular == current.regular:
            log_event("stabilized", check="is_regular_on", level=previous.level, regular=previous.regular)
            return previous
        previous = current
        level += 1
    raise Unstabilized("regularity verdict did not stabilize", {"k_max": k_max, "levels_tried": level - k})


@dataclass(frozen=True)
class SequenceVerdict:
    regular: bool
    level: Optional[int]
    failed_at: Optional[int] = None
    reason: str = ""


def is_regular_sequence(algebra: AugmentedAlgebra, sequence: Sequence[TruncatedPoly], k: int = 4) -> SequenceVerdict:
    """Whether `sequence` is a regular sequence in O[[t]] (tested one element at a time)."""
    if len(sequence) > algebra.n:
        return SequenceVerdict(False, None, reason="longer than the height bound n")
    base = AugmentedAlgebra(algebra.variables, (), algebra.config)
    level = None
    for index, f in enumerate(sequence):
        verdict = is_regular_on(f, ModulePresentation.free(base, 1), k)
        level = max(level or 0, verdict.level)
        if not verdict.regular:
            return SequenceVerdict(False, level, failed_at=index, reason="zero-divisor modulo the preceding elements")
        base = base.with_relations([f])
    return SequenceVerdict(True, level)


@dataclass(frozen=True, eq=False)
class CICover:
    algebra: AugmentedAlgebra
    selected: Tuple[int, ...]
    level: Optional[int]


def ci_cover_search(algebra: AugmentedAlgebra, k: int = 4) -> CICover:
    """Search subsets of the relations for a regular sequence of length n - c with matching cotangent data."""
    c = algebra.codim
    if algebra.declared_dimension is None or algebra.declared_dimension != c + 1:
        raise PreconditionViolation("CI-cover search needs a declared dimension equal to c + 1",
                                    {"declared_dimension": algebra.declared_dimension, "codim": c})
    h = algebra.n - c
    for chosen in combinations(range(algebra.m), h):
        sequence = [algebra.relations[i] for i in chosen]
        verdict = is_regular_sequence(algebra, sequence, k)
        if not verdict.regular:
            continue
        cover = AugmentedAlgebra(algebra.variables, tuple(sequence), algebra.config, declared_ci=True,
                                 declared_dimension=algebra.declared_dimension)
        if cover.codim == c and cover.cotangent.phi.same_class(algebra.cotangent.phi):
            log_event("ci_cover_found", selected=list(chosen), level=verdict.level)
            return CICover(cover if len(chosen) < algebra.m else algebra, tuple(chosen), verdict.level)
    raise NotFound("no subset of the relations is a regular sequence with the same cotangent data",
                   {"h": h, "m": algebra.m})


# --- depth and grade certificates ---

@dataclass(frozen=True)
class Certificate:
    kind: str
    required: int
    achieved: int
    sequence: Tuple[str, ...] = ()
    level: Optional[int] = None
    waived: bool = False

    @property
    def passed(self) -> bool:
        return self.waived or self.achieved >= self.required

    def status(self) -> str:
        if self.waived:
            return "waived"
        return "level-certified" if self.passed else "failed"


def generic_linear_forms(algebra: AugmentedAlgebra, count: int, seed: int,
                         directions: Optional[np.ndarray] = None) -> List[TruncatedPoly]:
    """Seeded combinations sum_j c_j * (direction_j), with c_j drawn from 1..p-1."""
    rng = np.random.default_rng(seed)
    p = algebra.config.p
    if directions is None:
        directions = np.eye(algebra.n, dtype=object)
    forms = []
    for _ in range(count):
        coeffs = rng.integers(1, p, size=directions.shape[1]) if directions.shape[1] else []
        linear = [sum(int(c) * int(directions[i, j]) for j, c in enumerate(coeffs)) for i in range(algebra.n)]
        forms.append(algebra.poly(tuple(((tuple(1 if k == i else 0 for k in range(algebra.n))), linear[i])
                                       for i in range(algebra.n))))
    return [f for f in forms if not f.is_zero()]


def _quotient_module(module: ModulePresentation, g: TruncatedPoly) -> ModulePresentation:
    zero = module.algebra.zero()
    extra = tuple(tuple(g if k == s else zero for k in range(module.generators)) for s in range(module.generators))
    return ModulePresentation(module.algebra, module.generators, module.relations + extra,
                              module.killed_by_augmentation, module.waive_freeness)


def _greedy_sequence(kind: str, module: ModulePresentation, candidates: List[TruncatedPoly], required: int,
                     k: int) -> Certificate:
    names = module.algebra.variables
    p = module.algebra.config.p
    chosen: List[str] = []
    level = None
    current = module
    for _ in range(required):
        found = False
        for g in candidates:
            try:
                verdict = is_regular_on(g, current, k)
            except Unstabilized:
                continue
            if verdict.regular:
                chosen.append(g.render(names, p))
                level = max(level or 0, verdict.level)
                current = _quotient_module(current, g)
                found = True
                break
        if not found:
            break
    cert = Certificate(kind, required, len(chosen), tuple(chosen), level)
    log_event("certificate", kind=kind, required=required, achieved=cert.achieved, level=level)
    return cert


def depth_certificate(module: ModulePresentation, required: int, k: int = 4, seed: int = 0) -> Certificate:
    """Heuristic witness of depth_A M >= required: a regular sequence in (p, t)."""
    algebra = module.algebra
    if required <= 0:
        return Certificate("depth", required, 0)
    forms = generic_linear_forms(algebra, 3, seed)
    candidates = [algebra.constant(algebra.config.p)] + forms + [f + algebra.constant(algebra.config.p) for f in forms]
    return _greedy_sequence("depth", module, candidates, required, k)


def grade_certificate(module: ModulePresentation, required: int, k: int = 4, seed: int = 0) -> Certificate:
    """Heuristic witness of grade(p_A, M) >= required using generic forms in the free cotangent directions."""
    if module.waive_freeness:
        return Certificate("grade", required, 0, waived=True)
    if required <= 0:
        return Certificate("grade", required, 0)
    algebra = module.algebra
    directions = algebra.cotangent.free_directions()
    candidates = generic_linear_forms(algebra, 3, seed, directions) + generic_linear_forms(algebra, 2, seed + 1)
    return _greedy_sequence("grade", module, candidates, required, k)


# --- faithful quotient ---

@dataclass(frozen=True, eq=False)
class FaithfulQuotient:
    algebra: AugmentedAlgebra
    module: ModulePresentation
    annihilator: Tuple[str, ...]
    eliminated: Tuple[str, ...]
    stabilized_at: int


def _ideal_span(algebra: AugmentedAlgebra, generators: Sequence[TruncatedPoly], model: LevelModel) -> np.ndarray:
    cols = []
    for g in generators:
        order = g.order()
        for alpha in model.monomials:
            if sum(alpha) + order >= model.level:
                break
            col = model.encode([g.shift(alpha)])
            if np.any(col):
                cols.append(col)
    return np.stack(cols, axis=1) if cols else np.zeros((model.size, 0), dtype=object)


def _with_relations(model: LevelModel, relations: np.ndarray) -> LevelModel:
    return LevelModel(model.level, model.n, model.generators, model.monomials, relations, model.precision,
                      model.index)


def _annihilator_generators(module: ModulePresentation, level: int) -> Tuple[List[TruncatedPoly], LevelModel]:
    algebra = module.algebra
    ring = level_model(algebra, level)
    mod = module_level_model(module, level)
    g = module.generators
    operators = []
    for s in range(g):
        embed = np.zeros((mod.size, ring.size), dtype=object)
        for i, alpha in enumerate(ring.monomials):
            pos = mod.position(s, alpha)
            if pos is not None:
                embed[pos, i] = 1
        operators.append(embed)
    # kernel_of_operators expects square blocks, so stack by hand here
    rel = mod.relations
    r = rel.shape[1]
    stacked = np.zeros((mod.size * g, ring.size + r * g), dtype=object)
    for s, op in enumerate(operators):
        stacked[s * mod.size:(s + 1) * mod.size, :ring.size] = op
        stacked[s * mod.size:(s + 1) * mod.size, ring.size + s * r:ring.size + (s + 1) * r] = rel
    kernel = kernel_basis(stacked, ring.precision)[:ring.size]
    low = level_model(algebra, max(1, level - 1))
    projected = matmul_mod(truncation_matrix(ring, low), kernel, low.precision.modulus)

    template = algebra.zero()
    elements = [low.decode(projected[:, j], template)[0] for j in range(projected.shape[1])]
    elements = [e for e in elements if not e.is_zero()]
    elements.sort(key=lambda e: (e.order(), len(e.terms)))

    chosen: List[TruncatedPoly] = []
    span_model = _with_relations(low, _ideal_span(algebra, algebra.relations, low))
    noise = low.noise_valuation
    for element in elements:
        if not span_model.outside_span(low.encode([element]))[0]:
            continue
        if int_valuation(element.constant_term, algebra.config.p, low.precision.N) < noise:
            raise PreconditionViolation(
                "the annihilator of M contains an element with nonzero constant term; M is not supported at p_A",
                {"element": element.render(algebra.variables, algebra.config.p)},
            )
        chosen.append(element)
        span_model = _with_relations(low, _ideal_span(algebra, list(algebra.relations) + chosen, low))
    return chosen, low


def faithful_quotient(algebra: AugmentedAlgebra, module: ModulePresentation, k: int = 4) -> FaithfulQuotient:
    """A' = A/ann(M), with the annihilator stabilized across consecutive levels."""
    k_max = algebra.config.k_max
    level = max(k, 3)
    previous = None
    while level <= k_max:
        chosen, low = _annihilator_generators(module, level)
        if previous is not None:
            prev_chosen, prev_low = previous
            same = True
            for gens, other_gens in ((chosen, prev_chosen), (prev_chosen, chosen)):
                span = _with_relations(prev_low, _ideal_span(algebra, list(algebra.relations) + other_gens, prev_low))
                vectors = np.stack([prev_low.encode([g]) for g in gens], axis=1) if gens else None
                if vectors is not None and np.any(span.outside_span(vectors)):
                    same = False
            if same:
                variables, relations, module_relations, eliminated = eliminate_unit_relations(
                    algebra.variables, list(algebra.relations) + prev_chosen, module.relations, algebra.config.p,
                )
                quotient = AugmentedAlgebra(variables, relations, algebra.config,
                                            declared_dimension=algebra.declared_dimension,
                                            declared_gorenstein=algebra.declared_gorenstein)
                reduced = ModulePresentation(quotient, module.generators, module_relations,
                                             module.killed_by_augmentation, module.waive_freeness)
                names = tuple(g.render(algebra.variables, algebra.config.p) for g in prev_chosen)
                log_event("stabilized", check="faithful_quotient", level=level - 1, annihilator=list(names))
                return FaithfulQuotient(quotient, reduced, names, tuple(eliminated), level - 1)
        previous = (chosen, low)
        level += 1
    raise Unstabilized("annihilator did not stabilize", {"k_max": k_max})
