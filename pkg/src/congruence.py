"""
Ext modules, congruence modules and Wiles defects.

Everything is computed from level models: a quantity is read at levels
k, k + 1, ... until the configured number of consecutive levels agree.
Free variables (absent from every relation) are split off first; they change
neither Phi, Psi nor mu.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.complexes import (
    FreeComplexOverA,
    block_diagonal,
    hom_into_level,
    homology,
    minimal_resolution_at_level,
    stable_homology,
    tate_complex,
    theta_generator,
)
from src.dvr_core import (
    FgModuleClass,
    Lattice,
    MatrixO,
    SubquotientFrame,
    TfMap,
    cokernel_class,
    determinant_valuation,
    length,
    matmul_mod,
    smith_reduce,
)
from src.errors import (
    D2NotZero,
    DepthCertificateFailed,
    IdentityFailed,
    NotRegularDirection,
    PreconditionViolation,
    PsiNotTorsion,
    StrategyDisagreement,
    Unstabilized,
)
from src.level_models import (
    Certificate,
    depth_certificate,
    faithful_quotient,
    generic_linear_forms,
    grade_certificate,
    is_regular_on,
    is_regular_sequence,
    kernel_of_operators,
    level_model,
    module_level_model,
    truncation_matrix,
)
from src.local_algebra import (
    AugmentedAlgebra,
    ModulePresentation,
    TruncatedPoly,
    is_nice_form,
    nice_form,
    order_ideal_valuation,
    quotient_by,
)
from src.telemetry import log_event, log_warning

GENERIC_ATTEMPTS = 32
STRATEGIES = ("direct", "reduce", "diamond")


# --- resolutions and splitting ---

def _first_minimal_level(algebra: AugmentedAlgebra) -> int:
    top_degree = max((f.degree() for f in algebra.relations), default=1)
    return max(3, top_degree + 1)


def resolution_for(algebra: AugmentedAlgebra, top: int) -> FreeComplexOverA:
    """A resolution of O over A valid through degree `top`."""
    if algebra.is_complete_intersection() or top <= 2:
        complex_, _ = tate_complex(algebra, max(top, 1))
        return complex_
    level = _first_minimal_level(algebra)
    last_error = None
    while level + top <= algebra.config.k_max:
        try:
            return minimal_resolution_at_level(algebra, top, level)
        except (Unstabilized, D2NotZero) as exc:
            last_error = exc
            log_event("level_escalated", quantity="minimal_resolution", level=level)
            level += 1
    raise Unstabilized("minimal resolution did not stabilize below k_max",
                       {"k_max": algebra.config.k_max, "top": top,
                        "last": last_error.to_dict() if last_error else None})


@dataclass(frozen=True, eq=False)
class Splitting:
    algebra: AugmentedAlgebra
    module: ModulePresentation
    dropped: Tuple[str, ...]


def split_free_variables(algebra: AugmentedAlgebra, module: ModulePresentation) -> Splitting:
    """Drop variables no relation mentions: A = A'[[x]], M = M'[[x]]. At least one variable is kept."""
    polys = list(algebra.relations) + [x for r in module.relations for x in r]
    used = [j for j in range(algebra.n) if any(f.uses_variable(j) for f in polys)]
    keep = used or [0]
    if len(keep) == algebra.n:
        return Splitting(algebra, module, ())
    dropped = tuple(algebra.variables[j] for j in range(algebra.n) if j not in keep)
    dimension = algebra.declared_dimension
    reduced = AugmentedAlgebra(
        tuple(algebra.variables[j] for j in keep),
        tuple(f.keep_variables(keep) for f in algebra.relations),
        algebra.config, algebra.declared_ci,
        None if dimension is None else dimension - len(dropped),
        algebra.declared_gorenstein,
    )
    reduced_module = ModulePresentation(reduced, module.generators,
                                        tuple(tuple(x.keep_variables(keep) for x in r) for r in module.relations),
                                        module.killed_by_augmentation, module.waive_freeness)
    log_event("free_variables_split", dropped=list(dropped), codim=reduced.codim)
    return Splitting(reduced, reduced_module, dropped)


# --- stabilization ---

def _stabilize(compute: Callable[[int], Tuple[FgModuleClass, object]], start: int, algebra: AugmentedAlgebra,
               quantity: str, reserve: int = 0):
    """Run compute(k) for k = start, start + 1, ... until `window` consecutive classes agree."""
    config = algebra.config
    window = config.stabilization_window
    history: List[FgModuleClass] = []
    k = start
    while k + reserve <= config.k_max:
        klass, payload = compute(k)
        history.append(klass)
        log_event("level_computed", quantity=quantity, level=k, klass=klass.render())
        if len(history) >= window and all(h.same_class(klass) for h in history[-window:]):
            stabilized_at = k - window + 1
            log_event("stabilized", quantity=quantity, level=stabilized_at, klass=klass.render())
            return klass, payload, stabilized_at
        k += 1
    raise Unstabilized(f"{quantity} did not stabilize below k_max",
                       {"k_max": config.k_max, "levels_tried": [h.render() for h in history]})


# --- Ext ---

@dataclass(frozen=True, eq=False)
class ExtResult:
    degree: int
    klass: FgModuleClass
    stabilized_at: int
    frame: SubquotientFrame

    @property
    def free_rank(self) -> int:
        return self.klass.free_rank


def ext_module(algebra: AugmentedAlgebra, module: ModulePresentation, i: int,
               resolution: Optional[FreeComplexOverA] = None) -> ExtResult:
    """Ext^i_A(O, M) as the stable image of H^i(Hom_A(F, M/(t)^k M))."""
    F = resolution if resolution is not None and resolution.top >= i + 1 else resolution_for(algebra, i + 1)
    if module.killed_by_augmentation:
        frame = homology(hom_into_level(F, module, 1, top=i + 1), i)
        log_event("stabilized", quantity=f"ext{i}", level=1, klass=frame.klass.render())
        return ExtResult(i, frame.klass, 1, frame)

    cache: Dict[int, object] = {}

    def complex_at(k: int):
        if k not in cache:
            cache[k] = hom_into_level(F, module, k, top=i + 1)
        return cache[k]

    def compute(k: int):
        frame = stable_homology(complex_at(k + 1), complex_at(k), i)
        cache.pop(k - 1, None)
        return frame.klass, frame

    klass, frame, level = _stabilize(compute, 2, algebra, f"ext{i}", reserve=1)
    return ExtResult(i, klass, level, frame)


# --- congruence module ---

@dataclass(frozen=True, eq=False)
class CongruenceResult:
    psi: FgModuleClass
    stabilized_at: int
    tf_map: TfMap
    frame: SubquotientFrame
    lifted: np.ndarray
    resolution: FreeComplexOverA

    @property
    def image(self) -> np.ndarray:
        return np.asarray(self.tf_map.matrix.entries, dtype=object)


def _lifted_cocycles(F: FreeComplexOverA, module: ModulePresentation, k: int, base, degree: int) -> np.ndarray:
    """Degree-`degree` cocycles of Hom(F, M/(t)^k M) pushed down to level 1."""
    complex_ = hom_into_level(F, module, k, top=degree + 1)
    Z = complex_.cycles(degree)
    if complex_.model.level == base.model.level:
        return Z
    return matmul_mod(complex_.truncation_to(base, degree), Z, base.precision.modulus)


def congruence_module(algebra: AugmentedAlgebra, module: ModulePresentation,
                      resolution: Optional[FreeComplexOverA] = None) -> CongruenceResult:
    """Psi_A(M) = coker(F^c(M) -> F^c(M/p_A M)), with the induced map on free parts."""
    c = algebra.codim
    F = resolution if resolution is not None and resolution.top >= c + 1 else resolution_for(algebra, c + 1)
    base = hom_into_level(F, module, 1, top=c + 1)
    frame = homology(base, c)

    def compute(k: int):
        lifted = _lifted_cocycles(F, module, k, base, c)
        image = frame.tf_coordinates(lifted)
        if image.shape[0] == 0:
            return FgModuleClass(), (lifted, image)
        return cokernel_class(MatrixO(image, frame.reading)), (lifted, image)

    if module.killed_by_augmentation:
        klass, (lifted, image) = compute(1)
        stabilized_at = 1
    else:
        klass, (lifted, image), stabilized_at = _stabilize(compute, 2, algebra, "psi")
    if klass.free_rank:
        raise PsiNotTorsion("the congruence module has a free part; A is not regular at p_A",
                            {"psi": klass.render(), "codim": c})
    tf_map = TfMap(image.shape[1], image.shape[0], MatrixO(image, frame.reading))
    return CongruenceResult(klass, stabilized_at, tf_map, frame, lifted, F)


# --- mu and the Diamond quotient ---

def mu_rank(algebra: AugmentedAlgebra, module: ModulePresentation) -> int:
    """rank_O of (M/p_A M)^tf."""
    return module.specialization_class().free_rank


def freeness_certificate(algebra: AugmentedAlgebra, module: ModulePresentation) -> Certificate:
    return grade_certificate(module, algebra.codim, seed=algebra.config.seed)


@dataclass(frozen=True)
class DiamondResult:
    klass: FgModuleClass
    stabilized_at: int
    certificate: Certificate


def _stable_kernel(high, low, operators) -> np.ndarray:
    kernel = kernel_of_operators(high, operators)
    return matmul_mod(truncation_matrix(high, low), kernel, low.precision.modulus)


def _diamond_at(algebra: AugmentedAlgebra, module: ModulePresentation, level: int) -> FgModuleClass:
    n = algebra.n
    ring_top = level_model(algebra, level + 2)
    ring = level_model(algebra, level + 1)
    annihilator = _stable_kernel(ring_top, ring, [ring_top.operator(i) for i in range(n)])
    zero = algebra.zero()
    ideal = [ring.decode(annihilator[:, j], zero)[0] for j in range(annihilator.shape[1])]
    ideal = [g for g in ideal if not g.is_zero()]

    high = module_level_model(module, level + 1)
    low = module_level_model(module, level)
    killed_by_p = _stable_kernel(high, low, [high.operator(i) for i in range(n)])
    killed_by_ideal = _stable_kernel(high, low, [high.multiplication(g) for g in ideal]) if ideal else \
        np.eye(low.size, dtype=object)
    return low.extended(np.concatenate([killed_by_p, killed_by_ideal], axis=1)).module_class()


def diamond_quotient(algebra: AugmentedAlgebra, module: ModulePresentation) -> DiamondResult:
    """The Diamond quotient without the depth gate; the certificate is attached but not enforced."""
    if algebra.codim != 0:
        raise PreconditionViolation("the Diamond quotient is defined in codimension 0", {"codim": algebra.codim})
    certificate = depth_certificate(module, 1, seed=algebra.config.seed)
    klass, _, level = _stabilize(lambda k: (_diamond_at(algebra, module, k), None), 2, algebra, "diamond",
                                 reserve=2)
    return DiamondResult(klass, level, certificate)


def diamond_congruence_c0(algebra: AugmentedAlgebra, module: ModulePresentation) -> DiamondResult:
    """M / (M[p_A] + M[I_A]) with I_A = A[p_A]; equals Psi_A(M) when depth M >= 1."""
    result = diamond_quotient(algebra, module)
    if not result.certificate.passed:
        raise DepthCertificateFailed("no regular element on M was found",
                                     {"sequence": list(result.certificate.sequence)})
    return result


# --- reports ---

class ClassSummary(BaseModel):
    rendered: str
    free_rank: int
    torsion_exponents: List[int]
    length: Optional[int] = None
    stabilized_at: Optional[int] = None

    @classmethod
    def of(cls, klass: FgModuleClass, stabilized_at: Optional[int] = None) -> "ClassSummary":
        return cls(rendered=klass.render(), free_rank=klass.free_rank,
                   torsion_exponents=list(klass.torsion_exponents),
                   length=None if klass.free_rank else sum(klass.torsion_exponents),
                   stabilized_at=stabilized_at)


class ReductionStep(BaseModel):
    element: str
    nu: int
    phi_before: int
    phi_after: int
    codim_after: int
    attempt: int


class StrategyOutcome(BaseModel):
    delta: int
    psi_length: int
    stabilized_at: Optional[int] = None
    steps: List[ReductionStep] = []


class CertificateSummary(BaseModel):
    kind: str
    required: int
    achieved: int
    status: str
    sequence: List[str] = []
    level: Optional[int] = None

    @classmethod
    def of(cls, cert: Certificate, extra: Sequence[str] = ()) -> "CertificateSummary":
        return cls(kind=cert.kind, required=cert.required, achieved=cert.achieved + len(extra),
                   status="waived" if cert.waived else
                   ("level-certified" if cert.achieved + len(extra) >= cert.required else "failed"),
                   sequence=list(extra) + list(cert.sequence), level=cert.level)


class Verdicts(BaseModel):
    ci: Optional[bool] = None
    free_summand: Optional[bool] = None
    gorenstein_summand: Optional[bool] = None
    conclusions: List[str] = []
    caveats: List[str] = []


class DefectReport(BaseModel):
    codimension: int
    mu: int
    cotangent: ClassSummary
    phi_length: int
    psi: ClassSummary
    delta: int
    delta_ring: int
    strategies: Dict[str, StrategyOutcome]
    verdicts: Verdicts = Verdicts()
    certificates: Dict[str, CertificateSummary] = {}
    split_variables: List[str] = []
    diamond_quotient_length: Optional[int] = None
    fc_rank: Optional[int] = None
    declared: Dict[str, Any] = {}
    warnings: List[str] = []


# --- strategies ---

def _phi_length(algebra: AugmentedAlgebra) -> int:
    return length(algebra.cotangent.phi)


def _direct(algebra: AugmentedAlgebra, module: ModulePresentation, mu: int):
    result = congruence_module(algebra, module)
    psi_length = length(result.psi)
    outcome = StrategyOutcome(delta=mu * _phi_length(algebra) - psi_length, psi_length=psi_length,
                              stabilized_at=result.stabilized_at)
    return outcome, result


@dataclass(frozen=True, eq=False)
class ReductionChain:
    algebra: AugmentedAlgebra
    module: ModulePresentation
    steps: Tuple[ReductionStep, ...]


def reduce_to_codim_zero(algebra: AugmentedAlgebra, module: ModulePresentation, seed: int) -> ReductionChain:
    """Quotient by generic regular elements in the free cotangent directions until c = 0."""
    steps: List[ReductionStep] = []
    current, current_module = algebra, module
    p = algebra.config.p
    while current.codim > 0:
        directions = current.cotangent.free_directions()
        for attempt in range(GENERIC_ATTEMPTS):
            forms = generic_linear_forms(current, 1, seed * 7919 + len(steps) * 131 + attempt, directions)
            if not forms:
                continue
            f = forms[0]
            try:
                if not is_regular_on(f, current_module).regular:
                    continue
                nu = order_ideal_valuation(current, f)
                quotient, reduced = quotient_by(current, f, current_module)
            except (Unstabilized, NotRegularDirection):
                continue
            before, after = _phi_length(current), _phi_length(quotient)
            if after - before != nu:
                raise IdentityFailed("Phi length jump differs from the order ideal valuation",
                                     {"element": f.render(current.variables, p), "nu": nu,
                                      "phi_before": before, "phi_after": after})
            steps.append(ReductionStep(element=f.render(current.variables, p), nu=nu, phi_before=before,
                                       phi_after=after, codim_after=quotient.codim, attempt=attempt))
            current, current_module = quotient, reduced
            break
        else:
            raise NotRegularDirection("no generic regular element found in the free cotangent directions",
                                      {"attempts": GENERIC_ATTEMPTS, "codim": current.codim})
    log_event("reduction_chain", seed=seed, steps=len(steps))
    return ReductionChain(current, current_module, tuple(steps))


def _reduce(chain: ReductionChain, mu: int) -> StrategyOutcome:
    result = congruence_module(chain.algebra, chain.module)
    psi_length = length(result.psi)
    return StrategyOutcome(delta=mu * _phi_length(chain.algebra) - psi_length, psi_length=psi_length,
                           stabilized_at=result.stabilized_at, steps=list(chain.steps))


def _diamond(chain: ReductionChain, mu: int) -> Tuple[StrategyOutcome, DiamondResult]:
    result = diamond_congruence_c0(chain.algebra, chain.module)
    psi_length = length(result.klass)
    outcome = StrategyOutcome(delta=mu * _phi_length(chain.algebra) - psi_length, psi_length=psi_length,
                              stabilized_at=result.stabilized_at, steps=list(chain.steps))
    return outcome, result


def _ring_delta(algebra: AugmentedAlgebra) -> int:
    outcome, _ = _direct(algebra, ModulePresentation.free(algebra, 1), 1)
    return outcome.delta


def _is_free_rank_one(module: ModulePresentation) -> bool:
    return module.generators == 1 and not module.relations and not module.killed_by_augmentation


def wiles_defect(algebra: AugmentedAlgebra, module: ModulePresentation, strategy: str = "direct",
                 seed: Optional[int] = None) -> DefectReport:
    """delta_A(M) = mu * length Phi_A - length Psi_A(M), by one strategy or all of them."""
    if strategy not in STRATEGIES + ("all",):
        raise PreconditionViolation(f"unknown strategy {strategy!r}", {"choices": list(STRATEGIES) + ["all"]})
    seed = algebra.config.seed if seed is None else seed
    split = split_free_variables(algebra, module)
    A, M = split.algebra, split.module
    c = algebra.codim
    mu = mu_rank(A, M)
    warnings: List[str] = []

    grade = freeness_certificate(A, M)
    depth = depth_certificate(M, A.codim + 1, seed=seed)
    certificates = {
        "grade": CertificateSummary.of(grade, split.dropped),
        "depth": CertificateSummary.of(depth, split.dropped),
    }
    if algebra.declared_ci:
        verdict = is_regular_sequence(A, list(A.relations))
        certificates["regular_sequence"] = CertificateSummary(
            kind="regular_sequence", required=A.m, achieved=A.m if verdict.regular else (verdict.failed_at or 0),
            status="level-certified" if verdict.regular else "failed", level=verdict.level)
    for name, cert in certificates.items():
        if cert.status == "failed":
            warnings.append(f"{name} certificate failed: {cert.achieved} of {cert.required}")

    wanted = STRATEGIES if strategy == "all" else (strategy,)
    outcomes: Dict[str, StrategyOutcome] = {}
    psi_summary: Optional[ClassSummary] = None
    diamond_length: Optional[int] = None
    fc_rank: Optional[int] = None

    if "direct" in wanted:
        outcome, result = _direct(A, M, mu)
        outcomes["direct"] = outcome
        psi_summary = ClassSummary.of(result.psi, result.stabilized_at)
        fc_rank = ext_module(A, M, A.codim, result.resolution).free_rank
        if fc_rank != mu:
            warnings.append(f"mu = {mu} differs from the free rank {fc_rank} of F^c_A(M)")
        log_event("strategy_finished", strategy="direct", delta=outcome.delta)

    chain = None
    if "reduce" in wanted or "diamond" in wanted:
        chain = reduce_to_codim_zero(A, M, seed)
    if "reduce" in wanted:
        outcomes["reduce"] = _reduce(chain, mu)
        log_event("strategy_finished", strategy="reduce", delta=outcomes["reduce"].delta)
    if "diamond" in wanted:
        try:
            outcome, diamond = _diamond(chain, mu)
            outcomes["diamond"] = outcome
            diamond_length = outcome.psi_length
            log_event("strategy_finished", strategy="diamond", delta=outcome.delta)
        except DepthCertificateFailed as exc:
            if strategy == "diamond":
                raise
            warnings.append(f"diamond skipped: {exc.message}")
            log_warning("strategy_skipped", strategy="diamond", reason=exc.message)
            # the quotient is still reported; it only bounds Psi from above here
            diamond_length = length(diamond_quotient(chain.algebra, chain.module).klass)

    deltas = {name: o.delta for name, o in outcomes.items()}
    if len(set(deltas.values())) > 1:
        raise StrategyDisagreement("strategies disagree on the Wiles defect",
                                   {"deltas": deltas, "outcomes": {k: v.dict() for k, v in outcomes.items()}})
    first = next(iter(outcomes.values()))
    if psi_summary is None:
        psi_summary = ClassSummary(rendered=f"length {first.psi_length}", free_rank=0, torsion_exponents=[],
                                   length=first.psi_length, stabilized_at=first.stabilized_at)

    delta_ring = first.delta if _is_free_rank_one(M) else _ring_delta(A)
    report = DefectReport(
        codimension=c,
        mu=mu,
        cotangent=ClassSummary.of(algebra.cotangent.module),
        phi_length=_phi_length(algebra),
        psi=psi_summary,
        delta=first.delta,
        delta_ring=delta_ring,
        strategies=outcomes,
        certificates=certificates,
        split_variables=list(split.dropped),
        diamond_quotient_length=diamond_length,
        fc_rank=fc_rank,
        declared={"ci": algebra.declared_ci, "dimension": algebra.declared_dimension,
                  "gorenstein": algebra.declared_gorenstein},
        warnings=warnings,
    )
    report = report.copy(update={"verdicts": verdicts(report, algebra.declared_gorenstein)})
    for warning in warnings:
        log_warning("defect_warning", message=warning)
    return report


def verdicts(report: DefectReport, declared_gorenstein: bool = False, mcm_certified: bool = False) -> Verdicts:
    """The numerical criteria read off a computed report, with their certificate caveats."""
    caveats = []
    depth = report.certificates.get("depth")
    grade = report.certificates.get("grade")
    if depth is not None and depth.status == "failed":
        caveats.append("depth certificate failed; the criteria assume depth_A M >= c + 1")
    if grade is not None and grade.status == "failed":
        caveats.append("freeness at p_A is not certified; mu may not be the local rank")
    conclusions = []
    ci = report.delta_ring == 0
    conclusions.append("A is a complete intersection" if ci else "A is not a complete intersection")
    free_summand = report.delta == 0
    if free_summand:
        conclusions.append(f"M = A^{report.mu} + W with W_p = 0")
    gorenstein = None
    if declared_gorenstein:
        gorenstein = report.delta == report.mu * report.delta_ring
        if not mcm_certified:
            caveats.append("Gorenstein summand verdict uses the declared Gorenstein flag; MCM is not certified")
        if gorenstein:
            conclusions.append(f"M has A^{report.mu} as a direct summand up to p-torsion-free complement")
    return Verdicts(ci=ci, free_summand=free_summand, gorenstein_summand=gorenstein, conclusions=conclusions,
                    caveats=caveats)


# --- identities ---

class IdentityReport(BaseModel):
    name: str
    lhs: int
    rhs: int
    holds: bool
    details: Dict[str, Any] = {}


def _check(name: str, lhs: int, rhs: int, **details) -> IdentityReport:
    report = IdentityReport(name=name, lhs=lhs, rhs=rhs, holds=lhs == rhs, details=details)
    log_event("identity_checked", name=name, lhs=lhs, rhs=rhs, holds=report.holds)
    if not report.holds:
        raise IdentityFailed(f"{name} does not hold", report.dict())
    return report


def _coker_length(matrix: np.ndarray, frame: SubquotientFrame) -> int:
    if matrix.shape[0] == 0:
        return 0
    return length(cokernel_class(MatrixO(matrix, frame.reading)))


def _tf_lifts(module: ModulePresentation) -> np.ndarray:
    """Columns in O^g lifting a basis of (M/p_A M)^tf."""
    special = module.specialization()
    prec = special.precision
    red = smith_reduce(special.entries, prec.p, prec.N, rows_transform=True, inverses=True)
    noise = module.algebra.config.N
    free = [i for i, e in enumerate(red.exponents) if e >= noise] + list(range(len(red.exponents), module.generators))
    return np.asarray(red.P_inv, dtype=object)[:, free]


def defect_formula_check(algebra: AugmentedAlgebra, module: ModulePresentation) -> IdentityReport:
    """delta_A(M) = mu * delta_A(A) + length coker(eta_M), with eta_M: F^c(A) (x) (M/p_A M)^tf -> F^c(M)."""
    free = ModulePresentation.free(algebra, 1)
    ring = congruence_module(algebra, free)
    own = congruence_module(algebra, module, ring.resolution)
    lifts = _tf_lifts(module)
    mu = lifts.shape[1]
    g = module.generators
    zeta = ring.lifted
    blocks = zeta.shape[0]
    columns = []
    for j in range(zeta.shape[1]):
        for ell in range(mu):
            w = np.zeros(blocks * g, dtype=object)
            for a in range(blocks):
                w[a * g:(a + 1) * g] = zeta[a, j] * lifts[:, ell]
            columns.append(w)
    prec = own.frame.reading
    if columns:
        tensor = np.stack(columns, axis=1) % algebra.working_precision.modulus
        image = own.frame.tf_coordinates(tensor)
    else:
        image = np.zeros((own.frame.free_rank, 0), dtype=object)
    psi_a, psi_m = length(ring.psi), length(own.psi)
    coker_eta = _coker_length(image, own.frame) - psi_m
    phi = _phi_length(algebra)
    delta_m, delta_a = mu * phi - psi_m, phi - psi_a
    return _check("defect_formula", delta_m, mu * delta_a + coker_eta, mu=mu, delta_ring=delta_a,
                  coker_eta=coker_eta, reading_N=prec.N)


def _pushforward(lifted: np.ndarray, pi0: np.ndarray, blocks: int, modulus: int) -> np.ndarray:
    return matmul_mod(block_diagonal(pi0, blocks), lifted, modulus)


def _constant_matrix(pi: Sequence[Sequence[TruncatedPoly]]) -> np.ndarray:
    return np.array([[x.constant_term for x in row] for row in pi], dtype=object)


def _check_module_map(source: ModulePresentation, target: ModulePresentation,
                      pi: Sequence[Sequence[TruncatedPoly]], level: int = 3) -> None:
    algebra = source.algebra
    if len(pi) != target.generators or any(len(row) != source.generators for row in pi):
        raise PreconditionViolation("map matrix has the wrong shape",
                                    {"rows": len(pi), "target_generators": target.generators,
                                     "source_generators": source.generators})
    model = module_level_model(target, level)
    images = []
    for rel in source.full_relations():
        image = []
        for row in pi:
            total = algebra.zero()
            for x, r in zip(row, rel):
                if not x.is_zero() and not r.is_zero():
                    total = total + x * r
            image.append(total)
        images.append(model.encode(image))
    if images and np.any(model.outside_span(np.stack(images, axis=1))):
        raise PreconditionViolation("the map does not send relations of the source into relations of the target",
                                    {"level": level})
    stacked = np.concatenate([_constant_matrix(pi), target.specialization().entries], axis=1)
    reduction = cokernel_class(MatrixO(stacked % algebra.precision.modulus, algebra.precision),
                               allow_uncertified=True)
    if not reduction.is_zero:
        raise PreconditionViolation("the map is not surjective modulo p_A", {"cokernel": reduction.render()})


def change_of_congruence(algebra: AugmentedAlgebra, source: ModulePresentation, target: ModulePresentation,
                         pi: Sequence[Sequence[TruncatedPoly]]) -> IdentityReport:
    """length Psi(M) = length Psi(N) + length coker F^c(pi) for a surjection pi: M -> N."""
    _check_module_map(source, target, pi)
    mu_m, mu_n = mu_rank(algebra, source), mu_rank(algebra, target)
    if mu_m != mu_n:
        raise PreconditionViolation("source and target must have equal rank at p_A", {"mu": [mu_m, mu_n]})
    left = congruence_module(algebra, source)
    right = congruence_module(algebra, target, left.resolution)
    blocks = left.resolution.rank(algebra.codim)
    pushed = _pushforward(left.lifted, _constant_matrix(pi), blocks, algebra.working_precision.modulus)
    image = right.frame.tf_coordinates(pushed)
    psi_m, psi_n = length(left.psi), length(right.psi)
    coker_fc = _coker_length(image, right.frame) - psi_n
    return _check("change_of_congruence", psi_m, psi_n + coker_fc, coker_fc=coker_fc, mu=mu_m)


def endomorphism_consistency(algebra: AugmentedAlgebra, module: ModulePresentation,
                             pi: Sequence[Sequence[TruncatedPoly]]) -> IdentityReport:
    """For a surjective self-map, length coker F^c(pi) equals the valuation of det F^c(pi)."""
    _check_module_map(module, module, pi)
    result = congruence_module(algebra, module)
    frame = result.frame
    blocks = result.resolution.rank(algebra.codim)
    pushed = _pushforward(result.lifted, _constant_matrix(pi), blocks, algebra.working_precision.modulus)
    after = frame.tf_coordinates(pushed)
    before = result.image
    rank = before.shape[0]
    if rank == 0:
        return _check("endomorphism_consistency", 0, 0)
    prec = frame.reading
    red = smith_reduce(before, prec.p, prec.N, cols_transform=True)
    Q = np.asarray(red.Q, dtype=object)[:, :rank]
    basis_images = matmul_mod(after, Q, prec.modulus)
    lattice = Lattice(matmul_mod(before, Q, prec.modulus), prec)
    T = lattice.coordinates(basis_images)
    coker_fc = _coker_length(after, frame) - length(result.psi)
    return _check("endomorphism_consistency", coker_fc, determinant_valuation(T), coordinate_N=T.precision.N)


def _restricted(module: ModulePresentation, algebra: AugmentedAlgebra, quotient: AugmentedAlgebra):
    """M over B = A/(extra) regarded as an A-module."""
    zero = algebra.zero()
    extra = tuple(tuple(f if k == s else zero for k in range(module.generators))
                  for f in quotient.relations for s in range(module.generators))
    return ModulePresentation(algebra, module.generators, module.relations + extra,
                              module.killed_by_augmentation, module.waive_freeness)


def _domain_report(psi_a: FgModuleClass, psi_b: FgModuleClass, mu: int, phi_a: int, phi_b: int,
                   **details) -> IdentityReport:
    delta_a, delta_b = mu * phi_a - length(psi_a), mu * phi_b - length(psi_b)
    return _check("invariance_of_domain", length(psi_b), length(psi_a), delta_a=delta_a, delta_b=delta_b,
                  delta_gap=delta_b - delta_a, **details)


def invariance_of_domain_check(algebra: AugmentedAlgebra, quotient: AugmentedAlgebra,
                               module: ModulePresentation) -> IdentityReport:
    """length Psi_B(M) = length Psi_A(M) for A -> B = A/(extra) and M over B, in equal codimension."""
    if quotient.variables != algebra.variables:
        raise PreconditionViolation("B must be presented on the same variables as A", {})
    if quotient.codim != algebra.codim:
        raise PreconditionViolation("A and B must have the same codimension",
                                    {"codim_a": algebra.codim, "codim_b": quotient.codim})
    certificate = depth_certificate(module, algebra.codim, seed=algebra.config.seed)
    over_a = _restricted(module, algebra, quotient)
    psi_a = congruence_module(algebra, over_a).psi
    psi_b = congruence_module(quotient, module).psi
    return _domain_report(psi_a, psi_b, mu_rank(quotient, module), _phi_length(algebra), _phi_length(quotient),
                          depth=certificate.status())


def faithful_invariance_check(algebra: AugmentedAlgebra, module: ModulePresentation) -> IdentityReport:
    """Invariance of domain for A -> A/ann(M)."""
    faithful = faithful_quotient(algebra, module)
    if faithful.algebra.codim != algebra.codim:
        raise PreconditionViolation("the faithful quotient has a different codimension",
                                    {"codim_a": algebra.codim, "codim_b": faithful.algebra.codim})
    psi_a = congruence_module(algebra, module).psi
    psi_b = congruence_module(faithful.algebra, faithful.module).psi
    return _domain_report(psi_a, psi_b, mu_rank(algebra, module), _phi_length(algebra),
                          _phi_length(faithful.algebra), annihilator=list(faithful.annihilator),
                          eliminated=list(faithful.eliminated))


def _is_isomorphism(algebra: AugmentedAlgebra, quotient: AugmentedAlgebra) -> bool:
    """Whether the extra relations of B already vanish in A, at two consecutive levels."""
    extra = [f for f in quotient.relations if f not in algebra.relations]
    if not extra:
        return True
    answers = []
    start = max(3, max(f.degree() for f in extra) + 1)
    for level in (start, start + 1):
        model = level_model(algebra, level)
        answers.append(not np.any(model.outside_span(np.stack([model.encode([f]) for f in extra], axis=1))))
    if answers[0] != answers[1]:
        raise Unstabilized("isomorphism test differs between levels", {"levels": [start, start + 1]})
    return answers[0]


def ci_isomorphism_check(algebra: AugmentedAlgebra, quotient: AugmentedAlgebra) -> IdentityReport:
    """For A -> B with B a complete intersection of the same codimension: equal Phi lengths force an isomorphism."""
    if quotient.codim != algebra.codim:
        raise PreconditionViolation("A and B must have the same codimension",
                                    {"codim_a": algebra.codim, "codim_b": quotient.codim})
    if not quotient.is_complete_intersection():
        raise PreconditionViolation("B must be a complete intersection", {"m": quotient.m, "codim": quotient.codim})
    phi_a, phi_b = _phi_length(algebra), _phi_length(quotient)
    iso = _is_isomorphism(algebra, quotient)
    return _check("ci_isomorphism", int(phi_a == phi_b), int(iso), phi_a=phi_a, phi_b=phi_b)


def torsion_free_ext_check(algebra: AugmentedAlgebra, module: ModulePresentation) -> IdentityReport:
    """depth_A M >= c + 1 forces Ext^c_A(O, M) to be torsion-free."""
    certificate = depth_certificate(module, algebra.codim + 1, seed=algebra.config.seed)
    if not certificate.passed:
        raise DepthCertificateFailed(f"depth_A M >= {algebra.codim + 1} is not certified",
                                     {"depth": certificate.status()})
    ext = ext_module(algebra, module, algebra.codim)
    return _check("torsion_free_ext", length(ext.klass.torsion()), 0, ext=ext.klass.render(),
                  stabilized_at=ext.stabilized_at)


# --- theta ---

def theta_in_nice_form(algebra: AugmentedAlgebra) -> Optional[bool]:
    """Whether theta generates F^c_A(O), evaluated on a nice-form presentation (None when c = 0)."""
    if algebra.codim == 0:
        return None
    target = algebra if is_nice_form(algebra) else nice_form(algebra).algebra
    complex_, data = tate_complex(target, target.codim + 1)
    return theta_generator(target, complex_, data).generates
