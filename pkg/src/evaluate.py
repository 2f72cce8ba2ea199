"""
Verification suites.

Each suite is a list of named cases; a case returns an IdentityReport and
never raises for a failing identity. Errors raised inside a case are
recorded as failures with their kind.
"""

from itertools import combinations
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel
from sympy import binomial, multiplicity

from src.backend import with_escalation, zoo_run
from src.config import SessionConfig, settings
from src.congruence import (
    IdentityReport,
    change_of_congruence,
    ci_isomorphism_check,
    defect_formula_check,
    endomorphism_consistency,
    ext_module,
    faithful_invariance_check,
    invariance_of_domain_check,
    torsion_free_ext_check,
    wiles_defect,
)
from src.dvr_core import smith_reduce
from src.errors import CongruenceError, HomologySpread, PreconditionViolation
from src.ingest import parse_problem, poly_in, ring_from_strings
from src.local_algebra import AugmentedAlgebra, ModulePresentation
from src.patching import patch
from src.telemetry import log_event
from src.zoo import load_member, zoo

SUITES = ("core", "ci", "deformation", "domain", "defect", "patching", "snf")
SEED_SPREAD = 8
SNF_MAX_SIZE = 6

Case = Tuple[str, Callable[[], IdentityReport]]


class CaseResult(BaseModel):
    suite: str
    case: str
    holds: bool
    lhs: Optional[int] = None
    rhs: Optional[int] = None
    error: Optional[str] = None
    escalated_n: Optional[int] = None


class SuiteReport(BaseModel):
    suite: str
    seed: int
    cases: List[CaseResult]
    passed: int
    failed: int

    @property
    def exit_code(self) -> int:
        return 0 if self.failed == 0 else 5


def _report(name: str, lhs: int, rhs: int, holds: Optional[bool] = None, **details) -> IdentityReport:
    return IdentityReport(name=name, lhs=int(lhs), rhs=int(rhs), holds=lhs == rhs if holds is None else holds,
                          details=details)


def _expect_error(name: str, run: Callable[[], object], error: type) -> IdentityReport:
    try:
        run()
    except error as exc:
        return _report(name, 1, 1, kind=exc.kind)
    return _report(name, 0, 1, expected=error.kind)


# --- SNF oracle ---

def bareiss_determinant(rows: List[List[int]]) -> int:
    """Fraction-free elimination over the integers."""
    a = [list(row) for row in rows]
    n = len(a)
    sign, previous = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // previous
        previous = a[k][k]
    return sign * a[n - 1][n - 1]


def oracle_exponents(entries: np.ndarray, p: int, N: int) -> List[int]:
    """Invariant factor exponents below N from the determinantal divisors d_k = min v(k x k minors)."""
    matrix = [[int(x) for x in row] for row in np.asarray(entries, dtype=object)]
    rows = len(matrix)
    cols = len(matrix[0]) if rows else 0
    divisors, exponents = [0], []
    for k in range(1, min(rows, cols) + 1):
        floor = divisors[-1] + (exponents[-1] if exponents else 0)
        best = None
        for r in combinations(range(rows), k):
            for c in combinations(range(cols), k):
                det = bareiss_determinant([[matrix[i][j] for j in c] for i in r])
                if det:
                    v = int(multiplicity(p, abs(det)))
                    best = v if best is None else min(best, v)
                if best == floor:
                    break
            if best == floor:
                break
        if best is None:
            break
        exponents.append(best - divisors[-1])
        divisors.append(best)
    return [e for e in exponents if e < N]


def random_matrices(count: int, p: int, N: int, seed: int, max_size: int = SNF_MAX_SIZE) -> List[np.ndarray]:
    """Products A·diag(p^v)·B, so that low valuations and rank drops both occur."""
    rng = np.random.default_rng(seed)
    modulus = p ** N
    out = []
    for _ in range(count):
        rows, cols = (int(x) for x in rng.integers(1, max_size + 1, size=2))
        inner = int(rng.integers(1, max_size + 1))
        left = rng.integers(0, modulus, size=(rows, inner)).astype(object)
        right = rng.integers(0, modulus, size=(inner, cols)).astype(object)
        scale = np.diag([p ** int(v) for v in rng.integers(0, N + 1, size=inner)]).astype(object)
        out.append(left.dot(scale).dot(right) % modulus)
    return out


def snf_batch(count: int, config: SessionConfig, seed: int) -> IdentityReport:
    p, N = config.p, config.N
    mismatches = []
    for index, matrix in enumerate(random_matrices(count, p, N, seed)):
        got = smith_reduce(matrix, p, N).exponents
        want = oracle_exponents(matrix, p, N)
        if list(got) != want:
            mismatches.append({"index": index, "smith": list(got), "oracle": want})
    return _report("snf_oracle", count - len(mismatches), count, mismatches=mismatches[:5])


# --- complete intersections ---

def ci_family() -> List[Tuple[Tuple[int, ...], int]]:
    """Nice-form complete intersections prod (p^d_i t_i + t_i^2) with c free variables."""
    family = [((d,), c) for c in (0, 1, 2) for d in (1, 2, 3)]
    family += [((d1, d2), c) for c in (0, 1) for d1 in (1, 2, 3) for d2 in range(d1, 4)]
    return family


def ci_name(fitting: Tuple[int, ...], c: int) -> str:
    return f"ci-d{''.join(map(str, fitting))}-c{c}"


def ci_algebra(fitting: Tuple[int, ...], c: int, config: SessionConfig = settings) -> AugmentedAlgebra:
    variables = [f"t{i + 1}" for i in range(len(fitting))] + [f"x{j + 1}" for j in range(c)]
    relations = [f"p^{d}*t{i + 1} + t{i + 1}^2" for i, d in enumerate(fitting)]
    return ring_from_strings(variables, relations, config, declared_ci=True, declared_dimension=c + 1)


def _ci_closed_form(fitting: Tuple[int, ...], c: int, config: SessionConfig, seed: int) -> IdentityReport:
    A = ci_algebra(fitting, c, config)
    report = wiles_defect(A, ModulePresentation.free(A), "direct", seed)
    total = sum(fitting)
    holds = report.phi_length == total and report.psi.length == total and report.delta == 0
    return _report("ci_closed_form", report.psi.length, total, holds, phi=report.phi_length, delta=report.delta)


def _rank_profile(fitting: Tuple[int, ...], c: int, config: SessionConfig) -> IdentityReport:
    A = ci_algebra(fitting, c, config)
    residue = ModulePresentation.residue(A)
    ranks = [ext_module(A, residue, i).free_rank for i in range(c + 2)]
    expected = [int(binomial(c, i)) for i in range(c + 2)]
    return _report("ext_rank_profile", sum(ranks), sum(expected), ranks == expected, ranks=ranks, expected=expected)


def _ci_isomorphism(relations: List[str], quotient: List[str], config: SessionConfig) -> IdentityReport:
    A = ring_from_strings(["t"], relations, config)
    B = ring_from_strings(["t"], quotient, config, declared_ci=True)
    return ci_isomorphism_check(A, B)


def ci_cases(config: SessionConfig, seed: int, limit: Optional[int] = None) -> List[Case]:
    family = ci_family()[:limit]
    cases: List[Case] = [(ci_name(f, c), lambda f=f, c=c: _ci_closed_form(f, c, config, seed)) for f, c in family]
    cases += [(f"{ci_name(f, c)}-ext", lambda f=f, c=c: _rank_profile(f, c, config))
              for f, c in family]
    cases += [
        ("ci-iso-proper", lambda: _ci_isomorphism(["p^2*t"], ["p*t"], config)),
        ("ci-iso-unit-multiple", lambda: _ci_isomorphism(["p^2*t"], ["p^2*t + p^2*t^2"], config)),
    ]
    return cases


# --- deformation invariance ---

def _strategy_agreement(algebra: AugmentedAlgebra, module: ModulePresentation, seed: int) -> IdentityReport:
    direct = wiles_defect(algebra, module, "direct", seed).delta
    reduced = {s: wiles_defect(algebra, module, "reduce", s).delta for s in range(seed, seed + SEED_SPREAD)}
    holds = set(reduced.values()) == {direct}
    return _report("direct_equals_reduce", direct, max(reduced.values()), holds,
                   reduce={str(k): v for k, v in reduced.items()})


def _ci_agreement(fitting: Tuple[int, ...], c: int, config: SessionConfig, seed: int) -> IdentityReport:
    A = ci_algebra(fitting, c, config)
    return _strategy_agreement(A, ModulePresentation.free(A), seed)


def _member(name: str, config: SessionConfig) -> Tuple[AugmentedAlgebra, ModulePresentation]:
    problem = load_member(name, config)
    return problem.algebra, problem.module


def deformation_cases(config: SessionConfig, seed: int,
                      members: Tuple[str, ...] = ("power-series", "unipotent-b1", "unipotent-b2",
                                                  "unipotent-b3")) -> List[Case]:
    cases: List[Case] = [(name, lambda name=name: _strategy_agreement(*_member(name, config), seed))
                         for name in members]
    cases += [(ci_name(f, c), lambda f=f, c=c: _ci_agreement(f, c, config, seed))
              for f, c in ci_family() if c == 1 and len(f) == 1]
    return cases


# --- invariance of domain ---

def _domain(variables: List[str], ring: str, quotient: str, config: SessionConfig, rank: int = 1) -> IdentityReport:
    A = ring_from_strings(variables, [ring], config)
    B = ring_from_strings(variables, [quotient], config)
    M = ModulePresentation.free(B, rank)
    return invariance_of_domain_check(A, B, M)


def _faithful(config: SessionConfig) -> IdentityReport:
    A = ring_from_strings(["t"], ["p^3*t"], config)
    M = ModulePresentation.cyclic(A, [poly_in(A, "p*t")])
    return faithful_invariance_check(A, M)


def domain_cases(config: SessionConfig, limit: Optional[int] = None) -> List[Case]:
    cases: List[Case] = []
    for a, b in ((2, 1), (3, 1), (3, 2), (1, 1), (2, 2), (3, 3)):
        cases.append((f"hypersurface-{a}-to-{b}",
                      lambda a=a, b=b: _domain(["t"], f"p^{a}*t", f"p^{b}*t", config)))
    for a, b in ((2, 1), (3, 1), (3, 2), (2, 2)):
        cases.append((f"codim-one-{a}-to-{b}",
                      lambda a=a, b=b: _domain(["s", "t"], f"p^{a}*s", f"p^{b}*s", config)))
    cases.append(("hypersurface-2-to-1-rank-two", lambda: _domain(["t"], "p^2*t", "p*t", config, rank=2)))
    cases.append(("faithful-quotient", lambda: _faithful(config)))
    return cases[:limit]


# --- defect identities ---

def _hypersurface(config: SessionConfig) -> AugmentedAlgebra:
    return ring_from_strings(["t"], ["p^2*t"], config, declared_ci=True)


def _matrix(algebra: AugmentedAlgebra, rows: List[List[str]]):
    return [[poly_in(algebra, x) for x in row] for row in rows]


def _defect_formula(name: str, config: SessionConfig, rank: int = 1, cyclic: Optional[str] = None) -> IdentityReport:
    if name == "hypersurface":
        A = _hypersurface(config)
    else:
        A, _ = _member(name, config)
    M = ModulePresentation.cyclic(A, [poly_in(A, cyclic)]) if cyclic else ModulePresentation.free(A, rank)
    return defect_formula_check(A, M)


def _change_of_congruence(config: SessionConfig) -> IdentityReport:
    A = _hypersurface(config)
    N = ModulePresentation.cyclic(A, [poly_in(A, "p*t")])
    return change_of_congruence(A, ModulePresentation.free(A), N, _matrix(A, [["1"]]))


def _endomorphism(config: SessionConfig) -> IdentityReport:
    A = _hypersurface(config)
    return endomorphism_consistency(A, ModulePresentation.free(A, 2), _matrix(A, [["1 + t", "0"], ["t", "1"]]))


def _nonnegative(name: str, config: SessionConfig, seed: int) -> IdentityReport:
    A, M = _member(name, config)
    report = wiles_defect(A, M, "direct", seed)
    strict = not A.declared_ci and M.generators == 1 and not M.relations
    holds = report.delta > 0 if strict else report.delta >= 0
    return _report("defect_nonnegative", report.delta, 0, holds, strict=strict)


def _torsion_free(name: str, config: SessionConfig) -> IdentityReport:
    A, M = _member(name, config)
    return torsion_free_ext_check(A, M)


RING_MEMBERS = ("power-series", "hypersurface-d2", "hypersurface-d3", "unipotent-b1", "unipotent-b2",
                "unipotent-b3", "noncomplete-intersection", "diamond-example", "local-deformation")


def defect_cases(config: SessionConfig, seed: int) -> List[Case]:
    cases: List[Case] = [
        ("formula-hypersurface", lambda: _defect_formula("hypersurface", config)),
        ("formula-hypersurface-rank-two", lambda: _defect_formula("hypersurface", config, rank=2)),
        ("formula-hypersurface-cyclic", lambda: _defect_formula("hypersurface", config, cyclic="p*t")),
        ("formula-noncomplete-intersection", lambda: _defect_formula("noncomplete-intersection", config)),
        ("formula-unipotent-b1", lambda: _defect_formula("unipotent-b1", config)),
        ("formula-power-series", lambda: _defect_formula("power-series", config)),
        ("change-of-congruence", lambda: _change_of_congruence(config)),
        ("endomorphism-consistency", lambda: _endomorphism(config)),
        ("torsion-free-power-series", lambda: _torsion_free("power-series", config)),
        ("torsion-free-unipotent-b1", lambda: _torsion_free("unipotent-b1", config)),
    ]
    cases += [(f"nonnegative-{name}", lambda name=name: _nonnegative(name, config, seed)) for name in RING_MEMBERS]
    return cases


# --- patching and the zoo ---

SPREAD_TOWER = """
[precision]
p = 3

[patch]
ell0 = 0
offsets = [2]

[patch.ranks]
0 = 1
1 = 1

[patch.differentials]
1 = [["g1^l - 1 + g1^(l^n) - 1"]]
"""


def _zoo_case(name: str, config: SessionConfig, seed: int) -> IdentityReport:
    result, _ = zoo_run(name, config, seed)
    checks = result.get("expectations", {})
    held = sum(1 for c in checks.values() if c["holds"])
    return _report("zoo_member", held, len(checks), expected_error="expected_error" in result)


def zoo_cases(config: SessionConfig, seed: int, patching: Optional[bool] = None) -> List[Case]:
    names = [e.name for e in zoo(config)]
    if patching is not None:
        names = [n for n in names if n.startswith("patch-") == patching]
    return [(f"zoo-{name}", lambda name=name: _zoo_case(name, config, seed)) for name in names]


def _spread(config: SessionConfig):
    return patch(parse_problem(SPREAD_TOWER, "spread", config).system, s_max=1, config=config)


def patching_cases(config: SessionConfig, seed: int) -> List[Case]:
    return zoo_cases(config, seed, patching=True) + [
        ("spread-homology", lambda: _expect_error("homology_spread", lambda: _spread(config), HomologySpread)),
    ]


# --- runner ---

def suite_cases(name: str, config: SessionConfig, seed: int) -> List[Case]:
    if name == "snf":
        return [(f"snf-batch-{k}", lambda k=k: snf_batch(50, config, seed * 1000 + k)) for k in range(4)]
    if name == "ci":
        return ci_cases(config, seed)
    if name == "deformation":
        return deformation_cases(config, seed)
    if name == "domain":
        return domain_cases(config)
    if name == "defect":
        return defect_cases(config, seed)
    if name == "patching":
        return patching_cases(config, seed)
    if name == "core":
        return (zoo_cases(config, seed)
                + [("snf-batch", lambda: snf_batch(40, config, seed))]
                + ci_cases(config, seed, limit=4)
                + deformation_cases(config, seed, members=("unipotent-b1",))[:1]
                + domain_cases(config, limit=3)
                + defect_cases(config, seed)
                + patching_cases(config, seed)[-1:])
    raise PreconditionViolation(f"unknown suite {name!r}", {"suites": list(SUITES)})


def run_case(name: str, label: str, config: SessionConfig, seed: int) -> Tuple[IdentityReport, SessionConfig]:
    """Runs one case with precision escalation; cases close over their config, so retries rebuild them."""
    report, used, _ = with_escalation(lambda cfg: dict(suite_cases(name, cfg, seed))[label](), config)
    return report, used


def run_suite(name: str, config: SessionConfig = settings, seed: Optional[int] = None) -> SuiteReport:
    seed = config.seed if seed is None else seed
    results = []
    for label, _ in suite_cases(name, config, seed):
        try:
            report, used = run_case(name, label, config, seed)
            result = CaseResult(suite=name, case=label, holds=report.holds, lhs=report.lhs, rhs=report.rhs,
                                escalated_n=used.N if used.N != config.N else None)
        except CongruenceError as exc:
            result = CaseResult(suite=name, case=label, holds=False, error=exc.kind)
        log_event("suite_case", suite=name, case=label, holds=result.holds, error=result.error)
        results.append(result)
    passed = sum(1 for r in results if r.holds)
    return SuiteReport(suite=name, seed=seed, cases=results, passed=passed, failed=len(results) - passed)


def summary_frame(report: SuiteReport) -> pd.DataFrame:
    return pd.DataFrame([r.dict() for r in report.cases], columns=["case", "holds", "lhs", "rhs", "error"])


def render_report_card(report: SuiteReport) -> str:
    lines = [f"🧪 Suite '{report.suite}' (seed {report.seed}): {len(report.cases)} cases", ""]
    frame = summary_frame(report)
    frame["holds"] = frame["holds"].map({True: "✅", False: "❌"})
    lines.append(frame.fillna("").to_string(index=False))
    lines += ["", "=" * 30, "📊 SYSTEM REPORT CARD", "=" * 30,
              f"✅ Passed: {report.passed}", f"❌ Failed: {report.failed}", "=" * 30]
    if report.failed == 0:
        lines.append("🏆 Result: ALL IDENTITIES HOLD")
    else:
        lines.append(f"⚠️ Result: {report.failed} FAILING CASES")
    return "\n".join(lines)


if __name__ == "__main__":
    print(render_report_card(run_suite("core")))
