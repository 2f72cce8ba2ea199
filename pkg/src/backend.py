import hashlib
import json
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.config import SessionConfig, settings
from src.congruence import (
    ClassSummary,
    CertificateSummary,
    freeness_certificate,
    mu_rank,
    theta_in_nice_form,
    wiles_defect,
)
from src.errors import CongruenceError, IdentityFailed, PrecisionInsufficient, PreconditionViolation
from src.ingest import Problem
from src.level_models import depth_certificate
from src.local_algebra import fitting_invariants, is_nice_form, nice_form
from src.patching import (
    check_duality,
    check_quotient_iso,
    endomorphism_transfer,
    patch,
    residue_homology,
)
from src.telemetry import log_event, log_warning, timed
from src.zoo import load_member, zoo

REPORT_FIELDS = ("p", "N", "guard", "D", "k_max", "seed", "strictness")


# --- Report models ---

class ErrorBlock(BaseModel):
    kind: str
    message: str
    details: Dict[str, Any] = {}


class Report(BaseModel):
    command: str
    target: str
    seed: int
    config: Dict[str, Any]
    input_digest: str = ""
    exit_code: int = 0
    result: Dict[str, Any] = {}
    warnings: List[str] = []
    error: Optional[ErrorBlock] = None


def config_fields(config: SessionConfig) -> Dict[str, Any]:
    return {key: getattr(config, key) for key in REPORT_FIELDS}


def input_digest(payload: Any, config: SessionConfig) -> str:
    """sha256 of the canonical JSON of the parsed input plus the effective config."""
    canonical = json.dumps({"input": payload, "config": config_fields(config)}, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _plain(value: Any) -> Any:
    """Reports hold only JSON types; numpy integers are converted exactly."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, BaseModel):
        return _plain(value.dict())
    return value


# --- Precision escalation ---

def with_escalation(run: Callable[[SessionConfig], Any], config: SessionConfig) -> Tuple[Any, SessionConfig, List[str]]:
    """Retry with config.escalated() on PrecisionInsufficient, up to max_escalations times."""
    warnings: List[str] = []
    current, attempt = config, 0
    while True:
        try:
            return run(current), current, warnings
        except PrecisionInsufficient as exc:
            if attempt >= config.max_escalations:
                raise
            attempt += 1
            raised = current.escalated()
            warnings.append(f"precision escalated from N = {current.N} to N = {raised.N}: {exc.message}")
            log_event("precision_escalated", N=raised.N, attempt=attempt, reason=exc.message)
            current = raised


# --- Commands ---

def analyze(problem: Problem) -> Dict[str, Any]:
    """Presentation data of the ring and module in a problem file."""
    if problem.algebra is None:
        raise PreconditionViolation("analyze needs a [ring] section", {"name": problem.name})
    A, M = problem.algebra, problem.module
    p = A.config.p
    linear = np.asarray(A.linear_matrix.entries, dtype=object).reshape(A.m, A.n)
    nice = A if is_nice_form(A) else nice_form(A).algebra
    grade = freeness_certificate(A, M)
    depth = depth_certificate(M, A.codim + 1, seed=A.config.seed)
    return {
        "variables": list(A.variables),
        "n": A.n,
        "m": A.m,
        "c": A.codim,
        "linear_matrix": [[int(x) for x in row] for row in linear],
        "cotangent": ClassSummary.of(A.cotangent.module).dict(),
        "phi": ClassSummary.of(A.cotangent.phi).dict(),
        "fitting_invariants": fitting_invariants(A),
        "nice_form": {"already": nice is A, "variables": list(nice.variables),
                      "relations": [f.render(nice.variables, p) for f in nice.relations]},
        "complete_intersection": A.is_complete_intersection(),
        "theta_generates": theta_in_nice_form(A),
        "module": {"generators": M.generators, "relations": len(M.relations),
                   "specialization": M.specialization_class().render()},
        "mu": mu_rank(A, M),
        "certificates": {"grade": CertificateSummary.of(grade).dict(),
                         "depth": CertificateSummary.of(depth).dict()},
    }


def defect(problem: Problem, strategy: str = "direct", seed: Optional[int] = None) -> Tuple[Dict[str, Any], List[str]]:
    if problem.algebra is None:
        raise PreconditionViolation("defect needs a [ring] section", {"name": problem.name})
    report = wiles_defect(problem.algebra, problem.module, strategy, seed)
    return report.dict(), list(report.warnings)


def run_patch(problem: Problem, levels: Optional[int] = None) -> Dict[str, Any]:
    """Patched module, quotient isomorphism, duality and every declared transfer."""
    system = problem.system
    if system is None:
        raise PreconditionViolation("patch needs a [patch] section", {"name": problem.name})
    s_max = levels or problem.levels
    config = problem.config
    tower = system.tower

    # 1. Assemble
    with timed("patch_assembled", system=system.name, s_max=s_max):
        patched = patch(system, tower, s_max, config)

    # 2. Identities
    iso = check_quotient_iso(patched)
    duality = check_duality(system, tower, s_max, config)
    transfers = [
        endomorphism_transfer(system, system.operator(case.operator), case.tau, tower, s_max, config)
        for case in problem.transfers
    ]

    return {
        "system": system.name,
        "tower": {"p": tower.p, "l": tower.l, "r": tower.r, "j": tower.j, "d": tower.d, "ell0": tower.ell0,
                  "offsets": list(tower.offsets), "n_max": system.n_max},
        "residue_homology": {str(k): v for k, v in sorted(residue_homology(system).items())},
        "levels": patched.summary(),
        "mcm": patched.mcm,
        "quotient_iso": iso.dict(),
        "duality": duality.dict(),
        "transfers": [t.dict() for t in transfers],
    }


# --- Zoo ---

def _expected_against(expect: Dict[str, Any], actual: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    checks = {}
    for key, wanted in sorted(expect.items()):
        if key == "error":
            continue
        got = actual.get(key)
        checks[key] = {"expected": wanted, "actual": got, "holds": got == wanted}
    return checks


def _observed(result: Dict[str, Any]) -> Dict[str, Any]:
    observed: Dict[str, Any] = {}
    if "defect" in result:
        report = result["defect"]
        observed.update({
            "codimension": report["codimension"],
            "mu": report["mu"],
            "phi_length": report["phi_length"],
            "psi_length": report["psi"]["length"],
            "delta": report["delta"],
            "ci": report["verdicts"]["ci"],
            "diamond_quotient_length": report["diamond_quotient_length"],
            "split_variables": report["split_variables"],
        })
    if "patch" in result:
        levels = result["patch"]["levels"]
        observed["lengths"] = [lv["length"] for lv in levels]
        observed["free"] = [lv["free"] for lv in levels]
    return observed


def evaluate_problem(problem: Problem, strategy: Optional[str] = None, seed: Optional[int] = None,
                     levels: Optional[int] = None) -> Tuple[Dict[str, Any], List[str]]:
    """Runs every section a problem defines: the defect for [ring], patching for [patch]."""
    result: Dict[str, Any] = {}
    warnings: List[str] = []
    run = problem.raw.get("run", {})
    if problem.algebra is not None:
        chosen = strategy or run.get("strategy", "direct")
        result["defect"], warnings = defect(problem, chosen, seed)
    if problem.system is not None:
        result["patch"] = run_patch(problem, levels)
    return result, warnings


def zoo_listing(config: SessionConfig = settings) -> Dict[str, Any]:
    return {"members": [{"name": e.name, "version": e.version, "description": e.description,
                         "provenance": e.provenance} for e in zoo(config)]}


def zoo_run(name: str, config: SessionConfig = settings, seed: Optional[int] = None) -> Tuple[Dict[str, Any], List[str]]:
    """Evaluates a member and compares it with the invariants embedded in its file."""
    problem = load_member(name, config)
    expect = problem.expect
    try:
        result, warnings = evaluate_problem(problem, seed=seed)
    except CongruenceError as exc:
        if expect.get("error") != exc.kind:
            raise
        log_event("zoo_expected_error", member=name, kind=exc.kind)
        return {"member": name, "expected_error": exc.to_dict()}, []
    if "error" in expect:
        raise IdentityFailed(f"zoo member {name} was expected to fail with {expect['error']}",
                             {"member": name, "expected": expect["error"]})
    checks = _expected_against(expect, _observed(result))
    result = {"member": name, **result, "expectations": checks}
    failing = sorted(k for k, v in checks.items() if not v["holds"])
    if failing:
        raise IdentityFailed(f"zoo member {name} differs from its recorded invariants",
                             {"member": name, "failing": failing, "expectations": _plain(checks)})
    return result, warnings


# --- Reports ---

def failed(report: Report, exc: CongruenceError) -> Report:
    log_warning("command_failed", command=report.command, kind=exc.kind, exit_code=exc.exit_code)
    return report.copy(update={"exit_code": exc.exit_code,
                               "error": ErrorBlock(kind=exc.kind, message=exc.message, details=_plain(exc.details))})


def build_report(command: str, target: str, config: SessionConfig, digest_input: Any,
                 compute: Callable[[SessionConfig], Tuple[Dict[str, Any], List[str]]]) -> Report:
    """Runs a command with precision escalation and wraps its result or error."""
    report = Report(command=command, target=target, seed=config.seed, config=config_fields(config),
                    input_digest=input_digest(digest_input, config))
    try:
        (result, warnings), used, escalations = with_escalation(compute, config)
    except CongruenceError as exc:
        return failed(report, exc)
    return report.copy(update={"config": config_fields(used), "result": _plain(result),
                               "warnings": escalations + list(warnings)})


def emit_json(report: Report) -> str:
    return json.dumps(_plain(report.dict()), sort_keys=True, indent=2)


def _rows(prefix: str, value: Any, rows: List[Tuple[str, str]]) -> None:
    if isinstance(value, dict) and "rendered" in value and "torsion_exponents" in value:
        rows.append((prefix, value["rendered"]))
    elif isinstance(value, dict) and value:
        for key in sorted(value):
            _rows(f"{prefix}.{key}" if prefix else str(key), value[key], rows)
    elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
        for index, item in enumerate(value):
            _rows(f"{prefix}[{index}]", item, rows)
    else:
        rows.append((prefix, json.dumps(value, sort_keys=True) if isinstance(value, (list, dict)) else str(value)))


def emit_table(report: Report) -> str:
    """Two-column field/value table; module classes render as O^r + O/p^d1 + ..."""
    rows: List[Tuple[str, str]] = [("command", report.command), ("target", report.target),
                                   ("exit_code", str(report.exit_code))]
    _rows("", report.result, rows)
    if report.error is not None:
        _rows("error", report.error.dict(), rows)
    for index, warning in enumerate(report.warnings):
        rows.append((f"warning[{index}]", warning))
    frame = pd.DataFrame(rows, columns=["field", "value"])
    return frame.to_string(index=False)


def emit_report(report: Report, fmt: str = "json") -> str:
    if fmt == "table":
        return emit_table(report)
    return emit_json(report)
