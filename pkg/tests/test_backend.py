import json

import numpy as np
import pytest

from src.backend import (
    Report,
    analyze,
    build_report,
    config_fields,
    defect,
    emit_json,
    emit_report,
    emit_table,
    evaluate_problem,
    input_digest,
    run_patch,
    with_escalation,
    zoo_run,
)
from src.errors import IdentityFailed, PrecisionInsufficient, PreconditionViolation
from src.ingest import parse_problem


def test_digest_is_deterministic(config):
    payload = {"ring": {"variables": ["t"], "relations": ["p^2*t"]}}
    assert input_digest(payload, config) == input_digest(json.loads(json.dumps(payload)), config)
    assert input_digest(payload, config) != input_digest(payload, config.overridden(seed=1))
    assert len(input_digest(payload, config)) == 64


def test_config_fields(config):
    assert config_fields(config) == {"p": 5, "N": 8, "guard": 2, "D": 16, "k_max": 12, "seed": 0,
                                     "strictness": "standard"}


def test_escalation_retries_with_more_precision(config):
    seen = []

    def run(cfg):
        seen.append(cfg.N)
        if cfg.N < 12:
            raise PrecisionInsufficient("guard band", {"N": cfg.N})
        return "done"

    result, used, warnings = with_escalation(run, config)
    assert result == "done"
    assert seen == [8, 10, 12]
    assert used.N == 12
    assert len(warnings) == 2


def test_escalation_gives_up(config):
    def run(cfg):
        raise PrecisionInsufficient("guard band", {"N": cfg.N})

    with pytest.raises(PrecisionInsufficient):
        with_escalation(run, config)


def test_build_report_wraps_errors(config):
    def compute(cfg):
        raise PreconditionViolation("needs a ring", {"name": "x"})

    report = build_report("defect", "x", config, {}, compute)
    assert report.exit_code == 4
    assert report.error.kind == "precondition"
    assert report.result == {}


def test_build_report_converts_numpy(config):
    report = build_report("analyze", "x", config, {}, lambda cfg: ({"n": np.int64(3), "ok": np.bool_(True)}, []))
    assert report.result == {"n": 3, "ok": True}
    assert type(report.result["n"]) is int


def test_emit_json_is_canonical(config):
    report = Report(command="zoo list", target="zoo", seed=0, config=config_fields(config),
                    result={"b": 1, "a": [1, 2]})
    text = emit_json(report)
    assert text == json.dumps(json.loads(text), sort_keys=True, indent=2)
    assert text.index('"a"') < text.index('"b"')


def test_emit_table_renders_classes(config, member):
    result, _ = defect(member("hypersurface-d2"), "direct", 0)
    report = Report(command="defect", target="zoo:hypersurface-d2", seed=0, config=config_fields(config),
                    result=result)
    table = emit_table(report)
    assert "psi" in table
    assert "O/p^2" in table
    assert emit_report(report, "table") == table
    assert emit_report(report, "json") == emit_json(report)


def test_analyze_hypersurface(member):
    result = analyze(member("hypersurface-d2"))
    assert result["c"] == 0
    assert result["fitting_invariants"] == [2]
    assert result["phi"]["rendered"] == "O/p^2"
    assert result["linear_matrix"] == [[25]]
    assert result["theta_generates"] is None
    assert result["mu"] == 1


def test_analyze_power_series(member):
    result = analyze(member("power-series"))
    assert result["c"] == 1
    assert result["theta_generates"] is True
    assert result["nice_form"]["already"]


def test_defect_needs_ring(config, member):
    with pytest.raises(PreconditionViolation):
        defect(member("patch-constant"))
    with pytest.raises(PreconditionViolation):
        run_patch(member("hypersurface-d2"))


def test_run_patch_report(member):
    result = run_patch(member("patch-constant"), levels=2)
    assert [lv["length"] for lv in result["levels"]] == [3, 18]
    assert result["quotient_iso"]["holds"]
    assert result["duality"]["holds"]
    assert [t["holds"] for t in result["transfers"]] == [True]
    assert result["residue_homology"] == {"0": 1}


def test_evaluate_problem_uses_run_section(member):
    result, _ = evaluate_problem(member("diamond-example"))
    assert set(result["defect"]["strategies"]) == {"direct", "reduce"}


def test_zoo_mismatch_is_an_identity_failure(config, tmp_path):
    (tmp_path / "wrong.toml").write_text(
        'name = "wrong"\n[ring]\nvariables = ["t"]\nrelations = ["p^2*t"]\n[expect]\ndelta = 1\n',
        encoding="utf-8")
    with pytest.raises(IdentityFailed) as caught:
        zoo_run("wrong", config.overridden(zoo_path=str(tmp_path)))
    assert caught.value.details["failing"] == ["delta"]


def test_zoo_unexpected_success(config, tmp_path):
    (tmp_path / "calm.toml").write_text(
        'name = "calm"\n[ring]\nvariables = ["t"]\nrelations = ["p*t"]\n[expect]\nerror = "unstabilized"\n',
        encoding="utf-8")
    with pytest.raises(IdentityFailed):
        zoo_run("calm", config.overridden(zoo_path=str(tmp_path)))


def test_problem_precision_reaches_report(config):
    problem = parse_problem('[precision]\nN = 10\n[ring]\nvariables = ["t"]\nrelations = ["p*t"]\n', config=config)
    result, _ = defect(problem)
    assert result["phi_length"] == 1
