import json

import pytest
from pydantic import ValidationError

from src.config import SessionConfig
from src.errors import (
    CongruenceError,
    HomologySpread,
    IdentityFailed,
    ParseError,
    PrecisionInsufficient,
    PreconditionViolation,
    Unstabilized,
    UnitLinearTerm,
)
from src.telemetry import configure_logging, log_event, log_warning, timed


def test_defaults(config):
    assert (config.p, config.N, config.guard) == (5, 8, 2)
    assert config.stabilization_window == 2


def test_strict_widens_window():
    assert SessionConfig(strictness="strict").stabilization_window == 3


@pytest.mark.parametrize("p", [2, 4, 9, 1])
def test_p_must_be_odd_prime(p):
    with pytest.raises(ValidationError):
        SessionConfig(p=p)


def test_precision_leaves_room_above_guard():
    with pytest.raises(ValidationError):
        SessionConfig(N=3)
    assert SessionConfig(guard=3, N=5).N == 5


def test_escalated_adds_guard(config):
    raised = config.escalated()
    assert raised.N == config.N + config.guard
    assert raised.p == config.p


def test_overridden_ignores_missing_values(config):
    updated = config.overridden(seed=7, N=None)
    assert updated.seed == 7
    assert updated.N == config.N


def test_overridden_revalidates(config):
    with pytest.raises(ValidationError):
        config.overridden(p=15)


def test_environment_wins_over_init(monkeypatch):
    monkeypatch.setenv("CONGR_SEED", "11")
    assert SessionConfig(seed=3).seed == 11


def test_config_is_frozen(config):
    with pytest.raises(TypeError):
        config.N = 12


@pytest.mark.parametrize("error, code", [
    (ParseError("bad token", 1, 2), 1),
    (PrecisionInsufficient("guard band"), 2),
    (Unstabilized("no agreement"), 3),
    (PreconditionViolation("bad input"), 4),
    (UnitLinearTerm("unit"), 4),
    (HomologySpread("spread"), 4),
    (IdentityFailed("mismatch"), 5),
])
def test_exit_codes(error, code):
    assert isinstance(error, CongruenceError)
    assert error.exit_code == code


def test_parse_error_carries_position():
    error = ParseError("unexpected token", 3, 14)
    assert error.to_dict() == {
        "kind": "parse",
        "message": "unexpected token (line 3, column 14)",
        "details": {"line": 3, "column": 14},
    }


def test_log_event_writes_json_lines(capsys):
    configure_logging("INFO")
    log_event("level_computed", level=3, klass="O/p^2")
    lines = capsys.readouterr().err.strip().splitlines()
    assert json.loads(lines[-1]) == {"event": "level_computed", "level": 3, "klass": "O/p^2"}


def test_log_event_respects_level(capsys):
    configure_logging("WARNING")
    log_event("hidden")
    log_warning("shown", reason="x")
    lines = capsys.readouterr().err.strip().splitlines()
    assert [json.loads(line)["event"] for line in lines] == ["shown"]


def test_timed_reports_latency(capsys):
    configure_logging("INFO")
    with timed("patch_assembled", system="toy"):
        pass
    entry = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert entry["event"] == "patch_assembled"
    assert entry["system"] == "toy"
    assert entry["latency_ms"] >= 0


def test_log_level_is_normalized(config):
    assert config.overridden(log_level="info").log_level == "INFO"
    with pytest.raises(ValidationError):
        config.overridden(log_level="LOUD")
