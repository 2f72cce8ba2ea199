import os

import pytest

from src.config import SessionConfig
from src.ingest import ring_from_strings
from src.local_algebra import ModulePresentation
from src.telemetry import configure_logging
from src.zoo import load_member


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith("CONGR_"):
            monkeypatch.delenv(key)
    configure_logging("WARNING")


@pytest.fixture
def config():
    return SessionConfig()


@pytest.fixture
def make_ring(config):
    def build(variables, relations, **declared):
        return ring_from_strings(variables, relations, config, **declared)

    return build


@pytest.fixture
def hypersurface(make_ring):
    """O[[t]]/(p^2 t)"""
    return make_ring(["t"], ["p^2*t"], declared_ci=True)


@pytest.fixture
def free_module():
    def build(algebra, rank=1):
        return ModulePresentation.free(algebra, rank)

    return build


@pytest.fixture
def member(config):
    def build(name):
        return load_member(name, config)

    return build
