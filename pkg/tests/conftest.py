from pathlib import Path

import pytest

from vflow.ir import load_program
from vflow.propspec import load_specs

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)


@pytest.fixture
def running():
    return load_program(fixture_path("running_example.vfg"))


@pytest.fixture
def demo_specs():
    return load_specs(fixture_path("demo.prop"))


@pytest.fixture
def interproc():
    return load_program(fixture_path("interproc.vfg")), load_specs(fixture_path("interproc.prop"))


@pytest.fixture
def appendix():
    return load_program(fixture_path("appendix_example.vfg"))
