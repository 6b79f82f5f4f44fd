from pathlib import Path

import pytest

from grid.models import Branch, Bus, BusKind, Generator, GridCase
from grid.network import network_model
from grid.parser import load_case

CASES = Path(__file__).parent / "grid" / "cases"


def two_bus_case(rate_a=100.0, r=0.0, x=0.1, b=0.0, pd=50.0, qd=10.0, pmax=200.0, gen_status=True):
    """REF bus 1 with one generator feeding a PQ load at bus 2 over one line"""
    return GridCase(
        base_mva=100.0,
        buses=(
            Bus(1, BusKind.REF, 0.0, 0.0, 0.0, 0.0, 0.9, 1.1),
            Bus(2, BusKind.PQ, pd, qd, 0.0, 0.0, 0.9, 1.1),
        ),
        gens=(Generator(1, 0.0, pmax, -100.0, 100.0, 0.0, 0.0, gen_status, (0.1, 20.0, 100.0)),),
        branches=(Branch(1, 2, r, x, b, rate_a=rate_a),),
        name="two_bus",
    )


@pytest.fixture(autouse=True)
def log_file(tmp_path, monkeypatch):
    monkeypatch.setenv("SMARTPG_LOG_FILE", str(tmp_path / "smartpg.log"))
    monkeypatch.delenv("SMARTPG_THREADS", raising=False)


@pytest.fixture
def case9():
    return load_case(CASES / "case9.m")


@pytest.fixture
def case14():
    return load_case(CASES / "case14.m")


@pytest.fixture
def model9(case9):
    return network_model(case9)


@pytest.fixture
def toy():
    return two_bus_case()
