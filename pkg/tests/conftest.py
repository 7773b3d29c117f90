import json
import sys
from pathlib import Path

import pytest

from netshare.domain import EnergyParams, NetworkModel, OperatorConfig, RadioParams, make_classes

sys.path.insert(0, str(Path(__file__).parent))

KM2 = 1e-6
DATA = Path(__file__).parent / "data"


def synthetic_model(load_model="per-operator-literal", profile="HLP", lam=3.0, lam_u=30.0, n_ops=2,
                    alpha=4.0, colocation=0.0, classes=None) -> NetworkModel:
    """I=2, 3 BS/km², 30 users/km² per operator, alpha=4, 20 MHz, 20 W, one 1 Mbit/s class."""
    e = EnergyParams.from_profile(profile)
    ops = tuple(OperatorConfig(i, lam * KM2, lam_u * KM2, e) for i in range(n_ops))
    classes = classes or make_classes([1e6], [1.0])
    return NetworkModel(ops, classes, RadioParams(pathloss_exponent=alpha), colocation, load_model)


@pytest.fixture
def synthetic():
    return synthetic_model()


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "oracle_values.json").read_text())


# criterion number -> (verdict, detail), filled in by test_acceptance
ACCEPTANCE: dict = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = ("PASS" if ok else "FAIL", detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}")
