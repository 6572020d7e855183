import numpy as np
import pytest

from bpfusion.fusion import PriorBox
from bpfusion.geometry import Scene
from bpfusion.waveform import OfdmConfig

RX_SEC6 = [(17, 4), (7, 19), (45, 8), (26, 2), (9, 39), (6, 23), (8, 46), (34, 6)]


def sec6_scene():
    return Scene(np.array([(5.0, 5.0)]), np.array(RX_SEC6, float), (30.5, 30.5), (2.7, 2.0))


def sec6_cfg(k=100, l=100):
    return OfdmConfig(30e9, 240e3, 0.625e-3, k, l)


def sec6_prior():
    return PriorBox((25, 35, 25, 35), (1, 4, 0.5, 3.5))


@pytest.fixture
def scene():
    return sec6_scene()


@pytest.fixture
def cfg():
    return sec6_cfg()


@pytest.fixture
def prior():
    return sec6_prior()


# acceptance results, criterion number -> list of (part, ok, detail)
ACCEPTANCE: dict[int, list] = {}


def record(criterion: int, part: str, ok: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{p[0]}: {'ok' if p[1] else 'FAIL'} {p[2]}".strip() for p in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
