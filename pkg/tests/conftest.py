"""Shared fixtures: a warmed-up engine and a reusable deterministic
central-difference reference used by several acceptance checks."""

import numpy as np
import pytest

from coagsens import oracle
from coagsens.simulate import ensure_compiled

ORACLE_TIMES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
ORACLE_X_MAX = 1024

_CRITERION_LINES: list[tuple[str, bool, str]] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    """Queue a one-line verdict for the end-of-run summary block."""
    _CRITERION_LINES.append((label, ok, detail))


@pytest.fixture(scope="session")
def engine():
    """Force all jit paths to compile before anything is timed."""
    ensure_compiled()


@pytest.fixture(scope="session")
def additive_cd_ref():
    """Deterministic sensitivity reference, additive family, lam=1,
    eps=0.06, monodisperse start, full resolution (column = size)."""
    ref = oracle.central_difference_ref(
        "additive", 1.0, 0.06, {1: 1.0}, ORACLE_TIMES,
        x_max=ORACLE_X_MAX, h=1e-3)
    ref.flags.writeable = False
    return ref


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERION_LINES:
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}: {detail}")
