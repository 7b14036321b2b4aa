import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("FLUXMIST_EXAMPLES", "12")),
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
    derandomize=True,
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def light():
    from fluxmist.hilbert import FluxoniumParams, diagonalize_fluxonium
    from fluxmist.units import ghz

    return diagonalize_fluxonium(FluxoniumParams.from_ratios(4.0, 0.75, ghz(1.0)), 1000, 20)


@pytest.fixture(scope="session")
def heavy():
    from fluxmist.hilbert import FluxoniumParams, diagonalize_fluxonium
    from fluxmist.units import ghz

    return diagonalize_fluxonium(FluxoniumParams.from_ratios(6.0, 0.3, ghz(1.0)), 1000, 20)


def pytest_configure(config):
    config._fluxmist_verdicts = []


@pytest.fixture
def verdict(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def emit(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._fluxmist_verdicts.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(getattr(config, "_fluxmist_verdicts", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
