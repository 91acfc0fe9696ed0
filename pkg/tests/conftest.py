import numpy as np
import pytest

from ldps.grid import GridSpec


def assert_mc(estimate, stderr, target, n_sigma=4.0, slack=0.0):
    """Monte Carlo estimate within ``n_sigma`` standard errors (plus ``slack``) of ``target``."""
    gap = abs(float(estimate) - float(target))
    assert gap <= n_sigma * float(stderr) + slack, (
        f"estimate {estimate:.6g} vs {target:.6g}: gap {gap:.3g} > {n_sigma} x {stderr:.3g} + {slack:.3g}")


def mean_and_se(samples, axis=0):
    s = np.asarray(samples, dtype=float)
    n = s.shape[axis]
    return s.mean(axis=axis), s.std(axis=axis, ddof=1) / np.sqrt(n)


@pytest.fixture
def small_grid():
    return GridSpec(T=0.5, n_t=50, n_x=16)


@pytest.fixture
def unit_grid():
    return GridSpec(T=1.0, n_t=20, n_x=10)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines, key=lambda k: (int(k.rstrip("abc")), k)):
        ok, detail = lines[key]
        terminalreporter.write_line(f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
