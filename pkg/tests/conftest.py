import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def numeric_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f()`` with respect to each array (perturbed in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            fp = f()
            a[i] = old - h
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-8):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
    err = np.max(np.abs(analytic - numeric))
    assert err <= rtol * scale + atol, f"max abs err {err:.3e} vs scale {scale:.3e}"


@pytest.fixture(scope="session")
def small_dataset():
    from cadence_forge.synth import generate_dataset
    return generate_dataset(4, 6, seed=3)


ACCEPTANCE_RESULTS: dict = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        number = int(name.split("_")[2])
        ACCEPTANCE_RESULTS[number] = (name, report.passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        name, passed = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {number:2d} {name}")
