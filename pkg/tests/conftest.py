import numpy as np
import pytest

from gpnd.data import Dataset
from gpnd.kernel import KernelParams
from gpnd.negcon import NegativeSet


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def random_kernel(rng):
    return KernelParams(
        log_lengthscale=rng.uniform(-0.5, 0.7),
        log_signal_var=rng.uniform(-0.7, 0.7),
        log_noise_var=rng.uniform(-3.0, -0.5),
        mean_const=rng.normal(0, 0.5),
    )


def random_problem(rng, n=None, d=None, m=None):
    n = n if n is not None else int(rng.integers(3, 13))
    d = d if d is not None else int(rng.integers(1, 4))
    X = rng.uniform(-2, 2, size=(n, d))
    y = np.sin(X.sum(axis=1)) + 0.1 * rng.standard_normal(n)
    data = Dataset(X, y)
    neg = None
    if m is not None:
        neg = NegativeSet(rng.uniform(-2, 2, size=(m, d)), rng.normal(0, 1, m),
                          rng.uniform(0.2, 1.0))
    return random_kernel(rng), data, neg


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance(request):
    """Attach the measured numbers to the criterion's summary line."""

    def note(detail):
        request.node.user_properties.append(("detail", detail))

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None or (rep.when != "call" and rep.passed):
        return
    number, title = crit.args
    details = [v for k, v in item.user_properties if k == "detail"]
    status = "PASS" if rep.passed else "FAIL"
    line = f"criterion {number:>2} {status}  {title}"
    if details:
        line += "  [" + "; ".join(details) + "]"
    _ACCEPTANCE[(number, item.name)] = line


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
