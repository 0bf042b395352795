import re

import numpy as np
import pytest

from nccz.dyadic import GridSpec
from nccz.funcspace import OperatorField, lp_norm


def random_positive(grid, rng, spread=1.5):
    """Positive field a(x) g*g with lognormal a, normalised to unit L1 norm."""
    g = rng.standard_normal((grid.num_cells(), grid.d, grid.d)) + 1j * rng.standard_normal(
        (grid.num_cells(), grid.d, grid.d))
    amp = rng.lognormal(0.0, spread, size=grid.num_cells())
    f = OperatorField(grid, grid.K, amp[:, None, None] * (np.conj(np.swapaxes(g, -1, -2)) @ g))
    return f * (1.0 / lp_norm(f, 1))


def random_hermitian(rng, d, batch=()):
    a = rng.standard_normal(batch + (d, d)) + 1j * rng.standard_normal(batch + (d, d))
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def quarter_spike(K=2):
    """Scalar 4 * 1_[0, 1/4) on [0, 1)."""
    grid = GridSpec(n=1, K=K, d=1)
    vals = np.zeros(grid.num_cells())
    vals[: grid.num_cells() // 4] = 4.0
    return OperatorField.from_scalars(grid, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(tag, ok, detail):
        line = f"{tag:<4} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(re.findall(r"\d+", s.split()[0])[0]), s)):
            terminalreporter.write_line(line)
