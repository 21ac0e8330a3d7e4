import numpy as np
import pytest

from freqtile.anorm import QuasiNormContext
from freqtile.bapu import Bapu
from freqtile.covering import build_covering
from freqtile.regulation import alpha_regulation


@pytest.fixture(scope="session")
def ctx1():
    return QuasiNormContext.create([1.0])


@pytest.fixture(scope="session")
def ctx2():
    return QuasiNormContext.create([0.5, 1.5])


@pytest.fixture(scope="session")
def cov1(ctx1):
    """d = 1, alpha = 0.5 on the desk annulus."""
    return build_covering(alpha_regulation(ctx1, 0.5), 0.2)


@pytest.fixture(scope="session")
def bapu1(cov1):
    return Bapu(cov1)


@pytest.fixture(scope="session")
def cov2(ctx2):
    """Small anisotropic d = 2 covering for unit tests."""
    return build_covering(alpha_regulation(ctx2, 1.0), 0.2, annulus=(0.25, 8.0))


@pytest.fixture(scope="session")
def bapu2(cov2):
    return Bapu(cov2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion; echoed in the terminal summary."""
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
