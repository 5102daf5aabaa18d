import numpy as np
import pytest

from dissnf.series import FourierTaylorSeries, ResonanceStructure, SeriesShape


@pytest.fixture
def shape():
    return SeriesShape(ell=1, y0=(1.01,), fourier_cutoff=40, taylor_cutoff=6)


@pytest.fixture
def res():
    return ResonanceStructure([(1, -1)], K=20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_series(shape, rng, nterms=20, max_mode=4, max_degree=3):
    """Random real series with small modes and low Taylor degree."""
    ell = shape.ell
    modes = rng.integers(-max_mode, max_mode + 1, size=(nterms, ell + 1))
    basis = shape.basis
    coefs = np.zeros((nterms, basis.size), dtype=complex)
    low = basis.total_degree <= max_degree
    coefs[:, low] = rng.normal(size=(nterms, low.sum())) + 1j * rng.normal(size=(nterms, low.sum()))
    return FourierTaylorSeries(shape, modes, coefs)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
