import functools

import numpy as np
import pytest

from kerrlattice.lindblad import BAND_BOTTOM, FIXED, ModelParams
from kerrlattice.steadystate import search_branches

ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def band(g, j, **kw):
    return ModelParams(g=g, j=j, delta_mode=BAND_BOTTOM, **kw)


def fixed(g, j, delta=0.0, **kw):
    return ModelParams(g=g, j=j, delta=delta, delta_mode=FIXED, **kw)


@functools.lru_cache(maxsize=None)
def branches(params, n_levels=40):
    return search_branches(params, n_levels=n_levels).branches


def random_density_matrix(rng, n, rank=None):
    rank = rank or n
    x = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
