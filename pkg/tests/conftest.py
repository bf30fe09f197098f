import functools

import numpy as np
import pytest

from sykquench import (BathSpec, EquilibriumParams, QuenchConfig, TimeLattice,
                       lay_initial_condition, solve_equilibrium)


@functools.lru_cache(maxsize=None)
def thermal_green(beta, lambda_t=10.0, dt=0.1, coupling_j=0.5):
    lat = TimeLattice(dt, lambda_t)
    params = EquilibriumParams.for_lattice(lat, beta, coupling_j)
    return lay_initial_condition(solve_equilibrium(params), lat)


def quench_config(beta_init, baths, lambda_t=10.0, dt=0.1, **kw):
    """``baths`` holds ``(beta_bath, V, n)`` triples."""
    lat = TimeLattice(dt, lambda_t)
    system = EquilibriumParams.for_lattice(lat, beta_init, 0.5)
    specs = [BathSpec.thermal(lat, b, v, n) for b, v, n in baths]
    return QuenchConfig(system, specs, lat, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20241017)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = f"criterion {criterion:>2}: " \
        f"{'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
