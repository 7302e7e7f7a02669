import pytest
from hypothesis import settings

from dynloc.core import ModelParams, SpatialGrid, make_initial_state
from dynloc.gpe import SplitStepConfig, evolve

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def gp_run():
    """Memoized full-length GP runs from the standard packet at x_c = -8.

    ``gp_run(u, beta, dt=5e-3)`` returns ``(final_state, series)``. Several
    acceptance checks share the same (u, beta), so each run happens once.
    """
    cache = {}

    def run(u, beta, dt=5e-3, t_final=1999.0):
        key = (float(u), float(beta), float(dt), float(t_final))
        if key not in cache:
            cfg = SplitStepConfig(dt=dt, t_final=t_final)
            final, series, _ = evolve(make_initial_state(SpatialGrid(), -8.0), ModelParams(u, beta), cfg,
                                      keep_snapshots=False)
            cache[key] = (final, series)
        return cache[key]

    return run


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
