import numpy as np
import pytest

from koopman_observer.edmd import build_data_matrices, empirical_remainder_bound, fit_generator
from koopman_observer.lmi import synthesize
from koopman_observer.systems import cstr_chain, example_a, sample_uniform

A_REF = np.array([[-2.0, 0.0, 0.0], [0.0, -4.0, 3.0], [0.0, 0.0, -1.0]])


class Identified:
    def __init__(self, system, d=5000, seed=1, vseed=1001):
        self.system = system
        self.train = sample_uniform(system, d, seed)
        self.valid = sample_uniform(system, d, vseed)
        self.X, self.Y = build_data_matrices(system.dictionary, self.train)
        self.gen = fit_generator(self.X, self.Y)
        self.A = self.gen.A
        self.C = system.C
        self.c_r = empirical_remainder_bound(system.dictionary, self.A, self.valid)


@pytest.fixture(scope="session")
def sys_a():
    return example_a()


@pytest.fixture(scope="session")
def ident_a(sys_a):
    return Identified(sys_a)


@pytest.fixture(scope="session")
def designs_a(ident_a):
    return {a: synthesize(ident_a.A, ident_a.C, a, ident_a.c_r) for a in (0.1, 0.9)}


@pytest.fixture(scope="session")
def ident_cstr():
    return Identified(cstr_chain())


@pytest.fixture(scope="session")
def designs_cstr(ident_cstr):
    return {a: synthesize(ident_cstr.A, ident_cstr.C, a, ident_cstr.c_r) for a in (0.1, 10.0)}


@pytest.fixture(scope="session")
def initial_a(sys_a):
    rng = np.random.default_rng(7)
    return rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 2))


_SESSION = {}


def pytest_sessionstart(session):
    import time
    _SESSION["t0"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    import time
    elapsed = time.perf_counter() - _SESSION.get("t0", time.perf_counter())
    ok = elapsed < 120
    terminalreporter.write_line(
        f"[acceptance 6] {'PASS' if ok else 'FAIL'}: full suite runtime {elapsed:.1f} s (< 120 s)")
