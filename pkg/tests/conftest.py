"""Shared fixtures plus the acceptance-criteria terminal summary.

The heavyweight scenario runs are session fixtures so that criteria
sharing a batch (the storage moment run feeds both the trend gates and
the tail gate) simulate once.
"""
import time

import pytest

CRITERIA = (
    ("c01-exponent-arithmetic", "exponent report closed forms"),
    ("c02-lyapunov-certificates", "decay certificates for the four presets"),
    ("c03-flow-ode-oracles", "flow semigroup, envelope ODE, relaxation inversion"),
    ("c04-bounded-moments", "storage sup-moment trends and divergence"),
    ("c05-tail-lower-bound", "single big jump dominates the tail"),
    ("c06-sublinear-passage", "passage moments from the certified radius"),
    ("c07-superlinear-passage", "collapse time concentration"),
    ("c08-uniform-in-x0", "moment curves independent of the start"),
    ("c09-critical-diffusion", "stationary moment match and growth threshold"),
    ("c10-lorenz84", "dissipativity and bounded trend in 3d"),
    ("c11-scheme-vs-exact", "Euler path against the event-exact path"),
    ("c12-replay-determinism", "manifests reproduce outputs byte-identically"),
)
_RESULTS = {}


def record_criterion(cid, ok, detail=""):
    assert cid in {c[0] for c in CRITERIA}, "unknown criterion id %r" % cid
    _RESULTS[cid] = (bool(ok), detail)


@pytest.fixture(scope="session")
def criterion():
    """Recorder: call criterion(cid, ok, detail) before asserting."""
    return record_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, label in CRITERIA:
        if cid in _RESULTS:
            ok, detail = _RESULTS[cid]
            word = "PASS" if ok else "FAIL"
        else:
            ok, detail, word = None, "", "NOT RUN"
        mark = ({"green": True} if ok else
                {"red": True} if ok is False else {"yellow": True})
        tr.write_line("%-7s %-26s %s" % (word, cid, detail or label), **mark)


# ---- scenario runs shared across acceptance tests -----------------------

def run_timed(name, overrides, out_root, workers=4):
    from driftbound.scenarios import run_scenario
    t0 = time.perf_counter()
    res = run_scenario(name, overrides, str(out_root), workers=workers)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def scenario_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance-runs")


@pytest.fixture(scope="session")
def sublinear_run(scenario_root):
    # the criterion pins n_paths and horizon but leaves dt free; 1e-2
    # keeps the 10^4-path batch inside the ten-minute budget
    return run_timed("sublinear-moments", {"sim.dt": 1e-2}, scenario_root)


@pytest.fixture(scope="session")
def superlinear_passage_run(scenario_root):
    return run_timed("superlinear-passage", {}, scenario_root)


@pytest.fixture(scope="session")
def superlinear_uniform_run(scenario_root):
    return run_timed("superlinear-uniform", {}, scenario_root)


@pytest.fixture(scope="session")
def diffusion_run(scenario_root):
    return run_timed("diffusion-critical", {}, scenario_root)


@pytest.fixture(scope="session")
def lorenz_run(scenario_root):
    return run_timed("lorenz84", {}, scenario_root)
