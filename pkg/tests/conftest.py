import numpy as np
import pytest

from statda import REGIMES, build_triad_spec
from statda.config import ExperimentConfig
from statda.pipeline import load_or_compute_truth

# acceptance outcomes, printed in the terminal summary
ACCEPTANCE = {}


def record_acceptance(number, name, passed, detail=""):
    ACCEPTANCE[number] = (name, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k:2d} {name}: {detail}")


@pytest.fixture(scope="session")
def specs():
    return {k: build_triad_spec(p) for k, p in REGIMES.items()}


@pytest.fixture(params=[1, 2, 3], ids=["regime1", "regime2", "regime3"])
def regime_spec(request, specs):
    return request.param, specs[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def truth_store(request):
    """Full-size Monte-Carlo truth per regime, cached across sessions."""
    cache = {}

    def get(regime, seed=0, **kw):
        cfg = ExperimentConfig(regime=regime, seed=seed, **kw)
        key = (regime, seed, tuple(sorted(kw.items())))
        if key not in cache:
            tag = f"truth_r{regime}_s{seed}_mc{cfg.mc_size}_T{cfg.T:g}"
            out = request.config.cache.mkdir(tag)
            cache[key] = load_or_compute_truth(cfg, out)
        return cfg, cache[key]

    return get
