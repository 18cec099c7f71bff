import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def recipe_run(tmp_path_factory):
    """Run a shipped recipe (sweep included) once per session and cache the
    output directory, so the trend and acceptance tests share the work."""
    from dforge import experiment

    cache = {}

    def get(name, seeds=(0, 1, 2, 3, 4)):
        key = (name, tuple(seeds))
        if key not in cache:
            out = tmp_path_factory.mktemp(name)
            cfg = experiment.load_config(name)
            rc = experiment.run(cfg, out, seeds=list(seeds), jobs=1, stream=open(os.devnull, "w"))
            assert rc == 0, (out / "errors.json").read_text()
            cache[key] = out
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance_log.LINES):
            terminalreporter.write_line(line)
