"""Shared fixtures: grids, the default experiment run and an acceptance ledger."""
from __future__ import annotations

import numpy as np
import pytest

from fracseg.experiment import default_config_path, io, load, run
from fracseg.extension_solver import HalfGrid

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def grid200() -> HalfGrid:
    return HalfGrid.uniform(1 / 200)


@pytest.fixture(scope="session")
def grid50() -> HalfGrid:
    return HalfGrid.uniform(1 / 50)


@pytest.fixture(scope="session")
def default_cfg():
    return load(default_config_path())


@pytest.fixture(scope="session")
def default_run(tmp_path_factory, default_cfg):
    """The shipped beta-sweep experiment, run once per session."""
    root = tmp_path_factory.mktemp("default-run")
    return run(default_cfg, root, force=True)


@pytest.fixture(scope="session")
def default_fields(default_run, default_cfg):
    grid = default_cfg.half_grid()
    from fracseg.experiment.run import beta_tag
    out = default_run.path.parent
    return {b: io.load_field(out / "fields" / f"{beta_tag(b)}.bin", grid, default_cfg.system.k)
            for b in default_cfg.betas()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
