import math
import time

import numpy as np
import pytest

from entcurves.analysis import ShapeSpec
from entcurves.builder import BuildConfig, Schedule, run_schedule
from entcurves.geometry import Lattice, TargetCurrent

WORKERS = 8

TORUS_TARGETS = {
    "diag": np.diag([1.0, 0.0]).astype(complex),
    "half_identity": np.eye(2, dtype=complex) / 2,
    "rank_one": np.outer([1, 1j], np.conj([1, 1j])) / 2,
}

SHAPE = ShapeSpec(Lattice.square(), (2.0 + 0j,), (0.5,), (0.25 + 0.25j,), (0.5,))
FIBER_SHAPE = ShapeSpec(Lattice.square(), (2.0 + 0j, -1.0 + 0.5j), (0.5, 0.25), (0.25 + 0.25j,), (0.25,))


class Build:
    def __init__(self, run_dir, results, seconds):
        self.run_dir = run_dir
        self.results = results
        self.seconds = seconds

    @property
    def curve(self):
        return self.results[-1][0]

    @property
    def reports(self):
        return [r for _, r in self.results]


def build(schedule, depth, run_dir):
    start = time.perf_counter()
    results = run_schedule(schedule, depth, BuildConfig(workers=WORKERS), run_dir, resume=False)
    return Build(run_dir, results, time.perf_counter() - start)


@pytest.fixture(scope="session")
def torus_builds(tmp_path_factory):
    root = tmp_path_factory.mktemp("torus")
    return {name: build(Schedule.round_robin([TargetCurrent(H)], 2), 2, root / name)
            for name, H in TORUS_TARGETS.items()}


@pytest.fixture(scope="session")
def shape_build(tmp_path_factory):
    return build(Schedule.round_robin([SHAPE], 2), 2, tmp_path_factory.mktemp("shape") / "run")


@pytest.fixture(scope="session")
def fiber_build(tmp_path_factory):
    return build(Schedule.round_robin([FIBER_SHAPE], 1), 1, tmp_path_factory.mktemp("fiber") / "run")


def check(report, name):
    for c in report["checks"]:
        if c["name"] == name:
            return c
    raise KeyError(name)


def margin_ok(c):
    """A check passes with margin larger than its numerical error."""
    margin = (c["value"] - c["threshold"]) if c["sense"] == ">=" else (c["threshold"] - c["value"])
    return margin > c["error"] or (c["error"] == 0 and margin >= 0 and c["sense"] == ">=")


def two_pow(t):
    return math.ldexp(1.0, -t)


ACCEPTANCE: dict[int, str] = {}


def record(number, passed, detail):
    """Store and print the one-line verdict of an acceptance criterion."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
