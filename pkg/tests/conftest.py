from dataclasses import dataclass

import numpy as np
import pytest

from decentopt.graph import random_connected
from decentopt.mixing import build_pair
from decentopt.objectives import (
    centralized_reference,
    gaussian_sensing,
    huber_stack,
    huber_start,
    least_squares_stack,
    logistic_data,
    logistic_stack,
    normalize_unit_lipschitz,
)
from decentopt.rng import XorShift64Star


@dataclass
class Instance:
    family: str
    graph: object
    pair: object
    obj: object
    data: object
    x0: np.ndarray
    x_star: np.ndarray

    @property
    def alpha(self):
        return 0.9 * self.pair.step_bound(self.obj.Lf)


def make_instance(family, seed, n=None, m=None, p=None, r=0.5, strategy="metropolis", x0_scale=1.0):
    """Seeded desk-scale problem: graph, mixing pair, objective, start and optimum."""
    rng = XorShift64Star(1000 + seed)
    n = n or 3 + rng.randbelow(8)  # 3..10
    if r * n * (n - 1) / 2 < n - 1:
        r = 1.0
    g = random_connected(n, r, seed)
    pair = build_pair(g, strategy)
    if family == "logistic":
        p = p or 3
        data, _ = logistic_data(n, m or 10, p, seed)
        obj = logistic_stack(data)
        x_star = centralized_reference(obj)
        x0 = rng.normal_array((n, p)) * x0_scale
    else:
        p = p or 3
        data, _ = gaussian_sensing(n, m or 2, p, seed, noise=1.0 if family == "ls" else 0.1)
        data = normalize_unit_lipschitz(data)
        ls = least_squares_stack(data)
        x_star = centralized_reference(ls)
        if family == "ls":
            obj = ls
            x0 = rng.normal_array((n, p)) * x0_scale
        else:
            obj = huber_stack(data, 2.0)
            x_star = centralized_reference(obj, x_init=x_star)
            row, _ = huber_start(data, x_star, 2.0, seed, min_distance=10.0)
            x0 = np.tile(row, (n, 1))
    return Instance(family, g, pair, obj, data, x0, x_star)


@pytest.fixture
def instance():
    return make_instance


def path3_ls(seed=0, p=2):
    """3-agent path graph least squares instance with full-rank stacked data."""
    from decentopt.graph import path_graph

    g = path_graph(3)
    pair = build_pair(g)
    data, _ = gaussian_sensing(3, 2, p, seed)
    obj = least_squares_stack(data)
    return Instance("ls", g, pair, obj, data, np.zeros((3, p)), centralized_reference(obj))


ACCEPTANCE = {}  # criterion number -> (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
