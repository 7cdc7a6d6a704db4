import pytest

from harvest_mcam import build_grid, example_model, solve
from harvest_mcam.chain import build_kernel


class Solved:
    def __init__(self, number, h=0.005, upper=2.0):
        self.model = example_model(number)
        self.grid = build_grid(self.model.lam, upper, h)
        self.kernel = build_kernel(self.model, self.grid)
        self.V, self.policy, self.report = solve(self.model, self.grid, self.kernel, tol=1e-6)


@pytest.fixture(scope="session")
def solved():
    cache = {}

    def get(number, h=0.005):
        key = (number, h)
        if key not in cache:
            cache[key] = Solved(number, h)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def ex1(solved):
    return solved(1)


@pytest.fixture(scope="session")
def ex2(solved):
    return solved(2)


@pytest.fixture(scope="session")
def ex3(solved):
    return solved(3)
