import numpy as np
import pytest

from src.numerics.modal_dynamics import classify
from src.numerics.spectral_core import Grid1D, assemble, eigenpairs


@pytest.fixture(scope="session")
def grid():
    return Grid1D(-1.0, 1.0, 63, None, 64)


@pytest.fixture(scope="session")
def system(grid):
    return assemble(grid, 0.5)


@pytest.fixture(scope="session")
def basis(system):
    return eigenpairs(system, 20)


@pytest.fixture(scope="session")
def small_basis(basis):
    return basis.truncated(8)


@pytest.fixture(scope="session")
def undamped(small_basis):
    return classify(0.0, small_basis.lambdas)


@pytest.fixture(scope="session")
def damped(small_basis):
    return classify(1.0, small_basis.lambdas)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_SCENARIO = """\
[scenario]
experiment = {experiment}
seed = 3
output_dir = {out}
T = 2
m = 6

[domain]
a = -1
b = 1
s = 0.5
delta = 1.0

[grid]
n_interior = 31
n_exterior = 32

[control]
region = 1.5 2.5
ansatz_sizes = 2, 4
eps_reg = 1e-8
{extra}
"""


@pytest.fixture
def scenario_text():
    def _text(experiment="spectrum", out="out", extra=""):
        return SMALL_SCENARIO.format(experiment=experiment, out=out, extra=extra)

    return _text


@pytest.fixture
def write_scenario(tmp_path):
    def _write(experiment="spectrum", out=None, extra="", name="scenario.ini"):
        path = tmp_path / name
        out = out or (tmp_path / "out")
        path.write_text(SMALL_SCENARIO.format(experiment=experiment, out=out.as_posix(), extra=extra))
        return path

    return _write
