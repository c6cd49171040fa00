import numpy as np
import pytest

from src.schemas.Scenario_Schemas import ResultTable, Scenario

SCENARIO_TEXT = """# displacement MLE, Fock probe |3>
kind = mle-sim
m = 3
N_c = 1.0
M = 500
trials = 3000
seed = 42
"""


@pytest.fixture(scope="module")
def scenario_text():
    return SCENARIO_TEXT


@pytest.fixture()
def scenario_file(tmp_path, scenario_text):
    path = tmp_path / "scenario.txt"
    path.write_text(scenario_text, encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def moments_scenario():
    return Scenario(kind="moments", m=2, N_c=0.5)


@pytest.fixture(scope="module")
def small_mle_scenario():
    return Scenario(kind="mle-sim", m=1, N_c=0.5, M=200, trials=40, seed=7)


@pytest.fixture()
def fake_table():
    return ResultTable(
        name="fake",
        columns=["m", "N_c", "mse"],
        rows=[[3, 0.1, 1.0 / 3.0], [3, 1.0, 2.857142857142857e-4]],
        metadata={"version": "0.1.0", "seed": "42"},
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
