import numpy as np
import pytest

from pram_forge.scenarios import SCENARIO_I, SCENARIO_II, SCENARIO_IV


@pytest.fixture
def p_scenario_i():
    return np.array(SCENARIO_I)


@pytest.fixture
def p_scenario_ii():
    return np.array(SCENARIO_II)


@pytest.fixture
def p_scenario_iv():
    return np.array(SCENARIO_IV)
