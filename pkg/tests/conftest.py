import pytest

from vlaps.harness import default_library
from vlaps.world import BlockNavEnv, make_blocknav_env


@pytest.fixture(scope="session")
def env_and_tasks():
    return make_blocknav_env(10.0, 2)


@pytest.fixture(scope="session")
def env(env_and_tasks):
    return env_and_tasks[0]


@pytest.fixture(scope="session")
def tasks(env_and_tasks):
    return env_and_tasks[1]


@pytest.fixture(scope="session")
def model(env):
    # planning-side clone with identical dynamics
    return BlockNavEnv.from_json(env.to_json())


@pytest.fixture(scope="session")
def library(env, tasks):
    return default_library(env, tasks, horizon=4, size=64, seed=7)
