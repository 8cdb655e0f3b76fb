import pytest

from sentisim.encoders import data_path, load_narratives, load_templates
from sentisim.population import load_frame, synthesize
from sentisim.profiles import load_schema
from sentisim.scenarios import load_scenarios


@pytest.fixture(scope="session")
def schema():
    return load_schema(data_path("demo_schema.yaml"))


@pytest.fixture(scope="session")
def frame():
    return load_frame(data_path("demo_frame.yaml"))


@pytest.fixture(scope="session")
def population(frame, schema):
    return synthesize(frame, schema, seed=7)


@pytest.fixture(scope="session")
def profiles(population):
    return population.profiles


@pytest.fixture(scope="session")
def templates():
    return load_templates()


@pytest.fixture(scope="session")
def library():
    return load_narratives(data_path("narratives.yaml"))


@pytest.fixture(scope="session")
def scenarios():
    return load_scenarios(data_path("scenarios.yaml"))
