import pytest
from tests.fixtures import fixture_config, fixture_grid, fixture_network, fixture_series


# Networks
@pytest.fixture
def triangle_network():
    return fixture_network.triangle_network()


@pytest.fixture
def path_network():
    return fixture_network.path_network()


@pytest.fixture
def star_network():
    return fixture_network.star_network()


@pytest.fixture
def six_bus_network():
    return fixture_network.six_bus_network()


@pytest.fixture
def two_bus_network():
    return fixture_network.two_bus_network()


# Grids
@pytest.fixture
def two_bus_grid(two_bus_network):
    return fixture_grid.two_bus_grid(two_bus_network)


@pytest.fixture
def triangle_grid(triangle_network):
    return fixture_grid.triangle_grid(triangle_network)


# Series
@pytest.fixture
def calm_weather(triangle_network):
    return fixture_series.calm_weather(triangle_network)


@pytest.fixture
def triangle_series(triangle_network):
    hours = 24 * 12
    return (fixture_series.random_weather(triangle_network, hours),
            fixture_series.seasonal_ratings(triangle_network, hours))


# Config
@pytest.fixture
def desk_config_document(tmp_path):
    return fixture_config.desk_config_document(tmp_path / 'runs')


@pytest.fixture
def desk_config_path(tmp_path, desk_config_document):
    return fixture_config.write_config(tmp_path, desk_config_document)
