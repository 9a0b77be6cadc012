import numpy as np
import pandas as pd

from dlrgrid.thermal import RatingSeries, WeatherSeries


def hourly_index(hours, start='2021-03-01'):
    return pd.date_range(start, periods=hours, freq='h')


def calm_weather(network, hours=24, temperature_c=25.0, wind_speed_mps=3.0, start='2021-03-01'):
    shape = (hours, len(network.buses))
    return WeatherSeries(
        tuple(network.bus_ids),
        hourly_index(hours, start),
        np.full(shape, temperature_c),
        np.full(shape, wind_speed_mps),
        np.full(shape, 180.0),
        np.full(shape, 500.0),
    )


def seasonal_ratings(network, hours, start='2021-03-01', seed=0):
    """Diurnal ratings with noise, (hours, lines), always well above zero."""
    rng = np.random.default_rng(seed)
    hour = np.arange(hours)[:, None]
    base = 200.0 + 40.0 * np.sin(2 * np.pi * hour / 24) + 10.0 * np.arange(len(network.lines))[None, :]
    ratings = base + rng.normal(0.0, 5.0, size=base.shape)
    lines = len(network.lines)
    return RatingSeries(tuple(network.line_ids), hourly_index(hours, start), ratings, np.full(lines, 150.0),
                        np.zeros((hours, lines), dtype=bool))


def random_weather(network, hours, start='2021-03-01', seed=0):
    rng = np.random.default_rng(seed)
    shape = (hours, len(network.buses))
    return WeatherSeries(
        tuple(network.bus_ids),
        hourly_index(hours, start),
        20.0 + rng.normal(0.0, 3.0, size=shape),
        np.abs(rng.normal(4.0, 1.5, size=shape)),
        rng.uniform(0.0, 360.0, size=shape),
        np.clip(rng.normal(400.0, 200.0, size=shape), 0.0, None),
    )


def constant_ratings(network, hours, rating_mw=100.0, start='2021-03-01'):
    lines = len(network.lines)
    return RatingSeries(tuple(network.line_ids), hourly_index(hours, start), np.full((hours, lines), rating_mw),
                        np.full(lines, rating_mw), np.zeros((hours, lines), dtype=bool))
