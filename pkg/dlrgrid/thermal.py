"""
Steady-state conductor heat balance, static ratings and synthetic weather.

The rating of a line is the current at which the conductor sits exactly at its
maximum temperature:

    q_convection + q_radiation - q_solar = I^2 R(T_max)

- forced convection with wind (single low-Reynolds correlation with a wind attack
  angle factor), floored by natural convection
- radiation from the conductor surface (Stefan-Boltzmann, emissivity)
- solar heat gain on the projected area (absorptivity)

Air properties are held constant; altitude and film-temperature corrections are
not modelled.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg

from dlrgrid import constants
from dlrgrid.exceptions import MissingData, NoCoolingMargin
from dlrgrid.netgraph import BusNetwork, distance_matrix_km, line_bearing_deg
from dlrgrid.schema import ValidationError

logger = logging.getLogger(__name__)

AIR_DENSITY = 1.029           # kg/m^3
AIR_VISCOSITY = 1.96e-5       # Pa s
AIR_CONDUCTIVITY = 0.0284     # W/(m C)
RADIATION_COEFFICIENT = 17.8  # W/(m^2) per ((K/100)^4), SI form with diameter in m


@dataclass(frozen=True)
class ConductorSpec:
    name: str
    resistance_ohm_per_km: float
    diameter_m: float
    emissivity: float
    absorptivity: float
    max_conductor_temp_c: float
    voltage_kv: float

    def __post_init__(self):
        for attribute in ('resistance_ohm_per_km', 'diameter_m', 'emissivity', 'absorptivity',
                          'max_conductor_temp_c', 'voltage_kv'):
            if not getattr(self, attribute) > 0:
                raise ValidationError(f'Invalid conductor {self.name}. "{attribute}" must be positive')
        if self.emissivity > 1 or self.absorptivity > 1:
            raise ValidationError(f'Invalid conductor {self.name}. Emissivity and absorptivity must not exceed 1')


CONDUCTOR_LIBRARY = {
    'linnet': ConductorSpec('linnet', 0.1990, 0.0183, 0.8, 0.8, 75.0, 138.0),
    'hawk': ConductorSpec('hawk', 0.1404, 0.0218, 0.8, 0.8, 75.0, 230.0),
    'drake': ConductorSpec('drake', 0.0869, 0.0281, 0.8, 0.8, 75.0, 230.0),
    'cardinal': ConductorSpec('cardinal', 0.0720, 0.0304, 0.8, 0.8, 75.0, 345.0),
}


@dataclass(frozen=True)
class LineWeather:
    temperature_c: float
    wind_speed_mps: float
    attack_angle_deg: float
    solar_wm2: float


@dataclass(frozen=True)
class SlrAssumptions:
    temperature_c: float = 40.0
    wind_speed_mps: float = 0.6
    attack_angle_deg: float = 90.0
    solar_wm2: float = 1000.0

    def as_weather(self):
        return LineWeather(self.temperature_c, self.wind_speed_mps, self.attack_angle_deg, self.solar_wm2)


def attack_angle(wind_dir_deg, bearing_deg):
    """Acute angle in degrees between the wind direction and the line axis."""
    delta = np.abs((np.asarray(wind_dir_deg) - bearing_deg) % 180.0)
    return np.minimum(delta, 180.0 - delta)


def angle_factor(attack_angle_deg):
    phi = np.radians(attack_angle_deg)
    return 1.194 - np.cos(phi) + 0.194 * np.cos(2 * phi) + 0.368 * np.sin(2 * phi)


def heat_balance_terms(temperature_c, wind_speed_mps, attack_angle_deg, solar_wm2, conductor: ConductorSpec):
    """Convective, radiative and solar terms in W/m at the maximum conductor temperature."""
    diameter = conductor.diameter_m
    delta_t = np.maximum(conductor.max_conductor_temp_c - np.asarray(temperature_c, dtype=float), 0.0)
    reynolds = diameter * AIR_DENSITY * np.maximum(wind_speed_mps, 0.0) / AIR_VISCOSITY
    forced = angle_factor(attack_angle_deg) * (1.01 + 1.35 * reynolds ** 0.52) * AIR_CONDUCTIVITY * delta_t
    natural = 3.645 * AIR_DENSITY ** 0.5 * diameter ** 0.75 * delta_t ** 1.25
    convection = np.maximum(forced, natural)
    t_surface = (conductor.max_conductor_temp_c + 273.0) / 100.0
    t_ambient = (np.asarray(temperature_c, dtype=float) + 273.0) / 100.0
    radiation = RADIATION_COEFFICIENT * diameter * conductor.emissivity * (t_surface ** 4 - t_ambient ** 4)
    solar = conductor.absorptivity * np.maximum(solar_wm2, 0.0) * diameter
    return convection, radiation, solar


def current_to_mw(current_a, voltage_kv):
    return math.sqrt(3.0) * voltage_kv * current_a / 1000.0


def _ratings(temperature_c, wind_speed_mps, attack_angle_deg, solar_wm2, conductor):
    convection, radiation, solar = heat_balance_terms(temperature_c, wind_speed_mps, attack_angle_deg,
                                                      solar_wm2, conductor)
    margin = convection + radiation - solar
    resistance = conductor.resistance_ohm_per_km / 1000.0
    current = np.sqrt(np.maximum(margin, 0.0) / resistance)
    return current_to_mw(current, conductor.voltage_kv), margin


def ampacity(weather: LineWeather, conductor: ConductorSpec, floor_mw=None):
    """Rating in MW of one conductor under one weather state.

    Raises :class:`NoCoolingMargin` when cooling cannot offset solar heating, unless
    ``floor_mw`` is given, in which case the floor is returned.
    """
    rating, margin = _ratings(weather.temperature_c, weather.wind_speed_mps, weather.attack_angle_deg,
                              weather.solar_wm2, conductor)
    if not margin > 0:
        if floor_mw is None:
            raise NoCoolingMargin(float(margin))
        logger.warning("No cooling margin for conductor %s, using floor %.1f MW", conductor.name, floor_mw)
        return float(floor_mw)
    return float(rating)


def static_rating(conductor: ConductorSpec, assumptions: SlrAssumptions = SlrAssumptions()):
    return ampacity(assumptions.as_weather(), conductor)


def default_conductor_rating(conductor_ref):
    """Static rating of a library conductor; unknown references rank lowest."""
    conductor = CONDUCTOR_LIBRARY.get(conductor_ref)
    if conductor is None:
        return 0.0
    return static_rating(conductor)


def resolve_conductors(network: BusNetwork, conductors=None):
    library = dict(CONDUCTOR_LIBRARY)
    library.update(conductors or {})
    resolved = {}
    for line in network.lines:
        if line.conductor_ref not in library:
            raise ValidationError(f'Invalid line {line.line_id}. Unknown conductor "{line.conductor_ref}"')
        resolved[line.line_id] = library[line.conductor_ref]
    return resolved


@dataclass(frozen=True)
class WeatherSeries:
    """Hourly weather per bus; arrays are shaped (hours, buses)."""
    bus_ids: tuple
    timestamps: pd.DatetimeIndex
    temperature_c: np.ndarray
    wind_speed_mps: np.ndarray
    wind_direction_deg: np.ndarray
    solar_wm2: np.ndarray

    def __post_init__(self):
        shape = (len(self.timestamps), len(self.bus_ids))
        for name in ('temperature_c', 'wind_speed_mps', 'wind_direction_deg', 'solar_wm2'):
            values = getattr(self, name)
            if values.shape != shape:
                raise ValidationError(f'Invalid weather series. "{name}" has shape {values.shape}, expected {shape}')
        if len(self.timestamps) > 1 and not (np.diff(self.timestamps.asi8) == 3600 * 10 ** 9).all():
            raise ValidationError('Invalid weather series. Timestamps must be hourly without gaps')
        if (self.wind_speed_mps < 0).any() or (self.solar_wm2 < 0).any():
            raise ValidationError('Invalid weather series. Wind speed and solar radiation must be non-negative')

    @property
    def hours(self):
        return len(self.timestamps)

    def to_frame(self):
        hours, buses = self.temperature_c.shape
        return pd.DataFrame({
            'bus_id': np.tile(np.asarray(self.bus_ids), hours),
            'timestamp': np.repeat(self.timestamps.strftime('%Y-%m-%d %H:%M'), buses),
            'temp_c': self.temperature_c.reshape(-1),
            'wind_mps': self.wind_speed_mps.reshape(-1),
            'wind_dir_deg': self.wind_direction_deg.reshape(-1),
            'solar_wm2': self.solar_wm2.reshape(-1),
        }, columns=constants.weather_csv_columns)

    @classmethod
    def from_frame(cls, frame, bus_ids=None):
        frame = frame.copy()
        frame['timestamp'] = pd.to_datetime(frame['timestamp'])
        bus_ids = tuple(sorted(frame['bus_id'].unique())) if bus_ids is None else tuple(bus_ids)
        timestamps = pd.DatetimeIndex(sorted(frame['timestamp'].unique()))
        arrays = {}
        for column in ('temp_c', 'wind_mps', 'wind_dir_deg', 'solar_wm2'):
            table = frame.pivot(index='timestamp', columns='bus_id', values=column)
            table = table.reindex(index=timestamps, columns=list(bus_ids))
            if table.isna().any().any():
                hour, bus = next((h, b) for h, b in zip(*np.nonzero(table.isna().to_numpy())))
                raise MissingData('weather', f'bus {bus_ids[bus]}', str(timestamps[hour]))
            arrays[column] = table.to_numpy(dtype=float)
        return cls(bus_ids, timestamps, arrays['temp_c'], arrays['wind_mps'], arrays['wind_dir_deg'],
                   arrays['solar_wm2'])


@dataclass(frozen=True)
class RatingSeries:
    """Hourly line ratings (hours, lines) and one static rating per line."""
    line_ids: tuple
    timestamps: pd.DatetimeIndex
    rating_mw: np.ndarray
    slr_mw: np.ndarray
    floored: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.rating_mw).all() and (self.rating_mw > 0).all()):
            raise ValidationError('Invalid rating series. Ratings must be positive and finite')

    def to_frame(self):
        hours, lines = self.rating_mw.shape
        return pd.DataFrame({
            'line_id': np.tile(np.asarray(self.line_ids), hours),
            'timestamp': np.repeat(self.timestamps.strftime('%Y-%m-%d %H:%M'), lines),
            'rating_mw': self.rating_mw.reshape(-1),
            'floored': self.floored.reshape(-1).astype(int),
        }, columns=constants.dlr_csv_columns + ['floored'])

    @classmethod
    def from_frame(cls, frame, slr_mw, line_ids=None):
        frame = frame.copy()
        frame['timestamp'] = pd.to_datetime(frame['timestamp'])
        line_ids = tuple(sorted(frame['line_id'].unique())) if line_ids is None else tuple(line_ids)
        timestamps = pd.DatetimeIndex(sorted(frame['timestamp'].unique()))
        table = frame.pivot(index='timestamp', columns='line_id', values='rating_mw')
        table = table.reindex(index=timestamps, columns=list(line_ids))
        if table.isna().any().any():
            hour, line = next(zip(*np.nonzero(table.isna().to_numpy())))
            raise MissingData('rating', f'line {line_ids[line]}', str(timestamps[hour]))
        if 'floored' in frame.columns:
            floored = frame.pivot(index='timestamp', columns='line_id', values='floored')
            floored = floored.reindex(index=timestamps, columns=list(line_ids)).to_numpy() > 0
        else:
            floored = np.zeros(table.shape, dtype=bool)
        return cls(line_ids, timestamps, table.to_numpy(dtype=float), np.asarray(slr_mw, dtype=float), floored)


def line_weather(network: BusNetwork, weather: WeatherSeries):
    """Per-line weather as the mean of both endpoints; returns (temp, wind, attack, solar) arrays."""
    columns = {bus_id: i for i, bus_id in enumerate(weather.bus_ids)}
    temp, wind, attack, solar = [], [], [], []
    for line in network.lines:
        a, b = (columns[bus_id] for bus_id in line.endpoints)
        temp.append((weather.temperature_c[:, a] + weather.temperature_c[:, b]) / 2)
        wind.append((weather.wind_speed_mps[:, a] + weather.wind_speed_mps[:, b]) / 2)
        solar.append((weather.solar_wm2[:, a] + weather.solar_wm2[:, b]) / 2)
        rad = np.radians(weather.wind_direction_deg[:, [a, b]])
        direction = np.degrees(np.arctan2(np.sin(rad).sum(axis=1), np.cos(rad).sum(axis=1))) % 360.0
        attack.append(attack_angle(direction, line_bearing_deg(network, line)))
    return tuple(np.column_stack(values) for values in (temp, wind, attack, solar))


def rate_lines(network: BusNetwork, weather: WeatherSeries, conductors=None, floor_fraction=0.1,
               slr_assumptions: SlrAssumptions = SlrAssumptions()):
    conductors = resolve_conductors(network, conductors)
    temp, wind, attack, solar = line_weather(network, weather)
    ratings = np.empty_like(temp)
    slr = np.empty(len(network.lines))
    floored = np.zeros_like(temp, dtype=bool)
    for j, line in enumerate(network.lines):
        conductor = conductors[line.line_id]
        slr[j] = static_rating(conductor, slr_assumptions)
        rating, margin = _ratings(temp[:, j], wind[:, j], attack[:, j], solar[:, j], conductor)
        # ratings below the floor are raised to it, margin or not
        floor = floor_fraction * slr[j]
        below = ~(margin > 0) | (rating < floor)
        rating[below] = floor
        floored[:, j] = below
        ratings[:, j] = rating
    if floored.any():
        logger.warning("Rating floor used for %d line-hours", int(floored.sum()))
    return RatingSeries(tuple(network.line_ids), weather.timestamps, ratings, slr, floored)


def static_ratings(network: BusNetwork, conductors=None, slr_assumptions: SlrAssumptions = SlrAssumptions()):
    conductors = resolve_conductors(network, conductors)
    return np.array([static_rating(conductors[line.line_id], slr_assumptions) for line in network.lines])


@dataclass(frozen=True)
class WeatherSettings:
    length_scale_km: float = 150.0
    persistence: float = 0.9
    mean_temp_c: float = 18.0
    seasonal_temp_amplitude_c: float = 10.0
    diurnal_temp_amplitude_c: float = 5.0
    temp_sigma_c: float = 3.0
    mean_wind_mps: float = 4.0
    diurnal_wind_amplitude_mps: float = 1.0
    wind_sigma_mps: float = 2.0
    prevailing_wind_deg: float = 180.0
    wind_dir_sigma_deg: float = 60.0
    peak_solar_wm2: float = 900.0
    solar_sigma: float = 0.25
    daylight_start_hour: int = 6
    daylight_end_hour: int = 18


def spatial_correlation(distance_km, length_scale_km):
    return np.exp(-np.asarray(distance_km) / length_scale_km)


def correlated_residuals(distance_km, hours, length_scale_km, persistence, rng):
    """Stationary AR(1) residuals whose cross-bus correlation is exp(-distance / length scale)."""
    correlation = spatial_correlation(distance_km, length_scale_km)
    eigenvalues, eigenvectors = linalg.eigh(correlation)
    root = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    buses = correlation.shape[0]
    shocks = rng.standard_normal((hours, buses)) @ root.T
    innovation = math.sqrt(1.0 - persistence ** 2)
    residuals = np.empty((hours, buses))
    residuals[0] = shocks[0]
    for t in range(1, hours):
        residuals[t] = persistence * residuals[t - 1] + innovation * shocks[t]
    return residuals


def solar_template(timestamps: pd.DatetimeIndex, settings: WeatherSettings = WeatherSettings()):
    hour = timestamps.hour.to_numpy()
    season = np.cos(2 * np.pi * (timestamps.dayofyear.to_numpy() - 172) / 365.25)
    span = settings.daylight_end_hour - settings.daylight_start_hour
    daylight = (hour >= settings.daylight_start_hour) & (hour < settings.daylight_end_hour)
    shape = np.sin(np.pi * (hour - settings.daylight_start_hour + 0.5) / span)
    return np.where(daylight, settings.peak_solar_wm2 * (0.75 + 0.25 * season) * shape, 0.0)


def simulate_weather(network: BusNetwork, start_date, hours, seed, settings: WeatherSettings = WeatherSettings()):
    if hours < 24:
        raise ValidationError(f'Invalid weather horizon. "hours" must be at least 24, but was {hours}')
    rng = np.random.default_rng(seed)
    timestamps = pd.date_range(pd.Timestamp(start_date), periods=hours, freq='h')
    hour = timestamps.hour.to_numpy()[:, None]
    season = np.cos(2 * np.pi * (timestamps.dayofyear.to_numpy() - 200) / 365.25)[:, None]
    latitude = network.coordinates()[:, 0][None, :]
    distance = distance_matrix_km(network)

    def residuals():
        return correlated_residuals(distance, hours, settings.length_scale_km, settings.persistence, rng)

    temperature = (settings.mean_temp_c + settings.seasonal_temp_amplitude_c * season
                   + settings.diurnal_temp_amplitude_c * np.cos(2 * np.pi * (hour - 15) / 24)
                   - 0.5 * (latitude - latitude.mean())
                   + settings.temp_sigma_c * residuals())
    wind = np.maximum(settings.mean_wind_mps
                      + settings.diurnal_wind_amplitude_mps * np.cos(2 * np.pi * (hour - 14) / 24)
                      + settings.wind_sigma_mps * residuals(), 0.0)
    direction = (settings.prevailing_wind_deg + settings.wind_dir_sigma_deg * residuals()) % 360.0
    solar = solar_template(timestamps, settings)[:, None] * np.clip(1.0 + settings.solar_sigma * residuals(),
                                                                    0.0, None)
    logger.info("Simulated %d hours of weather for %d buses (seed %s)", hours, len(network.buses), seed)
    return WeatherSeries(tuple(network.bus_ids), timestamps, temperature, wind, direction, solar)
