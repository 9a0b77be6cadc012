"""
Experiment and grid configuration documents.

Precedence is built-in defaults < JSON file < command-line overrides. Relative
paths in a file are resolved against the directory of that file.
"""
import json
import logging
from pathlib import Path

from dlrgrid import constants
from dlrgrid.schema import Schema, ValidationError, validate_object
from dlrgrid.schema_format import parse_ratio

logger = logging.getLogger(__name__)

PACKAGE_DATA = Path(__file__).resolve().parent / 'data'


class SlrAssumptionsObject(Schema):
    properties = {
        'temperature_c': {'type': 'number', 'default': 40.0},
        'wind_speed_mps': {'type': 'number', 'format': 'non-negative', 'default': 0.6},
        'attack_angle_deg': {'type': 'number', 'default': 90.0},
        'solar_wm2': {'type': 'number', 'format': 'non-negative', 'default': 1000.0},
    }


class WeatherObject(Schema):
    properties = {
        'length_scale_km': {'type': 'number', 'format': 'positive', 'default': 150.0},
        'persistence': {'type': 'number', 'format': 'probability', 'default': 0.9},
        'mean_temp_c': {'type': 'number', 'default': 18.0},
        'seasonal_temp_amplitude_c': {'type': 'number', 'format': 'non-negative', 'default': 10.0},
        'diurnal_temp_amplitude_c': {'type': 'number', 'format': 'non-negative', 'default': 5.0},
        'temp_sigma_c': {'type': 'number', 'format': 'non-negative', 'default': 3.0},
        'mean_wind_mps': {'type': 'number', 'format': 'non-negative', 'default': 4.0},
        'wind_sigma_mps': {'type': 'number', 'format': 'non-negative', 'default': 2.0},
        'peak_solar_wm2': {'type': 'number', 'format': 'non-negative', 'default': 900.0},
    }


class SolverObject(Schema):
    properties = {
        'tol': {'type': 'number', 'format': 'positive', 'default': 1e-6},
        'max_iter': {'type': 'integer', 'format': 'positive', 'default': 20000},
    }


class ExperimentConfig(Schema):
    properties = {
        'network': {'type': 'string', 'default': 'bundled:six_bus'},
        'grid': {'type': 'string', 'nullable': True, 'default': None},
        'workdir': {'type': 'string', 'default': 'runs'},
        'seed': {'type': 'integer', 'format': 'non-negative', 'default': 1},
        'start_date': {'type': 'string', 'format': 'date', 'default': '2021-01-01'},
        'horizon_days': {'type': 'integer', 'format': 'positive', 'default': 365},
        'hops': {'type': 'integer', 'format': 'positive', 'default': 5},
        'hidden_size': {'type': 'integer', 'format': 'positive', 'default': 128},
        'quantile_levels': {
            'type': 'array',
            'format': 'levels',
            'items': {'type': 'number', 'format': 'probability'},
            'default': list(constants.default_quantile_levels),
        },
        'epochs': {'type': 'integer', 'format': 'positive', 'default': 60},
        'batch_size': {'type': 'integer', 'format': 'positive', 'default': 64},
        'learning_rate': {'type': 'number', 'format': 'non-negative', 'default': 0.001},
        'weight_decay': {'type': 'number', 'format': 'non-negative', 'default': 1e-4},
        'split_ratio': {'type': 'string', 'format': 'ratio', 'default': '4:1'},
        'validation_ratio': {'type': 'string', 'format': 'ratio', 'nullable': True, 'default': None},
        'window_hours': {'type': 'integer', 'format': 'positive', 'default': 168},
        'operation_level': {'type': 'number', 'format': 'probability', 'default': 0.05},
        'per_line_heads': {'type': 'boolean', 'default': False},
        'identity_adjacency': {'type': 'boolean', 'default': False},
        'slr_assumptions': SlrAssumptionsObject,
        'load_forecast_bias': {'type': 'number', 'default': 0.03},
        'load_forecast_noise': {'type': 'number', 'format': 'non-negative', 'default': 0.02},
        'weather': WeatherObject,
        'rating_floor_fraction': {'type': 'number', 'format': 'probability', 'default': 0.1},
        'solver': SolverObject,
        'cvar_beta': {'type': 'number', 'format': 'probability', 'default': 0.1},
        'hop_candidates': {
            'type': 'array',
            'items': {'type': 'integer', 'format': 'positive'},
            'default': [1, 2, 3, 4, 5],
        },
    }

    @property
    def split(self):
        return parse_ratio(self['split_ratio'])

    @property
    def validation_split(self):
        return None if self['validation_ratio'] is None else parse_ratio(self['validation_ratio'])

    @property
    def workdir(self):
        return Path(self['workdir'])

    @property
    def network_dir(self):
        return resolve_network(self['network'])

    @property
    def grid_path(self):
        return Path(self['grid']) if self['grid'] else self.network_dir / 'grid.json'


class ConductorObject(Schema):
    properties = {
        'resistance_ohm_per_km': {'type': 'number', 'format': 'positive'},
        'diameter_m': {'type': 'number', 'format': 'positive'},
        'emissivity': {'type': 'number', 'format': 'probability'},
        'absorptivity': {'type': 'number', 'format': 'probability'},
        'max_conductor_temp_c': {'type': 'number', 'format': 'positive'},
        'voltage_kv': {'type': 'number', 'format': 'positive'},
    }
    required = constants.conductor_object_list


class GeneratorObject(Schema):
    properties = {
        'gen_id': {'type': 'integer'},
        'bus': {'type': 'integer'},
        'kind': {'type': 'string', 'enum': constants.generator_kind_list},
        'c1': {'type': 'number', 'format': 'non-negative', 'default': 0.0},
        'c2': {'type': 'number', 'format': 'non-negative', 'default': 0.0},
        'pmin': {'type': 'number', 'format': 'non-negative', 'default': 0.0},
        'pmax': {'type': 'number', 'format': 'positive'},
        'ramp_down': {'type': 'number', 'nullable': True, 'default': None},
        'ramp_up': {'type': 'number', 'nullable': True, 'default': None},
        'c_plus': {'type': 'number', 'format': 'non-negative', 'nullable': True, 'default': None},
        'c_minus': {'type': 'number', 'format': 'non-negative', 'nullable': True, 'default': None},
        'capacity_factor': {'type': 'number', 'format': 'probability', 'nullable': True, 'default': None},
    }
    required = ['gen_id', 'bus', 'kind', 'pmax']


class LoadObject(Schema):
    properties = {
        'bus': {'type': 'integer'},
        'peak_mw': {'type': 'number', 'format': 'non-negative'},
    }
    required = constants.load_object_list


class GridObject(Schema):
    properties = {
        'base_mva': {'type': 'number', 'format': 'positive', 'default': 100.0},
        'reference_bus': {'type': 'integer'},
        'conductors': {'type': 'object', 'default': {}},
        'generators': GeneratorObject.array(),
        'loads': LoadObject.array(),
        'angle_limits_rad': {'type': 'number', 'format': 'positive', 'nullable': True, 'default': None},
    }
    required = ['reference_bus', 'generators', 'loads']


def resolve_network(value):
    if value.startswith(constants.bundled_prefix):
        name = value[len(constants.bundled_prefix):]
        path = PACKAGE_DATA / name
        if not path.is_dir():
            raise ValidationError(f'Invalid network "{value}". No bundled network named "{name}"')
        return path
    return Path(value)


def validate_experiment_object(obj):
    validate_object(obj, constants.experiment_object_list, 'experiment')


def validate_grid_object(obj):
    validate_object(obj, constants.grid_object_list, 'grid', required=['reference_bus', 'generators', 'loads'])
    for generator in obj['generators']:
        validate_generator_object(generator)
    for name, conductor in obj.get('conductors', {}).items():
        validate_object(conductor, constants.conductor_object_list, f'conductor {name}',
                        required=constants.conductor_object_list)


def validate_generator_object(obj):
    validate_object(obj, constants.generator_object_list, 'generator', required=['gen_id', 'bus', 'kind', 'pmax'])


def _resolve_paths(document, base_dir):
    for key in ('network', 'grid', 'workdir'):
        value = document.get(key)
        if not value or value.startswith(constants.bundled_prefix) or Path(value).is_absolute():
            continue
        document[key] = str((base_dir / value).resolve())
    return document


def load_config(path=None, overrides=None):
    """Experiment config from defaults, an optional JSON file and CLI overrides."""
    document = {}
    if path is not None:
        path = Path(path)
        document = json.loads(path.read_text())
        validate_experiment_object(document)
        document = _resolve_paths(document, path.resolve().parent)
    for key, value in (overrides or {}).items():
        if value is not None:
            document[key] = value
    validate_experiment_object(document)
    config = ExperimentConfig(**document)
    if config['operation_level'] not in config['quantile_levels']:
        raise ValidationError(f'Invalid experiment object. "operation_level" {config["operation_level"]} '
                              f'must be one of the quantile levels')
    logger.debug("Loaded experiment config %s", dict(config))
    return config


def load_grid_document(path):
    document = json.loads(Path(path).read_text())
    validate_grid_object(document)
    return GridObject(**document)
