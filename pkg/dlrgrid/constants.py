import re

bus_csv_columns = ['bus_id', 'lat', 'lon']

line_csv_columns = ['line_id', 'from_bus', 'to_bus', 'susceptance_pu', 'length_km', 'conductor_ref']

weather_csv_columns = ['bus_id', 'timestamp', 'temp_c', 'wind_mps', 'wind_dir_deg', 'solar_wm2']

dlr_csv_columns = ['line_id', 'timestamp', 'rating_mw']

load_csv_columns = ['bus_id', 'timestamp', 'true_mw', 'forecast_mw']

renewable_csv_columns = ['gen_id', 'timestamp', 'available_mw']

forecast_csv_columns = ['line_id', 'hour', 'quantile_level', 'value_mw']

adjacency_csv_columns = ['row', 'col', 'value']

operation_report_columns = ['hour', 'da_cost', 'up_rd_mw', 'down_rd_mw', 'up_rd_cost', 'down_rd_cost',
                            'rd_cost', 'total_cost', 'da_curtail_mwh', 'rt_curtail_mwh']

comparison_table_columns = ['mode', 'da_cost', 'up_rd_mw', 'down_rd_mw', 'up_rd_cost', 'down_rd_cost',
                            'rd_cost', 'total_cost', 'cvar_cost', 'da_curtail_mwh', 'rt_curtail_mwh',
                            'binding_hours']

experiment_object_list = ['network', 'grid', 'workdir', 'seed', 'start_date', 'horizon_days', 'hops',
                          'hidden_size', 'quantile_levels', 'epochs', 'batch_size', 'learning_rate',
                          'weight_decay', 'split_ratio', 'validation_ratio', 'window_hours', 'operation_level',
                          'per_line_heads', 'slr_assumptions', 'load_forecast_bias', 'load_forecast_noise',
                          'weather', 'rating_floor_fraction', 'solver', 'identity_adjacency', 'cvar_beta',
                          'hop_candidates']

grid_object_list = ['base_mva', 'reference_bus', 'conductors', 'generators', 'loads',
                    'angle_limits_rad']

generator_object_list = ['gen_id', 'bus', 'kind', 'c1', 'c2', 'pmin', 'pmax', 'ramp_down', 'ramp_up',
                         'c_plus', 'c_minus', 'capacity_factor']

load_object_list = ['bus', 'peak_mw']

conductor_object_list = ['resistance_ohm_per_km', 'diameter_m', 'emissivity', 'absorptivity', 'max_conductor_temp_c',
                         'voltage_kv']

generator_kind_list = ['controllable', 'renewable']

operation_mode_list = ['oracle', 'slr', 'truedlr', 'point', 'quantile']

cli_command_list = ['gen-data', 'train', 'forecast', 'evaluate', 'operate', 'report', 'select-hops']

# Gate order used in parameter names.
gate_names = ['f', 'i', 'o', 'g']

weather_feature_names = ['temp_c', 'wind_mps', 'wind_dir_sin', 'wind_dir_cos', 'lat', 'lon']

line_feature_names = ['rating_mw', 'length_km', 'season_winter', 'season_spring', 'season_summer', 'season_autumn']

default_quantile_levels = [0.01, 0.05, 0.10, 0.50, 0.90, 0.95, 0.99]

# Prediction-interval levels reported by evaluate: nominal coverage -> (lower, upper) quantile.
prediction_intervals = {
    0.80: (0.10, 0.90),
    0.90: (0.05, 0.95),
    0.98: (0.01, 0.99),
}

operation_quantile_levels = [0.01, 0.05, 0.10]

checkpoint_format = 'dlrgrid-checkpoint'

checkpoint_version = 1

bundled_prefix = 'bundled:'


class TypeConfig:
    bool = "boolean"
    str = "string"
    float = "number"
    int = "integer"
    list = "array"
    dict = "object"


class Regex:
    split_ratio = re.compile(r"^\s*([1-9][0-9]*)\s*:\s*([1-9][0-9]*)\s*$")

    date = re.compile(r"^\d{4}-\d{2}-\d{2}$")
