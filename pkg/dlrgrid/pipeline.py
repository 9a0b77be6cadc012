"""
Experiment orchestration: synthetic data, training, forecasting, evaluation,
two-stage operation and the comparison report.

Every command reads and writes artifacts in ``<workdir>/seed_<seed>/``:

===================  ============================================
gen-data             weather.csv, dlr.csv, loads.csv, renewables.csv
train                model.json, loss.csv, adjacency.csv
forecast             forecasts.csv
evaluate             metrics.json, line_scores.csv
operate              operation_<label>.csv, operations.json
report               comparison.csv, ordering.json
select-hops          hops.csv
===================  ============================================
"""
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from dlrgrid import constants, forecaster, gridops, metrics, netgraph, thermal
from dlrgrid.config import load_grid_document
from dlrgrid.exceptions import MissingArtifact, MissingData
from dlrgrid.schema import ValidationError

logger = logging.getLogger(__name__)

TIMESTAMP_FORMAT = '%Y-%m-%d %H:%M'
FLOAT_FORMAT = '%.6f'


def _raise_on_gap(table, kind, label):
    missing = table.isna().to_numpy()
    if missing.any():
        hour, column = next(zip(*np.nonzero(missing)))
        raise MissingData(kind, f'{label} {table.columns[column]}', str(table.index[hour]))


@dataclass
class LoadSeries:
    bus_ids: tuple
    timestamps: pd.DatetimeIndex
    true_mw: np.ndarray
    forecast_mw: np.ndarray

    def to_frame(self):
        hours, buses = self.true_mw.shape
        return pd.DataFrame({
            'bus_id': np.tile(np.asarray(self.bus_ids), hours),
            'timestamp': np.repeat(self.timestamps.strftime(TIMESTAMP_FORMAT), buses),
            'true_mw': self.true_mw.reshape(-1),
            'forecast_mw': self.forecast_mw.reshape(-1),
        }, columns=constants.load_csv_columns)

    @classmethod
    def from_frame(cls, frame, bus_ids):
        frame = frame.copy()
        frame['timestamp'] = pd.to_datetime(frame['timestamp'])
        timestamps = pd.DatetimeIndex(sorted(frame['timestamp'].unique()))
        tables = []
        for column in ('true_mw', 'forecast_mw'):
            table = frame.pivot(index='timestamp', columns='bus_id', values=column)
            table = table.reindex(index=timestamps, columns=list(bus_ids))
            _raise_on_gap(table, 'load', 'bus')
            tables.append(table.to_numpy())
        return cls(tuple(bus_ids), timestamps, *tables)


@dataclass
class RenewableSeries:
    gen_ids: tuple
    timestamps: pd.DatetimeIndex
    available_mw: np.ndarray

    def to_frame(self):
        hours, gens = self.available_mw.shape
        return pd.DataFrame({
            'gen_id': np.tile(np.asarray(self.gen_ids, dtype=int), hours),
            'timestamp': np.repeat(self.timestamps.strftime(TIMESTAMP_FORMAT), gens),
            'available_mw': self.available_mw.reshape(-1),
        }, columns=constants.renewable_csv_columns)

    @classmethod
    def from_frame(cls, frame, gen_ids, timestamps):
        if not gen_ids:
            return cls((), timestamps, np.zeros((len(timestamps), 0)))
        frame = frame.copy()
        frame['timestamp'] = pd.to_datetime(frame['timestamp'])
        table = frame.pivot(index='timestamp', columns='gen_id', values='available_mw')
        table = table.reindex(index=timestamps, columns=list(gen_ids))
        _raise_on_gap(table, 'renewable', 'generator')
        return cls(tuple(gen_ids), timestamps, table.to_numpy())


def simulate_loads(grid: gridops.GridSpec, timestamps, seed, bias=0.03, noise=0.02):
    """Per-bus diurnal and seasonal load with a positively biased noisy forecast."""
    rng = np.random.default_rng([seed, 1])
    buses = grid.network.bus_ids
    peak = np.array([grid.peak_loads.get(bus_id, 0.0) for bus_id in buses])[None, :]
    hour = timestamps.hour.to_numpy()[:, None]
    season = np.cos(2 * np.pi * (timestamps.dayofyear.to_numpy() - 200) / 365.25)[:, None]
    daily = 0.5 * (1.0 - np.cos(2 * np.pi * (hour - 4) / 24))
    shape = 0.6 + 0.25 * daily + 0.1 * np.maximum(season, 0.0) + 0.05 * np.maximum(-season, 0.0)
    true = np.maximum(peak * shape * (1.0 + 0.03 * rng.standard_normal((len(timestamps), len(buses)))), 0.0)
    forecast = np.maximum(true * (1.0 + bias + noise * rng.standard_normal(true.shape)), 0.0)
    return LoadSeries(tuple(buses), timestamps, true, forecast)


def simulate_renewables(grid: gridops.GridSpec, weather: thermal.WeatherSeries, mean_wind_mps):
    gens = grid.renewables
    available = np.zeros((weather.hours, len(gens)))
    for j, g in enumerate(gens):
        wind = weather.wind_speed_mps[:, weather.bus_ids.index(g.bus)]
        factor = 0.35 if g.capacity_factor is None else g.capacity_factor
        available[:, j] = g.pmax * np.clip(factor * wind / mean_wind_mps, 0.0, 1.0)
    return RenewableSeries(tuple(g.gen_id for g in gens), weather.timestamps, available)


def _require(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(path)
    return path


def read_forecasts(path, line_ids):
    """Day-indexed :class:`QuantileForecast` objects from a forecasts CSV."""
    frame = pd.read_csv(_require(path))
    levels = tuple(sorted(frame['quantile_level'].unique()))
    forecasts = {}
    for date, day in frame.groupby('date', sort=True):
        day = day.sort_values(['line_id', 'hour', 'quantile_level'])
        if sorted(day['line_id'].unique()) != sorted(line_ids):
            raise ValidationError(f'Invalid forecasts file {path}. Lines of {date} do not match the network')
        values = day['value_mw'].to_numpy().reshape(len(line_ids), forecaster.HORIZON_HOURS, len(levels))
        forecasts[pd.Timestamp(date)] = forecaster.QuantileForecast(tuple(line_ids), levels, values,
                                                                     pd.Timestamp(date))
    return forecasts


def _level_label(level):
    return f'q{level:g}'


def split_days(timestamps, split_ratio, window_hours):
    days = forecaster.forecast_days(timestamps, window_hours)
    return forecaster.split_days(days, split_ratio, window_hours)


class Experiment:
    def __init__(self, config):
        self.config = config

    @property
    def run_dir(self):
        path = self.config.workdir / f'seed_{self.config["seed"]}'
        path.mkdir(parents=True, exist_ok=True)
        return path

    def artifact(self, name):
        return self.run_dir / name

    @cached_property
    def network(self):
        network_dir = self.config.network_dir
        return netgraph.read_network(_require(network_dir / 'buses.csv'), _require(network_dir / 'lines.csv'))

    @cached_property
    def grid(self):
        document = load_grid_document(_require(self.config.grid_path))
        return gridops.grid_from_document(document, self.network)

    @cached_property
    def slr_assumptions(self):
        return thermal.SlrAssumptions(**self.config['slr_assumptions'])

    @cached_property
    def slr(self):
        return thermal.static_ratings(self.network, self.grid.conductors, self.slr_assumptions)

    def train_config(self, **overrides):
        values = dict(
            hops=self.config['hops'],
            hidden_size=self.config['hidden_size'],
            levels=tuple(self.config['quantile_levels']),
            epochs=self.config['epochs'],
            batch_size=self.config['batch_size'],
            learning_rate=self.config['learning_rate'],
            weight_decay=self.config['weight_decay'],
            per_line_heads=self.config['per_line_heads'],
            identity_adjacency=self.config['identity_adjacency'],
            seed=self.config['seed'],
        )
        values.update(overrides)
        return forecaster.TrainConfig(**values)

    # Data

    def gen_data(self):
        hours = 24 * self.config['horizon_days']
        settings = thermal.WeatherSettings(**self.config['weather'])
        weather = thermal.simulate_weather(self.network, self.config['start_date'], hours, self.config['seed'],
                                           settings)
        ratings = thermal.rate_lines(self.network, weather, self.grid.conductors,
                                     self.config['rating_floor_fraction'], self.slr_assumptions)
        loads = simulate_loads(self.grid, weather.timestamps, self.config['seed'],
                               self.config['load_forecast_bias'], self.config['load_forecast_noise'])
        renewables = simulate_renewables(self.grid, weather, settings.mean_wind_mps)
        outputs = {
            'weather.csv': weather.to_frame(),
            'dlr.csv': ratings.to_frame(),
            'loads.csv': loads.to_frame(),
            'renewables.csv': renewables.to_frame(),
        }
        for name, frame in outputs.items():
            frame.to_csv(self.artifact(name), index=False, float_format=FLOAT_FORMAT)
        logger.info("Generated %d hours of data in %s", hours, self.run_dir)
        return outputs

    def read_weather(self):
        return thermal.WeatherSeries.from_frame(pd.read_csv(_require(self.artifact('weather.csv'))),
                                                self.network.bus_ids)

    def read_ratings(self):
        return thermal.RatingSeries.from_frame(pd.read_csv(_require(self.artifact('dlr.csv'))), self.slr,
                                               self.network.line_ids)

    def read_loads(self):
        return LoadSeries.from_frame(pd.read_csv(_require(self.artifact('loads.csv'))), self.network.bus_ids)

    def read_renewables(self, timestamps):
        gen_ids = [g.gen_id for g in self.grid.renewables]
        frame = pd.read_csv(_require(self.artifact('renewables.csv'))) if gen_ids else None
        return RenewableSeries.from_frame(frame, gen_ids, timestamps)

    # Forecasting

    def dataset(self, validation_ratio=None):
        weather, ratings = self.read_weather(), self.read_ratings()
        return forecaster.build_dataset(self.network, weather, ratings, self.config.split,
                                        self.config['window_hours'], validation_ratio)

    def train(self):
        dataset, scaler = self.dataset(self.config.validation_split)
        model, history = forecaster.train(dataset, self.network, scaler, self.train_config(),
                                          self.config['window_hours'])
        forecaster.save_model(self.artifact('model.json'), model, {'split_boundary': str(dataset.boundary)})
        history.to_frame().to_csv(self.artifact('loss.csv'), index=False, float_format='%.8f')
        netgraph.export_adjacency_csv(model.adjacency, self.artifact('adjacency.csv'))
        return model, history

    def load_model(self):
        return forecaster.load_model(_require(self.artifact('model.json')), self.network)

    def test_days(self, timestamps):
        _, test, _ = split_days(timestamps, self.config.split, self.config['window_hours'])
        return test

    def forecast(self):
        model, meta = self.load_model()
        weather, ratings = self.read_weather(), self.read_ratings()
        days = self.test_days(weather.timestamps)
        frames = []
        for start in range(0, len(days), self.config['batch_size']):
            chunk = days[start:start + self.config['batch_size']]
            windows = [forecaster.assemble_features(self.network, weather, ratings, day, model.scaler,
                                                    model.window_hours) for day in chunk]
            for day, values in zip(chunk, model.predict(windows)):
                forecast = forecaster.QuantileForecast(model.line_ids, model.levels, values, day)
                frames.append(forecast.to_frame())
        frame = pd.concat(frames, ignore_index=True)
        frame.to_csv(self.artifact('forecasts.csv'), index=False, float_format=FLOAT_FORMAT)
        logger.info("Forecast %d test days", len(days))
        return frame

    def _truth(self, ratings, day):
        start = ratings.timestamps.get_loc(pd.Timestamp(day))
        return ratings.rating_mw[start:start + forecaster.HORIZON_HOURS].T

    def evaluate(self):
        _, meta = self.load_model()
        forecasts = read_forecasts(self.artifact('forecasts.csv'), self.network.line_ids)
        boundary = pd.Timestamp(meta['split_boundary'])
        window = pd.Timedelta(hours=meta['window_hours'])
        leaked = [day for day in forecasts if day - window < boundary]
        if leaked:
            raise ValidationError(f'Invalid evaluation. Test day {leaked[0].date()} uses history before the '
                                  f'split boundary {boundary}')
        ratings = self.read_ratings()
        days = sorted(forecasts)
        truth = np.concatenate([self._truth(ratings, day) for day in days], axis=1)
        levels = forecasts[days[0]].levels
        combined = forecaster.QuantileForecast(
            forecasts[days[0]].line_ids, levels, np.concatenate([forecasts[day].values for day in days], axis=1))
        available = [pi for pi, bounds in constants.prediction_intervals.items()
                     if all(any(abs(q - b) < 1e-12 for q in levels) for b in bounds)]
        limits = {'point': combined.median(), 'slr': np.broadcast_to(self.slr[:, None], truth.shape)}
        for level in constants.operation_quantile_levels:
            if any(abs(q - level) < 1e-12 for q in levels):
                limits[_level_label(level)] = combined.at(level)
        report = {
            'test_days': len(days),
            'intervals': metrics.evaluate_intervals(combined, truth, available),
            'quantile_score': metrics.quantile_score(combined, truth),
            'overestimation_rate': {name: metrics.overestimation_rate(value, truth)
                                    for name, value in limits.items()},
            'mean_percentage_error': {name: float(np.mean(metrics.percentage_error(value, truth)))
                                      for name, value in limits.items()},
        }
        self.artifact('metrics.json').write_text(json.dumps(report, indent=2))
        metrics.per_line_quantile_score(combined, truth).to_csv(self.artifact('line_scores.csv'), index=False,
                                                                 float_format=FLOAT_FORMAT)
        logger.info("Evaluated %d test days", len(days))
        return report

    # Operation

    def operation_days(self, days):
        ratings, loads = self.read_ratings(), self.read_loads()
        renewables = self.read_renewables(loads.timestamps)
        result = []
        for day in days:
            start = loads.timestamps.get_loc(pd.Timestamp(day))
            span = slice(start, start + forecaster.HORIZON_HOURS)
            result.append(gridops.DayInputs(pd.Timestamp(day), self._truth(ratings, day), loads.forecast_mw[span],
                                            loads.true_mw[span], renewables.available_mw[span]))
        return result

    def day_ahead_limits(self, mode, days, level=None, forecasts=None):
        floor = self.config['rating_floor_fraction'] * self.slr[:, None]
        limits = []
        for day in days:
            if mode in ('oracle', 'truedlr'):
                limits.append(day.true_dlr)
            elif mode == 'slr':
                limits.append(np.repeat(self.slr[:, None], forecaster.HORIZON_HOURS, axis=1))
            else:
                forecast = forecasts[day.date]
                raw = forecast.median() if mode == 'point' else forecast.at(level)
                if (raw < floor).any():
                    logger.debug("Raised %d forecast limits to the rating floor on %s", int((raw < floor).sum()),
                                 day.date.date())
                limits.append(np.maximum(raw, floor))
        return limits

    def operation_modes(self, mode=None, level=None):
        if mode is not None:
            if mode == 'quantile':
                level = self.config['operation_level'] if level is None else level
                if not any(abs(level - q) < 1e-12 for q in self.config['quantile_levels']):
                    raise ValidationError(f'Invalid quantile {level}. It must be one of the forecast levels '
                                          f'{self.config["quantile_levels"]}')
                return [(mode, level)]
            return [(mode, None)]
        levels = [q for q in constants.operation_quantile_levels
                  if any(abs(q - level) < 1e-12 for level in self.config['quantile_levels'])]
        return [('point', None)] + [('quantile', q) for q in levels] + [('slr', None), ('truedlr', None),
                                                                        ('oracle', None)]

    def operate(self, mode=None, level=None):
        modes = self.operation_modes(mode, level)
        forecasts = None
        if any(m in ('point', 'quantile') for m, _ in modes):
            forecasts = read_forecasts(self.artifact('forecasts.csv'), self.network.line_ids)
            days = sorted(forecasts)
        else:
            days = self.test_days(self.read_loads().timestamps)
        inputs = self.operation_days(days)
        solver = self.config['solver']
        summaries_path = self.artifact('operations.json')
        summaries = json.loads(summaries_path.read_text()) if summaries_path.exists() else {}
        for m, q in modes:
            label = m if q is None else _level_label(q)
            limits = self.day_ahead_limits(m, inputs, q, forecasts)
            report = gridops.operate_horizon(self.grid, inputs, limits, oracle=(m == 'oracle'), tol=solver['tol'],
                                             max_iter=solver['max_iter'])
            report.hours.to_csv(self.artifact(f'operation_{label}.csv'), index=False, float_format=FLOAT_FORMAT)
            summaries[label] = report.summary(self.config['cvar_beta'])
            logger.info("Mode %s: total cost %.2f $/h, CVaR %.2f $/h", label, summaries[label]['total_cost'],
                        summaries[label]['cvar_cost'])
        summaries_path.write_text(json.dumps(summaries, indent=2, sort_keys=True))
        return summaries

    def report(self):
        summaries = json.loads(_require(self.artifact('operations.json')).read_text())
        rows = []
        for label, summary in summaries.items():
            row = {'mode': label}
            row.update({column: summary[column] for column in constants.comparison_table_columns[1:]})
            row['mean_true_load_mw'] = summary['mean_true_load_mw']
            row['mean_forecast_load_mw'] = summary['mean_forecast_load_mw']
            rows.append(row)
        order = {label: i for i, label in enumerate(['point'] + [_level_label(q)
                                                                  for q in constants.operation_quantile_levels]
                                                     + ['slr', 'truedlr', 'oracle'])}
        rows.sort(key=lambda r: order.get(r['mode'], len(order)))
        table = pd.DataFrame(rows, columns=constants.comparison_table_columns +
                             ['mean_true_load_mw', 'mean_forecast_load_mw'])
        table.to_csv(self.artifact('comparison.csv'), index=False, float_format='%.4f')
        ordering = cost_ordering(summaries)
        ordering['seed'] = self.config['seed']
        self.artifact('ordering.json').write_text(json.dumps(ordering, indent=2, sort_keys=True))
        collect_orderings(self.config.workdir)
        return table

    def select_hops(self, candidates=None):
        candidates = list(candidates or self.config['hop_candidates'])
        dataset, scaler = self.dataset(self.config.validation_split or (3, 1))
        if not dataset.validation:
            raise ValidationError('Invalid dataset. Hop selection needs at least two training days')
        truth = np.concatenate([e.target for e in dataset.validation], axis=1)
        rows = []
        for k in candidates:
            model, _ = forecaster.train(dataset, self.network, scaler, self.train_config(hops=k),
                                        self.config['window_hours'])
            values = np.concatenate([model.predict([e.window for e in dataset.validation[i:i + 16]])
                                     for i in range(0, len(dataset.validation), 16)], axis=0)
            combined = forecaster.QuantileForecast(model.line_ids, model.levels,
                                                   np.concatenate(list(values), axis=1))
            rows.append({'k': k, 'validation_quantile_score': metrics.quantile_score(combined, truth)})
            logger.info("k=%d validation quantile score %.4f", k, rows[-1]['validation_quantile_score'])
        table = pd.DataFrame(rows)
        table.to_csv(self.artifact('hops.csv'), index=False, float_format=FLOAT_FORMAT)
        best = int(table.loc[table['validation_quantile_score'].idxmin(), 'k'])
        logger.info("Selected k=%d", best)
        return best, table


def cost_ordering(summaries):
    """Whether each quantile mode's total cost is at most the point-forecast mode's."""
    if 'point' not in summaries:
        return {}
    point = summaries['point']['total_cost']
    return {label: bool(summary['total_cost'] <= point) for label, summary in summaries.items()
            if label.startswith('q')}


def collect_orderings(workdir):
    rows = []
    for path in sorted(Path(workdir).glob('seed_*/ordering.json')):
        ordering = json.loads(path.read_text())
        seed = ordering.pop('seed')
        rows += [{'seed': seed, 'mode': label, 'total_cost_le_point': value} for label, value in ordering.items()]
    frame = pd.DataFrame(rows, columns=['seed', 'mode', 'total_cost_le_point'])
    frame.to_csv(Path(workdir) / 'orderings.csv', index=False)
    return frame


def gen_data(config):
    return Experiment(config).gen_data()


def train_cmd(config):
    return Experiment(config).train()


def forecast_cmd(config):
    return Experiment(config).forecast()


def evaluate_cmd(config):
    return Experiment(config).evaluate()


def operate_cmd(config, mode=None, level=None):
    return Experiment(config).operate(mode, level)


def report_cmd(config):
    return Experiment(config).report()


def select_hops(config, candidates=None):
    return Experiment(config).select_hops(candidates)
