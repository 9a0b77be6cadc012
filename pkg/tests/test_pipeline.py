import json
import shutil

import numpy as np
import pandas as pd
import pytest

from dlrgrid import pipeline
from dlrgrid.config import PACKAGE_DATA, load_config, load_grid_document
from dlrgrid.exceptions import MissingArtifact, MissingData
from dlrgrid.gridops import grid_from_document
from dlrgrid.schema import ValidationError
from dlrgrid.thermal import simulate_weather
from tests.fixtures import fixture_config

MODES = ['point', 'q0.01', 'q0.05', 'q0.1', 'slr', 'truedlr', 'oracle']


def desk_config(directory, **overrides):
    document = fixture_config.desk_config_document(directory / 'runs')
    document.update(overrides)
    return load_config(fixture_config.write_config(directory, document))


@pytest.fixture(scope='module')
def desk_experiment(tmp_path_factory):
    experiment = pipeline.Experiment(desk_config(tmp_path_factory.mktemp('desk')))
    experiment.gen_data()
    experiment.train()
    experiment.forecast()
    experiment.evaluate()
    experiment.operate()
    experiment.report()
    return experiment


@pytest.fixture
def six_bus_grid(six_bus_network):
    return grid_from_document(load_grid_document(PACKAGE_DATA / 'six_bus' / 'grid.json'), six_bus_network)


class TestSimulation:
    def test_should_bias_the_load_forecast(self, six_bus_grid):
        timestamps = pd.date_range('2021-01-01', periods=24 * 60, freq='h')

        loads = pipeline.simulate_loads(six_bus_grid, timestamps, seed=1, bias=0.03, noise=0.02)

        loaded = loads.true_mw[:, 2:]
        assert loads.true_mw.shape == (24 * 60, 6)
        assert (loads.true_mw[:, :2] == 0).all()
        assert np.mean(loads.forecast_mw[:, 2:] / loaded) == pytest.approx(1.03, abs=0.005)
        assert (loaded <= 1.2 * np.array([120.0, 40.0, 150.0, 90.0])).all()

    def test_should_repeat_loads_per_seed(self, six_bus_grid):
        timestamps = pd.date_range('2021-01-01', periods=48, freq='h')

        first = pipeline.simulate_loads(six_bus_grid, timestamps, seed=4)
        second = pipeline.simulate_loads(six_bus_grid, timestamps, seed=4)

        assert np.array_equal(first.forecast_mw, second.forecast_mw)

    def test_should_restore_loads_from_their_frame(self, six_bus_grid):
        timestamps = pd.date_range('2021-01-01', periods=24, freq='h')
        loads = pipeline.simulate_loads(six_bus_grid, timestamps, seed=2)

        restored = pipeline.LoadSeries.from_frame(loads.to_frame(), six_bus_grid.network.bus_ids)

        assert np.allclose(restored.true_mw, loads.true_mw)
        assert restored.timestamps.equals(timestamps)

    def test_should_report_missing_loads(self):
        timestamps = pd.date_range('2021-01-01', periods=3, freq='h')
        loads = pipeline.LoadSeries((1, 2), timestamps, np.full((3, 2), 50.0), np.full((3, 2), 51.0))
        frame = loads.to_frame()
        frame = frame.drop(frame[(frame['bus_id'] == 2) & (frame['timestamp'] == '2021-01-01 01:00')].index)

        with pytest.raises(MissingData) as e:
            pipeline.LoadSeries.from_frame(frame, (1, 2))

        assert e.value.kind == 'load'
        assert e.value.key == 'bus 2'
        assert e.value.hour == '2021-01-01 01:00:00'

    def test_should_report_missing_renewables(self):
        timestamps = pd.date_range('2021-01-01', periods=3, freq='h')
        renewables = pipeline.RenewableSeries((5,), timestamps, np.full((3, 1), 20.0))
        frame = renewables.to_frame().iloc[[0, 2]]

        with pytest.raises(MissingData) as e:
            pipeline.RenewableSeries.from_frame(frame, (5,), timestamps)

        assert e.value.kind == 'renewable'
        assert e.value.key == 'generator 5'
        assert e.value.hour == '2021-01-01 01:00:00'

    def test_should_cap_renewables_at_capacity(self, six_bus_grid, six_bus_network):
        weather = simulate_weather(six_bus_network, '2021-01-01', 24 * 10, seed=1)

        renewables = pipeline.simulate_renewables(six_bus_grid, weather, 4.0)

        assert renewables.gen_ids == (5,)
        assert (renewables.available_mw >= 0).all()
        assert (renewables.available_mw <= 100.0).all()


class TestCostOrdering:
    def test_should_compare_quantile_modes_with_the_point_forecast(self):
        summaries = {'point': {'total_cost': 10.0}, 'q0.05': {'total_cost': 9.0}, 'q0.1': {'total_cost': 11.0},
                     'slr': {'total_cost': 8.0}}

        assert pipeline.cost_ordering(summaries) == {'q0.05': True, 'q0.1': False}

    def test_should_be_empty_without_a_point_forecast(self):
        assert pipeline.cost_ordering({'slr': {'total_cost': 1.0}}) == {}


class TestExperiment:
    def test_should_write_every_artifact(self, desk_experiment):
        names = {path.name for path in desk_experiment.run_dir.iterdir()}

        expected = {'weather.csv', 'dlr.csv', 'loads.csv', 'renewables.csv', 'model.json', 'loss.csv',
                    'adjacency.csv', 'forecasts.csv', 'metrics.json', 'line_scores.csv', 'operations.json',
                    'comparison.csv', 'ordering.json'} | {f'operation_{mode}.csv' for mode in MODES}
        assert expected <= names
        assert desk_experiment.run_dir.name == 'seed_3'

    def test_should_generate_the_whole_horizon(self, desk_experiment):
        weather = pd.read_csv(desk_experiment.artifact('weather.csv'))
        ratings = pd.read_csv(desk_experiment.artifact('dlr.csv'))

        assert list(weather.columns) == ['bus_id', 'timestamp', 'temp_c', 'wind_mps', 'wind_dir_deg', 'solar_wm2']
        assert len(weather) == 24 * 12 * 6
        assert list(ratings.columns) == ['line_id', 'timestamp', 'rating_mw', 'floored']
        assert (ratings['rating_mw'] > 0).all()

    def test_should_record_one_loss_per_epoch(self, desk_experiment):
        loss = pd.read_csv(desk_experiment.artifact('loss.csv'))

        assert loss['epoch'].tolist() == [1]
        assert np.isfinite(loss['train_loss']).all()

    def test_should_forecast_only_clean_test_days(self, desk_experiment):
        frame = pd.read_csv(desk_experiment.artifact('forecasts.csv'))

        assert sorted(frame['date'].unique()) == ['2021-06-11', '2021-06-12']
        assert len(frame) == 2 * 7 * 24 * 7

        forecasts = pipeline.read_forecasts(desk_experiment.artifact('forecasts.csv'),
                                            desk_experiment.network.line_ids)
        for forecast in forecasts.values():
            assert forecast.values.shape == (7, 24, 7)
            assert (np.diff(forecast.values, axis=-1) >= 0).all()

    def test_should_evaluate_every_interval(self, desk_experiment):
        report = json.loads(desk_experiment.artifact('metrics.json').read_text())

        assert report['test_days'] == 2
        assert sorted(report['intervals']) == ['80%', '90%', '98%']
        assert set(report['overestimation_rate']) == {'point', 'slr', 'q0.01', 'q0.05', 'q0.1'}
        assert 0.0 <= report['overestimation_rate']['q0.01'] <= report['overestimation_rate']['point']

    def test_should_operate_every_mode(self, desk_experiment):
        summaries = json.loads(desk_experiment.artifact('operations.json').read_text())

        assert sorted(summaries) == sorted(MODES)
        assert abs(summaries['oracle']['rd_cost']) < 1e-3
        assert summaries['oracle']['up_rd_mw'] < 1e-3
        for summary in summaries.values():
            assert summary['hours'] == 48
            assert summary['cvar_cost'] >= summary['total_cost'] - 1e-6

    def test_should_find_the_oracle_cheapest(self, desk_experiment):
        summaries = json.loads(desk_experiment.artifact('operations.json').read_text())
        oracle = summaries['oracle']['total_cost']

        cheapest = min(summary['total_cost'] for summary in summaries.values())

        assert oracle == pytest.approx(cheapest, rel=1e-5, abs=1e-3)

    def test_should_report_modes_in_a_fixed_order(self, desk_experiment):
        table = pd.read_csv(desk_experiment.artifact('comparison.csv'))
        orderings = pd.read_csv(desk_experiment.config.workdir / 'orderings.csv')

        assert table['mode'].tolist() == MODES
        assert 'cvar_cost' in table.columns
        assert orderings['seed'].unique().tolist() == [3]
        assert sorted(orderings['mode']) == ['q0.01', 'q0.05', 'q0.1']

    def test_should_regenerate_identical_data(self, desk_experiment, tmp_path):
        experiment = pipeline.Experiment(desk_config(tmp_path))

        experiment.gen_data()

        for name in ('weather.csv', 'dlr.csv', 'loads.csv', 'renewables.csv'):
            assert experiment.artifact(name).read_text() == desk_experiment.artifact(name).read_text()

    def test_should_repeat_the_whole_pipeline(self, desk_experiment, tmp_path):
        experiment = pipeline.Experiment(desk_config(tmp_path))

        experiment.gen_data()
        experiment.train()
        experiment.forecast()
        experiment.evaluate()
        experiment.operate()
        experiment.report()

        for name in ('loss.csv', 'forecasts.csv', 'metrics.json', 'operations.json', 'comparison.csv'):
            assert experiment.artifact(name).read_text() == desk_experiment.artifact(name).read_text()

    def test_should_refuse_to_evaluate_leaked_days(self, desk_experiment, tmp_path):
        experiment = pipeline.Experiment(desk_config(tmp_path))
        shutil.copytree(desk_experiment.run_dir, experiment.run_dir, dirs_exist_ok=True)
        checkpoint = json.loads(experiment.artifact('model.json').read_text())
        checkpoint['meta']['split_boundary'] = '2021-06-12 00:00:00'
        experiment.artifact('model.json').write_text(json.dumps(checkpoint))

        with pytest.raises(ValidationError):
            experiment.evaluate()

    def test_should_select_a_hop_count(self, desk_experiment):
        best, table = desk_experiment.select_hops([1, 2])

        assert best in (1, 2)
        assert table['k'].tolist() == [1, 2]
        assert desk_experiment.artifact('hops.csv').exists()


class TestOperationModes:
    def test_should_list_every_mode_by_default(self, tmp_path):
        modes = pipeline.Experiment(desk_config(tmp_path)).operation_modes()

        assert modes == [('point', None), ('quantile', 0.01), ('quantile', 0.05), ('quantile', 0.1), ('slr', None),
                         ('truedlr', None), ('oracle', None)]

    def test_should_default_to_the_operation_level(self, tmp_path):
        assert pipeline.Experiment(desk_config(tmp_path)).operation_modes('quantile') == [('quantile', 0.05)]

    def test_should_reject_levels_that_were_not_forecast(self, tmp_path):
        with pytest.raises(ValidationError):
            pipeline.Experiment(desk_config(tmp_path)).operation_modes('quantile', 0.2)


class TestMissingArtifacts:
    def test_should_name_the_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifact) as e:
            pipeline.train_cmd(desk_config(tmp_path))

        assert e.value.path.endswith('weather.csv')

    def test_should_require_operations_before_reporting(self, tmp_path):
        with pytest.raises(MissingArtifact):
            pipeline.report_cmd(desk_config(tmp_path))
