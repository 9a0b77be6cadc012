import json

import numpy as np
import pandas as pd
import pytest

from dlrgrid import constants, gridops
from dlrgrid.config import PACKAGE_DATA
from dlrgrid.exceptions import Infeasible
from dlrgrid.gridops import DayInputs, Generator, GridSpec
from dlrgrid.schema import ValidationError


def two_bus_day(true_limit, load, hours=1, forecast=None):
    load_true = np.tile([0.0, load], (hours, 1))
    load_forecast = load_true if forecast is None else np.tile([0.0, forecast], (hours, 1))
    return DayInputs(pd.Timestamp('2021-07-01'), np.full((1, hours), true_limit), load_forecast, load_true,
                     np.zeros((hours, 0)))


def triangle_day(hours=4):
    shape = 0.8 + 0.2 * np.sin(np.arange(hours) / 3.0)
    load = np.column_stack([np.zeros(hours), 60.0 * shape, 90.0 * shape])
    return DayInputs(pd.Timestamp('2021-07-01'), np.full((3, hours), 70.0), load * 1.05, load,
                     np.full((hours, 1), 24.0))


class TestGridSpec:
    def test_should_fill_price_and_ramp_defaults(self, two_bus_grid):
        cheap = two_bus_grid.controllable[0]

        assert cheap.c_plus == 30.0
        assert cheap.c_minus == 5.0
        assert (cheap.ramp_down, cheap.ramp_up) == (-200.0, 200.0)

    def test_should_read_the_bundled_grid(self, six_bus_network):
        document = json.loads((PACKAGE_DATA / 'six_bus' / 'grid.json').read_text())

        grid = gridops.grid_from_document(document, six_bus_network)

        assert len(grid.controllable) == 4
        assert [g.gen_id for g in grid.renewables] == [5]
        assert grid.controllable[0].ramp_up == 120.0
        assert grid.peak_loads[5] == 150.0

    def test_should_reject_inverted_prices(self, two_bus_network):
        with pytest.raises(ValidationError):
            GridSpec(two_bus_network, (Generator(1, 1, 'controllable', c1=10.0, pmax=50.0, c_plus=5.0),), 1)

    def test_should_reject_priced_renewables(self, two_bus_network):
        with pytest.raises(ValidationError):
            GridSpec(two_bus_network, (Generator(1, 1, 'renewable', c1=10.0, pmax=50.0),), 1)

    def test_should_reject_unknown_buses(self, two_bus_network):
        with pytest.raises(ValidationError):
            GridSpec(two_bus_network, (Generator(1, 7, 'controllable', c1=10.0, pmax=50.0),), 1)

        with pytest.raises(ValidationError):
            GridSpec(two_bus_network, (Generator(1, 1, 'controllable', c1=10.0, pmax=50.0),), 3)

    def test_should_reject_duplicate_generators(self, two_bus_network):
        generator = Generator(1, 1, 'controllable', c1=10.0, pmax=50.0)

        with pytest.raises(ValidationError):
            GridSpec(two_bus_network, (generator, generator), 1)


class TestDayAhead:
    def test_should_use_the_cheap_generator_without_congestion(self, two_bus_grid):
        solution = gridops.day_ahead(two_bus_grid, [[200.0]], [[0.0, 100.0]], np.zeros((1, 0)))

        assert solution.p[0] == pytest.approx([100.0, 0.0], abs=1e-5)
        assert solution.flows[0, 0] == pytest.approx(100.0, abs=1e-5)
        assert solution.theta[0, 0] == pytest.approx(0.0, abs=1e-9)

    def test_should_split_generation_at_a_congested_line(self, two_bus_grid):
        solution = gridops.day_ahead(two_bus_grid, [[50.0]], [[0.0, 100.0]], np.zeros((1, 0)))

        assert solution.p[0] == pytest.approx([50.0, 50.0], abs=1e-5)
        assert solution.objective == pytest.approx(2575.0, abs=1e-3)
        assert solution.hour_cost[0] == pytest.approx(solution.objective, abs=1e-6)

    @pytest.mark.parametrize('seed', range(100))
    def test_should_cost_less_with_relaxed_limits(self, triangle_network, seed):
        rng = np.random.default_rng(seed)
        grid = GridSpec(triangle_network, (
            Generator(1, 1, 'controllable', c1=rng.uniform(10.0, 50.0), c2=rng.uniform(0.005, 0.05), pmax=250.0),
            Generator(2, 2, 'controllable', c1=rng.uniform(10.0, 50.0), c2=rng.uniform(0.005, 0.05), pmax=150.0),
            Generator(3, 3, 'renewable', pmax=60.0),
        ), 1)
        hours = 4
        load = np.column_stack([np.zeros(hours), rng.uniform(20.0, 80.0, hours), rng.uniform(20.0, 60.0, hours)])
        renewable = rng.uniform(0.0, 24.0, (hours, 1))
        limits = rng.uniform(40.0, 80.0, (3, hours))

        objectives = [gridops.day_ahead(grid, limits * scale, load, renewable, tol=1e-8, max_iter=50000).objective
                      for scale in (1.0, 1.2, 1.5, 2.0, 3.0)]

        assert all(b <= a + 1e-7 * max(1.0, abs(a)) for a, b in zip(objectives, objectives[1:]))

    def test_should_respect_ramp_limits(self, two_bus_network):
        grid = GridSpec(two_bus_network, (
            Generator(1, 1, 'controllable', c1=10.0, c2=0.01, pmax=200.0, ramp_down=-20.0, ramp_up=20.0),
            Generator(2, 2, 'controllable', c1=40.0, c2=0.02, pmax=200.0),
        ), 1)

        solution = gridops.day_ahead(grid, np.full((1, 2), 200.0), [[0.0, 50.0], [0.0, 100.0]], np.zeros((2, 0)))

        assert solution.p[:, 0] == pytest.approx([50.0, 70.0], abs=1e-5)
        assert solution.p[1, 1] == pytest.approx(30.0, abs=1e-5)

    def test_should_satisfy_its_own_constraints(self, triangle_grid):
        day = triangle_day(hours=6)
        limits = np.full((3, 6), 60.0)

        solution = gridops.day_ahead(triangle_grid, limits, day.load_forecast, day.renew_avail)

        assert gridops.check_dispatch(triangle_grid, solution, limits, day.load_forecast, day.renew_avail) < 1e-5
        assert (solution.curtail >= -1e-9).all()

    def test_should_name_the_infeasible_hour(self, two_bus_grid):
        loads = [[0.0, 100.0], [0.0, 500.0], [0.0, 100.0]]

        with pytest.raises(Infeasible) as e:
            gridops.day_ahead(two_bus_grid, np.full((1, 3), 500.0), loads, np.zeros((3, 0)))

        assert e.value.stage == 'day-ahead'
        assert e.value.hour == 2

    def test_should_reject_non_positive_limits(self, two_bus_grid):
        with pytest.raises(ValidationError):
            gridops.day_ahead(two_bus_grid, [[0.0]], [[0.0, 100.0]], np.zeros((1, 0)))


class TestRealTime:
    def test_should_redispatch_around_an_overestimated_limit(self, two_bus_grid):
        report = gridops.operate_day(two_bus_grid, two_bus_day(50.0, 100.0), [[200.0]])
        row = report.hours.iloc[0]

        assert row['up_rd_mw'] == pytest.approx(50.0, abs=1e-4)
        assert row['down_rd_mw'] == pytest.approx(50.0, abs=1e-4)
        assert row['up_rd_cost'] == pytest.approx(6000.0, abs=1e-2)
        assert row['down_rd_cost'] == pytest.approx(-250.0, abs=1e-2)
        assert row['da_cost'] == pytest.approx(1100.0, abs=1e-2)
        assert row['rd_cost'] == pytest.approx(5725.0, abs=1e-2)
        assert row['total_cost'] == pytest.approx(6825.0, abs=1e-2)
        assert report.binding_hours == 1

    def test_should_count_only_hours_with_a_flow_at_its_true_limit(self, two_bus_grid):
        slack = gridops.operate_day(two_bus_grid, two_bus_day(200.0, 100.0, hours=2), [[200.0, 200.0]])
        tight = gridops.operate_day(two_bus_grid, two_bus_day(50.0, 100.0, hours=2), [[200.0, 50.0]])

        assert slack.binding_hours == 0
        assert tight.binding_hours == 2

    def test_should_not_redispatch_with_perfect_information(self, triangle_grid):
        day = triangle_day()

        report = gridops.operate_day(triangle_grid, day, day.true_dlr, oracle=True)

        assert np.abs(report.hours['rd_cost']).max() < 1e-4
        assert np.abs(report.hours['up_rd_mw']).max() < 1e-4
        assert report.hours['total_cost'].to_numpy() == pytest.approx(report.hours['da_cost'].to_numpy(), abs=1e-4)

    def test_should_buy_energy_when_load_is_under_forecast(self, two_bus_grid):
        day = two_bus_day(200.0, 120.0, hours=2, forecast=100.0)

        report = gridops.operate_day(two_bus_grid, day, [[200.0, 200.0]])

        assert report.hours['up_rd_mw'].to_numpy() == pytest.approx([20.0, 20.0], abs=1e-4)
        assert (report.hours['rd_cost'] > 0).all()
        assert report.mean_true_load_mw == 120.0
        assert report.mean_forecast_load_mw == 100.0

    def test_should_keep_redispatch_feasible(self, triangle_grid):
        day = triangle_day()
        da = gridops.day_ahead(triangle_grid, day.true_dlr * 1.5, day.load_forecast, day.renew_avail)

        rt = gridops.real_time(triangle_grid, day.true_dlr[:, 0], day.load_true[0], da, 0, da.p[0],
                               day.renew_avail[0])

        violation = gridops.check_redispatch(triangle_grid, rt, day.true_dlr[:, 0], day.load_true[0], da.p[0],
                                             da.p[0], day.renew_avail[0])
        assert violation < 1e-5

    def test_should_name_the_real_time_hour(self, two_bus_grid):
        day = two_bus_day(200.0, 500.0, hours=2, forecast=100.0)

        with pytest.raises(Infeasible) as e:
            gridops.operate_day(two_bus_grid, day, np.full((1, 2), 200.0))

        assert e.value.stage == 'real-time'
        assert e.value.hour == 1


class TestOperationReport:
    def test_should_summarise_every_cost_column(self, triangle_grid):
        day = triangle_day()
        report = gridops.operate_horizon(triangle_grid, [day, day], [day.true_dlr, day.true_dlr * 1.2])

        summary = report.summary(beta=0.25)

        assert summary['hours'] == 8
        assert set(constants.operation_report_columns[1:]) <= set(summary)
        assert summary['cvar_cost'] >= summary['total_cost']
        assert list(report.hours.columns[:2]) == ['date', 'hour']

    def test_should_require_limits_for_every_day(self, triangle_grid):
        with pytest.raises(ValidationError):
            gridops.operate_horizon(triangle_grid, [triangle_day()], [])
