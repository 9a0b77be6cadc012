import numpy as np
import pytest

from dlrgrid import metrics
from dlrgrid.exceptions import EmptyCosts, ShapeMismatch, ZeroNormalizer
from dlrgrid.forecaster import QuantileForecast
from dlrgrid.metrics import IntervalSet
from dlrgrid.schema import ValidationError

LEVELS = (0.01, 0.05, 0.1, 0.5, 0.9, 0.95, 0.99)


def random_case(seed, lines=4, hours=24):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(100.0, 300.0, size=(lines, hours))
    spread = np.sort(rng.normal(0.0, 30.0, size=(lines, hours, len(LEVELS))), axis=-1)
    forecast = QuantileForecast(tuple(range(1, lines + 1)), LEVELS, truth[..., None] + spread + rng.normal(0, 10))
    return forecast, truth


def loop_interval_metrics(lower, upper, truth, alpha):
    lines, hours = truth.shape
    covered, width, score = 0, 0.0, 0.0
    for i in range(lines):
        normalizer = truth[i].mean()
        for t in range(hours):
            l, u, y = lower[i, t], upper[i, t], truth[i, t]
            covered += int(l <= y <= u)
            width += (u - l) / normalizer
            point = -2 * alpha * (u - l)
            if y < l:
                point -= 4 * (l - y)
            if y > u:
                point -= 4 * (y - u)
            score += point / normalizer
    count = lines * hours
    return abs(covered / count - (1 - alpha)) * 100, width / count * 100, score / count * 100


def loop_quantile_score(forecast, truth):
    total, count = 0.0, 0
    for i in range(truth.shape[0]):
        normalizer = truth[i].mean()
        for t in range(truth.shape[1]):
            for q, level in enumerate(forecast.levels):
                diff = truth[i, t] - forecast.values[i, t, q]
                total += (level * diff if diff >= 0 else (level - 1) * diff) / normalizer
                count += 1
    return total / count * 100


class TestIntervalMetrics:
    def test_should_score_a_hand_computed_case(self):
        truth = np.array([[100.0, 100.0]])
        intervals = IntervalSet(np.array([[90.0, 110.0]]), np.array([[110.0, 120.0]]), 0.2)

        assert metrics.coverage(intervals, truth) == 0.5
        assert metrics.ace(intervals, truth) == pytest.approx(30.0)
        assert metrics.pinaw(intervals, [100.0]) == pytest.approx(15.0)
        assert metrics.interval_score(intervals, truth) == pytest.approx(-26.0)

    def test_should_count_bounds_as_covered(self):
        truth = np.array([[100.0, 120.0]])
        intervals = IntervalSet(np.array([[100.0, 90.0]]), np.array([[110.0, 120.0]]), 0.1)

        assert metrics.coverage(intervals, truth) == 1.0
        assert (metrics.interval_score_points(intervals, truth) == -0.2 * intervals.width).all()

    @pytest.mark.parametrize('seed', range(5))
    def test_should_match_loop_oracles(self, seed):
        forecast, truth = random_case(seed)
        for level, (low, high) in [(0.8, (0.1, 0.9)), (0.9, (0.05, 0.95)), (0.98, (0.01, 0.99))]:
            intervals = IntervalSet.from_forecast(forecast, level)
            expected = loop_interval_metrics(forecast.at(low), forecast.at(high), truth, round(1 - level, 10))

            assert metrics.ace(intervals, truth) == pytest.approx(expected[0])
            assert metrics.pinaw(intervals, metrics.line_normalizer(truth)) == pytest.approx(expected[1])
            assert metrics.interval_score(intervals, truth) == pytest.approx(expected[2])

        assert metrics.quantile_score(forecast, truth) == pytest.approx(loop_quantile_score(forecast, truth))

    def test_should_reject_crossed_intervals(self):
        with pytest.raises(ValidationError):
            IntervalSet(np.array([2.0]), np.array([1.0]), 0.1)

    def test_should_reject_mismatched_truth(self):
        intervals = IntervalSet(np.zeros((2, 24)), np.ones((2, 24)), 0.1)

        with pytest.raises(ShapeMismatch):
            metrics.ace(intervals, np.zeros((3, 24)))

    def test_should_reject_non_positive_normalizers(self):
        intervals = IntervalSet(np.zeros((2, 24)), np.ones((2, 24)), 0.1)

        with pytest.raises(ZeroNormalizer) as e:
            metrics.pinaw(intervals, [100.0, 0.0])

        assert e.value.line_index == 1


class TestEvaluateIntervals:
    def test_should_report_every_coverage_level(self):
        forecast, truth = random_case(11)

        report = metrics.evaluate_intervals(forecast, truth)

        assert sorted(report) == ['80%', '90%', '98%']
        assert set(report['90%']) == {'ace', 'pinaw', 'interval_score', 'quantile_score'}
        assert report['80%']['quantile_score'] == report['98%']['quantile_score']
        assert report['80%']['pinaw'] < report['98%']['pinaw']

    def test_should_score_each_line(self):
        forecast, truth = random_case(12, lines=3)

        frame = metrics.per_line_quantile_score(forecast, truth)

        assert frame['line_id'].tolist() == [1, 2, 3]
        assert frame['quantile_score'].mean() == pytest.approx(metrics.quantile_score(forecast, truth))


class TestCostStatistics:
    def test_should_average_the_worst_tail(self):
        costs = np.arange(1.0, 11.0)

        assert metrics.cvar(costs, 0.1) == 10.0
        assert metrics.cvar(costs, 0.25) == 9.0
        assert metrics.cvar(costs, 0.3) == 9.0

    def test_should_match_a_sorting_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            costs = rng.gamma(2.0, 1000.0, size=int(rng.integers(1, 200)))
            beta = rng.uniform(0.01, 0.5)
            tail = max(1, int(np.ceil(beta * costs.size - 1e-9)))

            assert metrics.cvar(costs, beta) == pytest.approx(np.mean(sorted(costs, reverse=True)[:tail]))
            assert metrics.cvar(costs, beta) >= np.mean(costs) - 1e-9

    def test_should_raise_without_costs(self):
        with pytest.raises(EmptyCosts):
            metrics.cvar([])

    def test_should_reject_invalid_tail_levels(self):
        with pytest.raises(ValidationError):
            metrics.cvar([1.0, 2.0], beta=1.0)

    def test_should_measure_overestimation(self):
        truth = np.array([[100.0, 200.0], [150.0, 150.0]])

        assert metrics.overestimation_rate(160.0, truth) == 50.0
        assert metrics.percentage_error(np.array([110.0]), np.array([100.0]))[0] == pytest.approx(10.0)
