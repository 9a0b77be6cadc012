"""
Quality of probabilistic rating forecasts and tail statistics of operating costs.

Interval and quantile metrics are normalised per line by the line's mean true
rating over the evaluation window and expressed in percent.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from dlrgrid import constants
from dlrgrid.exceptions import EmptyCosts, ShapeMismatch, ZeroNormalizer
from dlrgrid.forecaster import QuantileForecast, pinball_elements
from dlrgrid.schema import ValidationError


@dataclass(frozen=True)
class IntervalSet:
    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    def __post_init__(self):
        if np.shape(self.lower) != np.shape(self.upper):
            raise ShapeMismatch('interval', np.shape(self.lower), np.shape(self.upper))
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f'Invalid interval set. "alpha" must lie in (0, 1), but was {self.alpha}')
        if (np.asarray(self.lower) > np.asarray(self.upper)).any():
            raise ValidationError('Invalid interval set. Lower bounds must not exceed upper bounds')

    @property
    def width(self):
        return np.asarray(self.upper) - np.asarray(self.lower)

    @classmethod
    def from_forecast(cls, forecast: QuantileForecast, coverage):
        lower_level, upper_level = constants.prediction_intervals[coverage]
        return cls(forecast.at(lower_level), forecast.at(upper_level), round(1.0 - coverage, 10))


def _check_shape(intervals, truth):
    if np.shape(intervals.lower) != np.shape(truth):
        raise ShapeMismatch('interval metric', np.shape(intervals.lower), np.shape(truth))


def line_normalizer(truth):
    """Mean true rating of each line (rows) over the evaluation window (columns)."""
    return np.asarray(truth, dtype=float).reshape(np.shape(truth)[0], -1).mean(axis=1)


def _per_line(values, normalizer):
    normalizer = np.asarray(normalizer, dtype=float)
    for i, value in enumerate(normalizer):
        if not value > 0:
            raise ZeroNormalizer(i)
    return values / normalizer.reshape((-1,) + (1,) * (np.ndim(values) - 1))


def coverage(intervals: IntervalSet, truth):
    _check_shape(intervals, truth)
    truth = np.asarray(truth)
    return float(np.mean((intervals.lower <= truth) & (truth <= intervals.upper)))


def ace(intervals: IntervalSet, truth):
    """Absolute coverage error in percentage points; both bounds are inclusive."""
    return abs(coverage(intervals, truth) - (1.0 - intervals.alpha)) * 100.0


def pinaw(intervals: IntervalSet, normalizer):
    return float(np.mean(_per_line(intervals.width, normalizer))) * 100.0


def interval_score_points(intervals: IntervalSet, truth):
    """Per-point score: ``-2 alpha width`` minus ``4`` times any distance outside the interval."""
    _check_shape(intervals, truth)
    truth = np.asarray(truth, dtype=float)
    score = -2.0 * intervals.alpha * intervals.width
    score = score - 4.0 * np.maximum(intervals.lower - truth, 0.0)
    score = score - 4.0 * np.maximum(truth - intervals.upper, 0.0)
    return score


def interval_score(intervals: IntervalSet, truth, normalizer=None):
    """Mean normalised interval score in percent; higher is better."""
    normalizer = line_normalizer(truth) if normalizer is None else normalizer
    return float(np.mean(_per_line(interval_score_points(intervals, truth), normalizer))) * 100.0


def quantile_score(forecast: QuantileForecast, truth, normalizer=None):
    normalizer = line_normalizer(truth) if normalizer is None else normalizer
    elements = pinball_elements(forecast.values, truth, forecast.levels)
    return float(np.mean(_per_line(elements, normalizer))) * 100.0


def per_line_quantile_score(forecast: QuantileForecast, truth, normalizer=None):
    normalizer = line_normalizer(truth) if normalizer is None else normalizer
    elements = _per_line(pinball_elements(forecast.values, truth, forecast.levels), normalizer)
    return pd.DataFrame({
        'line_id': list(forecast.line_ids),
        'quantile_score': elements.reshape(len(forecast.line_ids), -1).mean(axis=1) * 100.0,
    })


def cvar(hourly_costs, beta=0.10):
    """Mean of the worst ``ceil(beta * N)`` costs."""
    costs = np.sort(np.asarray(hourly_costs, dtype=float).reshape(-1))[::-1]
    if costs.size == 0:
        raise EmptyCosts()
    if not 0.0 < beta < 1.0:
        raise ValidationError(f'Invalid CVaR level. "beta" must lie in (0, 1), but was {beta}')
    tail = max(1, int(math.ceil(beta * costs.size - 1e-9)))
    return float(costs[:tail].mean())


def percentage_error(limits, truth):
    truth = np.asarray(truth, dtype=float)
    return (np.asarray(limits, dtype=float) - truth) / truth * 100.0


def overestimation_rate(limits, truth):
    """Share of points, in percent, where a limit exceeds the true rating."""
    limits = np.broadcast_to(np.asarray(limits, dtype=float), np.shape(truth))
    return float(np.mean(limits > np.asarray(truth))) * 100.0


def evaluate_intervals(forecast: QuantileForecast, truth, pi_levels=tuple(constants.prediction_intervals)):
    """Interval and quantile metrics per nominal coverage level."""
    normalizer = line_normalizer(truth)
    qs = quantile_score(forecast, truth, normalizer)
    report = {}
    for level in pi_levels:
        intervals = IntervalSet.from_forecast(forecast, level)
        report[f'{int(round(level * 100))}%'] = {
            'ace': ace(intervals, truth),
            'pinaw': pinaw(intervals, normalizer),
            'interval_score': interval_score(intervals, truth, normalizer),
            'quantile_score': qs,
        }
    return report
