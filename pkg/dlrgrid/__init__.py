__version__ = '0.1.0'

from dlrgrid.exceptions import (DlrGridError, Infeasible, IterationLimit, MissingArtifact, MissingData,
                                NoCoolingMargin)
from dlrgrid.schema import ValidationError

from dlrgrid.netgraph import (BusNetwork, LineGraphAdjacency, build_network, identity_adjacency, khop_adjacency,
                              line_graph, read_network)
from dlrgrid.thermal import (CONDUCTOR_LIBRARY, ConductorSpec, LineWeather, RatingSeries, SlrAssumptions,
                             WeatherSeries, ampacity, rate_lines, simulate_weather, static_rating)
from dlrgrid.forecaster import (ForecastModel, QuantileForecast, TrainConfig, assemble_features, build_dataset,
                                forecast_day_ahead, load_model, pinball_loss, save_model, train)
from dlrgrid.metrics import (IntervalSet, ace, coverage, cvar, evaluate_intervals, interval_score, pinaw,
                             quantile_score)
from dlrgrid.qpsolver import QpProblem, QpSolution, solve_qp
from dlrgrid.gridops import GridSpec, day_ahead, operate_day, operate_horizon, real_time
from dlrgrid.config import load_config
