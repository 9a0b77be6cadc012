"""
Day-ahead DC optimal power flow and hourly real-time redispatch.

Day-ahead schedules controllable generation, renewable curtailment and bus angles
for 24 hours in one QP, with forecast line limits and forecast load. Real time
then walks the day hour by hour: with the true rating and true load it buys
upward (``r_plus``) or sells back downward (``r_minus``) energy around the
schedule, ramping from the previous hour's final dispatch.

Costs per hour:

- DA cost: ``c2 p^2 + c1 p`` of the schedule
- RD cost: the real-time objective ``c2 (p + r+ - r-)^2 + c1 p + c+ r+ - c- r-``
  minus the DA cost of the same hour; its up/down parts are ``c+ r+`` and ``-c- r-``
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse

from dlrgrid import constants
from dlrgrid.exceptions import Infeasible
from dlrgrid.metrics import cvar
from dlrgrid.netgraph import BusNetwork
from dlrgrid.qpsolver import QpProblem, solve_qp
from dlrgrid.schema import ValidationError
from dlrgrid.thermal import ConductorSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Generator:
    gen_id: int
    bus: int
    kind: str
    c1: float = 0.0
    c2: float = 0.0
    pmin: float = 0.0
    pmax: float = 0.0
    ramp_down: float = None
    ramp_up: float = None
    c_plus: float = None
    c_minus: float = None
    capacity_factor: float = None

    @property
    def controllable(self):
        return self.kind == 'controllable'


def _complete_generator(generator: Generator):
    """Fill the price and ramp defaults: c+ = 3 c1, c- = 0.5 c1, ramps span the whole range."""
    values = dict(generator.__dict__)
    if generator.controllable:
        values['c_plus'] = 3.0 * generator.c1 if generator.c_plus is None else generator.c_plus
        values['c_minus'] = 0.5 * generator.c1 if generator.c_minus is None else generator.c_minus
    else:
        values['c_plus'] = values['c_minus'] = 0.0
    values['ramp_down'] = -generator.pmax if generator.ramp_down is None else generator.ramp_down
    values['ramp_up'] = generator.pmax if generator.ramp_up is None else generator.ramp_up
    return Generator(**values)


@dataclass(frozen=True)
class GridSpec:
    network: BusNetwork
    generators: tuple
    reference_bus: int
    base_mva: float = 100.0
    peak_loads: dict = field(default_factory=dict)
    conductors: dict = field(default_factory=dict)
    angle_limit_rad: float = None

    def __post_init__(self):
        object.__setattr__(self, 'generators', tuple(_complete_generator(g) for g in self.generators))
        if self.reference_bus not in self.network.bus_ids:
            raise ValidationError(f'Invalid grid. Reference bus {self.reference_bus} is not in the network')
        seen = set()
        for g in self.generators:
            if g.gen_id in seen:
                raise ValidationError(f'Invalid generator {g.gen_id}. The id is declared twice')
            seen.add(g.gen_id)
            if g.bus not in self.network.bus_ids:
                raise ValidationError(f'Invalid generator {g.gen_id}. Bus {g.bus} is not in the network')
            if g.kind not in constants.generator_kind_list:
                raise ValidationError(f'Invalid generator {g.gen_id}. Unknown kind "{g.kind}"')
            if g.pmin > g.pmax or g.c2 < 0:
                raise ValidationError(f'Invalid generator {g.gen_id}. Needs pmin <= pmax and c2 >= 0')
            if not g.ramp_down <= 0 <= g.ramp_up:
                raise ValidationError(f'Invalid generator {g.gen_id}. Needs ramp_down <= 0 <= ramp_up')
            if g.controllable and not g.c_plus > g.c1 > g.c_minus:
                raise ValidationError(f'Invalid generator {g.gen_id}. Prices must satisfy c_plus > c1 > c_minus')
            if not g.controllable and (g.c1 != 0 or g.c2 != 0 or g.pmin != 0):
                raise ValidationError(f'Invalid generator {g.gen_id}. Renewables need c1 = c2 = pmin = 0')
        for bus_id in self.peak_loads:
            if bus_id not in self.network.bus_ids:
                raise ValidationError(f'Invalid load. Bus {bus_id} is not in the network')

    @property
    def controllable(self):
        return [g for g in self.generators if g.controllable]

    @property
    def renewables(self):
        return [g for g in self.generators if not g.controllable]

    def _bus_map(self, generators):
        rows = [self.network.bus_index(g.bus) for g in generators]
        return sparse.csr_matrix((np.ones(len(rows)), (rows, np.arange(len(rows)))),
                                 shape=(len(self.network.buses), len(rows)))

    def controllable_map(self):
        return self._bus_map(self.controllable)

    def renewable_map(self):
        return self._bus_map(self.renewables)

    def flow_matrix(self):
        """Line flows in MW as ``flow_matrix() @ theta``."""
        susceptance = np.array([line.susceptance_pu for line in self.network.lines]) * self.base_mva
        return (sparse.diags(susceptance) @ self.network.incidence().T).tocsr()

    def susceptance_matrix(self):
        return (self.network.incidence() @ self.flow_matrix()).tocsr()

    def gen_values(self, name):
        """One attribute of every controllable generator as an array."""
        return np.array([getattr(g, name) for g in self.controllable], dtype=float)


def grid_from_document(document, network: BusNetwork):
    conductors = {name: ConductorSpec(name=name, **spec) for name, spec in document.get('conductors', {}).items()}
    generators = [Generator(**g) for g in document['generators']]
    return GridSpec(
        network=network,
        generators=tuple(generators),
        reference_bus=document['reference_bus'],
        base_mva=document.get('base_mva', 100.0),
        peak_loads={load['bus']: load['peak_mw'] for load in document['loads']},
        conductors=conductors,
        angle_limit_rad=document.get('angle_limits_rad'),
    )


@dataclass
class DispatchSolution:
    p: np.ndarray
    curtail: np.ndarray
    theta: np.ndarray
    flows: np.ndarray
    objective: float
    hour_cost: np.ndarray
    iterations: int = 0


@dataclass
class RedispatchSolution:
    r_plus: np.ndarray
    r_minus: np.ndarray
    p_final: np.ndarray
    curtail: np.ndarray
    theta: np.ndarray
    flows: np.ndarray
    hour_cost: float
    up_cost: float
    down_cost: float
    rd_cost: float


def _angle_bounds(grid: GridSpec, hours):
    limit = np.inf if grid.angle_limit_rad is None else grid.angle_limit_rad
    lower = np.full((hours, len(grid.network.buses)), -limit)
    upper = np.full((hours, len(grid.network.buses)), limit)
    ref = grid.network.bus_index(grid.reference_bus)
    lower[:, ref] = upper[:, ref] = 0.0
    return lower.reshape(-1), upper.reshape(-1)


def _check_limits(line_limits, lines, hours):
    line_limits = np.asarray(line_limits, dtype=float)
    if line_limits.shape != (lines, hours):
        raise ValidationError(f'Invalid line limits. Expected shape {(lines, hours)}, got {line_limits.shape}')
    if not (line_limits > 0).all():
        raise ValidationError('Invalid line limits. Every limit must be positive')
    return line_limits


def day_ahead_problem(grid: GridSpec, line_limits, load_forecast, renew_avail):
    """QP over ``[p (T x G) | curtail (T x R) | theta (T x N)]`` in row-major hour order."""
    load_forecast = np.asarray(load_forecast, dtype=float)
    hours = load_forecast.shape[0]
    controllable, renewables = grid.controllable, grid.renewables
    n_g, n_r, n_b = len(controllable), len(renewables), len(grid.network.buses)
    line_limits = _check_limits(line_limits, len(grid.network.lines), hours)
    renew_avail = np.asarray(renew_avail, dtype=float).reshape(hours, n_r)
    eye = sparse.identity(hours, format='csr')

    balance = sparse.hstack([
        sparse.kron(eye, grid.controllable_map()),
        -sparse.kron(eye, grid.renewable_map()),
        -sparse.kron(eye, grid.susceptance_matrix()),
    ], format='csr')
    balance_rhs = (load_forecast - renew_avail @ grid.renewable_map().T.toarray()).reshape(-1)

    flows = sparse.hstack([sparse.csr_matrix((hours * len(grid.network.lines), hours * (n_g + n_r))),
                           sparse.kron(eye, grid.flow_matrix())], format='csr')
    rows, lower_rows, upper_rows = [flows], [-line_limits.T.reshape(-1)], [line_limits.T.reshape(-1)]
    if hours > 1 and n_g:
        difference = sparse.diags([-np.ones(hours - 1), np.ones(hours - 1)], [0, 1], shape=(hours - 1, hours))
        ramp = sparse.hstack([sparse.kron(difference, sparse.identity(n_g)),
                              sparse.csr_matrix(((hours - 1) * n_g, hours * (n_r + n_b)))], format='csr')
        rows.append(ramp)
        lower_rows.append(np.tile(grid.gen_values('ramp_down'), hours - 1))
        upper_rows.append(np.tile(grid.gen_values('ramp_up'), hours - 1))

    theta_lower, theta_upper = _angle_bounds(grid, hours)
    return QpProblem(
        quadratic=np.concatenate([np.tile(2.0 * grid.gen_values('c2'), hours), np.zeros(hours * (n_r + n_b))]),
        linear=np.concatenate([np.tile(grid.gen_values('c1'), hours), np.zeros(hours * (n_r + n_b))]),
        eq_matrix=balance,
        eq_rhs=balance_rhs,
        ineq_matrix=sparse.vstack(rows, format='csr'),
        ineq_lower=np.concatenate(lower_rows),
        ineq_upper=np.concatenate(upper_rows),
        lower=np.concatenate([np.tile(grid.gen_values('pmin'), hours), np.zeros(hours * n_r), theta_lower]),
        upper=np.concatenate([np.tile(grid.gen_values('pmax'), hours), renew_avail.reshape(-1), theta_upper]),
    )


def hour_costs(grid: GridSpec, p):
    c1, c2 = grid.gen_values('c1'), grid.gen_values('c2')
    return np.atleast_2d(p) @ c1 + np.atleast_2d(p) ** 2 @ c2


def _infeasible_hour(grid, line_limits, load_forecast, renew_avail, tol, max_iter):
    """First hour whose single-hour problem (no ramping) is infeasible, if any."""
    for t in range(np.shape(load_forecast)[0]):
        problem = day_ahead_problem(grid, np.asarray(line_limits)[:, t:t + 1], load_forecast[t:t + 1],
                                    np.asarray(renew_avail)[t:t + 1])
        try:
            solve_qp(problem, tol, max_iter)
        except Infeasible:
            return t + 1
    return None


def day_ahead(grid: GridSpec, line_limits, load_forecast, renew_avail, tol=1e-6, max_iter=20000):
    """Multi-period DC-OPF over the day; ``line_limits`` is lines x hours, loads are hours x buses."""
    load_forecast = np.asarray(load_forecast, dtype=float)
    hours = load_forecast.shape[0]
    problem = day_ahead_problem(grid, line_limits, load_forecast, renew_avail)
    try:
        solution = solve_qp(problem, tol, max_iter)
    except Infeasible as e:
        hour = _infeasible_hour(grid, line_limits, load_forecast, renew_avail, tol, max_iter)
        raise Infeasible('day-ahead', hour, e.detail) from e
    n_g, n_r = len(grid.controllable), len(grid.renewables)
    x = solution.x
    p = x[:hours * n_g].reshape(hours, n_g)
    curtail = x[hours * n_g:hours * (n_g + n_r)].reshape(hours, n_r)
    theta = x[hours * (n_g + n_r):].reshape(hours, -1)
    logger.debug("Day-ahead solved in %d iterations, objective %.3f", solution.iterations, solution.objective)
    return DispatchSolution(p, curtail, theta, theta @ grid.flow_matrix().T.toarray(), solution.objective,
                            hour_costs(grid, p), solution.iterations)


def real_time_problem(grid: GridSpec, true_limits, true_load, scheduled, prev_final, renew_avail):
    """QP over ``[p_final | r_plus | r_minus | curtail | theta]`` for one hour."""
    controllable = grid.controllable
    n_g, n_r, n_b = len(controllable), len(grid.renewables), len(grid.network.buses)
    true_limits = _check_limits(np.reshape(true_limits, (-1, 1)), len(grid.network.lines), 1).reshape(-1)
    scheduled = np.asarray(scheduled, dtype=float)
    renew_avail = np.asarray(renew_avail, dtype=float).reshape(n_r)
    pmin, pmax = grid.gen_values('pmin'), grid.gen_values('pmax')
    eye = sparse.identity(n_g, format='csr')
    zeros_rt = sparse.csr_matrix((n_g, n_r + n_b))

    schedule_link = sparse.hstack([eye, -eye, eye, zeros_rt], format='csr')
    balance = sparse.hstack([grid.controllable_map(), sparse.csr_matrix((n_b, 2 * n_g)),
                             -grid.renewable_map(), -grid.susceptance_matrix()], format='csr')
    balance_rhs = np.asarray(true_load, dtype=float) - grid.renewable_map() @ renew_avail

    ramp = sparse.hstack([eye, sparse.csr_matrix((n_g, 2 * n_g + n_r + n_b))], format='csr')
    flows = sparse.hstack([sparse.csr_matrix((len(grid.network.lines), 3 * n_g + n_r)), grid.flow_matrix()],
                          format='csr')
    theta_lower, theta_upper = _angle_bounds(grid, 1)
    return QpProblem(
        quadratic=np.concatenate([2.0 * grid.gen_values('c2'), np.zeros(2 * n_g + n_r + n_b)]),
        linear=np.concatenate([np.zeros(n_g), grid.gen_values('c_plus'), -grid.gen_values('c_minus'),
                               np.zeros(n_r + n_b)]),
        eq_matrix=sparse.vstack([schedule_link, balance], format='csr'),
        eq_rhs=np.concatenate([scheduled, balance_rhs]),
        ineq_matrix=sparse.vstack([ramp, flows], format='csr'),
        ineq_lower=np.concatenate([prev_final + grid.gen_values('ramp_down'), -true_limits]),
        ineq_upper=np.concatenate([prev_final + grid.gen_values('ramp_up'), true_limits]),
        lower=np.concatenate([pmin, np.zeros(2 * n_g + n_r), theta_lower]),
        upper=np.concatenate([pmax, np.maximum(pmax - scheduled, 0.0), np.maximum(scheduled - pmin, 0.0),
                              renew_avail, theta_upper]),
    )


def real_time(grid: GridSpec, true_limits, true_load, da: DispatchSolution, hour, prev_final, renew_avail,
              tol=1e-6, max_iter=20000):
    """Redispatch for ``hour`` (0-based) of the day."""
    scheduled = da.p[hour]
    problem = real_time_problem(grid, true_limits, true_load, scheduled, np.asarray(prev_final, dtype=float),
                                renew_avail)
    try:
        solution = solve_qp(problem, tol, max_iter)
    except Infeasible as e:
        raise Infeasible('real-time', hour + 1, e.detail) from e
    n_g, n_r = len(grid.controllable), len(grid.renewables)
    x = solution.x
    p_final, r_plus, r_minus = x[:n_g], x[n_g:2 * n_g], x[2 * n_g:3 * n_g]
    curtail, theta = x[3 * n_g:3 * n_g + n_r], x[3 * n_g + n_r:]
    c1, c2 = grid.gen_values('c1'), grid.gen_values('c2')
    up_cost = float(grid.gen_values('c_plus') @ r_plus)
    down_cost = -float(grid.gen_values('c_minus') @ r_minus)
    hour_cost = float(c2 @ p_final ** 2 + c1 @ scheduled) + up_cost + down_cost
    return RedispatchSolution(r_plus, r_minus, p_final, curtail, theta, grid.flow_matrix() @ theta, hour_cost,
                              up_cost, down_cost, hour_cost - float(da.hour_cost[hour]))


def check_dispatch(grid: GridSpec, solution: DispatchSolution, line_limits, load_forecast, renew_avail):
    """Worst constraint violation of a day-ahead solution, evaluated from its own variables."""
    flows = solution.theta @ grid.flow_matrix().T.toarray()
    injection = solution.p @ grid.controllable_map().T.toarray() + \
        (np.asarray(renew_avail) - solution.curtail) @ grid.renewable_map().T.toarray()
    withdrawal = flows @ grid.network.incidence().T.toarray()
    violations = [
        np.abs(injection - np.asarray(load_forecast) - withdrawal).max(),
        np.maximum(np.abs(flows) - np.asarray(line_limits).T, 0.0).max(),
        np.maximum(grid.gen_values('pmin') - solution.p, 0.0).max(),
        np.maximum(solution.p - grid.gen_values('pmax'), 0.0).max(),
        np.maximum(-solution.curtail, 0.0).max(initial=0.0),
        np.maximum(solution.curtail - np.asarray(renew_avail), 0.0).max(initial=0.0),
        np.abs(solution.theta[:, grid.network.bus_index(grid.reference_bus)]).max(),
    ]
    if solution.p.shape[0] > 1:
        steps = np.diff(solution.p, axis=0)
        violations.append(np.maximum(grid.gen_values('ramp_down') - steps, 0.0).max(initial=0.0))
        violations.append(np.maximum(steps - grid.gen_values('ramp_up'), 0.0).max(initial=0.0))
    return float(max(violations))


def check_redispatch(grid: GridSpec, solution: RedispatchSolution, true_limits, true_load, scheduled, prev_final,
                     renew_avail):
    flows = grid.flow_matrix() @ solution.theta
    injection = grid.controllable_map() @ solution.p_final + \
        grid.renewable_map() @ (np.asarray(renew_avail) - solution.curtail)
    step = solution.p_final - np.asarray(prev_final)
    violations = [
        np.abs(injection - np.asarray(true_load) - grid.network.incidence() @ flows).max(),
        np.abs(solution.p_final - (np.asarray(scheduled) + solution.r_plus - solution.r_minus)).max(initial=0.0),
        np.maximum(np.abs(flows) - np.asarray(true_limits), 0.0).max(),
        np.maximum(grid.gen_values('pmin') - solution.p_final, 0.0).max(initial=0.0),
        np.maximum(solution.p_final - grid.gen_values('pmax'), 0.0).max(initial=0.0),
        np.maximum(-solution.r_plus, 0.0).max(initial=0.0),
        np.maximum(-solution.r_minus, 0.0).max(initial=0.0),
        np.maximum(grid.gen_values('ramp_down') - step, 0.0).max(initial=0.0),
        np.maximum(step - grid.gen_values('ramp_up'), 0.0).max(initial=0.0),
        np.maximum(-solution.curtail, 0.0).max(initial=0.0),
        np.maximum(solution.curtail - np.asarray(renew_avail), 0.0).max(initial=0.0),
    ]
    return float(max(violations))


@dataclass
class DayInputs:
    """One operating day; loads are hours x buses, ratings lines x hours."""
    date: pd.Timestamp
    true_dlr: np.ndarray
    load_forecast: np.ndarray
    load_true: np.ndarray
    renew_avail: np.ndarray


@dataclass
class OperationReport:
    """Hourly costs of one operated day.

    ``binding_hours`` counts hours in which at least one real-time line flow reaches its
    true rating, within the binding tolerance.
    """
    hours: pd.DataFrame
    binding_hours: int
    mean_true_load_mw: float
    mean_forecast_load_mw: float

    @property
    def total_costs(self):
        return self.hours['total_cost'].to_numpy()

    def summary(self, beta=0.1):
        means = self.hours[constants.operation_report_columns[1:]].mean()
        summary = {column: float(value) for column, value in means.items()}
        summary.update({
            'cvar_cost': cvar(self.total_costs, beta),
            'binding_hours': int(self.binding_hours),
            'hours': int(len(self.hours)),
            'mean_true_load_mw': self.mean_true_load_mw,
            'mean_forecast_load_mw': self.mean_forecast_load_mw,
        })
        return summary

    @classmethod
    def concat(cls, reports):
        hours = pd.concat([r.hours for r in reports], ignore_index=True)
        weights = np.array([len(r.hours) for r in reports], dtype=float)
        return cls(
            hours,
            int(np.sum([r.binding_hours for r in reports])),
            float(np.average([r.mean_true_load_mw for r in reports], weights=weights)),
            float(np.average([r.mean_forecast_load_mw for r in reports], weights=weights)),
        )


def operate_day(grid: GridSpec, day: DayInputs, da_limits, oracle=False, tol=1e-6, max_iter=20000,
                binding_tol=1e-6):
    """Day-ahead once, then 24 sequential real-time hours.

    In oracle mode the day-ahead stage sees the true load (the caller passes true
    ratings as ``da_limits``).
    """
    da_load = day.load_true if oracle else day.load_forecast
    da = day_ahead(grid, da_limits, da_load, day.renew_avail, tol, max_iter)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug("Day-ahead worst violation %.2e", check_dispatch(grid, da, da_limits, da_load, day.renew_avail))
    rows = []
    binding = 0
    prev_final = da.p[0]
    for t in range(da.p.shape[0]):
        rt = real_time(grid, day.true_dlr[:, t], day.load_true[t], da, t, prev_final, day.renew_avail[t], tol,
                       max_iter)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("Hour %d real-time worst violation %.2e", t + 1,
                         check_redispatch(grid, rt, day.true_dlr[:, t], day.load_true[t], da.p[t], prev_final,
                                          day.renew_avail[t]))
        prev_final = rt.p_final
        if (np.abs(rt.flows) >= day.true_dlr[:, t] - binding_tol).any():
            binding += 1
        da_cost = float(da.hour_cost[t])
        rows.append({
            'hour': t + 1,
            'da_cost': da_cost,
            'up_rd_mw': float(rt.r_plus.sum()),
            'down_rd_mw': float(rt.r_minus.sum()),
            'up_rd_cost': rt.up_cost,
            'down_rd_cost': rt.down_cost,
            'rd_cost': rt.rd_cost,
            'total_cost': da_cost + rt.rd_cost,
            'da_curtail_mwh': float(da.curtail[t].sum()),
            'rt_curtail_mwh': float(rt.curtail.sum()),
        })
    hours = pd.DataFrame(rows, columns=constants.operation_report_columns)
    if day.date is not None:
        hours.insert(0, 'date', pd.Timestamp(day.date).strftime('%Y-%m-%d'))
    logger.info("Operated %s: DA cost %.1f, RD cost %.1f", day.date, hours['da_cost'].sum(), hours['rd_cost'].sum())
    return OperationReport(hours, binding, float(np.sum(day.load_true, axis=1).mean()),
                           float(np.sum(day.load_forecast, axis=1).mean()))


def operate_horizon(grid: GridSpec, days, da_limits, oracle=False, tol=1e-6, max_iter=20000):
    """Operate every day with its own day-ahead limits (lines x hours each)."""
    if len(days) != len(da_limits):
        raise ValidationError('Invalid operation inputs. One set of day-ahead limits per day is required')
    return OperationReport.concat([operate_day(grid, day, limits, oracle, tol, max_iter)
                                   for day, limits in zip(days, da_limits)])
