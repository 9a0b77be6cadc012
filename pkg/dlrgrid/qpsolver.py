"""
Convex quadratic programs with a diagonal Hessian.

    minimize    1/2 sum_i d_i x_i^2 + q' x
    subject to  A_eq x = b_eq
                l_in <= A_in x <= u_in
                lower <= x <= upper

Solved by operator splitting (ADMM on the stacked constraint set ``l <= A x <= u``
with Ruiz equilibration and adaptive step size). Once the iterates settle, the
active set is guessed from the duals and the reduced KKT system is solved exactly
("polishing"). A solution is only returned together with a KKT certificate.

Dual sign convention: ``y_i > 0`` means the upper bound of row ``i`` is active,
``y_i < 0`` the lower one.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from dlrgrid.exceptions import Infeasible, IterationLimit, ShapeMismatch
from dlrgrid.schema import ValidationError

logger = logging.getLogger(__name__)

RHO_MIN = 1e-6
RHO_MAX = 1e6
RHO_EQ_SCALE = 1e3


def _vector(value, size, default):
    if value is None:
        return np.full(size, default, dtype=float)
    value = np.asarray(value, dtype=float).reshape(-1)
    if value.size != size:
        raise ShapeMismatch('qp vector', (size,), value.shape)
    return value


def _matrix(value, columns):
    if value is None:
        return sparse.csr_matrix((0, columns))
    value = sparse.csr_matrix(value, dtype=float)
    if value.shape[1] != columns:
        raise ShapeMismatch('qp matrix', (value.shape[0], columns), value.shape)
    return value


@dataclass
class QpProblem:
    quadratic: np.ndarray
    linear: np.ndarray
    eq_matrix: object = None
    eq_rhs: np.ndarray = None
    ineq_matrix: object = None
    ineq_lower: np.ndarray = None
    ineq_upper: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.quadratic = np.asarray(self.quadratic, dtype=float).reshape(-1)
        n = self.quadratic.size
        if not (np.isfinite(self.quadratic).all() and (self.quadratic >= 0).all()):
            raise ValidationError('Invalid QP. The quadratic diagonal must be finite and non-negative')
        self.linear = _vector(self.linear, n, 0.0)
        self.eq_matrix = _matrix(self.eq_matrix, n)
        self.eq_rhs = _vector(self.eq_rhs, self.eq_matrix.shape[0], 0.0)
        self.ineq_matrix = _matrix(self.ineq_matrix, n)
        self.ineq_lower = _vector(self.ineq_lower, self.ineq_matrix.shape[0], -np.inf)
        self.ineq_upper = _vector(self.ineq_upper, self.ineq_matrix.shape[0], np.inf)
        self.lower = _vector(self.lower, n, -np.inf)
        self.upper = _vector(self.upper, n, np.inf)
        if (self.lower > self.upper).any() or (self.ineq_lower > self.ineq_upper).any():
            raise Infeasible(detail='a lower bound exceeds its upper bound')

    @property
    def size(self):
        return self.quadratic.size

    @property
    def row_counts(self):
        return self.eq_matrix.shape[0], self.ineq_matrix.shape[0], self.size

    def stacked(self):
        """``(A, l, u)`` with equality rows first, then inequality rows, then variable bounds."""
        matrix = sparse.vstack([self.eq_matrix, self.ineq_matrix, sparse.identity(self.size)], format='csc')
        lower = np.concatenate([self.eq_rhs, self.ineq_lower, self.lower])
        upper = np.concatenate([self.eq_rhs, self.ineq_upper, self.upper])
        return matrix, lower, upper

    def objective(self, x):
        return float(0.5 * np.dot(self.quadratic * x, x) + np.dot(self.linear, x))


@dataclass(frozen=True)
class KktCertificate:
    primal_residual: float
    dual_residual: float
    complementarity_gap: float

    def within(self, tol):
        return max(self.primal_residual, self.dual_residual, self.complementarity_gap) <= tol


def _bound_products(y, ax, lower, upper):
    gaps = np.zeros_like(y)
    up = y > 0
    gaps[up] = y[up] * np.where(np.isfinite(upper[up]), upper[up] - ax[up], np.inf)
    low = y < 0
    gaps[low] = -y[low] * np.where(np.isfinite(lower[low]), ax[low] - lower[low], np.inf)
    return np.abs(gaps)


def kkt_certificate(problem: QpProblem, x, y):
    matrix, lower, upper = problem.stacked()
    ax = matrix @ x
    primal = np.maximum(lower - ax, 0.0) + np.maximum(ax - upper, 0.0)
    dual = problem.quadratic * x + problem.linear + matrix.T @ y
    gap = _bound_products(y, ax, lower, upper)
    return KktCertificate(float(np.max(primal, initial=0.0)), float(np.max(np.abs(dual), initial=0.0)),
                          float(np.max(gap, initial=0.0)))


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    objective: float
    certificate: KktCertificate
    polished: bool
    row_counts: tuple

    @property
    def eq_duals(self):
        return self.y[:self.row_counts[0]]

    @property
    def ineq_duals(self):
        start = self.row_counts[0]
        return self.y[start:start + self.row_counts[1]]

    @property
    def bound_duals(self):
        return self.y[self.row_counts[0] + self.row_counts[1]:]


@dataclass(frozen=True)
class SolverSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-7
    eps_rel: float = 1e-7
    eps_infeasible: float = 1e-7
    scaling_iterations: int = 10
    check_interval: int = 5
    adaptive_rho_interval: int = 25
    polish: bool = True
    polish_threshold: float = 1e-3
    polish_delta: float = 1e-9
    refinement_steps: int = 5


def _limit(values, low=1e-4, high=1e4):
    values = np.where(values < low, 1.0, values)
    return np.minimum(values, high)


def _inf_norm(values):
    return float(np.max(np.abs(values), initial=0.0))


class _Scaling:
    """Ruiz equilibration; scaled data is ``c D P D``, ``c D q``, ``E A D``."""

    def __init__(self, quadratic, linear, matrix, iterations):
        n, m = matrix.shape[1], matrix.shape[0]
        self.d = np.ones(n)
        self.e = np.ones(m)
        self.c = 1.0
        p, q, a = quadratic.copy(), linear.copy(), matrix.tocsc(copy=True)
        for _ in range(iterations):
            column = np.maximum(np.abs(p), abs(a).max(axis=0).toarray().ravel())
            d = 1.0 / np.sqrt(_limit(column))
            row = abs(a).max(axis=1).toarray().ravel()
            e = 1.0 / np.sqrt(_limit(row))
            p = d * d * p
            q = d * q
            a = (sparse.diags(e) @ a @ sparse.diags(d)).tocsc()
            self.d *= d
            self.e *= e
            cost = max(float(np.mean(np.abs(p))), _inf_norm(q))
            gamma = 1.0 / float(_limit(np.array([cost]))[0])
            p = gamma * p
            q = gamma * q
            self.c *= gamma
        self.quadratic, self.linear, self.matrix = p, q, a

    def unscale_x(self, x):
        return self.d * x

    def unscale_y(self, y):
        return self.e * y / self.c

    def unscale_z(self, z):
        return z / self.e


class AdmmSolver:
    def __init__(self, problem: QpProblem, settings: SolverSettings = SolverSettings()):
        self.problem = problem
        self.settings = settings
        matrix, lower, upper = problem.stacked()
        self.matrix, self.lower, self.upper = matrix, lower, upper
        self.scaling = _Scaling(problem.quadratic, problem.linear, matrix, settings.scaling_iterations)
        self.l_bar = self.scaling.e * lower
        self.u_bar = self.scaling.e * upper
        self.equality_rows = lower == upper
        self.free_rows = np.isinf(lower) & np.isinf(upper)
        self.rho = settings.rho
        self._factorize()

    def _rho_vector(self):
        rho = np.full(self.matrix.shape[0], self.rho)
        rho[self.equality_rows] = RHO_EQ_SCALE * self.rho
        rho[self.free_rows] = RHO_MIN
        return rho

    def _factorize(self):
        self.rho_vec = self._rho_vector()
        s = self.scaling
        kkt = sparse.bmat([
            [sparse.diags(s.quadratic + self.settings.sigma), s.matrix.T],
            [s.matrix, sparse.diags(-1.0 / self.rho_vec)],
        ], format='csc')
        self.factor = sla.splu(kkt)

    def _residuals(self, x, z, y):
        """Unscaled primal and dual residuals with their tolerances."""
        s = self.scaling
        ax = s.matrix @ x
        px = s.quadratic * x
        aty = s.matrix.T @ y
        primal = _inf_norm((ax - z) / s.e)
        dual = _inf_norm((px + s.linear + aty) / s.d) / s.c
        eps_primal = self.settings.eps_abs + self.settings.eps_rel * max(_inf_norm(ax / s.e), _inf_norm(z / s.e))
        eps_dual = self.settings.eps_abs + self.settings.eps_rel * max(
            _inf_norm(px / s.d), _inf_norm(aty / s.d), _inf_norm(s.linear / s.d)) / s.c
        scaled_primal = _inf_norm(ax - z) / max(_inf_norm(ax), _inf_norm(z), 1e-12)
        scaled_dual = _inf_norm(px + s.linear + aty) / max(_inf_norm(px), _inf_norm(aty), _inf_norm(s.linear),
                                                          1e-12)
        return primal, dual, eps_primal, eps_dual, scaled_primal, scaled_dual

    def _primal_infeasible(self, delta_y):
        delta_y = self.scaling.unscale_y(delta_y)
        norm = _inf_norm(delta_y)
        if norm <= self.settings.eps_infeasible:
            return False
        delta_y = delta_y / norm
        positive, negative = np.maximum(delta_y, 0.0), np.minimum(delta_y, 0.0)
        if (positive[np.isinf(self.upper)] > 0).any() or (negative[np.isinf(self.lower)] < 0).any():
            return False
        support = np.dot(np.where(np.isinf(self.upper), 0.0, self.upper), positive) + \
            np.dot(np.where(np.isinf(self.lower), 0.0, self.lower), negative)
        if support >= -self.settings.eps_infeasible:
            return False
        return _inf_norm(self.matrix.T @ delta_y) < self.settings.eps_infeasible

    def _dual_infeasible(self, delta_x):
        delta_x = self.scaling.unscale_x(delta_x)
        norm = _inf_norm(delta_x)
        if norm <= self.settings.eps_infeasible:
            return False
        delta_x = delta_x / norm
        eps = self.settings.eps_infeasible
        if np.dot(self.problem.linear, delta_x) >= -eps or _inf_norm(self.problem.quadratic * delta_x) >= eps:
            return False
        a_dx = self.matrix @ delta_x
        upper_ok = np.isinf(self.upper) | (a_dx <= eps)
        lower_ok = np.isinf(self.lower) | (a_dx >= -eps)
        return bool((upper_ok & lower_ok).all())

    def _update_rho(self, x, z, y):
        s = self.scaling
        ax = s.matrix @ x
        px = s.quadratic * x
        aty = s.matrix.T @ y
        primal = _inf_norm(ax - z) / max(_inf_norm(ax), _inf_norm(z), 1e-12)
        dual = _inf_norm(px + s.linear + aty) / max(_inf_norm(px), _inf_norm(aty), _inf_norm(s.linear), 1e-12)
        rho = float(np.clip(self.rho * np.sqrt(primal / max(dual, 1e-12)), RHO_MIN, RHO_MAX))
        if rho > 5.0 * self.rho or rho < 0.2 * self.rho:
            logger.debug("Updating rho from %.3e to %.3e", self.rho, rho)
            self.rho = rho
            self._factorize()

    def polish(self, x, z, y):
        """Solve the reduced KKT system on the active set guessed from ``(z, y)`` (unscaled)."""
        lower_active = (z - self.lower < -y) | (self.equality_rows & (y <= 0))
        upper_active = ((self.upper - z < y) | (self.equality_rows & (y > 0))) & ~lower_active
        active = np.flatnonzero(lower_active | upper_active)
        target = np.where(lower_active, self.lower, self.upper)[active]
        reduced = self.matrix[active]
        n = self.problem.size
        delta = self.settings.polish_delta
        exact = sparse.bmat([[sparse.diags(self.problem.quadratic), reduced.T],
                             [reduced, None]], format='csc') if active.size else \
            sparse.diags(self.problem.quadratic, format='csc')
        regular = exact + sparse.diags(np.concatenate([np.full(n, delta), np.full(active.size, -delta)]),
                                       format='csc')
        rhs = np.concatenate([-self.problem.linear, target])
        try:
            factor = sla.splu(regular)
        except RuntimeError:
            return None
        solution = factor.solve(rhs)
        for _ in range(self.settings.refinement_steps):
            solution = solution + factor.solve(rhs - exact @ solution)
        if not np.isfinite(solution).all():
            return None
        x_polished = solution[:n]
        y_polished = np.zeros(self.matrix.shape[0])
        y_polished[active] = solution[n:]
        return x_polished, y_polished

    def _solution(self, x, y, iterations, polished):
        certificate = kkt_certificate(self.problem, x, y)
        return QpSolution(x, y, 'solved', iterations, self.problem.objective(x), certificate, polished,
                          self.problem.row_counts)

    def solve(self, tol=1e-6, max_iter=20000):
        s = self.scaling
        settings = self.settings
        n, m = self.problem.size, self.matrix.shape[0]
        x, z, y = np.zeros(n), np.zeros(m), np.zeros(m)
        last_active = None
        primal = dual = np.inf
        for iteration in range(1, max_iter + 1):
            x_prev, y_prev = x, y
            rhs = np.concatenate([settings.sigma * x - s.linear, z - y / self.rho_vec])
            sol = self.factor.solve(rhs)
            x_tilde = sol[:n]
            z_tilde = z + (sol[n:] - y) / self.rho_vec
            x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x
            z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z
            z_new = np.clip(z_relaxed + y / self.rho_vec, self.l_bar, self.u_bar)
            y = y + self.rho_vec * (z_relaxed - z_new)
            z = z_new

            if iteration % settings.check_interval and iteration != max_iter:
                continue
            primal, dual, eps_primal, eps_dual, scaled_primal, scaled_dual = self._residuals(x, z, y)
            if self._primal_infeasible(y - y_prev):
                raise Infeasible(detail='primal infeasibility certificate found')
            if self._dual_infeasible(x - x_prev):
                raise Infeasible(detail='objective is unbounded below')

            x_out, z_out, y_out = s.unscale_x(x), s.unscale_z(z), s.unscale_y(y)
            if settings.polish and max(scaled_primal, scaled_dual) < settings.polish_threshold:
                active = tuple(np.flatnonzero((z_out - self.lower < -y_out) | (self.upper - z_out < y_out)))
                if active != last_active:
                    last_active = active
                    polished = self.polish(x_out, z_out, y_out)
                    if polished is not None:
                        solution = self._solution(*polished, iteration, True)
                        if solution.certificate.within(tol):
                            logger.debug("Polished QP solution after %d iterations (n=%d, m=%d)", iteration, n, m)
                            return solution
            if primal <= eps_primal and dual <= eps_dual:
                solution = self._solution(x_out, y_out, iteration, False)
                if solution.certificate.within(tol):
                    if settings.polish:
                        logger.warning("Polishing failed; returning the ADMM iterate after %d iterations",
                                       iteration)
                    return solution
            if iteration % settings.adaptive_rho_interval == 0:
                self._update_rho(x, z, y)

        raise IterationLimit(max_iter, primal, dual)


def solve_qp(problem: QpProblem, tol=1e-6, max_iter=20000, settings: SolverSettings = SolverSettings()):
    """Solve ``problem`` and return a :class:`QpSolution` whose KKT certificate is within ``tol``."""
    return AdmmSolver(problem, settings).solve(tol, max_iter)
