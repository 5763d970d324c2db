import logging
import time
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from settings.config import SOLVER_CONFIG

logger = logging.getLogger(__name__)

STATUS_MAP = {
    cp.OPTIMAL: 'optimal',
    cp.OPTIMAL_INACCURATE: 'near_optimal',
    cp.INFEASIBLE: 'infeasible',
    cp.INFEASIBLE_INACCURATE: 'infeasible',
    cp.UNBOUNDED: 'unbounded',
    cp.UNBOUNDED_INACCURATE: 'unbounded',
}

CAPABILITIES = {'psd': True, 'free': True, 'nonneg': True}

FALLBACK_SOLVER = 'SCS'


@dataclass
class ConicResult:
    status: str
    x: np.ndarray
    objective: float
    solver: str
    wall_ms: float = 0.0

    @property
    def ok(self):
        return self.status in ('optimal', 'near_optimal')


def _solver_options(name, tol, max_iters, verbose):
    if name == 'CLARABEL':
        return {'tol_gap_abs': tol, 'tol_gap_rel': tol, 'tol_feas': tol, 'max_iter': max_iters, 'verbose': verbose}
    if name == 'SCS':
        return {'eps_abs': tol, 'eps_rel': tol, 'max_iters': max(max_iters, 10000), 'verbose': verbose}
    return {'verbose': verbose}


class SolverManager:
    """
    Backend for ConicProblem instances, built on cvxpy.

    One manager per thread: the manager keeps the last compiled problem and is
    not safe to share.
    """

    def __init__(self, config=None, **overrides):
        self.config = dict(SOLVER_CONFIG)
        if config:
            self.config.update(config)
        self.config.update({k: v for k, v in overrides.items() if v is not None})
        self.solver = None
        self.last_problem = None

    def connect(self):
        try:
            installed = cp.installed_solvers()
        except Exception as err:
            logger.error("No se pudo consultar los solvers instalados: %s", err)
            self.solver = None
            return False
        wanted = str(self.config['solver']).upper()
        if wanted in installed:
            self.solver = wanted
        elif FALLBACK_SOLVER in installed:
            logger.warning("Solver %s no disponible, se usa %s.", wanted, FALLBACK_SOLVER)
            self.solver = FALLBACK_SOLVER
        else:
            self.solver = None
            return False
        return True

    def _ensure_solver(self):
        if self.solver is None:
            self.connect()

    def close(self):
        self.last_problem = None

    def _variables(self, problem):
        parts = []
        for block in problem.blocks:
            if block['kind'] == 'psd':
                d = block['dim']
                mat = cp.Variable((d, d), PSD=True, name=block['label'])
                parts.append(cp.reshape(mat, (d * d,), order='C'))
            elif block['kind'] == 'nonneg':
                parts.append(cp.Variable(block['dim'], nonneg=True, name=block['label']))
            else:
                parts.append(cp.Variable(block['dim'], name=block['label']))
        return cp.hstack(parts)

    def build(self, problem):
        x = self._variables(problem)
        c, c0, a_eq, b_eq, a_in, b_in = problem.matrices()
        constraints = []
        if a_eq.shape[0]:
            constraints.append(a_eq @ x == b_eq)
        if a_in.shape[0]:
            constraints.append(a_in @ x >= b_in)
        return cp.Problem(cp.Minimize(c @ x + c0), constraints), x

    def solve(self, problem):
        self._ensure_solver()
        if self.solver is None:
            logger.error("No hay solver cónico disponible.")
            return ConicResult('numerical_failure', None, float('nan'), 'none')

        model, x = self.build(problem)
        self.last_problem = model
        options = _solver_options(self.solver, self.config['tol'], self.config['max_iters'], self.config['verbose'])
        logger.debug("Resolviendo %s: %d variables, %d igualdades, %d desigualdades con %s",
                     problem.name, problem.size, len(problem.equalities), len(problem.inequalities), self.solver)

        start = time.perf_counter()
        try:
            model.solve(solver=self.solver, **options)
        except cp.error.SolverError as err:
            logger.warning("El solver %s falló: %s", self.solver, err)
            return ConicResult('numerical_failure', None, float('nan'), self.solver,
                               (time.perf_counter() - start) * 1000.0)
        wall_ms = (time.perf_counter() - start) * 1000.0

        status = STATUS_MAP.get(model.status, 'numerical_failure')
        values = None if x.value is None else np.asarray(x.value, dtype=float)
        if values is None and status in ('optimal', 'near_optimal'):
            status = 'numerical_failure'
        objective = float(model.value) if values is not None else float('nan')
        logger.debug("Estado %s (%s), objetivo %.6e, %.1f ms", status, model.status, objective, wall_ms)
        return ConicResult(status, values, objective, self.solver, wall_ms)
