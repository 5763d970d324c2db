import numpy as np
import pytest

from src.core.conic import ConicProblem
from src.core.solver_manager import STATUS_MAP, ConicResult, SolverManager, _solver_options


def test_overrides_take_precedence_over_config():
    manager = SolverManager({'tol': 1e-6}, max_iters=42, solver=None)
    assert manager.config['tol'] == 1e-6
    assert manager.config['max_iters'] == 42
    assert manager.config['solver'] == 'CLARABEL'


def test_solver_options_per_backend():
    clarabel = _solver_options('CLARABEL', 1e-8, 100, False)
    assert clarabel['tol_gap_abs'] == 1e-8 and clarabel['max_iter'] == 100
    scs = _solver_options('SCS', 1e-6, 100, True)
    assert scs['eps_abs'] == 1e-6 and scs['max_iters'] >= 100 and scs['verbose']


def test_unknown_solver_falls_back():
    manager = SolverManager(solver='NOT_A_SOLVER')
    assert manager.connect()
    assert manager.solver == 'SCS'


def test_status_map_covers_contract():
    assert set(STATUS_MAP.values()) <= {'optimal', 'near_optimal', 'infeasible', 'unbounded', 'numerical_failure'}
    assert not ConicResult('infeasible', None, float('nan'), 'X').ok
    assert ConicResult('near_optimal', np.zeros(1), 0.0, 'X').ok


@pytest.mark.slow
def test_solves_small_lp(backend):
    program = ConicProblem('lp')
    t = program.add_free('t', 1)
    program.add_objective(t[0])
    program.add_inequality(t[0], 2.0)
    result = backend.solve(program)
    assert result.status == 'optimal'
    assert result.objective == pytest.approx(2.0, abs=1e-7)
    assert result.x[0] == pytest.approx(2.0, abs=1e-7)


@pytest.mark.slow
def test_reports_infeasible(backend):
    program = ConicProblem('infeasible')
    t = program.add_free('t', 1)
    program.add_objective(t[0])
    program.add_inequality(t[0], 2.0)
    program.add_equality(t[0], 0.0)
    result = backend.solve(program)
    assert result.status == 'infeasible'
    assert not result.ok


@pytest.mark.slow
def test_psd_block_is_vectorised_row_major(backend):
    program = ConicProblem('psd')
    lift = program.add_psd('x', 2)
    program.add_objective(lift.trace())
    program.add_equality(lift[0, 0], 1.0)
    program.add_equality(lift[0, 1], 0.5)
    result = backend.solve(program)
    assert result.ok
    x = lift.value(result.x)
    assert np.allclose(x, x.T, atol=1e-6)
    assert x[0, 1] == pytest.approx(0.5, abs=1e-6)
    # min trace with X11 = 1, X12 = 0.5 puts X22 at 0.25
    assert result.objective == pytest.approx(1.25, abs=1e-6)
