import logging

import numpy as np

from settings.config import SOLVE_DEFAULTS
from src.core.conic import ConicProblem
from src.core.errors import HighRankSolution
from src.core.geometry import point_to_ray_residual
from src.core.lifting import (ROT_DIM, SCALE_FLOOR, GramLift, add_rotation_constraints,
                              assemble_l1_epigraph, extract_solution, lift_scale, omega_b, weight_index)
from src.core.models import NscSolution, RigidTransform
from src.core.ns import data_cost, raise_for_status
from src.core.shape_model import deform
from src.core.solver_manager import SolverManager

logger = logging.getLogger(__name__)


def _view_terms(problem, x):
    rays = problem.rays[x]
    return [(rays[jp], j) for j, jp in problem.correspondences[x]]


def assemble_nsc(problem, eps_prime=None):
    """
    One lift Δ_x and one translation τ_x per view. Camera-frame points are
    R_x Q_j + τ_x, so the depth constraint reads τ_x,3 ≥ f_x. Weight segments of
    consecutive lifts are chained equal.
    """
    if eps_prime is None:
        eps_prime = problem.eps_prime
    model = problem.model
    bases = model.basis_stack()
    program = ConicProblem('nsc')
    lifts, taus = [], []

    for x in range(problem.n_views):
        lift = program.add_psd(f'delta{x}', ROT_DIM + model.m)
        tau = program.add_free(f'tau{x}', 3)
        add_rotation_constraints(program, lift)
        program.add_objective(lift.trace(), eps_prime)
        program.add_inequality(tau[2], problem.min_depths[x])

        tau_comp = tau.components()
        for k, (ray, j) in enumerate(_view_terms(problem, x)):
            expr = omega_b(lift, tau_comp, ray, model.mean[:, j], bases[:, :, j])
            assemble_l1_epigraph(program, expr, 1.0, f'corr{x}_{k}')
        lifts.append(lift)
        taus.append(tau)

    for x in range(problem.n_views - 1):
        for i in range(model.m):
            program.add_equality(lifts[x][0, weight_index(i)] - lifts[x + 1][0, weight_index(i)], 0.0)

    logger.debug("Programa NSC: %d vistas, %d variables, %d igualdades",
                 problem.n_views, program.size, len(program.equalities))
    return program, lifts, taus


def recover_viewpoint_poses(transforms):
    return tuple(t.inverse() for t in transforms)


def anchored_poses(poses):
    """Pose of every camera expressed in the frame of camera 0."""
    to_anchor = poses[0].inverse()
    return tuple(to_anchor.compose(p) for p in poses)


def solve_nsc(problem, backend=None, eps_prime=None, strict=False, weight_agreement=None):
    backend = backend or SolverManager()
    if weight_agreement is None:
        weight_agreement = SOLVE_DEFAULTS['weight_agreement']

    program, lifts, taus = assemble_nsc(problem, eps_prime)
    result = backend.solve(program)
    raise_for_status(result, 'NSC')

    transforms, diagnostics, deltas, per_view = [], [], [], []
    for x in range(problem.n_views):
        delta = GramLift(lifts[x].value(result.x))
        tau = taus[x].value(result.x).copy()
        terms = _view_terms(problem, x)

        def cost(rotation, weights, flipped, terms=terms, tau=tau, delta=delta):
            s = lift_scale(delta, rotation)
            if abs(s) < SCALE_FLOOR:
                return float('inf')
            return data_cost(problem.model, terms, rotation, weights, tau / s)

        # the depth bound is the only thing fixing the scale of (R, w, τ)
        rotation, weights, diag = extract_solution(delta, cost=cost, strict=strict, scale_free=True)
        s = lift_scale(delta, rotation)
        if abs(s) >= SCALE_FLOOR:
            tau = tau / s
        logger.debug("Vista %d: s = %.4e, λ₂/λ₁ = %.3e", x, s, diag.ratio)
        if diag.high_rank:
            logger.warning("Vista %d: rango alto, deriva de escala s = %.4f", x, diag.scale)
        transforms.append(RigidTransform(rotation, tau))
        diagnostics.append(diag)
        deltas.append(delta)
        per_view.append(weights)

    per_view = np.array(per_view)
    shared = per_view.mean(axis=0)
    spread = float(np.abs(per_view - shared).max())
    status = result.status
    if spread > weight_agreement:
        logger.warning("Los pesos por vista discrepan en %.3e; estado degradado a near_optimal.", spread)
        status = 'near_optimal'

    poses = recover_viewpoint_poses(transforms)
    solution = NscSolution(
        weights=shared,
        transforms=tuple(transforms),
        viewpoint_poses=poses,
        relative_poses=anchored_poses(poses),
        objective=result.objective,
        diagnostics=tuple(diagnostics),
        status=status,
        per_view_weights=per_view,
        lifts=tuple(deltas),
    )
    if strict and any(d.high_rank for d in diagnostics):
        raise HighRankSolution("Al menos una vista tiene una solución de rango alto.", solution)
    return solution


def nsc_cost(problem, weights, object_pose, camera_poses, norm='l2'):
    """
    Σ_x Σ_(j,j′) ‖(R Q_j + t - C_x) × R̃_x d_(x,j′)‖ with the object at
    `object_pose` and camera x at `camera_poses[x]` (camera-to-world).
    """
    order = 1 if norm == 'l1' else 2
    world = object_pose.apply(deform(problem.model, weights))
    total = 0.0
    for x, pose in enumerate(camera_poses):
        for ray, j in _view_terms(problem, x):
            direction = pose.rotation.apply(ray.direction)
            residual = np.cross(world[:, j] - pose.translation, direction)
            total += np.linalg.norm(residual, ord=order)
    return total


def verify_gauge_freedom(problem, candidate, transform, norm='l2', move_cameras=True, object_pose=None):
    """
    |cost(g·object, g·cameras) - cost(object, cameras)| for the rigid `g`.

    The invariance holds for the L2 residual norm; the L1 norm is not
    rotation invariant, so `norm='l1'` only stays exact for pure translations.
    With move_cameras=False only the object is transformed.
    """
    object_pose = object_pose or RigidTransform.identity()
    poses = candidate.viewpoint_poses
    before = nsc_cost(problem, candidate.weights, object_pose, poses, norm)
    moved_poses = tuple(transform.compose(p) for p in poses) if move_cameras else poses
    after = nsc_cost(problem, candidate.weights, transform.compose(object_pose), moved_poses, norm)
    return abs(after - before)


def camera_frame_residuals(problem, solution):
    shape = deform(problem.model, solution.weights)
    out = []
    for x, transform in enumerate(solution.transforms):
        cam = transform.apply(shape)
        out.append(np.array([np.linalg.norm(point_to_ray_residual(cam[:, j], ray))
                             for ray, j in _view_terms(problem, x)]))
    return out
