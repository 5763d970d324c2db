import logging

import numpy as np

from src.core.conic import ConicProblem
from src.core.errors import DegenerateConfiguration, HighRankSolution, SolverFailure, SolverInfeasible
from src.core.geometry import point_to_ray_residual
from src.core.lifting import (ROT_DIM, GramLift, add_rotation_constraints, assemble_l1_epigraph,
                              extract_solution, omega_b)
from src.core.models import (CorrespondenceSet, NsProblem, NsSolution, Ray, RigidTransform,
                             ShapeInstance, Viewpoint)
from src.core.shape_model import deform, instantiate
from src.core.solver_manager import SolverManager

logger = logging.getLogger(__name__)


def assemble_ns(problem, extra_terms=(), correspondence_weight=1.0, extra_weight=0.0, eps_prime=None):
    """
    Builds the lifted NS program:

        min ε′ tr(Δ) + cw Σ ‖ω_b(Δ, t, ray, P̄_j, P_·j)‖₁ + ew Σ_extra ‖…‖₁
        s.t. Δ_11 = 1, ω_c,r(Δ) = 1, ω_d,r(Δ) = 0, Δ ⪰ 0

    `extra_terms` are (ray, template index) pairs in the same frame as the
    problem's rays. Returns (ConicProblem, lift handle, translation handle).
    """
    if eps_prime is None:
        eps_prime = problem.eps_prime
    model = problem.model
    bases = model.basis_stack()
    program = ConicProblem('ns')
    lift = program.add_psd('delta', ROT_DIM + model.m)
    t = program.add_free('t', 3)
    t_comp = t.components()

    add_rotation_constraints(program, lift)
    program.add_objective(lift.trace(), eps_prime)

    n_terms = 0
    for k, (ray, j) in enumerate(problem.terms()):
        expr = omega_b(lift, t_comp, ray, model.mean[:, j], bases[:, :, j])
        if assemble_l1_epigraph(program, expr, correspondence_weight, f'corr{k}') is not None:
            n_terms += 1
    for k, (ray, j) in enumerate(extra_terms):
        expr = omega_b(lift, t_comp, ray, model.mean[:, j], bases[:, :, j])
        if assemble_l1_epigraph(program, expr, extra_weight, f'extra{k}') is not None:
            n_terms += 1
    logger.debug("Programa NS: Δ de %d×%d, %d términos L1, %d variables",
                 lift.dim, lift.dim, n_terms, program.size)
    return program, lift, t


def data_cost(model, terms, rotation, weights, translation, weight=1.0):
    """Σ weight·‖(R Q_j + t - C) × d‖₁ over (ray, j) terms."""
    shape = rotation.matrix @ deform(model, weights) + np.asarray(translation)[:, None]
    return weight * sum(np.abs(point_to_ray_residual(shape[:, j], ray)).sum() for ray, j in terms)


def lifted_data_cost(model, terms, delta, translation, weight=1.0):
    bases = model.basis_stack()
    total = 0.0
    for ray, j in terms:
        total += sum(abs(v) for v in omega_b(delta, translation, ray, model.mean[:, j], bases[:, :, j]))
    return weight * total


def fit_translation(model, terms, rotation, weights):
    """Least-squares t making (R Q_j + t - C) × d vanish for fixed (R, w)."""
    shape = rotation.matrix @ deform(model, weights)
    blocks, rhs = [], []
    for ray, j in terms:
        d = np.asarray(ray.direction, dtype=float)
        blocks.append(np.cross(np.eye(3), d).T)
        rhs.append(np.cross(np.asarray(ray.origin, dtype=float) - shape[:, j], d))
    t, *_ = np.linalg.lstsq(np.vstack(blocks), np.concatenate(rhs), rcond=None)
    return t


def raise_for_status(result, name):
    if result.status == 'infeasible':
        raise SolverInfeasible(f"El problema {name} es infactible.")
    if not result.ok:
        raise SolverFailure(f"El solver no resolvió {name}: estado {result.status}.")


def solve_ns(problem, backend=None, eps_prime=None, strict=False, extra_terms=(),
             correspondence_weight=1.0, extra_weight=0.0):
    """
    Solves an NS problem (known viewpoint poses) and returns the recovered
    instance in world coordinates, i.e. composed with `problem.frame`.
    """
    backend = backend or SolverManager()
    eps_prime = problem.eps_prime if eps_prime is None else eps_prime
    program, lift, t = assemble_ns(problem, extra_terms, correspondence_weight, extra_weight, eps_prime)
    result = backend.solve(program)
    raise_for_status(result, 'NS')

    delta = GramLift(lift.value(result.x))
    t_local = t.value(result.x).copy()
    corr_terms = list(problem.terms())
    all_terms = [(corr_terms, correspondence_weight), (list(extra_terms), extra_weight)]

    def cost(rotation, weights, flipped):
        tr = -t_local if flipped else t_local
        return sum(data_cost(problem.model, terms, rotation, weights, tr, w) for terms, w in all_terms if w)

    rotation, weights, diagnostics = extract_solution(delta, cost=cost, strict=strict)
    if diagnostics.degenerate:
        t_local = fit_translation(problem.model, corr_terms, rotation, weights)
    elif diagnostics.sign_flipped:
        t_local = -t_local

    local_pose = RigidTransform(rotation, t_local)
    instance = ShapeInstance(weights, problem.frame.compose(local_pose))
    reconstruction = instantiate(problem.model, instance)

    local_shape = instantiate(problem.model, ShapeInstance(weights, local_pose))
    residuals = np.array([np.linalg.norm(point_to_ray_residual(local_shape[:, j], ray)) for ray, j in corr_terms])
    fit_cost = lifted_data_cost(problem.model, corr_terms, delta, t.value(result.x))

    solution = NsSolution(
        instance=instance,
        reconstruction=reconstruction,
        objective=result.objective,
        rank=diagnostics,
        residuals=residuals,
        status=result.status,
        fit_cost=fit_cost,
        lift=delta,
    )
    if diagnostics.high_rank and strict:
        raise HighRankSolution(f"λ₂/λ₁ = {diagnostics.ratio:.3e} supera el umbral de rango 1.", solution)
    return solution


def reduce_to_single_view(problem):
    """
    Rewrites every ray in the frame of viewpoint 0 and merges all views into
    one generalised viewpoint. `frame` of the result maps that anchor frame
    back to the original problem frame, so solve_ns reports world poses for
    both problems.
    """
    if problem.n_views == 1:
        return problem
    anchor = problem.viewpoints[0].pose
    if anchor is None or any(vp.pose is None for vp in problem.viewpoints):
        raise DegenerateConfiguration("La reducción a una vista necesita las poses de todas las vistas.")

    to_anchor = anchor.inverse()
    rays = []
    pairs = []
    for vp, corr in zip(problem.viewpoints, problem.correspondences):
        offset = len(rays)
        for ray in vp.rays:
            rays.append(Ray(to_anchor.apply(ray.origin), to_anchor.rotation.apply(ray.direction)))
        pairs.extend((j, offset + jp) for j, jp in corr)

    merged = Viewpoint(rays, RigidTransform.identity(), projection='generalised')
    return NsProblem(
        model=problem.model,
        viewpoints=(merged,),
        correspondences=(CorrespondenceSet(pairs),),
        eps_prime=problem.eps_prime,
        frame=problem.frame.compose(anchor),
    )
