import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation as ScipyRotation

from settings.config import RUN_CONFIG
from src.core.errors import ConfigInfeasible, DimensionMismatch, GsftError, NonConvergence
from src.core.geometry import rigid_align
from src.core.models import NscProblem, NsProblem, Ray, Viewpoint
from src.core.ns import solve_ns
from src.core.nsc import solve_nsc
from src.core.shape_model import deform
from src.core.silhouette import solve_silhouette_boosted_ns
from src.core.solver_manager import SolverManager
from src.core.synth import generate_scenario

logger = logging.getLogger(__name__)

METHODS = ('ns', 'nsc', 'silhouette_ns', 'silhouette_nsc', 'trivial_repeated_sft', 'trivial_repeated_nsc')
GIMBAL_PITCH_DEG = 89.0
NAN = float('nan')


def rmse(recon, gt):
    a = np.asarray(recon, dtype=float)
    b = np.asarray(gt, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"Formas distintas: {a.shape} y {b.shape}")
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=0))))


def procrustes_rmse(recon, gt):
    aligned = rigid_align(recon, gt).apply(recon)
    return min(rmse(aligned, gt), rmse(recon, gt))


def _euler_error(matrix):
    angles = ScipyRotation.from_matrix(matrix).as_euler('ZYX', degrees=True)
    return float(np.mean(np.abs(angles))), abs(angles[1]) > GIMBAL_PITCH_DEG


def euler_error(a, b):
    """(mean |ZYX Euler angle| of the relative rotation, gimbal flag), symmetric in a and b."""
    rel = a.matrix.T @ b.matrix
    forward, gimbal_f = _euler_error(rel)
    backward, gimbal_b = _euler_error(rel.T)
    gimbal = gimbal_f or gimbal_b
    if gimbal:
        logger.warning("Error de rotación cerca del bloqueo de cardán (|pitch| > %.0f°).", GIMBAL_PITCH_DEG)
    return 0.5 * (forward + backward), gimbal


def rotation_error_deg(a, b):
    return euler_error(a, b)[0]


def translation_error(a, b):
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def chamfer(a, b):
    """½ (mean_a min_b ‖·‖ + mean_b min_a ‖·‖)."""
    pa = np.asarray(a, dtype=float).T
    pb = np.asarray(b, dtype=float).T
    if len(pa) == 0 or len(pb) == 0:
        raise DimensionMismatch("Chamfer necesita nubes no vacías.")
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


@dataclass
class MetricReport:
    seed: int
    config_id: str
    method: str
    rmse: float = NAN
    procrustes_rmse: float = NAN
    rot_err_deg: float = NAN
    trans_err: float = NAN
    chamfer: float = NAN
    status: str = 'optimal'
    iters: int = 0
    wall_ms: float = NAN
    per_view_rot_err: tuple = field(default_factory=tuple)
    gimbal: bool = False
    noise_sd: float = 0.0

    def as_row(self, include_timing=True):
        return {
            'seed': self.seed,
            'config_id': self.config_id,
            'method': self.method,
            'rmse': self.rmse,
            'procrustes_rmse': self.procrustes_rmse,
            'rot_err_deg': self.rot_err_deg,
            'trans_err': self.trans_err,
            'chamfer': self.chamfer,
            'status': self.status,
            'iters': self.iters,
            'wall_ms': self.wall_ms if include_timing else '',
        }


def _status(solution_status, diagnostics):
    if any(d.high_rank for d in diagnostics):
        return 'high_rank'
    return solution_status


def _ns_report(report, scenario, solution):
    gt = scenario.gt_points
    gt_pose = scenario.gt_instance.pose
    report.rmse = rmse(solution.reconstruction, gt)
    report.procrustes_rmse = procrustes_rmse(solution.reconstruction, gt)
    report.rot_err_deg, report.gimbal = euler_error(solution.instance.pose.rotation, gt_pose.rotation)
    report.trans_err = translation_error(solution.instance.pose.translation, gt_pose.translation)
    report.chamfer = chamfer(solution.reconstruction, gt)
    report.status = _status(solution.status, [solution.rank])
    return report


def _gt_transforms(scenario, views):
    return [scenario.viewpoint_poses[x].inverse().compose(scenario.gt_instance.pose) for x in views]


def _nsc_report(report, scenario, solution, views, problem=None):
    problem = problem or scenario.nsc_problem
    gt_transforms = _gt_transforms(scenario, views)
    shape = deform(problem.model, solution.weights)
    recon = solution.transforms[0].apply(shape)
    gt_anchor = gt_transforms[0].apply(deform(problem.model, scenario.gt_instance.weights))

    report.rmse = rmse(recon, gt_anchor)
    report.procrustes_rmse = procrustes_rmse(recon, gt_anchor)
    report.chamfer = chamfer(recon, gt_anchor)

    per_view = []
    gimbal = False
    for est, gt in zip(solution.transforms, gt_transforms):
        err, flag = euler_error(est.rotation, gt.rotation)
        per_view.append(err)
        gimbal = gimbal or flag
    report.per_view_rot_err = tuple(per_view)
    report.gimbal = gimbal

    if len(views) > 1:
        gt_rel = [gt_transforms[0].compose(t.inverse()) for t in gt_transforms]
        rel_err = [euler_error(est.rotation, gt.rotation)[0]
                   for est, gt in zip(solution.relative_poses[1:], gt_rel[1:])]
        trans = [translation_error(est.translation, gt.translation)
                 for est, gt in zip(solution.relative_poses[1:], gt_rel[1:])]
        report.rot_err_deg = float(np.mean(rel_err))
        report.trans_err = float(np.mean(trans))
    else:
        report.rot_err_deg = per_view[0]
        report.trans_err = translation_error(solution.transforms[0].translation, gt_transforms[0].translation)
    report.status = _status(solution.status, solution.diagnostics)
    return report


def _frozen_ns_problem(scenario, solution):
    """NS problem in the anchor camera frame with the NSC-recovered relative poses held fixed."""
    problem = scenario.nsc_problem
    viewpoints = []
    for rays, pose in zip(problem.rays, solution.relative_poses):
        world = [Ray(pose.translation, pose.rotation.apply(r.direction)) for r in rays]
        viewpoints.append(Viewpoint(world, pose, 'perspective'))
    return NsProblem(problem.model, viewpoints, problem.correspondences, eps_prime=problem.eps_prime)


def _trivial_sft(report, scenario, backend, eps_prime):
    problem = scenario.ns_problem
    gt = scenario.gt_points
    per_view, recons, degenerate, high_rank = [], [], 0, 0
    for x, (vp, corr) in enumerate(zip(problem.viewpoints, problem.correspondences)):
        if len(corr) < 4:
            degenerate += 1
            continue
        single = NsProblem(problem.model, [vp], [corr], eps_prime=problem.eps_prime)
        try:
            solution = solve_ns(single, backend, eps_prime=eps_prime)
        except GsftError as err:
            logger.warning("Vista %d: SfT de una vista falló (%s).", x, err)
            degenerate += 1
            continue
        high_rank += solution.rank.high_rank
        per_view.append(rmse(solution.reconstruction, gt))
        recons.append(solution.reconstruction)

    report.iters = len(per_view)
    if not per_view:
        report.status = 'degenerate'
        return report
    combined = np.mean(recons, axis=0)
    report.rmse = float(np.mean(per_view))
    report.procrustes_rmse = procrustes_rmse(combined, gt)
    report.chamfer = chamfer(combined, gt)
    if degenerate:
        report.status = 'partial_degenerate'
    else:
        report.status = 'high_rank' if high_rank else 'optimal'
    return report


def _trivial_nsc(report, scenario, backend, eps_prime):
    problem = scenario.nsc_problem
    per_view, rot = [], []
    for k, x in enumerate(scenario.nsc_views):
        single = NscProblem(problem.model, [problem.rays[k]], [problem.correspondences[k]],
                            [problem.min_depths[k]], eps_prime=problem.eps_prime)
        try:
            solution = solve_nsc(single, backend, eps_prime=eps_prime)
        except GsftError as err:
            logger.warning("Vista %d: NSC de una vista falló (%s).", x, err)
            continue
        sub = _nsc_report(MetricReport(report.seed, report.config_id, report.method), scenario,
                          solution, (x,), single)
        per_view.append(sub.rmse)
        rot.append(sub.rot_err_deg)
    report.iters = len(per_view)
    if not per_view:
        report.status = 'degenerate'
        return report
    report.rmse = float(np.mean(per_view))
    report.rot_err_deg = float(np.mean(rot))
    report.status = 'optimal' if len(per_view) == len(scenario.nsc_views) else 'partial_degenerate'
    return report


def run_single(config, method, seed, backend=None, **options):
    """One seeded repeat; solver errors end up in the report status."""
    backend = backend or SolverManager()
    cfg = config.with_seed(seed)
    report = MetricReport(seed, cfg.config_id, method, noise_sd=cfg.noise_sd)
    eps_prime = options.get('eps_prime')
    start = time.perf_counter()
    try:
        scenario = generate_scenario(cfg)
        if method == 'ns':
            _ns_report(report, scenario, solve_ns(scenario.ns_problem, backend, eps_prime=eps_prime))
        elif method == 'nsc':
            _require(scenario.nsc_problem, "NSC necesita vistas en perspectiva.")
            solution = solve_nsc(scenario.nsc_problem, backend, eps_prime=eps_prime)
            _nsc_report(report, scenario, solution, scenario.nsc_views)
        elif method == 'silhouette_ns':
            _require(scenario.silhouettes, "silhouette_ns necesita un escenario con densidad > 0.")
            solution = _boosted(report, scenario.ns_problem, scenario.silhouettes, backend,
                                lambda s: rmse(s.reconstruction, scenario.gt_points), options)
            boosted_status = report.status
            _ns_report(report, scenario, solution)
            if boosted_status == 'non_convergence':
                report.status = boosted_status
        elif method == 'silhouette_nsc':
            _require(scenario.silhouettes and scenario.nsc_problem,
                     "silhouette_nsc necesita vistas en perspectiva y densidad > 0.")
            nsc_solution = solve_nsc(scenario.nsc_problem, backend, eps_prime=eps_prime)
            frozen = _frozen_ns_problem(scenario, nsc_solution)
            silhouettes = [scenario.silhouettes[x] for x in scenario.nsc_views]
            gt_anchor = scenario.viewpoint_poses[scenario.nsc_views[0]].inverse().apply(scenario.gt_points)
            solution = _boosted(report, frozen, silhouettes, backend,
                                lambda s: rmse(s.reconstruction, gt_anchor), options)
            boosted_status = report.status
            _nsc_report(report, scenario, nsc_solution, scenario.nsc_views)
            report.rmse = rmse(solution.reconstruction, gt_anchor)
            report.procrustes_rmse = procrustes_rmse(solution.reconstruction, gt_anchor)
            report.chamfer = chamfer(solution.reconstruction, gt_anchor)
            if boosted_status == 'non_convergence':
                report.status = boosted_status
        elif method == 'trivial_repeated_sft':
            _trivial_sft(report, scenario, backend, eps_prime)
        elif method == 'trivial_repeated_nsc':
            _require(scenario.nsc_problem, "trivial_repeated_nsc necesita vistas en perspectiva.")
            _trivial_nsc(report, scenario, backend, eps_prime)
        else:
            raise ConfigInfeasible(f"Método desconocido: {method}")
    except ConfigInfeasible:
        raise
    except GsftError as err:
        logger.warning("Repetición %d (%s) falló: %s", seed, method, err)
        report.status = type(err).__name__
    report.wall_ms = (time.perf_counter() - start) * 1000.0
    return report


def _require(value, message):
    if not value:
        raise ConfigInfeasible(message)


def _boosted(report, problem, silhouettes, backend, evaluate, options):
    try:
        solution, trace = solve_silhouette_boosted_ns(
            problem, silhouettes,
            lam=options.get('lam'),
            max_iters=options.get('max_iters'),
            backend=backend,
            evaluate=evaluate,
            eps_prime=options.get('eps_prime'),
        )
        report.status = 'optimal'
    except NonConvergence as exc:
        solution, trace = exc.best, exc.trace
        report.status = 'non_convergence'
    report.iters = max(len(trace) - 1, 0)
    return solution


def run_experiment(config, method, repeats=1, workers=None, **options):
    """
    Runs `repeats` seeded repeats (seeds config.seed, config.seed + 1, ...)
    in a thread pool; each repeat owns its SolverManager.
    """
    if method not in METHODS:
        raise ConfigInfeasible(f"Método desconocido: {method}")
    config.validate()
    workers = workers or RUN_CONFIG['workers']
    seeds = [config.seed + r for r in range(repeats)]
    logger.info("Experimento %s / %s: %d repeticiones, %d hilos", config.config_id, method, repeats, workers)

    def job(seed):
        backend = SolverManager(options.get('solver_config'))
        try:
            return run_single(config, method, seed, backend, **options)
        finally:
            backend.close()

    if workers <= 1:
        return [job(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, seeds))


def mean_rmse(reports):
    values = [r.rmse for r in reports if not math.isnan(r.rmse)]
    return float(np.mean(values)) if values else NAN

