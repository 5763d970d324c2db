"""JSON file formats: scenarios, problems, solutions and the standard-form dump."""
import json
import logging
import os

import numpy as np

from settings.config import SOLVE_DEFAULTS
from src.core.errors import DegenerateConfiguration, DimensionMismatch, GsftError, ParseError
from src.core.models import (CorrespondenceSet, NscProblem, NscSolution, NsProblem, Ray,
                             RigidTransform, Rotation, SilhouetteObservation, Viewpoint)
from src.core.shape_model import model_from_dict, model_to_dict, save_model
from src.core.synth import ScenarioConfig

logger = logging.getLogger(__name__)


def _read_json(path):
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"JSON inválido en {os.path.basename(path)}: {exc.msg}", line=exc.lineno) from exc


def _write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=1)
    return path


def _field(data, key, where=None):
    if not isinstance(data, dict) or key not in data:
        raise ParseError("Falta un campo obligatorio", field=f"{where}.{key}" if where else key)
    return data[key]


def _vector(value, field, size=3):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError("Valor no numérico", field=field) from exc
    if arr.shape != (size,):
        raise ParseError(f"Se esperaba un vector de {size} componentes", field=field)
    return arr


def pose_to_dict(pose):
    if pose is None:
        return None
    return {"rotation": pose.rotation.matrix.tolist(), "translation": pose.translation.tolist()}


def pose_from_dict(data, field='pose'):
    if data is None:
        return None
    try:
        rotation = Rotation(np.array(_field(data, 'rotation', field), dtype=float))
    except (GsftError, ValueError, TypeError) as exc:
        raise ParseError(f"Rotación inválida: {exc}", field=f"{field}.rotation") from exc
    return RigidTransform(rotation, _vector(_field(data, 'translation', field), f"{field}.translation"))


def rays_to_dict(viewpoints):
    views = []
    for vp in viewpoints:
        views.append({
            "origin": vp.center.tolist() if vp.center is not None else None,
            "projection": vp.projection,
            "pose": pose_to_dict(vp.pose),
            "rays": [{"o": r.origin.tolist(), "d": r.direction.tolist()} for r in vp.rays],
        })
    return {"views": views}


def rays_from_dict(data):
    views = []
    for x, view in enumerate(_field(data, 'views')):
        where = f"views[{x}]"
        rays = []
        for k, raw in enumerate(_field(view, 'rays', where)):
            origin = _vector(_field(raw, 'o', f"{where}.rays[{k}]"), f"{where}.rays[{k}].o")
            direction = _vector(_field(raw, 'd', f"{where}.rays[{k}]"), f"{where}.rays[{k}].d")
            try:
                rays.append(Ray(origin, direction))
            except DegenerateConfiguration as exc:
                raise ParseError(str(exc), field=f"{where}.rays[{k}].d") from exc
        pose = pose_from_dict(view.get('pose'), f"{where}.pose")
        views.append(Viewpoint(rays, pose, view.get('projection', 'perspective')))
    return views


def correspondences_to_dict(correspondences):
    return {"views": [c.pairs.tolist() for c in correspondences]}


def correspondences_from_dict(data):
    out = []
    for x, pairs in enumerate(_field(data, 'views')):
        try:
            arr = np.array(pairs, dtype=int).reshape(-1, 2)
        except (TypeError, ValueError) as exc:
            raise ParseError("Pares [j, j'] inválidos", field=f"views[{x}]") from exc
        out.append(CorrespondenceSet(arr))
    return out


def silhouettes_to_dict(observations):
    return {"views": [{"directions": None if o is None else o.directions.T.tolist()} for o in observations]}


def silhouettes_from_dict(data):
    out = []
    for x, view in enumerate(_field(data, 'views')):
        directions = _field(view, 'directions', f"views[{x}]")
        if directions is None:
            out.append(None)
            continue
        try:
            out.append(SilhouetteObservation(np.array(directions, dtype=float).T))
        except (GsftError, ValueError, TypeError) as exc:
            raise ParseError(f"Silueta inválida: {exc}", field=f"views[{x}].directions") from exc
    return out


def load_silhouettes(path):
    return silhouettes_from_dict(_read_json(path))


def save_silhouettes(path, observations):
    return _write_json(path, silhouettes_to_dict(observations))


def problem_to_dict(problem):
    if isinstance(problem, NscProblem):
        return {
            "kind": "nsc",
            "model": model_to_dict(problem.model),
            "eps_prime": problem.eps_prime,
            "min_depths": list(problem.min_depths),
            "rays": {"views": [{"rays": [{"o": r.origin.tolist(), "d": r.direction.tolist()} for r in view]}
                               for view in problem.rays]},
            "correspondences": correspondences_to_dict(problem.correspondences),
        }
    return {
        "kind": "ns",
        "model": model_to_dict(problem.model),
        "eps_prime": problem.eps_prime,
        "frame": pose_to_dict(problem.frame),
        "rays": rays_to_dict(problem.viewpoints),
        "correspondences": correspondences_to_dict(problem.correspondences),
    }


def problem_from_dict(data):
    kind = _field(data, 'kind')
    model = model_from_dict(_field(data, 'model'))
    views = rays_from_dict(_field(data, 'rays'))
    correspondences = correspondences_from_dict(_field(data, 'correspondences'))
    eps_prime = float(data.get('eps_prime', SOLVE_DEFAULTS['eps_prime']))
    try:
        if kind == 'nsc':
            return NscProblem(model, [vp.rays for vp in views], correspondences,
                              _field(data, 'min_depths'), eps_prime=eps_prime)
        if kind == 'ns':
            return NsProblem(model, views, correspondences, eps_prime=eps_prime,
                             frame=pose_from_dict(data.get('frame'), 'frame'))
    except DimensionMismatch as exc:
        raise ParseError(str(exc), field='correspondences') from exc
    raise ParseError(f"Tipo de problema desconocido: {kind}", field='kind')


def save_problem(path, problem):
    return _write_json(path, problem_to_dict(problem))


def load_problem(path):
    return problem_from_dict(_read_json(path))


def solution_to_dict(solution, trace=None):
    if isinstance(solution, NscSolution):
        data = {
            "kind": "nsc",
            "weights": solution.weights.tolist(),
            "per_view_weights": np.asarray(solution.per_view_weights).tolist(),
            "transforms": [pose_to_dict(t) for t in solution.transforms],
            "viewpoint_poses": [pose_to_dict(p) for p in solution.viewpoint_poses],
            "relative_poses": [pose_to_dict(p) for p in solution.relative_poses],
            "objective": solution.objective,
            "status": solution.status,
            "rank": [_rank_to_dict(d) for d in solution.diagnostics],
        }
    else:
        data = {
            "kind": "ns",
            "weights": solution.instance.weights.tolist(),
            "pose": pose_to_dict(solution.instance.pose),
            "reconstruction": solution.reconstruction.T.tolist(),
            "objective": solution.objective,
            "fit_cost": solution.fit_cost,
            "residuals": solution.residuals.tolist(),
            "status": solution.status,
            "rank": _rank_to_dict(solution.rank),
        }
    if trace is not None:
        data["trace"] = trace
    return data


def _rank_to_dict(diag):
    return {
        "eigenvalues": np.asarray(diag.eigenvalues).tolist(),
        "ratio": diag.ratio,
        "scale": diag.scale,
        "high_rank": bool(diag.high_rank),
        "sign_ambiguous": bool(diag.sign_ambiguous),
        "sign_flipped": bool(diag.sign_flipped),
        "degenerate": bool(diag.degenerate),
    }


def save_solution(path, solution, trace=None):
    return _write_json(path, solution_to_dict(solution, trace))


def gt_to_dict(scenario):
    return {
        "weights": scenario.gt_instance.weights.tolist(),
        "pose": pose_to_dict(scenario.gt_instance.pose),
        "viewpoint_poses": [pose_to_dict(p) for p in scenario.viewpoint_poses],
        "nsc_views": list(scenario.nsc_views),
        "points": scenario.gt_points.T.tolist(),
    }


def load_gt(path):
    data = _read_json(path)
    return {
        "weights": np.array(_field(data, 'weights'), dtype=float),
        "pose": pose_from_dict(_field(data, 'pose'), 'pose'),
        "viewpoint_poses": [pose_from_dict(p, f"viewpoint_poses[{k}]")
                            for k, p in enumerate(_field(data, 'viewpoint_poses'))],
        "nsc_views": list(data.get('nsc_views', [])),
        "points": np.array(_field(data, 'points'), dtype=float).T,
    }


def save_scenario(scenario, out_dir):
    """Writes the model, rays, correspondences, GT, problem and config files of a scenario."""
    os.makedirs(out_dir, exist_ok=True)
    written = {
        'model': save_model(scenario.model, os.path.join(out_dir, 'model.json')),
        'rays': _write_json(os.path.join(out_dir, 'rays.json'), rays_to_dict(scenario.ns_problem.viewpoints)),
        'correspondences': _write_json(os.path.join(out_dir, 'correspondences.json'),
                                       correspondences_to_dict(scenario.ns_problem.correspondences)),
        'gt': _write_json(os.path.join(out_dir, 'gt.json'), gt_to_dict(scenario)),
        'config': _write_json(os.path.join(out_dir, 'config.json'), scenario.config.to_dict()),
        'problem_ns': save_problem(os.path.join(out_dir, 'problem_ns.json'), scenario.ns_problem),
    }
    if scenario.nsc_problem is not None:
        written['problem_nsc'] = save_problem(os.path.join(out_dir, 'problem_nsc.json'), scenario.nsc_problem)
    if scenario.silhouettes is not None:
        written['silhouettes'] = save_silhouettes(os.path.join(out_dir, 'silhouettes.json'), scenario.silhouettes)
    logger.debug("Escenario guardado en %s: %s", out_dir, ', '.join(sorted(written)))
    return written


def load_config(path):
    return ScenarioConfig.from_dict(_read_json(path))


def dump_conic_problem(program, path):
    return _write_json(path, program.to_dict())
