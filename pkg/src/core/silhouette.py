import logging
from collections import defaultdict

import numpy as np
from scipy.spatial import Delaunay

from settings.config import SOLVE_DEFAULTS
from src.core.errors import DegenerateCloud, DegenerateConfiguration, NonConvergence
from src.core.geometry import project_perspective
from src.core.models import (ModelSilhouette, Ray, ShapeInstance,
                             SilhouetteCorrespondence, SilhouetteObservation)
from src.core.ns import solve_ns
from src.core.shape_model import instantiate
from src.core.solver_manager import SolverManager

logger = logging.getLogger(__name__)

COLLINEAR_TOL = 1e-12


def _unique_points(points2d):
    pts = np.asarray(points2d, dtype=float)
    if pts.ndim != 2 or pts.shape[0] != 2:
        raise DegenerateCloud(f"Se esperaba una nube 2×k, se recibió {pts.shape}")
    uniq, first = np.unique(pts.T, axis=0, return_index=True)
    if len(uniq) < 3:
        raise DegenerateCloud("Se necesitan al menos 3 puntos distintos.")
    centred = uniq - uniq.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[1] <= COLLINEAR_TOL * max(sv[0], 1.0):
        raise DegenerateCloud("Todos los puntos son colineales.")
    return uniq, first


def circumradii(points, simplices):
    a = points[simplices[:, 0]]
    b = points[simplices[:, 1]]
    c = points[simplices[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    cross = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
    area = 0.5 * np.abs(cross)
    with np.errstate(divide='ignore', invalid='ignore'):
        radii = la * lb * lc / (4.0 * area)
    radii[area == 0.0] = np.inf
    return radii


def _boundary_edges(simplices):
    count = defaultdict(int)
    for tri in simplices:
        for u, v in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            count[(min(u, v), max(u, v))] += 1
    return [e for e, c in count.items() if c == 1]


def _signed_area(points, cycle):
    p = points[cycle]
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _cycles(points, edges):
    """Walks boundary edges into closed vertex cycles, counter-clockwise, longest first."""
    adjacency = defaultdict(list)
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    used = set()
    cycles = []
    for u, v in sorted(edges):
        if (u, v) in used:
            continue
        used.add((u, v))
        cycle = [u]
        prev, cur = u, v
        while cur != u:
            cycle.append(cur)
            nxt = None
            for w in adjacency[cur]:
                key = (min(cur, w), max(cur, w))
                if key not in used and w != prev:
                    nxt = w
                    break
            if nxt is None:
                break
            used.add((min(cur, nxt), max(cur, nxt)))
            prev, cur = cur, nxt
        if _signed_area(points, cycle) < 0.0:
            cycle = [cycle[0]] + cycle[:0:-1]
        cycles.append(cycle)
    cycles.sort(key=len, reverse=True)
    return cycles, adjacency


def _alpha_cycles(points, tri, radii, alpha):
    kept = tri.simplices[radii <= alpha]
    if len(kept) == 0:
        return [], {}, kept
    cycles, adjacency = _cycles(points, _boundary_edges(kept))
    return cycles, adjacency, kept


def _is_single_outline(points, tri, radii, alpha):
    cycles, adjacency, kept = _alpha_cycles(points, tri, radii, alpha)
    if len(cycles) != 1:
        return False
    if len(np.unique(kept)) != len(points):
        return False
    return all(len(nbrs) == 2 for nbrs in adjacency.values())


def select_alpha(points, tri, radii, steps=None):
    """Smallest circumradius threshold giving one simple outline that covers every point."""
    if steps is None:
        steps = SOLVE_DEFAULTS['alpha_bisection_steps']
    spectrum = np.unique(radii[np.isfinite(radii)])
    if len(spectrum) == 0:
        return np.inf
    lo, hi = 0, len(spectrum) - 1
    if not _is_single_outline(points, tri, radii, spectrum[hi]):
        logger.debug("Ningún α del espectro da un contorno simple; se usa la envolvente convexa.")
        return np.inf
    for _ in range(steps):
        if lo >= hi:
            break
        mid = (lo + hi) // 2
        if _is_single_outline(points, tri, radii, spectrum[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(spectrum[hi])


def alpha_silhouette(points2d, alpha='auto', steps=None):
    """
    Ordered boundary indices (into the columns of `points2d`) of the α-shape.

    A Delaunay triangle is kept when its circumradius is at most `alpha`, so
    alpha = inf yields the convex hull. Several outlines are returned one after
    the other, the longest first, each counter-clockwise.
    """
    uniq, first = _unique_points(points2d)
    tri = Delaunay(uniq)
    radii = circumradii(uniq, tri.simplices)
    if isinstance(alpha, str):
        alpha = select_alpha(uniq, tri, radii, steps)
    cycles, _, _ = _alpha_cycles(uniq, tri, radii, alpha)
    if not cycles:
        logger.warning("α = %g no conserva ningún triángulo; se usa la envolvente convexa.", alpha)
        cycles, _, _ = _alpha_cycles(uniq, tri, radii, np.inf)

    ordered, seen = [], set()
    for cycle in cycles:
        for v in cycle:
            if v not in seen:
                seen.add(v)
                ordered.append(int(first[v]))
    return ordered


def model_silhouette(model, instance, view_pose, alpha='auto'):
    """Outline of the instantiated model seen from the camera at `view_pose` (camera-to-world)."""
    points = instantiate(model, instance)
    uv = project_perspective(points, view_pose.inverse())
    indices = alpha_silhouette(uv, alpha)
    rays = np.vstack([uv[:, indices], np.ones(len(indices))])
    return ModelSilhouette(indices, rays / np.linalg.norm(rays, axis=0))


def match_silhouettes(model_sil, observed):
    """Each model outline direction takes the observed direction with the smallest ‖c̃ × c‖."""
    a = np.asarray(model_sil.directions).T
    b = np.asarray(observed.directions).T
    norms = np.linalg.norm(np.cross(a[:, None, :], b[None, :, :]), axis=2)
    best = np.argmin(norms, axis=1)
    return SilhouetteCorrespondence(np.column_stack([np.arange(len(a)), best]))


def resample_silhouette(observation, max_directions=None):
    """Keeps at most `max_directions` original directions, evenly spaced in arc length."""
    if max_directions is None:
        max_directions = SOLVE_DEFAULTS['max_silhouette_directions']
    d = observation.directions
    count = d.shape[1]
    if count <= max_directions:
        return observation
    nxt = np.roll(d, -1, axis=1)
    steps = np.arccos(np.clip(np.sum(d * nxt, axis=0), -1.0, 1.0))
    arc = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
    targets = np.linspace(0.0, arc[-1] + steps[-1], max_directions, endpoint=False)
    picks = np.unique(np.clip(np.searchsorted(arc, targets, side='right') - 1, 0, count - 1))
    return SilhouetteObservation(d[:, picks])


def silhouette_terms(problem, instance_local, observations, alpha='auto'):
    terms, pairs = [], set()
    for x, (vp, obs) in enumerate(zip(problem.viewpoints, observations)):
        if obs is None:
            continue
        if vp.pose is None or vp.projection != 'perspective':
            raise DegenerateConfiguration(f"La vista {x} necesita pose conocida y proyección perspectiva.")
        ms = model_silhouette(problem.model, instance_local, vp.pose, alpha)
        corr = match_silhouettes(ms, obs)
        for s, sp in corr.pairs:
            j = int(ms.indices[s])
            direction = vp.pose.rotation.apply(obs.directions[:, sp])
            terms.append((Ray(vp.pose.translation, direction), j))
            pairs.add((x, j, int(sp)))
    return terms, pairs


def solve_silhouette_boosted_ns(problem, observations, lam=None, max_iters=None, backend=None,
                                evaluate=None, alpha='auto', eps_prime=None, max_directions=None):
    """
    Alternates outline matching and re-solving the NS program with the
    correspondence terms weighted `lam` and the outline terms `1 - lam`. Stops
    when an iteration's (view, φ(s), s′) set adds nothing to the previous one.

    Returns (solution, trace); trace rows hold objective, rmse (via `evaluate`
    when given) and the number of outline pairs.
    """
    lam = SOLVE_DEFAULTS['lambda'] if lam is None else lam
    max_iters = SOLVE_DEFAULTS['max_iters'] if max_iters is None else max_iters
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda debe estar en [0, 1].")
    if len(observations) != problem.n_views:
        raise DegenerateConfiguration("Se necesita una observación de silueta (o None) por vista.")
    backend = backend or SolverManager()
    observations = [None if o is None else resample_silhouette(o, max_directions) for o in observations]

    def record(iteration, sol, n_pairs):
        row = {'iter': iteration, 'objective': sol.objective, 'pairs': n_pairs,
               'rmse': evaluate(sol) if evaluate else None}
        trace.append(row)
        logger.debug("Iteración %d: objetivo %.6e, %d pares de silueta", iteration, sol.objective, n_pairs)

    trace = []
    solution = solve_ns(problem, backend, eps_prime=eps_prime)
    record(0, solution, 0)
    if lam == 1.0:
        return solution, trace

    to_local = problem.frame.inverse()
    best = None
    previous = None
    for iteration in range(1, max_iters + 1):
        local = ShapeInstance(solution.instance.weights, to_local.compose(solution.instance.pose))
        terms, pairs = silhouette_terms(problem, local, observations, alpha)
        if previous is not None and not (pairs - previous):
            logger.info("Silueta convergida en %d iteraciones.", iteration - 1)
            return solution, trace
        solution = solve_ns(problem, backend, eps_prime=eps_prime, extra_terms=terms,
                            correspondence_weight=lam, extra_weight=1.0 - lam)
        record(iteration, solution, len(pairs))
        if best is None or solution.objective < best.objective:
            best = solution
        previous = pairs

    raise NonConvergence(f"No hubo convergencia en {max_iters} iteraciones.", best=best or solution, trace=trace)
