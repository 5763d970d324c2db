import logging

import numpy as np
from scipy.spatial.transform import Rotation as ScipyRotation

from settings.config import SOLVE_DEFAULTS
from src.core.errors import DegenerateConfiguration, DegenerateMatrix, DimensionMismatch, NonPositiveDepth
from src.core.models import Ray, RigidTransform, Rotation

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12


def moment_vector(ray, point_on_ray):
    return np.cross(ray.direction, np.asarray(point_on_ray, dtype=float))


def point_to_ray_residual(point, ray):
    """(P - C) × d; its norm is the perpendicular distance since d is unit length."""
    return np.cross(np.asarray(point, dtype=float) - ray.origin, ray.direction)


def project_perspective(points, transform, depth_epsilon=None):
    """Normalised image coordinates of `points` seen through the world-to-camera `transform`."""
    if depth_epsilon is None:
        depth_epsilon = SOLVE_DEFAULTS['depth_epsilon']
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] != 3:
        raise DimensionMismatch(f"points debe ser 3×k, se recibió {pts.shape}")
    cam = transform.apply(pts)
    depth = cam[2]
    if np.any(depth <= depth_epsilon):
        bad = int(np.argmin(depth))
        raise NonPositiveDepth(f"El punto {bad} queda detrás de la cámara (Z = {depth[bad]:.3e}).")
    return cam[:2] / depth


def rays_from_keypoints(keypoints, viewpoint_pose, model='perspective'):
    kp = np.asarray(keypoints, dtype=float)
    if kp.ndim != 2 or kp.shape[0] != 2:
        raise DimensionMismatch(f"keypoints debe ser 2×k, se recibió {kp.shape}")
    rot = viewpoint_pose.rotation.matrix
    center = viewpoint_pose.translation

    rays = []
    if model == 'perspective':
        for u, v in kp.T:
            rays.append(Ray(center, rot @ np.array([u, v, 1.0])))
    elif model == 'orthographic':
        axis = rot[:, 2]
        for u, v in kp.T:
            rays.append(Ray(viewpoint_pose.apply(np.array([u, v, 0.0])), axis))
    else:
        raise DimensionMismatch(f"Modelo de proyección no soportado: {model}")
    return rays


def nearest_rotation(matrix):
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise DegenerateMatrix("Se esperaba una matriz 3×3 finita.")
    u, s, vt = np.linalg.svd(m)
    if s[0] <= 0.0 or s[1] <= SINGULAR_TOL * max(s[0], 1.0):
        raise DegenerateMatrix("Dos valores singulares nulos: la rotación es ambigua.")
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    fix = np.diag([1.0, 1.0, d])
    r = u @ fix @ vt
    u2, _, vt2 = np.linalg.svd(r)
    return Rotation(u2 @ vt2)


def rigid_align(source, target):
    """Least-squares (R, t) with target ≈ R source + t."""
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[0] != 3:
        raise DimensionMismatch("source y target deben ser 3×k con la misma forma.")
    if src.shape[1] < 3:
        raise DegenerateConfiguration("rigid_align necesita al menos 3 puntos.")

    src_c = src.mean(axis=1)
    tgt_c = tgt.mean(axis=1)
    a = src - src_c[:, None]
    b = tgt - tgt_c[:, None]

    sv = np.linalg.svd(a, compute_uv=False)
    if sv[1] <= SINGULAR_TOL * max(sv[0], 1.0):
        raise DegenerateConfiguration("Los puntos de origen son colineales.")

    h = b @ a.T
    try:
        rot = nearest_rotation(h)
    except DegenerateMatrix as exc:
        raise DegenerateConfiguration(f"Alineación rígida degenerada: {exc}") from exc
    t = tgt_c - rot.matrix @ src_c
    return RigidTransform(rot, t)


def random_rotation(rng):
    return Rotation(ScipyRotation.random(random_state=rng).as_matrix())


def rotation_from_euler(angles_deg, order='ZYX'):
    return Rotation(ScipyRotation.from_euler(order, angles_deg, degrees=True).as_matrix())


def look_at(center, target, rng=None):
    """Camera pose at `center` whose optical (Z) axis points at `target`."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z = z / np.linalg.norm(z)
    helper = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    if rng is not None:
        helper = helper + 0.1 * rng.normal(size=3)
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(nearest_rotation(np.column_stack([x, y, z])), center)
