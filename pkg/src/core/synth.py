import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from settings.config import SOLVE_DEFAULTS
from src.core.errors import ConfigInfeasible, ParseError
from src.core.geometry import look_at, project_perspective, rays_from_keypoints, rotation_from_euler
from src.core.models import (CorrespondenceSet, NscProblem, NsProblem, Ray, RigidTransform,
                             ShapeInstance, ShapeModel, SilhouetteObservation, Viewpoint)
from src.core.shape_model import build_ssm, instantiate
from src.core.silhouette import alpha_silhouette

logger = logging.getLogger(__name__)

NS_LADDER = {
    1: (50, 50),
    2: (33, 33, 34),
    3: (25,) * 4,
    4: (10,) * 10,
    5: (1,) * 100,
}

NSC_LADDER = dict(NS_LADDER)
NSC_LADDER[5] = (5,) * 20

LADDER_N = 120
CAMERA_DISTANCE = 3.0
CAMERA_JITTER = 0.3


@dataclass
class ScenarioConfig:
    seed: int = 0
    n: int = LADDER_N
    m: int = 3
    counts: tuple = (50, 50)
    projections: tuple = None
    euler_range_deg: float = 90.0
    translation_range: float = 1.0
    weight_range: tuple = (0.0, 1.0)
    noise_sd: float = 0.0
    density: int = 0
    deformation_scale: float = 0.1
    config_id: str = 'custom'
    family: str = 'ns'
    eps_prime: float = field(default_factory=lambda: SOLVE_DEFAULTS['eps_prime'])
    min_depth: float = field(default_factory=lambda: SOLVE_DEFAULTS['min_depth'])

    def __post_init__(self):
        self.counts = tuple(int(c) for c in self.counts)
        if self.projections is None:
            self.projections = ('perspective',) * len(self.counts)
        self.projections = tuple(self.projections)
        self.weight_range = tuple(float(w) for w in self.weight_range)
        self.config_id = str(self.config_id)

    @property
    def p(self):
        return len(self.counts)

    def validate(self):
        if self.n < 4 or self.m < 1:
            raise ConfigInfeasible("Se necesitan N ≥ 4 y M ≥ 1.")
        if len(self.projections) != self.p:
            raise ConfigInfeasible("Debe haber un modelo de proyección por vista.")
        if sum(self.counts) < 4:
            raise ConfigInfeasible("La suma de correspondencias debe ser al menos 4.")
        if sum(self.counts) > self.n:
            raise ConfigInfeasible(f"Σn_x = {sum(self.counts)} supera N = {self.n}.")
        if not 0.0 <= self.euler_range_deg <= 180.0:
            raise ConfigInfeasible("El rango de ángulos de Euler debe estar en [0, 180].")
        if self.density and self.density < self.n:
            raise ConfigInfeasible("La densidad debe ser 0 o al menos N.")

    @classmethod
    def from_ladder(cls, config_id, family='ns', **overrides):
        ladder = NSC_LADDER if family == 'nsc' else NS_LADDER
        if int(config_id) not in ladder:
            raise ConfigInfeasible(f"Configuración desconocida: {config_id}")
        return cls(counts=ladder[int(config_id)], config_id=str(config_id), family=family, **overrides)

    def with_seed(self, seed):
        data = self.to_dict()
        data['seed'] = int(seed)
        return ScenarioConfig.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        data['counts'] = list(self.counts)
        data['projections'] = list(self.projections)
        data['weight_range'] = list(self.weight_range)
        return data

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ParseError("La configuración debe ser un objeto JSON.")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParseError("Campo desconocido en la configuración", field=sorted(unknown)[0])
        if 'config_id' in data and 'counts' not in data:
            try:
                base = cls.from_ladder(data['config_id'], data.get('family', 'ns')).to_dict()
            except (ConfigInfeasible, ValueError) as exc:
                raise ParseError(str(exc), field='config_id') from exc
            base.update(data)
            data = base
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"Configuración inválida: {exc}") from exc


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    model: ShapeModel
    gt_instance: ShapeInstance
    gt_points: np.ndarray
    viewpoint_poses: tuple
    ns_problem: NsProblem
    nsc_problem: NscProblem = None
    nsc_views: tuple = ()
    silhouettes: tuple = None


def _trig_field(rng, points):
    """Low-frequency smooth displacement field, normalised to unit RMS per point."""
    out = np.empty_like(points)
    for axis in range(3):
        freq = rng.normal(0.0, np.pi, 3)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out[axis] = np.sin(freq @ points + phase)
    rms = np.sqrt(np.mean(np.sum(out ** 2, axis=0)))
    return out / rms if rms > 0.0 else out


def generate_population(seed, n, m, deformation_scale, n_samples=None):
    """Base cloud in the unit cube plus N(0, 1) mixtures of M smooth fields."""
    rng = np.random.default_rng(seed)
    n_samples = 2 * m + 1 if n_samples is None else n_samples
    base = rng.uniform(-0.5, 0.5, (3, n))
    fields_ = np.stack([_trig_field(rng, base) for _ in range(m)])
    coeffs = rng.normal(0.0, 1.0, (n_samples, m))
    return [base + deformation_scale * np.tensordot(c, fields_, axes=1) for c in coeffs]


def densify_coefficients(model, target_n, rng):
    """(neighbours, weights): each new point is a convex mix of 4 nearby mean-shape points."""
    extra = target_n - model.n
    tree = cKDTree(model.mean.T)
    anchors = rng.integers(0, model.n, extra)
    _, neighbours = tree.query(model.mean[:, anchors].T, k=4)
    weights = rng.dirichlet(np.ones(4), extra)
    return np.asarray(neighbours), weights


def densify_for_silhouette(model, target_n, seed=0):
    if target_n <= model.n:
        return model
    rng = np.random.default_rng(seed)
    neighbours, weights = densify_coefficients(model, target_n, rng)

    def extend(cloud):
        added = np.einsum('kc,ikc->ik', weights, cloud[:, neighbours])
        return np.hstack([cloud, added])

    return ShapeModel(extend(model.mean), tuple(extend(b) for b in model.bases), model.zero_variance)


def _random_pose(rng, config):
    angles = rng.uniform(-config.euler_range_deg, config.euler_range_deg, 3)
    translation = rng.uniform(-config.translation_range, config.translation_range, 3)
    return RigidTransform(rotation_from_euler(angles), translation)


def _place_cameras(rng, points, count):
    centroid = points.mean(axis=1)
    diagonal = np.linalg.norm(points.max(axis=1) - points.min(axis=1))
    poses = []
    for _ in range(count):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        radius = CAMERA_DISTANCE * diagonal * (1.0 + rng.uniform(-CAMERA_JITTER, CAMERA_JITTER))
        poses.append(look_at(centroid + radius * direction, centroid, rng))
    return tuple(poses)


def _observe(points, pose, projection):
    world_to_cam = pose.inverse()
    if projection == 'orthographic':
        keypoints = world_to_cam.apply(points)[:2]
    else:
        keypoints = project_perspective(points, world_to_cam)
    return keypoints, rays_from_keypoints(keypoints, pose, projection)


def observed_silhouette(points, pose, alpha='auto'):
    uv = project_perspective(points, pose.inverse())
    idx = alpha_silhouette(uv, alpha)
    directions = np.vstack([uv[:, idx], np.ones(len(idx))])
    return SilhouetteObservation(directions)


def generate_scenario(config):
    """Deterministic scenario for `config`; the whole draw depends on config.seed only."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    population = generate_population(config.seed, config.n, config.m, config.deformation_scale)
    model = build_ssm(population, variance_fraction=1.0)
    if config.density > config.n:
        model = densify_for_silhouette(model, config.density, seed=config.seed)

    weights = rng.uniform(config.weight_range[0], config.weight_range[1], model.m)
    gt_instance = ShapeInstance(weights, _random_pose(rng, config))
    gt_points = instantiate(model, gt_instance)
    poses = _place_cameras(rng, gt_points, config.p)

    order = rng.permutation(config.n)
    splits = np.split(order[:sum(config.counts)], np.cumsum(config.counts)[:-1])

    viewpoints, correspondences, local_views, nsc_views = [], [], [], []
    for x, (pose, idx, projection) in enumerate(zip(poses, splits, config.projections)):
        observed = gt_points[:, idx]
        if config.noise_sd > 0.0:
            observed = observed + rng.normal(0.0, config.noise_sd, observed.shape)
        keypoints, rays = _observe(observed, pose, projection)
        viewpoints.append(Viewpoint(rays, pose, projection))
        correspondences.append(CorrespondenceSet([(int(j), k) for k, j in enumerate(idx)]))
        if projection == 'perspective':
            local_views.append([Ray(np.zeros(3), np.array([u, v, 1.0])) for u, v in keypoints.T])
            nsc_views.append(x)

    ns_problem = NsProblem(model, viewpoints, correspondences, eps_prime=config.eps_prime)
    nsc_problem = None
    if nsc_views:
        nsc_problem = NscProblem(
            model,
            local_views,
            [correspondences[x] for x in nsc_views],
            min_depths=[config.min_depth] * len(nsc_views),
            eps_prime=config.eps_prime,
        )

    silhouettes = None
    if config.density:
        silhouettes = tuple(
            observed_silhouette(gt_points, pose) if projection == 'perspective' else None
            for pose, projection in zip(poses, config.projections)
        )

    logger.debug("Escenario %s (semilla %d): N=%d, M=%d, P=%d",
                 config.config_id, config.seed, model.n, model.m, config.p)
    return Scenario(config, model, gt_instance, gt_points, poses, ns_problem,
                    nsc_problem, tuple(nsc_views), silhouettes)
