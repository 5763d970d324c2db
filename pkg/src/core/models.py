from dataclasses import dataclass, field

import numpy as np

from settings.config import SOLVE_DEFAULTS
from src.core.errors import DegenerateConfiguration, DimensionMismatch, GsftError

ROTATION_TOL = 1e-9
PROJECTIONS = ('perspective', 'orthographic', 'generalised')


def _frozen_array(values, shape=None, name='array'):
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise DimensionMismatch(f"{name} debe tener forma {shape}, se recibió {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Ray:
    """Sightline (origin, unit direction); the direction is normalised here and nowhere else."""
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        origin = _frozen_array(self.origin, (3,), 'origin')
        direction = np.array(self.direction, dtype=float)
        if direction.shape != (3,):
            raise DimensionMismatch(f"direction debe tener forma (3,), se recibió {direction.shape}")
        norm = np.linalg.norm(direction)
        if not np.isfinite(norm) or norm == 0.0:
            raise DegenerateConfiguration("La dirección de un rayo no puede ser nula.")
        object.__setattr__(self, 'origin', origin)
        object.__setattr__(self, 'direction', _frozen_array(direction / norm))


@dataclass(frozen=True, eq=False)
class Rotation:
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen_array(self.matrix, (3, 3), 'rotation')
        if not np.allclose(m @ m.T, np.eye(3), atol=ROTATION_TOL, rtol=0.0):
            raise GsftError("La matriz no es ortonormal (R Rᵀ ≠ I).")
        if abs(np.linalg.det(m) - 1.0) > ROTATION_TOL:
            raise GsftError("La matriz tiene determinante distinto de +1.")
        object.__setattr__(self, 'matrix', m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @property
    def T(self):
        return Rotation(self.matrix.T)

    def apply(self, points):
        return self.matrix @ np.asarray(points, dtype=float)

    def compose(self, other):
        return Rotation(self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> R x + t."""
    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'translation', _frozen_array(self.translation, (3,), 'translation'))

    @classmethod
    def identity(cls):
        return cls(Rotation.identity(), np.zeros(3))

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self.rotation.matrix @ pts + self.translation
        return self.rotation.matrix @ pts + self.translation[:, None]

    def inverse(self):
        rt = self.rotation.matrix.T
        return RigidTransform(Rotation(rt), -rt @ self.translation)

    def compose(self, other):
        """self ∘ other: apply `other` first."""
        return RigidTransform(
            Rotation(self.rotation.matrix @ other.rotation.matrix),
            self.rotation.matrix @ other.translation + self.translation
        )

    def as_matrix(self):
        h = np.eye(4)
        h[:3, :3] = self.rotation.matrix
        h[:3, 3] = self.translation
        return h


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """Statistical shape model: mean (3×N) plus M basis displacement fields (3×N each)."""
    mean: np.ndarray
    bases: tuple
    zero_variance: bool = False

    def __post_init__(self):
        mean = _frozen_array(self.mean, name='mean')
        if mean.ndim != 2 or mean.shape[0] != 3:
            raise DimensionMismatch(f"mean debe ser 3×N, se recibió {mean.shape}")
        if mean.shape[1] < 4:
            raise DimensionMismatch("El modelo necesita al menos 4 puntos.")
        if len(self.bases) < 1:
            raise DimensionMismatch("El modelo necesita al menos una base (M ≥ 1).")
        bases = tuple(_frozen_array(b, mean.shape, 'basis') for b in self.bases)
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'bases', bases)

    @property
    def n(self):
        return self.mean.shape[1]

    @property
    def m(self):
        return len(self.bases)

    def basis_stack(self):
        """(M, 3, N) view of the bases."""
        return np.stack(self.bases)


@dataclass(frozen=True, eq=False)
class ShapeInstance:
    weights: np.ndarray
    pose: RigidTransform

    def __post_init__(self):
        w = _frozen_array(np.atleast_1d(self.weights), name='weights')
        if w.ndim != 1:
            raise DimensionMismatch("weights debe ser un vector.")
        if not np.all(np.isfinite(w)):
            raise GsftError("Los pesos deben ser finitos.")
        object.__setattr__(self, 'weights', w)


@dataclass(frozen=True, eq=False)
class Viewpoint:
    """Group of sightlines; `pose` is the camera-to-world transform when known."""
    rays: tuple
    pose: RigidTransform = None
    projection: str = 'perspective'

    def __post_init__(self):
        object.__setattr__(self, 'rays', tuple(self.rays))
        if self.projection not in PROJECTIONS:
            raise GsftError(f"Proyección desconocida: {self.projection}")

    @property
    def center(self):
        if self.pose is None:
            return None
        return self.pose.translation


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Pairs (j, j'): template column j observed by ray j' of the viewpoint (0-based)."""
    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=int).reshape(-1, 2)
        pairs.setflags(write=False)
        object.__setattr__(self, 'pairs', pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter((int(j), int(jp)) for j, jp in self.pairs)


def _check_correspondences(model, ray_lists, correspondences):
    if len(ray_lists) != len(correspondences):
        raise DimensionMismatch("La cantidad de vistas y de conjuntos de correspondencias no coincide.")
    if len(ray_lists) < 1:
        raise DimensionMismatch("Se necesita al menos una vista.")
    for x, (rays, corr) in enumerate(zip(ray_lists, correspondences)):
        for j, jp in corr:
            if not 0 <= j < model.n:
                raise DimensionMismatch(f"Vista {x}: índice de plantilla {j} fuera de rango.")
            if not 0 <= jp < len(rays):
                raise DimensionMismatch(f"Vista {x}: índice de rayo {jp} fuera de rango.")


@dataclass(frozen=True, eq=False)
class NsProblem:
    model: ShapeModel
    viewpoints: tuple
    correspondences: tuple
    eps_prime: float = SOLVE_DEFAULTS['eps_prime']
    frame: RigidTransform = None

    def __post_init__(self):
        object.__setattr__(self, 'viewpoints', tuple(self.viewpoints))
        object.__setattr__(self, 'correspondences', tuple(self.correspondences))
        if self.frame is None:
            object.__setattr__(self, 'frame', RigidTransform.identity())
        _check_correspondences(self.model, [vp.rays for vp in self.viewpoints], self.correspondences)
        if sum(len(c) for c in self.correspondences) < 4:
            raise DegenerateConfiguration("NS necesita al menos 4 correspondencias en total.")

    @property
    def n_views(self):
        return len(self.viewpoints)

    def terms(self):
        """(ray, template index) for every correspondence, view by view."""
        for vp, corr in zip(self.viewpoints, self.correspondences):
            for j, jp in corr:
                yield vp.rays[jp], j


@dataclass(frozen=True, eq=False)
class RankDiagnostics:
    eigenvalues: np.ndarray
    ratio: float
    scale: float
    high_rank: bool
    sign_ambiguous: bool = False
    sign_flipped: bool = False
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class NsSolution:
    instance: ShapeInstance
    reconstruction: np.ndarray
    objective: float
    rank: RankDiagnostics
    residuals: np.ndarray
    status: str
    fit_cost: float = 0.0
    lift: object = None


@dataclass(frozen=True, eq=False)
class NscProblem:
    """Gauge-fixed NSC input: per-view local rays, all centred at the origin."""
    model: ShapeModel
    rays: tuple
    correspondences: tuple
    min_depths: tuple
    eps_prime: float = SOLVE_DEFAULTS['eps_prime']

    def __post_init__(self):
        rays = tuple(tuple(r) for r in self.rays)
        object.__setattr__(self, 'rays', rays)
        object.__setattr__(self, 'correspondences', tuple(self.correspondences))
        depths = tuple(float(f) for f in np.broadcast_to(np.atleast_1d(self.min_depths), (len(rays),)))
        object.__setattr__(self, 'min_depths', depths)
        _check_correspondences(self.model, rays, self.correspondences)
        for view in rays:
            for ray in view:
                if np.any(ray.origin != 0.0):
                    raise DegenerateConfiguration("NSC exige rayos con origen en el centro de la vista.")
        if any(f <= 0.0 for f in depths):
            raise DegenerateConfiguration("La profundidad mínima f_x debe ser positiva.")

    @property
    def n_views(self):
        return len(self.rays)


@dataclass(frozen=True, eq=False)
class NscSolution:
    weights: np.ndarray
    transforms: tuple
    viewpoint_poses: tuple
    relative_poses: tuple
    objective: float
    diagnostics: tuple
    status: str
    per_view_weights: np.ndarray = None
    lifts: tuple = field(default_factory=tuple)


@dataclass(frozen=True, eq=False)
class SilhouetteObservation:
    """Per-view silhouette as unit directions (3×S) in the camera frame of the view."""
    directions: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[0] != 3:
            raise DimensionMismatch(f"directions debe ser 3×S, se recibió {d.shape}")
        norms = np.linalg.norm(d, axis=0)
        if np.any(norms == 0.0):
            raise DegenerateConfiguration("La silueta contiene direcciones nulas.")
        if d.shape[1] < 3:
            raise DegenerateConfiguration("La silueta necesita al menos 3 direcciones.")
        object.__setattr__(self, 'directions', _frozen_array(d / norms))

    def __len__(self):
        return self.directions.shape[1]


@dataclass(frozen=True, eq=False)
class ModelSilhouette:
    indices: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=int)
        if len(np.unique(idx)) != len(idx):
            raise GsftError("Los índices de la silueta del modelo deben ser únicos.")
        idx.setflags(write=False)
        object.__setattr__(self, 'indices', idx)
        object.__setattr__(self, 'directions', _frozen_array(self.directions))

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class SilhouetteCorrespondence:
    """Pairs (s, s'): model boundary position s matched to observed direction s'."""
    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=int).reshape(-1, 2)
        if len(np.unique(pairs[:, 0])) != len(pairs):
            raise GsftError("Cada posición s de la silueta del modelo aparece a lo sumo una vez.")
        pairs.setflags(write=False)
        object.__setattr__(self, 'pairs', pairs)

    def __len__(self):
        return len(self.pairs)
