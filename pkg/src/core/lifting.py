"""
ξ = (1, vec(R) row-major, w_1 .. w_M), Δ = ξ ξᵀ. The ω operators only index
`delta[i, j]`, so they work on a numeric GramLift and on a LiftVariable alike.
"""
import logging
from dataclasses import dataclass

import numpy as np

from settings.config import SOLVE_DEFAULTS
from src.core.conic import LinearFunctional
from src.core.errors import DegenerateMatrix, DimensionMismatch, GsftError, SignAmbiguity
from src.core.geometry import nearest_rotation
from src.core.models import RankDiagnostics, Rotation

logger = logging.getLogger(__name__)

ROT_DIM = 10
SYMMETRY_TOL = 1e-10
SCALE_FLOOR = 1e-6

# 1-based rotation-row pairs (r, r') whose inner product ω_d constrains
ROW_PAIRS = {1: (1, 2), 2: (1, 3), 3: (2, 3)}


def rot_index(a, b):
    return 1 + 3 * a + b


def weight_index(i):
    return ROT_DIM + i


@dataclass(frozen=True, eq=False)
class GramLift:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < ROT_DIM + 1:
            raise DimensionMismatch(f"Un levantamiento debe ser cuadrado de dimensión ≥ 11, se recibió {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > SYMMETRY_TOL * scale:
            raise GsftError("El levantamiento no es simétrico.")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, 'matrix', m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def m(self):
        return self.dim - ROT_DIM

    def __getitem__(self, key):
        return float(self.matrix[key])

    def trace(self):
        return float(np.trace(self.matrix))


def lift_from_parameters(rotation, weights):
    """Rank-1 lift of (R, w). Accepts a Rotation or any 3×3 array (pseudo-rotations included)."""
    r = rotation.matrix if isinstance(rotation, Rotation) else np.asarray(rotation, dtype=float)
    xi = np.concatenate([[1.0], r.reshape(-1), np.atleast_1d(np.asarray(weights, dtype=float))])
    return GramLift(np.outer(xi, xi))


def _dim_of(delta):
    return delta.dim


def omega_a(delta):
    """Σ of the last M diagonal entries (Σ w_i² on rank-1 lifts)."""
    dim = _dim_of(delta)
    if dim < ROT_DIM + 1:
        raise DimensionMismatch("omega_a necesita al menos un peso.")
    return sum((delta[k, k] for k in range(ROT_DIM, dim)), 0.0)


def _check_r(r):
    if r not in (1, 2, 3):
        raise ValueError(f"r debe estar en 1..3, se recibió {r}")


def omega_c(delta, r):
    """Trace of the r-th (1-based) diagonal 3×3 rotation block: ‖R_r‖² on rank-1 lifts."""
    _check_r(r)
    return sum((delta[rot_index(r - 1, b), rot_index(r - 1, b)] for b in range(3)), 0.0)


def omega_d(delta, r):
    """Trace of the off-diagonal block pairing the rotation rows in ROW_PAIRS[r]."""
    _check_r(r)
    ra, rb = ROW_PAIRS[r]
    return sum((delta[rot_index(ra - 1, b), rot_index(rb - 1, b)] for b in range(3)), 0.0)


def _cross(r, d):
    return [
        r[1] * d[2] - r[2] * d[1],
        r[2] * d[0] - r[0] * d[2],
        r[0] * d[1] - r[1] * d[0],
    ]


def lifted_point(delta, translation, mean_point, basis_points):
    """P↑ = R p̄ + Σ_i w_i R p_i + t written through Δ's first row and weight rows."""
    m = _dim_of(delta) - ROT_DIM
    basis_points = np.asarray(basis_points, dtype=float).reshape(-1, 3)
    if basis_points.shape[0] != m:
        raise DimensionMismatch(f"Se esperaban {m} puntos base, se recibieron {basis_points.shape[0]}.")
    if len(translation) != 3:
        raise DimensionMismatch("La traslación debe tener 3 componentes.")
    mean_point = np.asarray(mean_point, dtype=float)

    point = []
    for a in range(3):
        acc = translation[a]
        for b in range(3):
            if mean_point[b] != 0.0:
                acc = acc + delta[0, rot_index(a, b)] * mean_point[b]
            for i in range(m):
                c = basis_points[i, b]
                if c != 0.0:
                    acc = acc + delta[weight_index(i), rot_index(a, b)] * c
        point.append(acc)
    return point


def omega_b(delta, translation, ray, mean_point, basis_points):
    point = lifted_point(delta, translation, mean_point, basis_points)
    rel = [point[a] - float(ray.origin[a]) for a in range(3)]
    return _cross(rel, [float(v) for v in ray.direction])


def assemble_l1_epigraph(problem, expr, weight=1.0, label='l1'):
    """
    Adds weight·‖expr‖₁ to the objective of `problem` through u⁺ - u⁻ = expr_k
    with u⁺, u⁻ ≥ 0. Returns the auxiliary block, or None when weight is 0.
    """
    if weight == 0.0:
        return None
    if weight < 0.0:
        raise ValueError("El peso de un término L1 no puede ser negativo.")
    k = len(expr)
    aux = problem.add_nonneg(label, 2 * k)
    for comp in range(k):
        e = expr[comp] if isinstance(expr[comp], LinearFunctional) else LinearFunctional.const(expr[comp])
        problem.add_equality(aux[comp] - aux[k + comp] - e, 0.0)
        problem.add_objective(aux[comp] + aux[k + comp], weight)
    return aux


def add_rotation_constraints(problem, lift):
    problem.add_equality(lift[0, 0], 1.0)
    for r in (1, 2, 3):
        problem.add_equality(omega_c(lift, r), 1.0)
        problem.add_equality(omega_d(lift, r), 0.0)


def rank_spectrum(matrix):
    eig = np.sort(np.linalg.eigvalsh(matrix))[::-1]
    ratio = float(eig[1] / eig[0]) if eig[0] > 0.0 else float('inf')
    return eig, ratio


def _as_array(delta):
    return delta.matrix if isinstance(delta, GramLift) else np.asarray(delta, dtype=float)


def lift_scale(delta, rotation):
    """Signed s such that the first rotation row of Δ is s·vec(R)."""
    mat = _as_array(delta)
    return float(mat[0, 1:ROT_DIM] @ rotation.matrix.reshape(-1)) / 3.0


def read_weights(delta, rotation, scale=None):
    """w_i = Δ[w_i, R]·vec(R) / 3s, or the first-row segment when s vanishes."""
    mat = _as_array(delta)
    if scale is None:
        scale = lift_scale(mat, rotation)
    if abs(scale) < SCALE_FLOOR:
        return np.array(mat[0, ROT_DIM:])
    return mat[ROT_DIM:, 1:ROT_DIM] @ rotation.matrix.reshape(-1) / (3.0 * scale)


def cross_block_spectrum(matrix):
    """Squared singular values of Δ[(1, w), R], rank one as s·(1, w) vec(R)ᵀ for any s."""
    mat = np.asarray(matrix, dtype=float)
    block = np.vstack([mat[:1, 1:ROT_DIM], mat[ROT_DIM:, 1:ROT_DIM]])
    eig = np.linalg.svd(block, compute_uv=False) ** 2
    ratio = float(eig[1] / eig[0]) if eig[0] > 0.0 else float('inf')
    return eig, ratio


def _dominant_rotation(mat):
    _, vecs = np.linalg.eigh(mat[1:ROT_DIM, 1:ROT_DIM])
    putative = np.sqrt(3.0) * vecs[:, -1].reshape(3, 3)
    if np.linalg.det(putative) < 0.0:
        putative = -putative
    try:
        return nearest_rotation(putative)
    except DegenerateMatrix:
        return Rotation.identity()


def extract_solution(delta, cost=None, strict=False, rank_one_ratio=None, scale_free=False):
    """
    R from the first row of Δ projected onto SO(3), w from read_weights.

    When the putative rotation has negative determinant the reflection is
    resolved with `cost(rotation, weights, flipped)`: the flipped candidate
    uses -R (and the caller negates t). Without a cost callback the ambiguity
    is only flagged, or raised as SignAmbiguity when `strict`.

    A vanishing first row is reported as degenerate and high rank; R then
    comes from the leading eigenvector of the rotation block. With
    `scale_free` the rank is judged on cross_block_spectrum, for programs
    whose cost does not fix s and so leave the rotation block loose.
    """
    if rank_one_ratio is None:
        rank_one_ratio = SOLVE_DEFAULTS['rank_one_ratio']
    mat = _as_array(delta)
    if abs(mat[0, 0] - 1.0) > 1e-3:
        logger.warning("Δ₁₁ = %.6f se aleja de 1; la lectura de la primera fila es aproximada.", mat[0, 0])

    first = mat[0, 1:ROT_DIM]
    putative = first.reshape(3, 3)
    det = float(np.linalg.det(putative))
    degenerate = bool(np.linalg.norm(first) < np.sqrt(3.0) * SCALE_FLOOR)

    sign_ambiguous = False
    sign_flipped = False
    if not degenerate:
        try:
            rotation = nearest_rotation(putative)
        except DegenerateMatrix:
            degenerate = True

    if degenerate:
        rotation = _dominant_rotation(mat)
        logger.warning("Primera fila de Δ nula (‖·‖ = %.3e): R se toma del bloque de rotación.", np.linalg.norm(first))
    elif det < 0.0:
        flipped = nearest_rotation(-putative)
        if cost is not None:
            keep_cost = cost(rotation, read_weights(mat, rotation), False)
            flip_cost = cost(flipped, read_weights(mat, flipped), True)
            if flip_cost < keep_cost:
                rotation = flipped
                sign_flipped = True
                logger.warning("Determinante negativo: se invierte (R, t) (costo %.6e < %.6e).", flip_cost, keep_cost)
            else:
                logger.warning("Determinante negativo: se conserva R proyectada (costo %.6e).", keep_cost)
        else:
            sign_ambiguous = True
            if strict:
                raise SignAmbiguity(f"det(R) = {det:.6f} < 0 y no hay criterio para resolver el signo.")
            logger.warning("Ambigüedad de signo sin resolver: det(R) = %.6f", det)

    scale = lift_scale(mat, rotation)
    weights = read_weights(mat, rotation, scale)
    eig, ratio = cross_block_spectrum(mat) if scale_free else rank_spectrum(mat)
    high_rank = degenerate or ratio > rank_one_ratio
    if high_rank:
        logger.warning("Solución de rango alto: λ₂/λ₁ = %.3e, escala = %.4f", ratio, scale)
    diagnostics = RankDiagnostics(eig, ratio, abs(scale), high_rank, sign_ambiguous, sign_flipped, degenerate)
    return rotation, weights, diagnostics
