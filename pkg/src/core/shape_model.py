import json
import logging

import numpy as np
from sklearn.decomposition import PCA

from settings.config import SSM_DEFAULTS
from src.core.errors import (DimensionMismatch, InconsistentPointCounts, InsufficientSamples,
                             ParseError)
from src.core.geometry import rigid_align
from src.core.models import ShapeModel

logger = logging.getLogger(__name__)

MODE_TOL = 1e-12


def deform(model, weights):
    """Q = mean + Σ w_i basis_i, in the object frame."""
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if w.shape != (model.m,):
        raise DimensionMismatch(f"Se esperaban {model.m} pesos, se recibieron {w.shape[0]}.")
    return model.mean + np.tensordot(w, model.basis_stack(), axes=1)


def instantiate(model, instance):
    return instance.pose.apply(deform(model, instance.weights))


def _check_samples(samples):
    if len(samples) < 2:
        raise InsufficientSamples("build_ssm necesita al menos 2 muestras.")
    arrays = [np.asarray(s, dtype=float) for s in samples]
    first = arrays[0].shape
    if len(first) != 2 or first[0] != 3:
        raise DimensionMismatch(f"Cada muestra debe ser 3×N, se recibió {first}.")
    for i, a in enumerate(arrays):
        if a.shape != first:
            raise InconsistentPointCounts(f"La muestra {i} tiene forma {a.shape}, se esperaba {first}.")
    return arrays


def build_ssm(samples, variance_fraction=None):
    """
    PCA shape model over pre-aligned samples.

    Bases are the principal directions of the centred, row-major vectorised
    samples scaled by σ_k / sqrt(S - 1), so a unit weight moves the shape by one
    standard deviation along that mode. The smallest M reaching
    `variance_fraction` of the total variance is kept, with M ≤ S - 1.
    """
    if variance_fraction is None:
        variance_fraction = SSM_DEFAULTS['variance_fraction']
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction debe estar en (0, 1].")

    arrays = _check_samples(samples)
    shape = arrays[0].shape
    n_samples = len(arrays)
    data = np.stack([a.reshape(-1) for a in arrays])
    mean = data.mean(axis=0)

    if np.abs(data - mean).max() <= MODE_TOL * max(1.0, float(np.abs(data).max())):
        logger.warning("Población sin varianza: se devuelve una base nula (ZeroVariance).")
        return ShapeModel(mean.reshape(shape), (np.zeros(shape),), zero_variance=True)

    pca = PCA(svd_solver='full')
    pca.fit(data)
    variances = pca.explained_variance_
    significant = np.sqrt(variances) > MODE_TOL * np.sqrt(variances[0])
    cumulative = np.cumsum(variances) / variances.sum()
    m = int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)
    m = max(1, min(m, int(significant.sum()), n_samples - 1))

    bases = tuple((pca.components_[k] * np.sqrt(variances[k])).reshape(shape) for k in range(m))
    logger.debug("SSM construido: N=%d, M=%d, varianza retenida=%.6f", shape[1], m, cumulative[m - 1])
    return ShapeModel(mean.reshape(shape), bases)


def align_population(samples, max_iters=50, tol=1e-12):
    """
    Generalised Procrustes alignment (rotation and translation only).

    Every sample is registered to the running mean until the mean stops moving;
    the first sample fixes the gauge of the result.
    """
    arrays = _check_samples(samples)
    reference = arrays[0] - arrays[0].mean(axis=1, keepdims=True)
    aligned = arrays
    for it in range(max_iters):
        aligned = [rigid_align(a, reference).apply(a) for a in arrays]
        new_reference = np.mean(aligned, axis=0)
        new_reference = rigid_align(new_reference, reference).apply(new_reference)
        shift = np.linalg.norm(new_reference - reference)
        reference = new_reference
        if shift <= tol * max(1.0, np.linalg.norm(reference)):
            logger.debug("Procrustes generalizado convergió en %d iteraciones", it + 1)
            break
    return [np.array(a) for a in aligned]


def model_to_dict(model):
    return {
        "n": model.n,
        "m": model.m,
        "mean": model.mean.T.tolist(),
        "bases": [b.T.tolist() for b in model.bases],
        "zero_variance": model.zero_variance,
    }


def _points_field(value, n, field):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"Valores no numéricos: {exc}", field=field) from exc
    if arr.shape != (n, 3):
        raise ParseError(f"Se esperaban {n} puntos [x, y, z], se recibió forma {arr.shape}", field=field)
    return arr.T


def model_from_dict(data):
    if not isinstance(data, dict):
        raise ParseError("El archivo de modelo debe ser un objeto JSON.")
    for key in ("n", "m", "mean", "bases"):
        if key not in data:
            raise ParseError("Falta un campo obligatorio", field=key)
    try:
        n = int(data["n"])
        m = int(data["m"])
    except (TypeError, ValueError) as exc:
        raise ParseError("n y m deben ser enteros", field="n/m") from exc
    mean = _points_field(data["mean"], n, "mean")
    if not isinstance(data["bases"], list) or len(data["bases"]) != m:
        raise ParseError(f"Se esperaban {m} bases", field="bases")
    bases = tuple(_points_field(b, n, f"bases[{i}]") for i, b in enumerate(data["bases"]))
    try:
        return ShapeModel(mean, bases, zero_variance=bool(data.get("zero_variance", False)))
    except DimensionMismatch as exc:
        raise ParseError(str(exc), field="mean") from exc


def save_model(model, path):
    with open(path, 'w') as f:
        json.dump(model_to_dict(model), f)
    return path


def load_model(path):
    with open(path, 'r') as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"JSON inválido: {exc.msg}", line=exc.lineno) from exc
    return model_from_dict(data)
