import json

import numpy as np
import pytest

from src.core.errors import DimensionMismatch, InconsistentPointCounts, InsufficientSamples, ParseError
from src.core.geometry import random_rotation
from src.core.models import RigidTransform, Rotation, ShapeInstance
from src.core.shape_model import (align_population, build_ssm, deform, instantiate, load_model,
                                  model_from_dict, save_model)


def test_deform_zero_weights_is_mean(small_model):
    assert np.array_equal(deform(small_model, np.zeros(2)), small_model.mean)


def test_deform_matches_point_loop(small_model, rng):
    w = rng.normal(size=2)
    q = deform(small_model, w)
    for j in range(small_model.n):
        for a in range(3):
            expected = small_model.mean[a, j] + sum(w[i] * small_model.bases[i][a, j] for i in range(2))
            assert abs(q[a, j] - expected) < 1e-14


def test_deform_is_affine_in_weights(small_model, rng):
    w1, w2 = rng.normal(size=2), rng.normal(size=2)
    lhs = deform(small_model, w1 + w2)
    rhs = deform(small_model, w1) + deform(small_model, w2) - small_model.mean
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_deform_checks_weight_count(small_model):
    with pytest.raises(DimensionMismatch):
        deform(small_model, np.zeros(3))


def test_instantiate_translation_and_rigidity(small_model, rng):
    t = np.array([1.0, -2.0, 0.5])
    moved = instantiate(small_model, ShapeInstance(np.zeros(2), RigidTransform(random_rotation(rng), t)))
    pure = instantiate(small_model, ShapeInstance(np.zeros(2), RigidTransform.identity()))
    assert np.allclose(pure, small_model.mean)

    shifted = instantiate(small_model, ShapeInstance(np.zeros(2), RigidTransform(Rotation.identity(), t)))
    assert np.allclose(shifted, small_model.mean + t[:, None])

    q = small_model.mean
    for j, k in ((0, 1), (2, 7), (3, 11)):
        assert abs(np.linalg.norm(moved[:, j] - moved[:, k]) - np.linalg.norm(q[:, j] - q[:, k])) < 1e-10


def test_build_ssm_two_samples_gives_difference_mode(rng):
    a = rng.normal(size=(3, 6))
    b = rng.normal(size=(3, 6))
    model = build_ssm([a, b], variance_fraction=0.99)
    assert model.m == 1
    assert np.allclose(model.mean, 0.5 * (a + b))
    diff = (a - b).reshape(-1)
    basis = model.bases[0].reshape(-1)
    cosine = abs(diff @ basis) / (np.linalg.norm(diff) * np.linalg.norm(basis))
    assert cosine == pytest.approx(1.0, abs=1e-10)
    # unit weight = one standard deviation along the mode
    assert np.linalg.norm(basis) == pytest.approx(np.linalg.norm(diff) / np.sqrt(2.0), rel=1e-10)


def test_build_ssm_identical_samples_flags_zero_variance(rng):
    a = rng.normal(size=(3, 5))
    model = build_ssm([a, a.copy(), a.copy()])
    assert model.zero_variance
    assert model.m == 1
    assert np.all(model.bases[0] == 0.0)


def test_build_ssm_reconstructs_training_samples(rng):
    samples = [rng.normal(size=(3, 8)) for _ in range(10)]
    model = build_ssm(samples, variance_fraction=1.0)
    assert model.m == 9
    basis = np.stack([b.reshape(-1) for b in model.bases], axis=1)
    for s in samples:
        target = (s - model.mean).reshape(-1)
        w, *_ = np.linalg.lstsq(basis, target, rcond=None)
        assert np.linalg.norm(basis @ w - target) < 1e-8


def test_build_ssm_bases_are_orthogonal(rng):
    model = build_ssm([rng.normal(size=(3, 8)) for _ in range(6)], variance_fraction=1.0)
    for i in range(model.m):
        for k in range(i + 1, model.m):
            bi, bk = model.bases[i].reshape(-1), model.bases[k].reshape(-1)
            assert abs(bi @ bk) < 1e-8 * np.linalg.norm(bi) * np.linalg.norm(bk)


def test_build_ssm_input_checks(rng):
    with pytest.raises(InsufficientSamples):
        build_ssm([rng.normal(size=(3, 5))])
    with pytest.raises(InconsistentPointCounts):
        build_ssm([rng.normal(size=(3, 5)), rng.normal(size=(3, 6))])
    with pytest.raises(ValueError):
        build_ssm([rng.normal(size=(3, 5))] * 2, variance_fraction=0.0)


def test_align_population_removes_rigid_motion(rng):
    base = rng.normal(size=(3, 10))
    samples = [random_rotation(rng).apply(base) + rng.normal(size=(3, 1)) for _ in range(4)]
    aligned = align_population(samples)
    for a in aligned[1:]:
        assert np.allclose(a, aligned[0], atol=1e-8)


def test_model_file_round_trip(tmp_path, small_model):
    path = save_model(small_model, tmp_path / 'model.json')
    loaded = load_model(path)
    assert np.array_equal(loaded.mean, small_model.mean)
    for a, b in zip(loaded.bases, small_model.bases):
        assert np.array_equal(a, b)


def test_truncated_model_file_raises_parse_error(tmp_path, small_model):
    path = save_model(small_model, tmp_path / 'model.json')
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ParseError) as info:
        load_model(path)
    assert info.value.line is not None


def test_hand_written_minimal_model(tmp_path):
    data = {
        "n": 4,
        "m": 1,
        "mean": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "bases": [[[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1], [0, 0, 0]]],
    }
    path = tmp_path / 'minimal.json'
    path.write_text(json.dumps(data))
    model = load_model(path)
    assert model.n == 4 and model.m == 1
    assert np.array_equal(model.mean, np.array(data["mean"], dtype=float).T)
    assert np.array_equal(model.bases[0], np.array(data["bases"][0], dtype=float).T)


def test_model_from_dict_reports_missing_field():
    with pytest.raises(ParseError) as info:
        model_from_dict({"n": 4, "m": 1, "mean": [[0, 0, 0]] * 4})
    assert info.value.field == 'bases'
