import numpy as np
import pytest

from src.core.errors import DegenerateConfiguration, DimensionMismatch, GsftError
from src.core.models import (CorrespondenceSet, NscProblem, NsProblem, Ray, RigidTransform, Rotation,
                             ShapeInstance, ShapeModel, SilhouetteCorrespondence, SilhouetteObservation,
                             Viewpoint)


def test_ray_normalises_direction():
    ray = Ray(np.zeros(3), np.array([0.0, 3.0, 4.0]))
    assert np.isclose(np.linalg.norm(ray.direction), 1.0, atol=1e-12)
    assert np.allclose(ray.direction, [0.0, 0.6, 0.8])


def test_ray_rejects_zero_direction():
    with pytest.raises(DegenerateConfiguration):
        Ray(np.zeros(3), np.zeros(3))


def test_ray_arrays_are_read_only():
    ray = Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        ray.direction[0] = 1.0


def test_rotation_rejects_non_orthonormal_and_reflections():
    with pytest.raises(GsftError):
        Rotation(2.0 * np.eye(3))
    with pytest.raises(GsftError):
        Rotation(np.diag([1.0, 1.0, -1.0]))


def test_rigid_transform_inverse_round_trip(random_pose):
    pose = random_pose(2.0)
    back = pose.compose(pose.inverse())
    assert np.allclose(back.rotation.matrix, np.eye(3), atol=1e-12)
    assert np.allclose(back.translation, 0.0, atol=1e-12)


def test_rigid_transform_compose_applies_right_operand_first(random_pose, rng):
    a, b = random_pose(), random_pose()
    p = rng.normal(size=3)
    assert np.allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)


def test_shape_model_requires_four_points_and_a_basis():
    with pytest.raises(DimensionMismatch):
        ShapeModel(np.zeros((3, 3)), (np.zeros((3, 3)),))
    with pytest.raises(DimensionMismatch):
        ShapeModel(np.zeros((3, 5)), ())


def test_shape_instance_rejects_non_finite_weights():
    with pytest.raises(GsftError):
        ShapeInstance(np.array([np.nan]), RigidTransform.identity())


def _single_view(model, count):
    rays = [Ray(np.zeros(3), np.array([0.0, 0.0, 1.0])) for _ in range(count)]
    return Viewpoint(rays, RigidTransform.identity())


def test_ns_problem_needs_four_correspondences(small_model):
    view = _single_view(small_model, 3)
    with pytest.raises(DegenerateConfiguration):
        NsProblem(small_model, [view], [CorrespondenceSet([(0, 0), (1, 1), (2, 2)])])


def test_ns_problem_rejects_out_of_range_indices(small_model):
    view = _single_view(small_model, 4)
    pairs = CorrespondenceSet([(0, 0), (1, 1), (2, 2), (3, 4)])
    with pytest.raises(DimensionMismatch):
        NsProblem(small_model, [view], [pairs])


def test_ns_problem_defaults_to_identity_frame(small_model):
    view = _single_view(small_model, 4)
    problem = NsProblem(small_model, [view], [CorrespondenceSet([(j, j) for j in range(4)])])
    assert np.allclose(problem.frame.as_matrix(), np.eye(4))
    assert len(list(problem.terms())) == 4


def test_nsc_problem_requires_centred_rays_and_positive_depth(small_model):
    pairs = [CorrespondenceSet([(j, j) for j in range(4)])]
    off_centre = [[Ray(np.ones(3), np.array([0.0, 0.0, 1.0])) for _ in range(4)]]
    with pytest.raises(DegenerateConfiguration):
        NscProblem(small_model, off_centre, pairs, [0.1])
    centred = [[Ray(np.zeros(3), np.array([0.0, 0.0, 1.0])) for _ in range(4)]]
    with pytest.raises(DegenerateConfiguration):
        NscProblem(small_model, centred, pairs, [0.0])
    problem = NscProblem(small_model, centred, pairs, 0.5)
    assert problem.min_depths == (0.5,)


def test_silhouette_observation_normalises_and_checks_size():
    obs = SilhouetteObservation(np.array([[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [1.0, 1.0, 5.0]]))
    assert np.allclose(np.linalg.norm(obs.directions, axis=0), 1.0)
    with pytest.raises(DegenerateConfiguration):
        SilhouetteObservation(np.eye(3)[:, :2])
    with pytest.raises(DegenerateConfiguration):
        SilhouetteObservation(np.zeros((3, 4)))


def test_silhouette_correspondence_keeps_model_positions_unique():
    SilhouetteCorrespondence([(0, 1), (1, 1)])
    with pytest.raises(GsftError):
        SilhouetteCorrespondence([(0, 1), (0, 2)])
