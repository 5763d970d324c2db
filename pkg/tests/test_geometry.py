import numpy as np
import pytest

from src.core.errors import DegenerateConfiguration, DegenerateMatrix, NonPositiveDepth
from src.core.geometry import (look_at, moment_vector, nearest_rotation, point_to_ray_residual,
                               project_perspective, random_rotation, rays_from_keypoints, rigid_align,
                               rotation_from_euler)
from src.core.models import Ray, RigidTransform, Rotation

Z = np.array([0.0, 0.0, 1.0])


def test_moment_vector():
    ray = Ray(np.zeros(3), Z)
    assert np.allclose(moment_vector(ray, [0.0, 0.0, 5.0]), 0.0)
    assert np.allclose(moment_vector(ray, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0])


def test_point_to_ray_residual_simple_cases():
    ray = Ray(np.zeros(3), Z)
    assert np.allclose(point_to_ray_residual([0.0, 0.0, 3.0], ray), 0.0)
    assert np.isclose(np.linalg.norm(point_to_ray_residual([1.0, 0.0, 0.0], ray)), 1.0)


def test_point_to_ray_residual_is_perpendicular_distance(rng):
    for _ in range(1000):
        ray = Ray(rng.normal(size=3), rng.normal(size=3))
        p = rng.normal(size=3) * 3
        v = p - ray.origin
        expected = np.linalg.norm(v - (v @ ray.direction) * ray.direction)
        assert abs(np.linalg.norm(point_to_ray_residual(p, ray)) - expected) < 1e-12


def test_point_to_ray_residual_ignores_origin_choice(rng):
    ray = Ray(rng.normal(size=3), rng.normal(size=3))
    shifted = Ray(ray.origin + 2.5 * ray.direction, ray.direction)
    p = rng.normal(size=3)
    assert np.allclose(point_to_ray_residual(p, ray), point_to_ray_residual(p, shifted), atol=1e-12)


def test_project_perspective_identity():
    uv = project_perspective(np.array([[0.0, 2.0], [0.0, 4.0], [2.0, 2.0]]), RigidTransform.identity())
    assert np.allclose(uv, [[0.0, 1.0], [0.0, 2.0]])


def test_project_perspective_rejects_points_behind_camera():
    with pytest.raises(NonPositiveDepth):
        project_perspective(np.array([[0.0], [0.0], [-1.0]]), RigidTransform.identity())


def test_perspective_round_trip_rays_hit_points(rng):
    points = rng.uniform(-0.5, 0.5, (3, 30))
    pose = look_at(np.array([4.0, -3.0, 2.0]), np.zeros(3), rng)
    uv = project_perspective(points, pose.inverse())
    rays = rays_from_keypoints(uv, pose, 'perspective')
    for ray, p in zip(rays, points.T):
        assert np.linalg.norm(point_to_ray_residual(p, ray)) < 1e-10
        assert np.isclose(np.linalg.norm(ray.direction), 1.0, atol=1e-12)


def test_rays_from_keypoints_identity_pose():
    persp = rays_from_keypoints(np.array([[0.0, 1.0], [0.0, 0.0]]), RigidTransform.identity(), 'perspective')
    assert np.allclose(persp[0].origin, 0.0)
    assert np.allclose(persp[0].direction, Z)
    assert np.allclose(persp[1].direction, np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0))

    ortho = rays_from_keypoints(np.array([[3.0], [4.0]]), RigidTransform.identity(), 'orthographic')
    assert np.allclose(ortho[0].origin, [3.0, 4.0, 0.0])
    assert np.allclose(ortho[0].direction, Z)


def test_nearest_rotation_is_idempotent_and_scale_invariant(rng):
    r = random_rotation(rng)
    assert np.allclose(nearest_rotation(r.matrix).matrix, r.matrix, atol=1e-12)
    for s in (0.1, 2.0, 17.0):
        assert np.allclose(nearest_rotation(s * r.matrix).matrix, r.matrix, atol=1e-12)


def test_nearest_rotation_beats_random_rotations(rng):
    samples = [random_rotation(rng).matrix for _ in range(2000)]
    for _ in range(20):
        m = rng.normal(size=(3, 3))
        best = np.linalg.norm(nearest_rotation(m).matrix - m)
        assert all(best <= np.linalg.norm(s - m) + 1e-12 for s in samples)


def test_nearest_rotation_rejects_rank_one():
    with pytest.raises(DegenerateMatrix):
        nearest_rotation(np.diag([1.0, 0.0, 0.0]))


def test_rigid_align_identity_and_exact_recovery(rng, random_pose):
    src = rng.normal(size=(3, 10))
    same = rigid_align(src, src)
    assert np.allclose(same.rotation.matrix, np.eye(3), atol=1e-10)
    assert np.allclose(same.translation, 0.0, atol=1e-10)

    pose = random_pose(3.0)
    found = rigid_align(src, pose.apply(src))
    assert np.allclose(found.rotation.matrix, pose.rotation.matrix, atol=1e-10)
    assert np.allclose(found.translation, pose.translation, atol=1e-10)


def test_rigid_align_beats_random_transforms(rng, random_pose):
    src = rng.normal(size=(3, 10))
    tgt = random_pose().apply(src) + 0.05 * rng.normal(size=src.shape)
    best = np.linalg.norm(rigid_align(src, tgt).apply(src) - tgt)
    for _ in range(2000):
        assert best <= np.linalg.norm(random_pose().apply(src) - tgt) + 1e-12


def test_rigid_align_rejects_collinear_points():
    src = np.vstack([np.linspace(0, 1, 5), np.zeros(5), np.zeros(5)])
    with pytest.raises(DegenerateConfiguration):
        rigid_align(src, src)


def test_rotation_from_euler_about_z():
    r = rotation_from_euler([90.0, 0.0, 0.0])
    assert np.allclose(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_look_at_points_optical_axis_at_target(rng):
    center = np.array([1.0, 2.0, 3.0])
    pose = look_at(center, np.zeros(3), rng)
    assert isinstance(pose.rotation, Rotation)
    axis = pose.rotation.matrix[:, 2]
    assert np.allclose(axis, -center / np.linalg.norm(center), atol=1e-9)
