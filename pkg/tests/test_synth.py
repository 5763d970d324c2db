import numpy as np
import pytest

from src.core.errors import ConfigInfeasible, ParseError
from src.core.geometry import point_to_ray_residual
from src.core.models import SilhouetteObservation
from src.core.shape_model import deform
from src.core.synth import (NS_LADDER, NSC_LADDER, ScenarioConfig, densify_coefficients, densify_for_silhouette,
                            generate_population, generate_scenario)


def test_population_is_seeded():
    a = generate_population(7, 30, 2, 0.1)
    b = generate_population(7, 30, 2, 0.1)
    assert len(a) == 5
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], generate_population(8, 30, 2, 0.1)[0])


def test_deformation_scale_is_linear():
    base = generate_population(3, 30, 2, 0.0)
    assert all(np.array_equal(s, base[0]) for s in base)
    small = generate_population(3, 30, 2, 0.1)
    large = generate_population(3, 30, 2, 0.2)
    for s, l, b in zip(small, large, base):
        assert np.allclose(l - b, 2.0 * (s - b), atol=1e-12)


def test_ladders():
    assert all(sum(counts) == 100 for counts in NS_LADDER.values())
    assert [len(NS_LADDER[k]) for k in range(1, 6)] == [2, 3, 4, 10, 100]
    assert NSC_LADDER[5] == (5,) * 20
    assert NSC_LADDER[1] == NS_LADDER[1]
    config = ScenarioConfig.from_ladder(3, seed=9)
    assert config.counts == (25, 25, 25, 25) and config.config_id == '3' and config.seed == 9
    with pytest.raises(ConfigInfeasible):
        ScenarioConfig.from_ladder(6)


@pytest.mark.parametrize('overrides', [
    {'counts': (60, 70)},
    {'counts': (2, 1)},
    {'m': 0},
    {'counts': (5, 5), 'projections': ('perspective',)},
    {'euler_range_deg': 200.0},
    {'density': 50},
])
def test_infeasible_configs(overrides):
    config = ScenarioConfig(n=100, **overrides)
    with pytest.raises(ConfigInfeasible):
        generate_scenario(config)


def test_noiseless_rays_pass_through_ground_truth():
    config = ScenarioConfig(seed=6, n=40, m=2, counts=(6, 7, 8), projections=('perspective', 'orthographic', 'perspective'))
    scenario = generate_scenario(config)
    for vp, corr in zip(scenario.ns_problem.viewpoints, scenario.ns_problem.correspondences):
        for j, k in corr:
            assert np.linalg.norm(point_to_ray_residual(scenario.gt_points[:, j], vp.rays[k])) < 1e-9


def test_correspondences_are_disjoint_and_in_front_of_cameras():
    scenario = generate_scenario(ScenarioConfig.from_ladder(4, seed=2))
    used = [j for corr in scenario.ns_problem.correspondences for j, _ in corr]
    assert len(used) == 100 == len(set(used))
    for pose, corr in zip(scenario.viewpoint_poses, scenario.ns_problem.correspondences):
        idx = [j for j, _ in corr]
        assert np.all(pose.inverse().apply(scenario.gt_points[:, idx])[2] > 0.0)


def test_scenarios_are_deterministic():
    config = ScenarioConfig(seed=12, n=40, m=2, counts=(5, 5), noise_sd=0.01)
    a = generate_scenario(config)
    b = generate_scenario(config)
    assert np.array_equal(a.gt_points, b.gt_points)
    for va, vb in zip(a.ns_problem.viewpoints, b.ns_problem.viewpoints):
        assert all(np.array_equal(ra.direction, rb.direction) for ra, rb in zip(va.rays, vb.rays))


def test_noise_moves_rays_off_the_ground_truth():
    scenario = generate_scenario(ScenarioConfig(seed=12, n=40, m=2, counts=(5, 5), noise_sd=0.05))
    residuals = [np.linalg.norm(point_to_ray_residual(scenario.gt_points[:, j], ray))
                 for ray, j in scenario.ns_problem.terms()]
    assert max(residuals) > 1e-3


def test_nsc_problem_uses_local_rays():
    scenario = generate_scenario(ScenarioConfig(seed=4, n=40, m=2, counts=(6, 6, 6),
                                                projections=('perspective', 'orthographic', 'perspective')))
    assert scenario.nsc_views == (0, 2)
    problem = scenario.nsc_problem
    assert problem.n_views == 2
    assert all(np.all(ray.origin == 0.0) for view in problem.rays for ray in view)
    assert problem.min_depths == (0.1, 0.1)
    for k, x in enumerate(scenario.nsc_views):
        assert np.array_equal(problem.correspondences[k].pairs, scenario.ns_problem.correspondences[x].pairs)


def test_orthographic_only_scenario_has_no_nsc_problem():
    scenario = generate_scenario(ScenarioConfig(seed=1, n=40, m=2, counts=(5, 5),
                                                projections=('orthographic', 'orthographic')))
    assert scenario.nsc_problem is None and scenario.nsc_views == ()


def test_densified_model_stays_linear(small_model):
    assert densify_for_silhouette(small_model, small_model.n) is small_model
    dense = densify_for_silhouette(small_model, 30, seed=5)
    assert dense.n == 30 and dense.m == small_model.m
    neighbours, mix = densify_coefficients(small_model, 30, np.random.default_rng(5))
    assert np.allclose(mix.sum(axis=1), 1.0)
    for w in ([0.0, 0.0], [1.0, -0.5], [0.3, 2.0]):
        sparse_shape = deform(small_model, w)
        dense_shape = deform(dense, w)
        assert np.allclose(dense_shape[:, :small_model.n], sparse_shape, atol=1e-12)
        expected = np.einsum('kc,ikc->ik', mix, sparse_shape[:, neighbours])
        assert np.allclose(dense_shape[:, small_model.n:], expected, atol=1e-12)


def test_silhouettes_only_for_perspective_views():
    config = ScenarioConfig(seed=3, n=40, m=2, counts=(5, 5), projections=('perspective', 'orthographic'),
                            density=200)
    scenario = generate_scenario(config)
    assert scenario.model.n == 200
    assert isinstance(scenario.silhouettes[0], SilhouetteObservation)
    assert scenario.silhouettes[1] is None
    assert generate_scenario(ScenarioConfig(seed=3, n=40, m=2, counts=(5, 5))).silhouettes is None


def test_config_round_trip():
    config = ScenarioConfig.from_ladder(2, seed=4, noise_sd=0.01)
    again = ScenarioConfig.from_dict(config.to_dict())
    assert again.to_dict() == config.to_dict()
    assert config.with_seed(9).seed == 9
    assert config.with_seed(9).counts == config.counts


def test_config_from_ladder_id_only():
    config = ScenarioConfig.from_dict({'config_id': '3', 'seed': 2})
    assert config.counts == (25,) * 4 and config.seed == 2
    with pytest.raises(ParseError) as info:
        ScenarioConfig.from_dict({'config_id': '9'})
    assert info.value.field == 'config_id'


def test_config_rejects_unknown_fields():
    with pytest.raises(ParseError) as info:
        ScenarioConfig.from_dict({'seed': 1, 'bogus': 2})
    assert info.value.field == 'bogus'
    with pytest.raises(ParseError):
        ScenarioConfig.from_dict([1, 2])
