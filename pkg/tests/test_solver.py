import numpy as np
import pytest
from oracles import noiseless_problem, perturb_about, random_perturbation, residual_jacobian_errors

from cloudvision.errors import InsufficientObservations, UnknownImageId
from cloudvision.features import build_pyramid, sample_many
from cloudvision.geometry import CameraIntrinsics, Pose, pose_error, project
from cloudvision.mapcloud import IndexedMap, covisible_points
from cloudvision.retrieval import RetrievalDatabase
from cloudvision.solver import (
    ReferenceObservations,
    SolverConfig,
    huber_cost,
    localize,
    make_reference_observations,
    refine_pose,
)
from cloudvision.synth import render_image


@pytest.fixture(scope="module")
def problem(benchmark, benchmark_map):
    return noiseless_problem(benchmark, benchmark_map, 3)


def test_solver_config_validation():
    SolverConfig()
    for bad in (
        {"lambda_up": 1.0},
        {"lambda_down": 1.0},
        {"lambda_down": 0.0},
        {"huber_delta": 0.0},
        {"min_points": 0},
        {"max_iters_per_level": -1},
    ):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_huber_cost_is_continuous_at_delta():
    d = 0.5
    below, above = huber_cost(np.array([d - 1e-12, d + 1e-12]), d)
    assert abs(below - above) < 1e-11
    assert huber_cost(np.array([2.0]), d)[0] == pytest.approx(d * (2.0 - d / 2))


# --- reference observations --------------------------------------------------------


def one_point_setup(points):
    K = CameraIntrinsics(40, 40, 31.5, 23.5, 64, 48)
    img = np.random.default_rng(0).integers(0, 256, (48, 64)).astype(np.uint8)
    pyr = build_pyramid(img, levels=2)
    m = IndexedMap(np.asarray(points, float), (np.arange(len(points)),), 0.05)
    return K, pyr, m


def test_point_on_optical_axis():
    K, pyr, m = one_point_setup([[0.0, 0.0, 2.0]])
    obs = make_reference_observations(m, 0, Pose.identity(), K, pyr, min_points=1)
    assert len(obs) == 1
    for l, level in enumerate(pyr.levels):
        uv = project(K.downscaled(level.scale), np.array([[0.0, 0.0, 2.0]]))[0]
        assert np.array_equal(obs.features[l][0], sample_many(level, uv)[0][0])


def test_point_behind_camera_is_dropped():
    K, pyr, m = one_point_setup([[0.0, 0.0, 2.0], [0.0, 0.0, -2.0]])
    obs = make_reference_observations(m, 0, Pose.identity(), K, pyr, min_points=1)
    assert len(obs) == 1 and obs.point_ids.tolist() == [0]
    with pytest.raises(InsufficientObservations):
        make_reference_observations(m, 0, Pose.identity(), K, pyr, min_points=2)
    with pytest.raises(UnknownImageId):
        make_reference_observations(m, 1, Pose.identity(), K, pyr)


def test_observation_count_matches_reprojection_oracle(benchmark, benchmark_map):
    ds = benchmark
    for m in (0, 11, 22):
        pyr = build_pyramid(ds.db_images[m])
        obs = make_reference_observations(benchmark_map, m, ds.db_poses[m].pose, ds.K, pyr)
        _, pts = covisible_points(benchmark_map, m)
        expected = 0
        for p in pts:
            p_cam = ds.db_poses[m].pose.inverse().apply(p)
            ok = p_cam[2] > 0.1
            for level in pyr.levels:
                u, v = p_cam[:2] / p_cam[2] * [ds.K.fx, ds.K.fy] + [ds.K.cx, ds.K.cy]
                u, v = u / level.scale, v / level.scale
                ok = ok and 1 <= u <= level.width - 2 and 1 <= v <= level.height - 2
            expected += ok
        assert len(obs) == expected


# --- refinement ----------------------------------------------------------------------


def test_ground_truth_init_stays_put(problem, benchmark):
    gt, obs, pyr = problem
    res = refine_pose(gt, obs, pyr, benchmark.K)
    assert res.converged and max(res.iterations) <= 2
    assert res.final_cost < 1e-12
    te, re = pose_error(res.pose, gt)
    assert te < 1e-9 and re < 1e-7


def test_accepted_costs_strictly_decrease(problem, benchmark):
    gt, obs, pyr = problem
    rng = np.random.default_rng(1)
    for _ in range(5):
        init = perturb_about(gt, random_perturbation(rng, 0.3, 5.0))
        res = refine_pose(init, obs, pyr, benchmark.K)
        for history in res.cost_history:
            assert all(b < a for a, b in zip(history, history[1:]))


def test_perturbed_start_recovers_truth(problem, benchmark):
    gt, obs, pyr = problem
    init = perturb_about(gt, Pose.from_rotvec(np.radians([1.0, -2.0, 2.0]), [0.1, -0.05, 0.08]))
    res = refine_pose(init, obs, pyr, benchmark.K)
    te, re = pose_error(res.pose, gt)
    assert res.converged and te < 1e-3 and re < 0.05


def test_residual_jacobian_matches_finite_differences(problem, benchmark):
    gt, obs, pyr = problem
    rng = np.random.default_rng(2)
    worst, checked = 0.0, 0
    for trial in range(100):
        pose = perturb_about(gt, random_perturbation(rng, 0.05, 1.0))
        err, n = residual_jacobian_errors(pose, obs, pyr, benchmark.K, level=trial % len(pyr))
        worst = max(worst, err)
        checked += n
    assert worst < 1e-4
    assert checked > 10_000


def test_gauge_invariance(problem, benchmark):
    gt, obs, pyr = problem
    init = perturb_about(gt, Pose.from_rotvec(np.radians([0.5, 1.0, -1.0]), [0.05, 0.02, -0.04]))
    G = Pose.from_rotvec([0.3, -0.2, 1.1], [5.0, -3.0, 2.0])
    moved = ReferenceObservations(G.apply(obs.points_w), obs.features, obs.point_ids)
    a = refine_pose(init, obs, pyr, benchmark.K)
    b = refine_pose(G @ init, moved, pyr, benchmark.K)
    expected = G @ a.pose
    te, re = pose_error(b.pose, expected)
    assert te < 1e-6 and np.radians(re) < 1e-6


def test_refinement_is_deterministic(problem, benchmark):
    gt, obs, pyr = problem
    init = perturb_about(gt, Pose.from_rotvec([0.02, 0.0, 0.03], [0.1, 0.0, 0.1]))
    a = refine_pose(init, obs, pyr, benchmark.K)
    b = refine_pose(init, obs, pyr, benchmark.K)
    assert a.pose == b.pose and a.final_cost == b.final_cost
    assert a.iterations == b.iterations and a.cost_history == b.cost_history


def test_huber_beats_quadratic_with_outliers(problem, benchmark):
    gt, obs, pyr = problem
    rng = np.random.default_rng(4)
    bad = rng.random(len(obs)) < 0.3
    feats = tuple(np.where(bad[:, None], f + rng.normal(0.0, 2.0, f.shape), f) for f in obs.features)
    corrupted = ReferenceObservations(obs.points_w, feats, obs.point_ids)
    shift = np.array([0.12, -0.08, 0.13])
    init = perturb_about(gt, Pose.from_rt(np.eye(3), 0.2 * shift / np.linalg.norm(shift)))
    robust = refine_pose(init, corrupted, pyr, benchmark.K, SolverConfig())
    plain = refine_pose(init, corrupted, pyr, benchmark.K, SolverConfig(robust=False))
    e_robust = pose_error(robust.pose, gt)[0]
    e_plain = pose_error(plain.pose, gt)[0]
    assert e_robust < 5e-3
    assert e_plain > e_robust


def test_too_few_observations(problem, benchmark):
    gt, obs, pyr = problem
    with pytest.raises(InsufficientObservations):
        refine_pose(gt, obs.subset(np.arange(5)), pyr, benchmark.K)


# --- full pipeline on one image --------------------------------------------------------


@pytest.fixture(scope="module")
def database(benchmark):
    return RetrievalDatabase.build(benchmark.db_images, benchmark.db_poses)


def test_database_image_localizes_onto_itself(benchmark, benchmark_map, database):
    ds = benchmark
    res = localize(ds.db_images[5], database, benchmark_map, ds.K, db_images=ds.db_images)
    assert res.retrieved_image == 5
    assert res.retrieval_similarity == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(res.pose.t - ds.db_poses[5].pose.t) < 1e-6


def ahead_of(pose: Pose, dist: float) -> Pose:
    return Pose.from_rt(pose.R, pose.t + dist * pose.R[:, 2])


@pytest.mark.xfail(
    strict=True,
    reason="image-space features change with viewing distance; 0.2 m ahead biases the optimum by ~3 cm here",
)
def test_query_ahead_of_database_image(benchmark, benchmark_map, database):
    ds = benchmark
    gt = ahead_of(ds.db_poses[2].pose, 0.2)
    res = localize(render_image(ds.scene, gt, ds.K), database, benchmark_map, ds.K, db_images=ds.db_images)
    assert res.retrieved_image == 2
    assert pose_error(res.pose, gt)[0] < 0.01


def test_queries_ahead_stay_at_centimetre_level(benchmark, benchmark_map, database):
    ds = benchmark
    errors = []
    for k in range(0, 30, 3):
        gt = ahead_of(ds.db_poses[k].pose, 0.2)
        res = localize(render_image(ds.scene, gt, ds.K), database, benchmark_map, ds.K, db_images=ds.db_images)
        assert res.retrieved_image == k
        errors.append(pose_error(res.pose, gt)[0])
    assert np.median(errors) < 0.02 and max(errors) < 0.05
