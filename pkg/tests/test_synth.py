import math

import numpy as np
import pytest

from cloudvision.errors import InvalidSpec
from cloudvision.geometry import CameraIntrinsics, Pose
from cloudvision.synth import (
    CAMERA_IN_LIDAR,
    DEFAULT_INTRINSICS,
    LidarPattern,
    LoopPath,
    Patch,
    Scene,
    SceneSpec,
    TrajectorySpec,
    camera_rays,
    generate_scene,
    generate_trajectory,
    render_depth,
    render_image,
    simulate_scan,
    texture,
)

# Camera looking along +x from the origin (x right = -y world, y down = -z world).
LOOK_X = Pose.from_rt(np.array([[0.0, 0, 1], [-1, 0, 0], [0, -1, 0]]), [0.0, 0.0, 0.0])


def test_unit_cube_room_has_six_walls():
    scene = generate_scene(SceneSpec(kind="room", room=(1.0, 1.0, 1.0)))
    assert len(scene) == 6
    assert np.allclose(np.abs(scene.U).sum(axis=1), 1.0)
    assert np.allclose(np.abs(scene.V).sum(axis=1), 1.0)
    normals = {tuple(np.abs(n).astype(int)) for n in scene.normals}
    assert normals == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}
    # Every corner is a vertex of the unit cube.
    assert np.all((scene.corners == 0.0) | (scene.corners == 1.0))
    centers = scene.corners + 0.5 * (scene.U + scene.V)
    assert sorted(map(tuple, centers.round(6))) == sorted(
        [(0.5, 0.5, 0.0), (0.5, 0.5, 1.0), (0.5, 0.0, 0.5), (0.5, 1.0, 0.5), (0.0, 0.5, 0.5), (1.0, 0.5, 0.5)]
    )


def test_scene_generation_is_deterministic():
    a, b = generate_scene(SceneSpec(), 3), generate_scene(SceneSpec(), 3)
    assert a.patches == b.patches
    assert generate_scene(SceneSpec(), 4).patches != a.patches


@pytest.mark.parametrize(
    "spec",
    [
        SceneSpec(kind="room", room=(0.0, 1.0, 1.0)),
        SceneSpec(kind="two_rooms", door=(6.0, 1.0)),
        SceneSpec(kind="loop", corridor_width=20.0),
        SceneSpec(kind="attic"),
        SceneSpec(patch_size=0.0),
    ],
)
def test_invalid_scene_specs(spec):
    with pytest.raises(InvalidSpec):
        generate_scene(spec)


def test_parallel_edges_rejected():
    with pytest.raises(InvalidSpec):
        Scene([Patch((0, 0, 0), (1, 0, 0), (2, 0, 0), 1)])


def test_two_room_wall_occludes_and_door_does_not():
    spec = SceneSpec(kind="two_rooms", room=(6.0, 5.0, 3.0), door=(1.0, 2.2))
    scene = generate_scene(spec)
    origin = np.array([2.0, 1.0, 1.5])
    # Aim at the far wall of room B (x = 12) through solid wall.
    t, idx, _, _ = scene.raycast(origin, np.array([[10.0, 0.0, 0.0]]))
    hit = origin + t[0] * np.array([10.0, 0.0, 0.0])
    assert abs(hit[0] - 6.0) < 1e-9
    # Through the doorway the ray reaches room B's far wall.
    origin = np.array([2.0, 2.5, 1.0])
    t, _, _, _ = scene.raycast(origin, np.array([[1.0, 0.0, 0.0]]))
    assert abs(t[0] - 10.0) < 1e-9


def wall_scene():
    # One large wall at x = 2 facing the camera.
    return Scene([Patch((2.0, -10.0, -10.0), (0.0, 20.0, 0.0), (0.0, 0.0, 20.0), 12345)])


def test_wall_filling_frame_has_no_background():
    img = render_image(wall_scene(), LOOK_X, DEFAULT_INTRINSICS)
    assert img.shape == (240, 320) and img.dtype == np.uint8
    assert np.all(img > 0)


def test_empty_scene_renders_black_and_scans_empty():
    scene = Scene([])
    assert not render_image(scene, LOOK_X, DEFAULT_INTRINSICS).any()
    assert simulate_scan(scene, Pose.identity()).points.shape == (0, 3)


def test_depth_at_image_center_matches_plane_distance():
    K = CameraIntrinsics(100, 100, 40.0, 30.0, 81, 61)
    pose = Pose.from_rotvec([0.0, 0.0, 0.3], [0.2, 0.1, 0.0]) @ LOOK_X
    depth, _, _, _ = render_depth(wall_scene(), pose, K)
    axis = pose.R[:, 2]
    expected = (2.0 - pose.t[0]) / axis[0]  # z-depth along the optical axis
    assert abs(depth[30, 40] - expected) < 1e-9


def test_camera_and_lidar_rays_agree():
    scene = generate_scene(SceneSpec(kind="room", room=(6.0, 5.0, 3.0)))
    pose = Pose.from_rotvec([0.0, 0.0, 0.4], [2.0, 2.0, 1.2])
    pattern = LidarPattern()
    d = pattern.directions() @ pose.R.T
    t_lidar = scene.raycast(pose.t, d)[0]
    # The same world rays, cast as a camera would (unit-z directions rescaled).
    scale = np.linalg.norm(d, axis=1)
    t_cam = scene.raycast(pose.t, d * 2.5)[0] * 2.5
    assert np.allclose(t_lidar * scale, t_cam, rtol=0, atol=1e-9)


def test_scan_in_centered_box_matches_analytic_ranges():
    # Box of half-size 1 m around the sensor.
    scene = generate_scene(SceneSpec(kind="room", room=(2.0, 2.0, 2.0)))
    pose = Pose.from_rt(np.eye(3), [1.0, 1.0, 1.0])
    scan = simulate_scan(scene, pose)
    r = np.linalg.norm(scan.points, axis=1)
    assert len(r) == len(LidarPattern().directions())
    assert r.min() >= 1.0 - 1e-12 and r.max() <= math.sqrt(3) + 1e-12
    d = scan.points / r[:, None]
    assert np.allclose(r, 1.0 / np.abs(d).max(axis=1), rtol=0, atol=1e-9)


def test_scan_noise_and_determinism():
    scene = generate_scene(SceneSpec(kind="room"))
    pose = Pose.from_rt(np.eye(3), [3.0, 2.5, 1.5])
    a, b = simulate_scan(scene, pose), simulate_scan(scene, pose)
    assert np.array_equal(a.points, b.points)
    n1 = simulate_scan(scene, pose, noise_sigma=0.01, seed=1)
    n2 = simulate_scan(scene, pose, noise_sigma=0.01, seed=1)
    assert np.array_equal(n1.points, n2.points)
    dr = np.linalg.norm(n1.points, axis=1) - np.linalg.norm(a.points, axis=1)
    assert 0.008 < dr.std() < 0.012


def test_scans_land_on_surfaces():
    scene = generate_scene(SceneSpec())
    lidar, _, _ = generate_trajectory(TrajectorySpec(n_queries=0))
    for tp in lidar[::50]:
        world = tp.pose.apply(simulate_scan(scene, tp.pose).points)
        assert scene.distance_to_surface(world).max() < 1e-6


def test_lidar_pattern():
    p = LidarPattern()
    assert len(p.ring_elevations) == 16 and p.ring_elevations[0] == -15 and p.ring_elevations[-1] == 15
    assert len(p.directions()) == 16 * 900
    with pytest.raises(InvalidSpec):
        LidarPattern(ring_elevations=(1.0, 0.0))


def test_texture_has_gradients_and_stays_in_range():
    rng = np.random.default_rng(0)
    s, t = rng.uniform(0, 20, (2, 5000))
    val = texture(s, t, np.full(5000, 7, dtype=np.uint64))
    assert val.min() >= 0 and val.max() <= 1
    h = 1e-3
    g = texture(s + h, t, np.full(5000, 7, dtype=np.uint64)) - val
    assert np.mean(np.abs(g) > 1e-7) > 0.99


def test_band_limiting_only_attenuates_fine_detail():
    rng = np.random.default_rng(1)
    s, t = rng.uniform(0, 20, (2, 5000))
    seed = np.full(5000, 3, dtype=np.uint64)
    sharp = texture(s, t, seed)
    assert np.array_equal(texture(s, t, seed, np.zeros(5000)), sharp)
    blurred = texture(s, t, seed, np.full(5000, 0.5))
    assert blurred.std() < sharp.std()


def test_camera_rays_unit_depth():
    rays = camera_rays(DEFAULT_INTRINSICS)
    assert rays.shape == (320 * 240, 3) and np.all(rays[:, 2] == 1.0)


# --- trajectories --------------------------------------------------------------


def test_loop_is_closed_and_uniform():
    spec = TrajectorySpec()
    lidar, db, _ = generate_trajectory(spec)
    assert np.linalg.norm(lidar[0].pose.t - lidar[-1].pose.t) < 1e-9
    assert lidar[0].pose.angle() == pytest.approx((lidar[-1].pose.angle()), abs=1e-9)
    path = LoopPath(spec.loop_length, spec.aspect, spec.corner_radius)
    assert path.length == pytest.approx(38.0, abs=1e-9)
    assert len(db) == 30
    # Database poses sit at arc lengths k * 38 / 30 (time = arc length / speed).
    times = np.array([tp.timestamp for tp in db])
    assert np.allclose(np.diff(times) * spec.speed, 38.0 / 30, atol=1e-6)
    for tp in db:
        xy, _ = path.at(tp.timestamp * spec.speed)
        lidar_pose = tp.pose @ CAMERA_IN_LIDAR.inverse()
        assert np.allclose(lidar_pose.t[:2], xy, atol=1e-9)


def test_path_is_continuous():
    path = LoopPath(38.0, 1.6, 1.5)
    s = np.linspace(0, path.length, 4001)
    xy = np.array([path.at(v)[0] for v in s])
    steps = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    assert steps.max() <= (s[1] - s[0]) + 1e-9
    heads = np.unwrap([path.at(v)[1] for v in s])
    assert heads[-1] - heads[0] == pytest.approx(2 * math.pi, abs=1e-9)


def test_query_perturbations_respect_bounds():
    spec = TrajectorySpec(n_queries=1000)
    _, _, queries = generate_trajectory(spec, seed=5)
    path = LoopPath(spec.loop_length, spec.aspect, spec.corner_radius)
    s = np.linspace(0, path.length, 20001)
    center = np.array([path.at(v)[0] for v in s])
    offsets, yaw_dev, tilt = [], [], []
    for tp in queries:
        robot = tp.pose @ CAMERA_IN_LIDAR.inverse()
        d = np.linalg.norm(center - robot.t[:2], axis=1)
        k = int(np.argmin(d))
        offsets.append(d[k])
        fwd = robot.R[:, 0]
        _, h = path.at(s[k])
        yaw_dev.append(abs(math.degrees(math.atan2(fwd[1], fwd[0]) - h + math.pi) % 360 - 180))
        tilt.append(math.degrees(math.asin(abs(fwd[2]))))
        assert robot.t[2] == pytest.approx(spec.lidar_height, abs=1e-12)
    offsets = np.array(offsets)
    assert offsets.max() <= spec.lateral_max + 2e-3
    assert offsets.mean() == pytest.approx(spec.lateral_max / 2, rel=0.1)
    assert max(yaw_dev) <= spec.heading_max_deg + 0.1
    assert max(tilt) <= spec.tilt_max_deg + 1e-9
    again = generate_trajectory(spec, seed=5)[2]
    assert all(a.pose == b.pose for a, b in zip(queries, again))


def test_invalid_trajectory_spec():
    with pytest.raises(InvalidSpec):
        generate_trajectory(TrajectorySpec(loop_length=-1.0))
