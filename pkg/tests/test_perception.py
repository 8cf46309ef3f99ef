import math
from dataclasses import replace

import numpy as np
import pytest
from oracles import homogeneous_camera_to_world, spherical_point

from visionran.perception import (
    CLS_OBSTACLE,
    CLS_PERSON,
    CameraModel,
    NoiseModel,
    camera_from_spec,
    camera_rotation,
    cartesian_to_polar,
    gnb_viewpoint,
    observe,
    polar_to_cartesian,
    report_pose,
)
from visionran.scenario import load_scenario
from visionran.sm_protocol import PosDataEntry, VisDataEntry, cm_to_m, q_to_rad
from visionran.world_twin import EntityPose, ObstacleBox, WorldState, compute_los, step_world
from visionran.xapp import estimate_position

ZERO = NoiseModel()


@pytest.fixture(scope="module")
def scn():
    return load_scenario("scenarios/paper_v.json")


def world_with(ue_xyz, obstacle=None, gnb_xyz=(4.0, 1.0, 1.5)):
    obstacle = obstacle or ObstacleBox(center=(20.0, 20.0), half_extents=(0.3, 0.3), height=2.0)
    return WorldState(tick=0, t_s=0.0, gnb=EntityPose(1, gnb_xyz), ue=EntityPose(2, tuple(ue_xyz)),
                      obstacle=obstacle)


def cam_at(xyz, boresight=(0.0, 0.0), cam_id=10, **kw):
    return CameraModel(pose=EntityPose(cam_id, tuple(xyz), boresight=boresight), **kw)


def ue_entry(vis):
    found = [e for e in vis.vis_stats if e.cls == CLS_PERSON]
    return found[0] if found else None


def test_ue_down_the_boresight():
    cam = cam_at((0.0, 0.0, 1.2))
    e = ue_entry(observe(cam, world_with((5.0, 0.0, 1.2)), ZERO))
    assert (e.r, e.theta, e.phi) == (500, 0, 0)
    assert (e.bbx, e.bby) == (320, 240)


def test_rotated_boresight_down_the_axis():
    cam = cam_at((1.0, 1.0, 1.0), boresight=(0.0, math.pi / 2))
    e = ue_entry(observe(cam, world_with((1.0, 4.0, 1.0)), ZERO))
    assert (e.r, e.theta, e.phi) == (300, 0, 0)


def test_out_of_frustum_and_range():
    cam = cam_at((0.0, 0.0, 1.2), range_max=6.0)
    assert ue_entry(observe(cam, world_with((-3.0, 0.0, 1.2)), ZERO)) is None
    assert ue_entry(observe(cam, world_with((7.0, 0.0, 1.2)), ZERO)) is None
    assert ue_entry(observe(cam, world_with((1.0, 3.0, 1.2)), ZERO)) is None


def test_ue_behind_obstacle_hidden_from_gnb_camera(scn):
    w = scn.initial_world()
    assert w.los == 1
    gcam = camera_from_spec(scn.gnb_camera)
    vis, pos = gnb_viewpoint(w, gcam, ZERO, mount_offset=scn.gnb_camera.position)
    assert ue_entry(vis) is None
    c1 = camera_from_spec(scn.cameras[0])
    assert ue_entry(observe(c1, w, ZERO)) is not None
    assert [e.id for e in pos.pos_stats] == [scn.gnb_id, scn.gnb_camera.id]


def test_reference_camera_always_sees_obstacle(scn):
    c1 = camera_from_spec(scn.cameras[0])
    w = scn.initial_world()
    for _ in range(scn.n_frames):
        vis = observe(c1, w, ZERO)
        assert any(e.cls == CLS_OBSTACLE for e in vis.vis_stats)
        w = step_world(w, None, scn.frame_period)


def test_report_pose_units():
    ind = report_pose([EntityPose(1, (1.10, 0.0, 1.50)), EntityPose(3, (3.95, 5.60, 0.0)),
                       EntityPose(9, (0.005, -0.005, 0.0), boresight=(0.2, -1.57))])
    a, b, c = ind.pos_stats
    assert (a.x, a.y, a.z) == (110, 0, 150)
    assert (b.x, b.y) == (395, 560)
    assert (c.x, c.y, c.theta, c.phi) == (1, -1, 20, -157)
    assert ind.len == 3


def test_polar_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rng.normal(size=3) * 4
        assert polar_to_cartesian(*cartesian_to_polar(p)) == pytest.approx(p, abs=1e-12)


# -- oracles --------------------------------------------------------------------------

def test_estimate_position_matches_transform_oracle():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        cam = PosDataEntry(id=10, x=int(rng.integers(-1000, 1000)), y=int(rng.integers(-1000, 1000)),
                           z=int(rng.integers(0, 400)), theta=int(rng.integers(-150, 151)),
                           phi=int(rng.integers(-314, 315)))
        det = VisDataEntry(id=2, cls=0, bbx=0, bby=0, bbw=1, bbh=1, theta=int(rng.integers(-100, 101)),
                           phi=int(rng.integers(-314, 315)), r=int(rng.integers(0, 2000)))
        T = homogeneous_camera_to_world([cm_to_m(cam.x), cm_to_m(cam.y), cm_to_m(cam.z)],
                                        q_to_rad(cam.theta), q_to_rad(cam.phi))
        ref = (T @ spherical_point(cm_to_m(det.r), q_to_rad(det.theta), q_to_rad(det.phi)))[:3]
        worst = max(worst, float(np.max(np.abs(estimate_position(cam, det) - ref))))
    assert worst <= 1e-9


def _random_grid_camera(rng):
    """Camera on the cm grid with a boresight on the 0.01 rad grid."""
    pos = tuple(round(v, 2) for v in (rng.uniform(0, 8), rng.uniform(0, 10), rng.uniform(0.5, 2.8)))
    bore = (round(rng.uniform(-0.5, 0.5), 2), round(rng.uniform(-3.1, 3.1), 2))
    return cam_at(pos, boresight=bore, fov_h=2.5, fov_v=2.0, range_max=20.0)


def _round_trip_errors(n=1000, seed=11):
    """(per-axis |error|, r) for zero-noise observe -> estimate_position round trips."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        cam = _random_grid_camera(rng)
        direction = polar_to_cartesian(1.0, rng.uniform(-0.9, 0.9), rng.uniform(-1.2, 1.2))
        rot = camera_rotation(*cam.pose.boresight)
        target = np.asarray(cam.pose.position) + rot @ (direction * rng.uniform(0.5, 12))
        e = ue_entry(observe(cam, world_with(target), ZERO))
        if e is None:
            continue
        est = estimate_position(report_pose([cam.pose]).pos_stats[0], e)
        out.append((np.abs(est - target), cm_to_m(e.r)))
    return out


def test_zero_noise_round_trip_within_quantization_bound():
    # both angles are quantized, so the angular half-steps add in quadrature
    for err, r in _round_trip_errors():
        assert np.all(err <= 0.005 + math.sqrt(2) * r * 0.005 + 1e-12), (err, r)


def test_single_angle_bound_is_rarely_exceeded():
    """The single-angle bound 0.5 cm + r*0.005 is exceeded only in rare corner cases."""
    errs = _round_trip_errors()
    over = sum(bool(np.any(err > 0.005 + r * 0.005 + 1e-12)) for err, r in errs)
    assert over <= 5


def test_every_detection_back_projects_into_frustum(scn):
    rng = np.random.default_rng(3)
    noise = NoiseModel(6.0, 0.008, 0.0, seed=1)
    cam = camera_from_spec(scn.cameras[0])
    for _ in range(300):
        target = (rng.uniform(0, 8), rng.uniform(0, 10), rng.uniform(0, 2))
        for e in observe(cam, world_with(target), noise, rng=noise.stream(10)).vis_stats:
            p = polar_to_cartesian(cm_to_m(e.r), q_to_rad(e.theta), q_to_rad(e.phi))
            assert p[0] >= 0 and abs(q_to_rad(e.phi)) <= cam.fov_h / 2 + 0.05


def test_occlusion_equivalence(scn):
    rng = np.random.default_rng(8)
    gcam = camera_from_spec(scn.gnb_camera)
    obs = scn.obstacle
    for _ in range(500):
        ue = (rng.uniform(0.3, 7.7), rng.uniform(6.5, 9.7), scn.ue_height)
        g = (rng.uniform(0, 8), 1.0, 1.5)
        w = world_with(ue, obstacle=obs, gnb_xyz=g)
        cam = gcam.at(g)
        if not cam.in_frustum(cam.to_camera_frame(ue)):
            continue
        vis, _ = gnb_viewpoint(w, gcam, ZERO)
        assert (ue_entry(vis) is None) == bool(compute_los(g, ue, obs))


def test_los_sources_agree_on_ue(scn):
    w = scn.initial_world()
    w = replace(w, gnb=replace(w.gnb, position=(6.5, 1.0, 1.5)))
    w = replace(w, los=compute_los(w.gnb.position, w.ue.position, w.obstacle))
    assert w.los == 0
    vis, pos = gnb_viewpoint(w, camera_from_spec(scn.gnb_camera), ZERO)
    a = estimate_position(pos.pos_stats[1], ue_entry(vis))
    b = estimate_position(report_pose(scn.camera_poses()).pos_stats[0],
                          ue_entry(observe(camera_from_spec(scn.cameras[0]), w, ZERO)))
    # each source is within its own quantization bound of the truth
    ra = cm_to_m(ue_entry(vis).r)
    rb = cm_to_m(ue_entry(observe(camera_from_spec(scn.cameras[0]), w, ZERO)).r)
    bound = (0.005 + ra * 0.005) + (0.005 + rb * 0.005)
    assert np.all(np.abs(a - b) <= bound)


# -- noise ----------------------------------------------------------------------------

def test_range_noise_statistics():
    s = 6.0
    noise = NoiseModel(sigma_r=s, seed=5)
    cam = cam_at((0.0, 0.0, 1.2))
    w = world_with((5.0, 0.0, 1.2))
    rng = noise.stream(10)
    rs = np.array([ue_entry(observe(cam, w, noise, rng=rng)).r for _ in range(10_000)], dtype=float)
    assert 0.9 * s <= rs.std(ddof=1) <= 1.1 * s
    assert abs(rs.mean() - 500) < 0.5


def test_drop_probability():
    noise = NoiseModel(drop_prob=0.2, seed=2)
    cam = cam_at((0.0, 0.0, 1.2))
    w = world_with((5.0, 0.0, 1.2))
    rng = noise.stream(10)
    kept = sum(ue_entry(observe(cam, w, noise, rng=rng)) is not None for _ in range(5000))
    assert 0.77 < kept / 5000 < 0.83


def test_streams_are_seeded_per_camera():
    noise = NoiseModel(6.0, 0.01, 0.0, seed=9)
    cam = cam_at((0.0, 0.0, 1.2))
    w = world_with((5.0, 0.0, 1.2))
    a = observe(cam, w, noise)
    assert a == observe(cam, w, noise)
    assert a != observe(replace(cam, pose=replace(cam.pose, id=11)), w, noise)


def test_invalid_noise_and_fov():
    with pytest.raises(ValueError):
        NoiseModel(drop_prob=1.0)
    with pytest.raises(ValueError):
        cam_at((0, 0, 0), fov_h=4.0)
