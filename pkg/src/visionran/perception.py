"""Synthetic camera front-end: turns ground truth into VIS/POS indications.

Stands in for the video function and the gNB's embedded camera.  Detections
are computed geometrically, perturbed by a NoiseModel and quantized to the
SM integer units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .sm_protocol import PosDataEntry, PosIndication, VisDataEntry, VisIndication, m_to_cm, rad_to_q
from .world_twin import EntityPose, ObstacleBox, WorldState, compute_los

CLS_PERSON = 0
CLS_OBSTACLE = 1

PERSON_EXTENT = (0.5, 1.7)  # width, height in m


def camera_rotation(theta: float, phi: float) -> np.ndarray:
    """Camera-to-global rotation for a boresight at elevation ``theta``, azimuth ``phi``.

    Camera frame: x along the boresight, y to the left, z up.
    """
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ct, 0.0, -st], [0.0, 1.0, 0.0], [st, 0.0, ct]])
    return rz @ ry


def polar_to_cartesian(r: float, theta: float, phi: float) -> np.ndarray:
    return r * np.array([math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), math.sin(theta)])


def cartesian_to_polar(p) -> tuple[float, float, float]:
    x, y, z = (float(v) for v in p)
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        return 0.0, 0.0, 0.0
    return r, math.asin(max(-1.0, min(1.0, z / r))), math.atan2(y, x)


@dataclass(frozen=True)
class CameraModel:
    pose: EntityPose
    fov_h: float = 1.5
    fov_v: float = 1.0
    image_w: int = 640
    image_h: int = 480
    range_max: float = 12.0
    frame_period: float = 1.0 / 12

    def __post_init__(self):
        if not (0 < self.fov_h < math.pi and 0 < self.fov_v < math.pi):
            raise ValueError("field of view must lie in (0, pi)")

    @property
    def focal_px(self) -> float:
        return self.image_w / (2.0 * math.tan(self.fov_h / 2.0))

    def at(self, position) -> CameraModel:
        """Same camera moved to ``position`` (used to slave a camera to the gNB)."""
        return replace(self, pose=replace(self.pose, position=tuple(float(v) for v in position)))

    def to_camera_frame(self, point) -> np.ndarray:
        rot = camera_rotation(*self.pose.boresight)
        return rot.T @ (np.asarray(point, dtype=float) - np.asarray(self.pose.position, dtype=float))

    def in_frustum(self, p_cam) -> bool:
        r, theta, phi = cartesian_to_polar(p_cam)
        return (p_cam[0] > 0.0 and r <= self.range_max
                and abs(phi) <= self.fov_h / 2 and abs(theta) <= self.fov_v / 2)

    def project(self, p_cam, extent) -> tuple[int, int, int, int]:
        """Pinhole bounding box (centroid x, y, width, height) in pixels."""
        f = self.focal_px
        depth = p_cam[0]
        u = self.image_w / 2 - f * p_cam[1] / depth
        v = self.image_h / 2 - f * p_cam[2] / depth
        w = max(1, round(f * extent[0] / depth))
        h = max(1, round(f * extent[1] / depth))
        return round(u), round(v), w, h


@dataclass(frozen=True)
class NoiseModel:
    sigma_r: float = 0.0  # cm
    sigma_angle: float = 0.0  # rad
    drop_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_angle < 0 or not 0 <= self.drop_prob < 1:
            raise ValueError("invalid noise parameters")

    def stream(self, camera_id: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, camera_id])


def camera_from_spec(spec, frame_period: float = 1.0 / 12) -> CameraModel:
    return CameraModel(
        pose=EntityPose(spec.id, spec.position, boresight=spec.boresight),
        fov_h=spec.fov_h, fov_v=spec.fov_v, image_w=spec.image_w, image_h=spec.image_h,
        range_max=spec.range_max, frame_period=frame_period,
    )


def _targets(world: WorldState, ue_extent=PERSON_EXTENT):
    obs = world.obstacle
    hx, hy = obs.half_extents
    yield world.ue.id, CLS_PERSON, np.asarray(world.ue.position, dtype=float), ue_extent
    yield (obs.id, CLS_OBSTACLE, np.array([obs.center[0], obs.center[1], obs.height / 2]),
           (2 * max(hx, hy), obs.height))


def observe(cam: CameraModel, world: WorldState, noise: NoiseModel,
            occluder: ObstacleBox | None = None, rng: np.random.Generator | None = None,
            tstamp: int = 0, ue_extent=PERSON_EXTENT) -> VisIndication:
    """One frame of detections of the UE and obstacle as seen by ``cam``."""
    if rng is None:
        rng = noise.stream(cam.pose.id)
    entries = []
    for ent_id, cls, point, extent in _targets(world, ue_extent):
        # draws are made for every target so the stream does not depend on visibility
        dr, dth, dph = rng.normal(size=3)
        dropped = rng.random() < noise.drop_prob
        p_cam = cam.to_camera_frame(point)
        if not cam.in_frustum(p_cam):
            continue
        if cls == CLS_PERSON and occluder is not None and compute_los(cam.pose.position, point, occluder):
            continue
        if dropped:
            continue
        r, theta, phi = cartesian_to_polar(p_cam)
        r = max(0.0, r + dr * noise.sigma_r / 100.0)
        theta = min(max(theta + dth * noise.sigma_angle, -math.pi / 2), math.pi / 2)
        phi = math.remainder(phi + dph * noise.sigma_angle, 2 * math.pi)
        bbx, bby, bbw, bbh = cam.project(p_cam, extent)
        entries.append(VisDataEntry(
            id=ent_id, cls=cls, bbx=bbx, bby=bby, bbw=bbw, bbh=bbh,
            theta=rad_to_q(theta), phi=rad_to_q(phi), r=m_to_cm(r),
        ))
    return VisIndication(tuple(entries), tstamp=tstamp)


def pos_entry(ent: EntityPose) -> PosDataEntry:
    x, y, z = ent.position
    vx, vy, vz = ent.velocity
    return PosDataEntry(
        id=ent.id, x=m_to_cm(x), y=m_to_cm(y), z=m_to_cm(z),
        vx=m_to_cm(vx), vy=m_to_cm(vy), vz=m_to_cm(vz),
        theta=rad_to_q(ent.boresight[0]), phi=rad_to_q(ent.boresight[1]),
    )


def report_pose(entities, tstamp: int = 0) -> PosIndication:
    return PosIndication(tuple(pos_entry(e) for e in entities), tstamp=tstamp)


def gnb_viewpoint(world: WorldState, gnb_cam: CameraModel, noise: NoiseModel,
                  rng: np.random.Generator | None = None, tstamp: int = 0,
                  mount_offset=(0.0, 0.0, 0.0)) -> tuple[VisIndication, PosIndication]:
    """The gNB camera's view (obstacle occludes the UE) plus the gNB's own POS report."""
    cam_pos = np.asarray(world.gnb.position) + np.asarray(mount_offset, dtype=float)
    cam = gnb_cam.at(cam_pos)
    vis = observe(cam, world, noise, occluder=world.obstacle, rng=rng, tstamp=tstamp)
    cam_pose = replace(cam.pose, velocity=world.gnb.velocity)
    return vis, report_pose([world.gnb, cam_pose], tstamp=tstamp)
