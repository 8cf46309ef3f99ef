"""ScenarioConfig: JSON description of the room, entities, cameras, link and control timing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .world_twin import (
    EntityPose,
    EnvConfig,
    LinkModel,
    ObstacleBox,
    Waypoints,
    WorldState,
    compute_los,
)


class ScenarioLoadError(ValueError):
    pass


@dataclass(frozen=True)
class CameraSpec:
    id: int
    agent: str
    position: tuple[float, float, float]
    boresight: tuple[float, float]
    fov_h: float = 1.5
    fov_v: float = 1.0
    image_w: int = 640
    image_h: int = 480
    range_max: float = 12.0


@dataclass(frozen=True)
class NoiseProfile:
    sigma_r: float = 0.0  # cm
    sigma_angle: float = 0.0  # rad
    drop_prob: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration_s: float
    fps: int
    room: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    gnb_id: int
    gnb_start: tuple[float, float, float]
    gnb_agent: str
    gnb_camera: CameraSpec  # position is a mount offset from the gNB
    ue_id: int
    ue_height: float
    ue_extent: tuple[float, float]
    ue_schedule: Waypoints
    obstacle: ObstacleBox
    cameras: tuple[CameraSpec, ...]
    link: LinkModel
    T_ctrl: float
    delta: float
    v_max: float
    x_bounds: tuple[float, float]
    activation_s: float
    noise_profiles: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))

    @property
    def frame_period(self) -> float:
        return 1.0 / self.fps

    @property
    def room_size(self) -> tuple[float, float]:
        (x0, x1), (y0, y1), _ = self.room
        return x1 - x0, y1 - y0

    @property
    def d_max(self) -> float:
        (x0, x1), (y0, y1), (z0, z1) = self.room
        return math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2 + (z1 - z0) ** 2)

    def noise(self, profile: str) -> NoiseProfile:
        try:
            return self.noise_profiles[profile]
        except KeyError:
            raise ScenarioLoadError(f"unknown noise profile {profile!r}") from None

    def env_config(self, **overrides) -> EnvConfig:
        kw = dict(delta=self.delta, v_max=self.v_max, x_bounds=self.x_bounds, T_ctrl=self.T_ctrl,
                  episode_len=int(round(self.duration_s / self.T_ctrl)))
        kw.update({k: (tuple(v) if isinstance(v, list) else v) for k, v in self.training.items()
                   if k in EnvConfig.__dataclass_fields__})
        kw.update(overrides)
        return EnvConfig(**kw)

    def camera_poses(self) -> tuple[EntityPose, ...]:
        return tuple(EntityPose(c.id, c.position, boresight=c.boresight) for c in self.cameras)

    def initial_world(self) -> WorldState:
        ux, uy = self.ue_schedule.position(0.0)
        uvx, uvy = self.ue_schedule.velocity(0.0)
        gnb = EntityPose(self.gnb_id, self.gnb_start)
        ue = EntityPose(self.ue_id, (ux, uy, self.ue_height), (uvx, uvy, 0.0))
        return WorldState(
            tick=0,
            t_s=0.0,
            gnb=gnb,
            ue=ue,
            obstacle=self.obstacle,
            cameras=self.camera_poses(),
            los=compute_los(gnb.position, ue.position, self.obstacle),
            ue_schedule=self.ue_schedule,
            x_bounds=self.x_bounds,
            v_max=self.v_max,
        )


def _camera(d: dict) -> CameraSpec:
    return CameraSpec(
        id=int(d["id"]),
        agent=str(d.get("agent", f"cam{d['id']}")),
        position=tuple(float(v) for v in d["position"]),
        boresight=tuple(float(v) for v in d["boresight"]),
        fov_h=float(d.get("fov_h", 1.5)),
        fov_v=float(d.get("fov_v", 1.0)),
        image_w=int(d.get("image_w", 640)),
        image_h=int(d.get("image_h", 480)),
        range_max=float(d.get("range_max", 12.0)),
    )


def scenario_from_dict(d: dict) -> ScenarioConfig:
    try:
        room = d["room"]
        gnb = d["gnb"]
        ue = d.get("ue", {})
        obs = d["obstacle"]
        link = d["link"]
        ctrl = d["control"]
        schedule = Waypoints(tuple((float(p["t_s"]), float(p["x"]), float(p["y"])) for p in d["ue_schedule"]))
        profiles = {name: NoiseProfile(**p) for name, p in d.get("noise_profiles", {}).items()}
        profiles.setdefault("zero", NoiseProfile())
        return ScenarioConfig(
            name=d.get("name", "scenario"),
            duration_s=float(d["duration_s"]),
            fps=int(d["fps"]),
            room=(tuple(room["x"]), tuple(room["y"]), tuple(room.get("z", (0.0, 3.0)))),
            gnb_id=int(gnb.get("id", 1)),
            gnb_start=tuple(float(v) for v in gnb["start"]),
            gnb_agent=str(gnb.get("agent", "gnb")),
            gnb_camera=_camera({**gnb["camera"], "agent": gnb.get("agent", "gnb")}),
            ue_id=int(ue.get("id", 2)),
            ue_height=float(ue.get("height", 1.2)),
            ue_extent=tuple(ue.get("extent", (0.5, 1.7))),
            ue_schedule=schedule,
            obstacle=ObstacleBox(
                center=tuple(float(v) for v in obs["center"]),
                half_extents=tuple(float(v) for v in obs["half_extents"]),
                height=float(obs["height"]),
                velocity=tuple(float(v) for v in obs.get("velocity", (0.0, 0.0))),
                id=int(obs.get("id", 3)),
            ),
            cameras=tuple(_camera(c) for c in d.get("cameras", [])),
            link=LinkModel(
                A_obs=float(link["A_obs_db"]),
                tx_power=float(link["tx_dbm"]),
                noise_floor=float(link["noise_dbm"]),
                bandwidth=float(link["bandwidth_hz"]),
                d_min=float(link.get("d_min_m", 0.1)),
                snr_min=float(link.get("snr_min_db", -5.0)),
            ),
            T_ctrl=float(ctrl["T_ctrl_s"]),
            delta=float(ctrl["delta"]),
            v_max=float(ctrl["v_max"]),
            x_bounds=tuple(float(v) for v in ctrl["x_bounds"]),
            activation_s=float(ctrl.get("activation_s", 0.0)),
            noise_profiles=profiles,
            training=dict(d.get("training", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioLoadError(f"invalid scenario: {exc!r}") from exc


def load_scenario(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioLoadError(str(exc)) from exc
    try:
        return scenario_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ScenarioLoadError(f"{path}: {exc}") from exc
