"""VisionApp: the near-RT RIC controller.

Each control tick it drains POS/VIS indications from the bus and runs
localization -> fusion -> state vector -> DQN inference -> POS control.
"""

from __future__ import annotations

import logging
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from .dqn import FEATURE_ORDER, SchemaMismatch
from .perception import CLS_OBSTACLE, CLS_PERSON, camera_rotation, polar_to_cartesian
from .sm_protocol import (
    POS_CTRL,
    POS_IND,
    VIS_IND,
    BusEnvelope,
    MessageBus,
    PosControl,
    PosDataEntry,
    VisDataEntry,
    cm_to_m,
    decode,
    encode,
    m_to_cm,
    q_to_rad,
)
from .world_twin import ObstacleBox, compute_los

log = logging.getLogger(__name__)

ACTION_DV = (0.0, 1.0, -1.0)  # multiples of delta: maintain, increase, decrease


class StaleCameraPose(RuntimeError):
    pass


class NoEstimateEver(RuntimeError):
    pass


class MissingTrack(RuntimeError):
    pass


class PolicyNotLoaded(RuntimeError):
    pass


@dataclass(frozen=True)
class StateVector:
    x_gnb: float
    x_gnb_ue: float
    y_gnb_ue: float
    x_gnb_obs: float
    y_gnb_obs: float
    vx_gnb: float
    vx_ue: float
    vy_ue: float
    vx_obs: float
    vy_obs: float
    L_status: int

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> StateVector:
        vals = [float(v) for v in values]
        vals[-1] = int(round(vals[-1]))
        return cls(*vals)


assert tuple(f.name for f in fields(StateVector)) == FEATURE_ORDER


@dataclass
class TrackedEntity:
    id: int
    position: np.ndarray  # fused (x, y, z), m
    velocity: tuple[float, float] = (0.0, 0.0)
    last_seen_tick: int = 0
    last_tstamp: int = 0
    source_count: int = 0
    coasting: bool = False


@dataclass
class ControllerConfig:
    T_ctrl: float = 0.2
    delta: float = 0.25
    v_max: float = 1.0
    stale_timeout_ticks: int = 12
    ema_alpha: float = 0.5
    gnb_id: int = 1
    camera_of_agent: dict = field(default_factory=dict)  # bus sender -> camera entity id
    obstacle_half_extents: tuple[float, float] = (0.35, 0.35)
    obstacle_height: float = 2.0

    def __post_init__(self):
        if self.T_ctrl <= 0:
            raise ValueError("T_ctrl must be positive")


# ---------------------------------------------------------------------------
# pipeline steps

def estimate_position(cam_entry: PosDataEntry, det: VisDataEntry,
                      cam_age_ticks: int = 0, stale_timeout: int | None = None) -> np.ndarray:
    """Global (x, y, z) in m of a detection, from the reporting camera's POS entry."""
    if stale_timeout is not None and cam_age_ticks > stale_timeout:
        raise StaleCameraPose(f"camera {cam_entry.id} pose is {cam_age_ticks} ticks old")
    cam_pos = np.array([cm_to_m(cam_entry.x), cm_to_m(cam_entry.y), cm_to_m(cam_entry.z)])
    rot = camera_rotation(q_to_rad(cam_entry.theta), q_to_rad(cam_entry.phi))
    return cam_pos + rot @ polar_to_cartesian(cm_to_m(det.r), q_to_rad(det.theta), q_to_rad(det.phi))


def fuse(estimates, last=None) -> tuple[np.ndarray, bool]:
    """Unweighted mean of this tick's estimates; (position, coasting)."""
    pts = [np.asarray(p[0] if isinstance(p, tuple) else p, dtype=float) for p in estimates]
    if pts:
        return np.mean(pts, axis=0), False
    if last is None:
        raise NoEstimateEver("entity has never been observed")
    return np.asarray(last, dtype=float), True


def estimate_velocity(track: TrackedEntity | None, new_pos, dt: float, alpha: float = 0.5) -> tuple[float, float]:
    """Frame-difference velocity, smoothed by an exponential moving average."""
    if track is None:
        return 0.0, 0.0
    if dt <= 0:
        raise ValueError("dt must be positive")
    raw = (np.asarray(new_pos[:2], dtype=float) - track.position[:2]) / dt
    vx = alpha * raw[0] + (1.0 - alpha) * track.velocity[0]
    vy = alpha * raw[1] + (1.0 - alpha) * track.velocity[1]
    return float(vx), float(vy)


def infer_los(gnb_pos, ue_pos, obs_pos, obs_half_extents, obs_height) -> int:
    if ue_pos is None or obs_pos is None:
        raise NoEstimateEver("LoS needs both UE and obstacle estimates")
    box = ObstacleBox(center=(float(obs_pos[0]), float(obs_pos[1])),
                      half_extents=tuple(obs_half_extents), height=obs_height)
    return compute_los(gnb_pos, ue_pos, box)


def build_state(tracks: dict, gnb_pose, L_status: int, stale=()) -> StateVector:
    """``tracks`` maps "ue"/"obstacle" to TrackedEntity; ``gnb_pose`` is ((x, y, z), vx)."""
    try:
        ue, obs = tracks["ue"], tracks["obstacle"]
    except KeyError as exc:
        raise MissingTrack(str(exc)) from None
    (gx, gy, _), gvx = gnb_pose
    ue_v = (0.0, 0.0) if "ue" in stale else ue.velocity
    obs_v = (0.0, 0.0) if "obstacle" in stale else obs.velocity
    return StateVector(
        x_gnb=gx,
        x_gnb_ue=float(ue.position[0] - gx), y_gnb_ue=float(ue.position[1] - gy),
        x_gnb_obs=float(obs.position[0] - gx), y_gnb_obs=float(obs.position[1] - gy),
        vx_gnb=gvx,
        vx_ue=ue_v[0], vy_ue=ue_v[1], vx_obs=obs_v[0], vy_obs=obs_v[1],
        L_status=int(L_status),
    )


def decide_and_control(sv: StateVector, cfg: ControllerConfig, policy, tstamp: int = 0,
                       gnb_yz_cm: tuple[int, int] = (0, 0)):
    """Greedy action and the resulting POS control; returns (control, action, q, x_target_m)."""
    if policy is None:
        raise PolicyNotLoaded("no policy loaded")
    q = np.asarray(policy.q_values(sv.to_array()), dtype=np.float64)
    a = int(np.argmax(q))  # first index on ties
    v_new = min(max(sv.vx_gnb + ACTION_DV[a] * cfg.delta, -cfg.v_max), cfg.v_max)
    x_target = sv.x_gnb + v_new * cfg.T_ctrl
    ctrl = PosControl(x=m_to_cm(x_target), y=gnb_yz_cm[0], z=gnb_yz_cm[1], tstamp=tstamp)
    return ctrl, a, q, x_target


# ---------------------------------------------------------------------------
# controller

DECISION_COLUMNS = ("tick", "tstamp_us", *FEATURE_ORDER, "q0", "q1", "q2", "action", "x_target_m", "ctrl_x_cm")


class VisionApp:
    """Bus-connected controller; call :meth:`tick` once per control interval."""

    def __init__(self, cfg: ControllerConfig, policy, bus: MessageBus, name: str = "visionapp"):
        if policy is not None and abs(policy.delta - cfg.delta) > 1e-12:
            raise SchemaMismatch(f"policy trained with delta={policy.delta}, controller uses {cfg.delta}")
        self.cfg = cfg
        self.policy = policy
        self.bus = bus
        self.name = name
        self.poses: dict[int, tuple[PosDataEntry, int]] = {}
        self.tracks: dict[str, TrackedEntity] = {}
        self.decisions: list[tuple] = []
        bus.subscribe(name, (POS_IND, VIS_IND))

    # step 1 + 2 + velocity part of step 3, one video frame at a time
    def _ingest_frame(self, tick: int, tstamp: int, pos_msgs, vis_msgs) -> None:
        for msg in pos_msgs:
            for e in msg.pos_stats:
                self.poses[e.id] = (e, tick)
        estimates: dict[str, list] = {"ue": [], "obstacle": []}
        for sender, msg in vis_msgs:
            cam_id = self.cfg.camera_of_agent.get(sender)
            if cam_id is None or cam_id not in self.poses:
                log.debug("no camera pose for sender %s", sender)
                continue
            cam_entry, seen = self.poses[cam_id]
            for det in msg.vis_stats:
                key = {CLS_PERSON: "ue", CLS_OBSTACLE: "obstacle"}.get(det.cls)
                if key is None:
                    continue
                try:
                    p = estimate_position(cam_entry, det, tick - seen, self.cfg.stale_timeout_ticks)
                except StaleCameraPose as exc:
                    log.warning("%s", exc)
                    continue
                estimates[key].append((p, sender))
        for key, est in estimates.items():
            if not est:
                if key in self.tracks:
                    self.tracks[key].coasting = True
                continue
            pos, _ = fuse(est)
            track = self.tracks.get(key)
            if track is None:
                self.tracks[key] = TrackedEntity(id=-1, position=pos, last_seen_tick=tick,
                                                 last_tstamp=tstamp, source_count=len(est))
                continue
            dt = (tstamp - track.last_tstamp) / 1e6
            if dt > 0:
                track.velocity = estimate_velocity(track, pos, dt, self.cfg.ema_alpha)
            track.position = pos
            track.last_seen_tick = tick
            track.last_tstamp = tstamp
            track.source_count = len(est)
            track.coasting = False

    def ingest(self, up_to_tick: int) -> None:
        frames: dict[tuple[int, int], tuple[list, list]] = {}
        for env in self.bus.poll(self.name, up_to_tick):
            msg = decode(env.kind, env.payload)
            slot = frames.setdefault((env.delivery_tick, msg.tstamp), ([], []))
            if env.kind == POS_IND:
                slot[0].append(msg)
            else:
                slot[1].append((env.sender, msg))
        for (tick, tstamp) in sorted(frames):
            pos_msgs, vis_msgs = frames[(tick, tstamp)]
            self._ingest_frame(tick, tstamp, pos_msgs, vis_msgs)

    def current_state(self, tick: int) -> StateVector | None:
        gnb = self.poses.get(self.cfg.gnb_id)
        if gnb is None or "ue" not in self.tracks or "obstacle" not in self.tracks:
            return None
        e = gnb[0]
        gnb_pos = (cm_to_m(e.x), cm_to_m(e.y), cm_to_m(e.z))
        stale = {k for k, t in self.tracks.items() if tick - t.last_seen_tick > self.cfg.stale_timeout_ticks}
        L = infer_los(gnb_pos, self.tracks["ue"].position, self.tracks["obstacle"].position,
                      self.cfg.obstacle_half_extents, self.cfg.obstacle_height)
        return build_state(self.tracks, (gnb_pos, cm_to_m(e.vx)), L, stale)

    def tick(self, tick: int, tstamp: int, sender: str = "visionapp") -> PosControl | None:
        """Drain indications up to ``tick``, decide, and publish at most one control."""
        try:
            self.ingest(tick)
            sv = self.current_state(tick)
            if sv is None:
                return None
            gnb_entry = self.poses[self.cfg.gnb_id][0]
            ctrl, a, q, x_target = decide_and_control(sv, self.cfg, self.policy, tstamp,
                                                      (gnb_entry.y, gnb_entry.z))
        except Exception:  # degrade to hold
            log.exception("control tick %d failed; holding", tick)
            return None
        self.bus.publish(BusEnvelope(sender, POS_CTRL, encode(POS_CTRL, ctrl), tick))
        self.decisions.append((tick, tstamp, *sv.to_array().tolist(), *q.tolist(), a, x_target, ctrl.x))
        return ctrl
