"""Ground-truth world of the digital twin: geometry, kinematics and the link model.

Units are SI throughout (m, m/s, rad, dB).  The gNB moves along x only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

LOS = 0
NLOS = 1

# dB values live on a dyadic grid so that adding the obstacle attenuation
# and subtracting it again is exact in binary floating point
DB_QUANTUM = 2.0**-20


def snap_db(value: float) -> float:
    return round(value / DB_QUANTUM) * DB_QUANTUM


class DegenerateSegmentWarning(UserWarning):
    """gNB and UE coincide; LoS is reported by convention."""


@dataclass(frozen=True)
class EntityPose:
    id: int
    position: tuple[float, float, float]
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    boresight: tuple[float, float] = (0.0, 0.0)  # (elevation, azimuth), cameras only


@dataclass(frozen=True)
class ObstacleBox:
    center: tuple[float, float]
    half_extents: tuple[float, float]
    height: float
    velocity: tuple[float, float] = (0.0, 0.0)
    id: int = 3

    def __post_init__(self):
        if min(self.half_extents) <= 0 or self.height <= 0:
            raise ValueError("obstacle extents and height must be positive")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        (cx, cy), (hx, hy) = self.center, self.half_extents
        return cx - hx, cx + hx, cy - hy, cy + hy

    def moved_to(self, x: float, y: float) -> ObstacleBox:
        return replace(self, center=(x, y))


@dataclass(frozen=True)
class LinkModel:
    A_obs: float = 25.0
    tx_power: float = -40.0
    noise_floor: float = -90.0
    bandwidth: float = 20e6
    d_min: float = 0.1
    snr_min: float = -5.0  # below this the proxy link carries nothing

    def __post_init__(self):
        if self.A_obs < 0 or self.d_min <= 0:
            raise ValueError("need A_obs >= 0 and d_min > 0")


@dataclass(frozen=True)
class Waypoints:
    """Piecewise-linear (t, x, y) schedule; holds the end values outside its span."""

    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        ts = [p[0] for p in self.points]
        if not ts or any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("waypoint times must be non-empty and non-decreasing")

    def _segment(self, t: float):
        pts = self.points
        if t < pts[0][0]:
            return None
        # right-continuous: at a knot the outgoing segment applies
        for a, b in zip(pts, pts[1:]):
            if a[0] <= t < b[0]:
                return a, b
        return None

    def position(self, t: float) -> tuple[float, float]:
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1], pts[0][2]
        if t >= pts[-1][0]:
            return pts[-1][1], pts[-1][2]
        a, b = self._segment(t)
        u = (t - a[0]) / (b[0] - a[0])
        return a[1] + u * (b[1] - a[1]), a[2] + u * (b[2] - a[2])

    def velocity(self, t: float) -> tuple[float, float]:
        seg = self._segment(t)
        if seg is None:
            return 0.0, 0.0
        a, b = seg
        span = b[0] - a[0]
        return (b[1] - a[1]) / span, (b[2] - a[2]) / span


@dataclass(frozen=True)
class WorldState:
    tick: int
    t_s: float
    gnb: EntityPose
    ue: EntityPose
    obstacle: ObstacleBox
    cameras: tuple[EntityPose, ...] = ()
    los: int = LOS
    ue_schedule: Waypoints | None = None
    gnb_target_x: float | None = None
    x_bounds: tuple[float, float] = (0.0, 8.0)
    v_max: float = 1.0


@dataclass
class EnvConfig:
    delta: float = 0.25
    v_max: float = 1.0
    x_bounds: tuple[float, float] = (0.0, 8.0)
    T_ctrl: float = 0.2
    episode_len: int = 125
    reward_scale: float = 100.0
    # training randomisation
    obstacle_jitter: float = 0.5
    ue_moves_per_episode: tuple[int, int] = (1, 3)
    ue_move_duration: tuple[float, float] = (0.6, 1.5)
    ue_speed_max: float = 2.0  # m/s; slower moves are stretched, never faster
    shadow_prob: float = 0.0  # chance a UE placement is hidden behind the obstacle
    random_gnb_start: bool = True
    obs_noise_pos: float = 0.03  # m, on observed UE/obstacle positions
    obs_noise_vel: float = 0.15  # m/s, on observed UE/obstacle velocities

    def __post_init__(self):
        lo, hi = self.x_bounds
        if not lo < hi:
            raise ValueError("x_bounds must satisfy x_min < x_max")
        if self.T_ctrl <= 0 or self.delta <= 0 or self.v_max <= 0:
            raise ValueError("T_ctrl, delta and v_max must be positive")


# ---------------------------------------------------------------------------
# geometry

def _clip_segment(p0, p1, bounds) -> tuple[float, float] | None:
    """Parameter interval of the 2-D segment p0->p1 inside a closed rectangle."""
    xmin, xmax, ymin, ymax = bounds
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, p0[0] - xmin), (dx, xmax - p0[0]), (-dy, p0[1] - ymin), (dy, ymax - p0[1])):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return t0, t1


def compute_los(gnb_pos, ue_pos, obs: ObstacleBox) -> int:
    """1 (NLoS) if the gNB-UE segment passes through the obstacle box, else 0.

    Positions may be 2- or 3-vectors; missing heights are taken as 0.  The box
    stands on the floor, so the segment is blocked when any part of it above
    the footprint is lower than the box top.
    """
    g = tuple(float(v) for v in gnb_pos) + (0.0,) * (3 - len(gnb_pos))
    u = tuple(float(v) for v in ue_pos) + (0.0,) * (3 - len(ue_pos))
    if g == u:
        warnings.warn("gNB and UE positions coincide", DegenerateSegmentWarning, stacklevel=2)
        return LOS
    span = _clip_segment(g, u, obs.bounds)
    if span is None:
        return LOS
    z_low = min(g[2] + t * (u[2] - g[2]) for t in span)
    return NLOS if z_low < obs.height else LOS


def path_loss(d: float, los_status: int, link: LinkModel) -> float:
    """20 log10(d) + A_obs * L, with d clamped to ``link.d_min``."""
    d = max(float(d), link.d_min)
    return snap_db(20.0 * math.log10(d)) + snap_db(link.A_obs) * int(los_status)


def link_quality(pl: float, link: LinkModel) -> tuple[float, float]:
    """(SNR dB, Shannon throughput bit/s) for a path loss; zero throughput below snr_min."""
    snr = snap_db(link.tx_power) - pl - snap_db(link.noise_floor)
    if snr < link.snr_min:
        return snr, 0.0
    return snr, link.bandwidth * math.log2(1.0 + 10.0 ** (snr / 10.0))


def distance(a, b) -> float:
    return math.dist(a, b)


# ---------------------------------------------------------------------------
# kinematics

def command_gnb(state: WorldState, target_x: float, T_ctrl: float) -> WorldState:
    """Accept a target x: clamp it to the rail and derive the commanded velocity."""
    lo, hi = state.x_bounds
    target = min(max(float(target_x), lo), hi)
    x = state.gnb.position[0]
    vx = min(max((target - x) / T_ctrl, -state.v_max), state.v_max)
    gnb = replace(state.gnb, velocity=(vx, 0.0, 0.0))
    return replace(state, gnb=gnb, gnb_target_x=target)


def step_world(state: WorldState, gnb_target_x: float | None, dt: float,
               speed: float | None = None) -> WorldState:
    """Advance the world by ``dt`` seconds.

    The gNB moves toward ``gnb_target_x`` (clamped to the rail) at ``speed``,
    defaulting to the magnitude of its commanded velocity, or ``v_max`` when it
    has none; the move is capped by ``v_max`` and stops at the target.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    lo, hi = state.x_bounds
    gx, gy, gz = state.gnb.position
    target = gx if gnb_target_x is None else min(max(float(gnb_target_x), lo), hi)
    if speed is None:
        cmd = abs(state.gnb.velocity[0])
        speed = cmd if cmd > 0 else state.v_max
    reach = min(speed, state.v_max) * dt
    if abs(target - gx) <= reach:
        new_x = target  # land exactly, no rounding residue
    else:
        new_x = gx + math.copysign(reach, target - gx)
    new_x = min(max(new_x, lo), hi)
    gnb = replace(state.gnb, position=(new_x, gy, gz))

    t_new = (state.tick + 1) * dt  # no drift from repeated addition
    ue = state.ue
    if state.ue_schedule is not None:
        ux, uy = state.ue_schedule.position(t_new)
        uvx, uvy = state.ue_schedule.velocity(t_new)
        ue = replace(ue, position=(ux, uy, ue.position[2]), velocity=(uvx, uvy, 0.0))

    obs = state.obstacle
    if obs.velocity != (0.0, 0.0):
        obs = obs.moved_to(obs.center[0] + obs.velocity[0] * dt, obs.center[1] + obs.velocity[1] * dt)

    return replace(
        state,
        tick=state.tick + 1,
        t_s=t_new,
        gnb=gnb,
        ue=ue,
        obstacle=obs,
        gnb_target_x=target if gnb_target_x is not None else state.gnb_target_x,
        los=compute_los(gnb.position, ue.position, obs),
    )
