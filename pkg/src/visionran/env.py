"""Reset/step environment over the digital twin, for DQN training."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .dqn import N_FEATURES
from .scenario import ScenarioConfig
from .world_twin import (
    EnvConfig,
    Waypoints,
    WorldState,
    command_gnb,
    compute_los,
    distance,
    path_loss,
    step_world,
)
from .xapp import StateVector

ACTION_DV = (0.0, 1.0, -1.0)


class NotReset(RuntimeError):
    pass


class InvalidConfig(ValueError):
    pass


def normalization(scn: ScenarioConfig, ue_speed_max: float = EnvConfig.ue_speed_max) -> tuple[tuple, tuple]:
    """Per-feature (offset, scale) from room and rail bounds, mapping into [-1, 1]."""
    lo, hi = scn.x_bounds
    w, d = scn.room_size
    offset = ((lo + hi) / 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0.5)
    scale = ((hi - lo) / 2, w, d, w, d, scn.v_max, ue_speed_max, ue_speed_max,
             ue_speed_max, ue_speed_max, 0.5)
    return tuple(float(v) for v in offset), tuple(float(v) for v in scale)


def true_state(world: WorldState) -> StateVector:
    gx, gy, _ = world.gnb.position
    ux, uy, _ = world.ue.position
    ox, oy = world.obstacle.center
    return StateVector(
        x_gnb=gx, x_gnb_ue=ux - gx, y_gnb_ue=uy - gy, x_gnb_obs=ox - gx, y_gnb_obs=oy - gy,
        vx_gnb=world.gnb.velocity[0],
        vx_ue=world.ue.velocity[0], vy_ue=world.ue.velocity[1],
        vx_obs=world.obstacle.velocity[0], vy_obs=world.obstacle.velocity[1],
        L_status=world.los,
    )


class VisionTwinEnv:
    """gNB-on-a-rail environment.

    Actions follow the controller's table: 0 keep velocity, 1 add delta,
    2 subtract delta.  Reward is the negative path loss scaled by
    ``cfg.reward_scale``.
    """

    def __init__(self, scenario: ScenarioConfig, cfg: EnvConfig | None = None, evaluation: bool = False):
        self.scn = scenario
        self.cfg = cfg or scenario.env_config()
        if self.cfg.x_bounds != scenario.x_bounds:
            lo, hi = self.cfg.x_bounds
            (rx0, rx1), _, _ = scenario.room
            if lo < rx0 or hi > rx1:
                raise InvalidConfig("gNB rail leaves the room")
        self.evaluation = evaluation
        self.world: WorldState | None = None
        self.steps = 0
        self.rng = np.random.default_rng(0)
        self.nlos = 0

    # -- randomisation -----------------------------------------------------
    def _far_half_point(self, rng, obstacle) -> tuple[float, float]:
        (x0, x1), (y0, y1), _ = self.scn.room
        lo_y = (y0 + y1) / 2
        for _ in range(1000):
            x = rng.uniform(x0 + 0.3, x1 - 0.3)
            y = rng.uniform(lo_y, y1 - 0.3)
            bx0, bx1, by0, by1 = obstacle.bounds
            if not (bx0 - 0.3 <= x <= bx1 + 0.3 and by0 - 0.3 <= y <= by1 + 0.3):
                return x, y
        raise InvalidConfig("cannot place UE outside the obstacle")

    def _shadow_point(self, rng, gnb_xy, obstacle) -> tuple[float, float]:
        """A far-half point on a ray from the gNB through the obstacle footprint."""
        (x0, x1), (y0, y1), _ = self.scn.room
        bx0, bx1, by0, by1 = obstacle.bounds
        for _ in range(100):
            aim = (rng.uniform(bx0, bx1), rng.uniform(by0, by1))
            y = rng.uniform((y0 + y1) / 2, y1 - 0.3)
            if aim[1] <= gnb_xy[1] or y <= by1 + 0.3:
                continue
            x = gnb_xy[0] + (aim[0] - gnb_xy[0]) * (y - gnb_xy[1]) / (aim[1] - gnb_xy[1])
            if x0 + 0.3 <= x <= x1 - 0.3:
                return x, y
        return self._far_half_point(rng, obstacle)

    def _ue_point(self, rng, gnb_xy, obstacle) -> tuple[float, float]:
        if rng.random() < self.cfg.shadow_prob:
            return self._shadow_point(rng, gnb_xy, obstacle)
        return self._far_half_point(rng, obstacle)

    def _random_world(self, rng) -> WorldState:
        base = self.scn.initial_world()
        cfg = self.cfg
        j = cfg.obstacle_jitter
        cx, cy = self.scn.obstacle.center
        obstacle = self.scn.obstacle.moved_to(cx + rng.uniform(-j, j), cy + rng.uniform(-j, j))

        lo, hi = cfg.x_bounds
        gx = rng.uniform(lo, hi) if cfg.random_gnb_start else self.scn.gnb_start[0]
        gnb_xy = (gx, self.scn.gnb_start[1])

        duration = cfg.episode_len * cfg.T_ctrl
        start = self._ue_point(rng, gnb_xy, obstacle)
        points = [(0.0, *start)]
        n_moves = int(rng.integers(cfg.ue_moves_per_episode[0], cfg.ue_moves_per_episode[1] + 1))
        t_moves = np.sort(rng.uniform(0.5, duration - 1.0, size=n_moves))
        here = start
        for t in t_moves:
            t = max(float(t), points[-1][0])
            dest = self._ue_point(rng, gnb_xy, obstacle)
            span = max(rng.uniform(*cfg.ue_move_duration), math.dist(here, dest) / cfg.ue_speed_max)
            points.append((t, *here))
            points.append((t + span, *dest))
            here = dest
        schedule = Waypoints(tuple(points))

        gnb = replace(base.gnb, position=(gx, *self.scn.gnb_start[1:]))
        ux, uy = schedule.position(0.0)
        ue = replace(base.ue, position=(ux, uy, self.scn.ue_height), velocity=(*schedule.velocity(0.0), 0.0))
        return replace(base, gnb=gnb, ue=ue, obstacle=obstacle, ue_schedule=schedule,
                       x_bounds=cfg.x_bounds, v_max=cfg.v_max,
                       los=compute_los(gnb.position, ue.position, obstacle))

    # -- gym-style API -----------------------------------------------------
    def reset(self, seed: int | None = None) -> tuple[WorldState, StateVector]:
        self.rng = np.random.default_rng(seed)
        if self.evaluation:
            self.world = replace(self.scn.initial_world(), x_bounds=self.cfg.x_bounds, v_max=self.cfg.v_max)
        else:
            self.world = self._random_world(self.rng)
        self.steps = 0
        self.nlos = self.world.los
        return self.world, self.observe()

    def observe(self) -> StateVector:
        sv = true_state(self.world)
        if self.evaluation or (self.cfg.obs_noise_pos == 0 and self.cfg.obs_noise_vel == 0):
            return sv
        v = sv.to_array()
        n = self.rng.normal(size=8)
        v[1:5] += n[:4] * self.cfg.obs_noise_pos
        v[6:10] += n[4:] * self.cfg.obs_noise_vel
        return StateVector.from_array(v)

    def reward(self) -> float:
        w = self.world
        d = distance(w.gnb.position, w.ue.position)
        return -path_loss(d, w.los, self.scn.link) / self.cfg.reward_scale

    def step(self, action: int) -> tuple[StateVector, float, bool]:
        if self.world is None:
            raise NotReset("call reset() before step()")
        if action not in (0, 1, 2):
            raise ValueError(f"invalid action {action!r}")
        cfg = self.cfg
        w = self.world
        v = w.gnb.velocity[0] + ACTION_DV[action] * cfg.delta
        v = min(max(v, -cfg.v_max), cfg.v_max)
        target = w.gnb.position[0] + v * cfg.T_ctrl
        w = command_gnb(w, target, cfg.T_ctrl)
        # one tick per control interval, so t = tick * T_ctrl
        w = step_world(w, w.gnb_target_x, cfg.T_ctrl, speed=abs(w.gnb.velocity[0]))
        self.world = w
        self.steps += 1
        self.nlos = w.los
        done = self.steps >= cfg.episode_len
        return self.observe(), self.reward(), done

    @property
    def observation_size(self) -> int:
        return N_FEATURES
