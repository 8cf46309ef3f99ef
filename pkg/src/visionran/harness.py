"""Closed-loop emulation runs, metrics, and output files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .dqn import load_policy
from .perception import NoiseModel, camera_from_spec, gnb_viewpoint, observe, report_pose
from .scenario import ScenarioConfig
from .sm_protocol import (
    POS_CTRL,
    POS_IND,
    VIS_IND,
    BusEnvelope,
    MessageBus,
    PosControl,
    cm_to_m,
    decode,
    encode,
    m_to_cm,
)
from .world_twin import command_gnb, distance, link_quality, path_loss, step_world
from .xapp import DECISION_COLUMNS, ControllerConfig, VisionApp, estimate_position, fuse

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("tick", "t_s", "gnb_x", "ue_x", "ue_y", "L_status", "pl_db", "snr_db", "thr_bps")
COMPARE_COLUMNS = ("tick", "t_s", "static_gnb_x", "static_L_status", "static_pl_db", "static_snr_db",
                   "static_thr_bps", "ctrl_gnb_x", "ctrl_L_status", "ctrl_pl_db", "ctrl_snr_db", "ctrl_thr_bps")
LOCALIZATION_COLUMNS = ("axis", "ground_truth_m", "mean_estimate_m", "max_estimate_m", "min_estimate_m",
                        "mean_deviation_m")


class PolicyLoadError(RuntimeError):
    pass


class DurationMismatch(ValueError):
    pass


@dataclass
class RunReport:
    mode: str
    seed: int
    noise_profile: str
    fps: int
    rows: list = field(default_factory=list)  # one tuple per tick, TRAJECTORY_COLUMNS
    decisions: list = field(default_factory=list)  # DECISION_COLUMNS

    @property
    def duration_s(self) -> float:
        return len(self.rows) / self.fps

    def column(self, name: str) -> np.ndarray:
        i = TRAJECTORY_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    @property
    def nlos_seconds(self) -> float:
        return int(self.column("L_status").sum()) / self.fps

    @property
    def los_seconds(self) -> float:
        return (len(self.rows) - int(self.column("L_status").sum())) / self.fps

    def aggregates(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "noise_profile": self.noise_profile,
            "duration_s": self.duration_s,
            "nlos_seconds": self.nlos_seconds,
            "los_seconds": self.los_seconds,
            "mean_pl_db": float(self.column("pl_db").mean()),
            "mean_snr_db": float(self.column("snr_db").mean()),
            "mean_thr_bps": float(self.column("thr_bps").mean()),
            "n_controls": len(self.decisions),
        }


@dataclass
class LocalizationStats:
    ground_truth: tuple[float, float]
    mean: tuple[float, float]
    max: tuple[float, float]
    min: tuple[float, float]
    n_frames: int
    n_estimates: int

    @property
    def mean_deviation(self) -> tuple[float, float]:
        return tuple(abs(g - m) for g, m in zip(self.ground_truth, self.mean))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mean_deviation"] = self.mean_deviation
        return d


def controller_config(scn: ScenarioConfig) -> ControllerConfig:
    agents = {c.agent: c.id for c in scn.cameras}
    agents[scn.gnb_agent] = scn.gnb_camera.id
    return ControllerConfig(
        T_ctrl=scn.T_ctrl, delta=scn.delta, v_max=scn.v_max, gnb_id=scn.gnb_id,
        camera_of_agent=agents, obstacle_half_extents=scn.obstacle.half_extents,
        obstacle_height=scn.obstacle.height,
    )


def tstamp_us(tick: int, fps: int) -> int:
    return round(tick * 1_000_000 / fps)


def _publish(bus, sender, kind, msg, tick):
    bus.publish(BusEnvelope(sender, kind, encode(kind, msg), tick))


def run_scenario(scn: ScenarioConfig, mode: str = "static", policy=None, seed: int = 0,
                 noise_profile: str = "default", control_log=None) -> RunReport:
    """Lockstep emulation: cameras -> bus -> VisionApp -> bus -> gNB agent -> world.

    ``control_log`` (a list of (tick, x_target_cm)) replays recorded commands
    instead of running the controller.
    """
    if mode not in ("static", "controlled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "controlled" and policy is None and control_log is None:
        raise PolicyLoadError("controlled mode requires a policy")
    if isinstance(policy, (str, Path)):
        try:
            policy = load_policy(policy)
        except Exception as exc:
            raise PolicyLoadError(str(exc)) from exc

    prof = scn.noise(noise_profile)
    noise = NoiseModel(prof.sigma_r, prof.sigma_angle, prof.drop_prob, seed)
    cams = [(spec, camera_from_spec(spec, scn.frame_period)) for spec in scn.cameras]
    gnb_cam = camera_from_spec(scn.gnb_camera, scn.frame_period)
    mount = scn.gnb_camera.position
    rngs = {spec.id: noise.stream(spec.id) for spec, _ in cams}
    rngs[gnb_cam.pose.id] = noise.stream(gnb_cam.pose.id)

    bus = MessageBus()
    bus.subscribe(scn.gnb_agent, (POS_CTRL,))
    cfg = controller_config(scn)
    app = None
    replay = dict(control_log or [])
    ctrl_us = round(scn.T_ctrl * 1_000_000)
    next_ctrl_us = round(scn.activation_s * 1_000_000)

    world = scn.initial_world()
    report = RunReport(mode, seed, noise_profile, scn.fps)
    dt = scn.frame_period
    for tick in range(scn.n_frames):
        bus.advance_to(tick)
        now = tstamp_us(tick, scn.fps)
        control_epoch = mode == "controlled" and now >= next_ctrl_us
        if control_epoch and app is None and control_log is None:
            app = VisionApp(cfg, policy, bus)

        # E2 agents report this frame
        for spec, cam in cams:
            _publish(bus, spec.agent, POS_IND, report_pose([cam.pose], now), tick)
            _publish(bus, spec.agent, VIS_IND, observe(cam, world, noise, rng=rngs[spec.id], tstamp=now), tick)
        vis, pos = gnb_viewpoint(world, gnb_cam, noise, rng=rngs[gnb_cam.pose.id], tstamp=now, mount_offset=mount)
        _publish(bus, scn.gnb_agent, POS_IND, pos, tick)
        _publish(bus, scn.gnb_agent, VIS_IND, vis, tick)

        if control_epoch:
            next_ctrl_us += ctrl_us
            if app is not None:
                app.tick(tick, now)
            elif tick in replay:
                _, gy, gz = world.gnb.position
                ctrl = PosControl(int(replay[tick]), m_to_cm(gy), m_to_cm(gz), now)
                _publish(bus, "visionapp", POS_CTRL, ctrl, tick)

        # gNB agent executes the newest command
        for env in bus.poll(scn.gnb_agent, tick):
            ctrl = decode(POS_CTRL, env.payload)
            world = command_gnb(world, cm_to_m(ctrl.x), scn.T_ctrl)

        d = distance(world.gnb.position, world.ue.position)
        pl = path_loss(d, world.los, scn.link)
        snr, thr = link_quality(pl, scn.link)
        report.rows.append((tick, tick / scn.fps, world.gnb.position[0], world.ue.position[0],
                            world.ue.position[1], world.los, pl, snr, thr))
        world = step_world(world, world.gnb_target_x, dt)

    if app is not None:
        report.decisions = list(app.decisions)
    return report


def compare(static: RunReport, ctrl: RunReport) -> dict:
    """NLoS reduction and per-metric means of a static and a controlled run."""
    if len(static.rows) != len(ctrl.rows) or static.fps != ctrl.fps:
        raise DurationMismatch(f"{static.duration_s} s vs {ctrl.duration_s} s")
    t_static, t_ctrl = static.nlos_seconds, ctrl.nlos_seconds
    reduction = 0.0 if t_static == 0 else 1.0 - t_ctrl / t_static
    return {
        "nlos_seconds_static": t_static,
        "nlos_seconds_controlled": t_ctrl,
        "nlos_reduction": reduction,
        "mean_pl_db": {"static": float(static.column("pl_db").mean()), "controlled": float(ctrl.column("pl_db").mean())},
        "mean_snr_db": {"static": float(static.column("snr_db").mean()), "controlled": float(ctrl.column("snr_db").mean())},
        "mean_thr_bps": {"static": float(static.column("thr_bps").mean()),
                         "controlled": float(ctrl.column("thr_bps").mean())},
    }


def eval_localization(scn: ScenarioConfig, seed: int = 0, noise_profile: str = "default") -> LocalizationStats:
    """Obstacle localization over every frame with a static gNB, fusing all cameras."""
    prof = scn.noise(noise_profile)
    noise = NoiseModel(prof.sigma_r, prof.sigma_angle, prof.drop_prob, seed)
    cams = [camera_from_spec(spec, scn.frame_period) for spec in scn.cameras]
    gnb_cam = camera_from_spec(scn.gnb_camera, scn.frame_period)
    rngs = {c.pose.id: noise.stream(c.pose.id) for c in cams + [gnb_cam]}
    world = scn.initial_world()
    estimates = []
    for tick in range(scn.n_frames):
        now = tstamp_us(tick, scn.fps)
        views = [(report_pose([c.pose], now).pos_stats[0], observe(c, world, noise, rng=rngs[c.pose.id], tstamp=now))
                 for c in cams]
        vis, pos = gnb_viewpoint(world, gnb_cam, noise, rng=rngs[gnb_cam.pose.id], tstamp=now,
                                 mount_offset=scn.gnb_camera.position)
        views.append((pos.pos_stats[1], vis))
        frame = [estimate_position(cam_entry, det)
                 for cam_entry, ind in views for det in ind.vis_stats if det.id == scn.obstacle.id]
        if frame:
            estimates.append(fuse(frame)[0][:2])
        world = step_world(world, None, scn.frame_period)
    est = np.array(estimates)
    gt = tuple(float(v) for v in scn.obstacle.center)
    lo, hi = est.min(axis=0), est.max(axis=0)
    # exactly rounded sum, clamped so rounding can never push the mean outside [min, max]
    mean = [min(max(math.fsum(col) / len(col), a), b) for col, a, b in zip(est.T, lo, hi)]
    return LocalizationStats(
        ground_truth=gt,
        mean=tuple(float(v) for v in mean),
        max=tuple(float(v) for v in hi),
        min=tuple(float(v) for v in lo),
        n_frames=scn.n_frames,
        n_estimates=len(est),
    )


# ---------------------------------------------------------------------------
# outputs

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6f}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def trajectory_csv(report: RunReport) -> str:
    return _csv_text(TRAJECTORY_COLUMNS, report.rows)


def decisions_csv(report: RunReport) -> str:
    rows = []
    for r in report.decisions:
        r = list(r)
        r[12] = int(r[12])  # L_status
        rows.append(r)
    return _csv_text(DECISION_COLUMNS, rows)


def read_decision_log(path) -> list[tuple[int, int]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DECISION_COLUMNS:
            raise ValueError(f"{path}: not a decision log")
        return [(int(row["tick"]), int(row["ctrl_x_cm"])) for row in reader]


def compare_csv(static: RunReport, ctrl: RunReport) -> str:
    rows = []
    for a, b in zip(static.rows, ctrl.rows):
        rows.append((a[0], a[1], a[2], a[5], a[6], a[7], a[8], b[2], b[5], b[6], b[7], b[8]))
    return _csv_text(COMPARE_COLUMNS, rows)


def localization_csv(stats: LocalizationStats) -> str:
    rows = []
    for i, axis in enumerate("xy"):
        rows.append((axis, stats.ground_truth[i], stats.mean[i], stats.max[i], stats.min[i],
                     stats.mean_deviation[i]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOCALIZATION_COLUMNS)
    for r in rows:
        w.writerow([r[0]] + [_fmt(v) for v in r[1:]])
    return buf.getvalue()


def emit_outputs(out_dir, runs: list[RunReport] = (), comparison: dict | None = None,
                 localization: LocalizationStats | None = None, extra: dict | None = None) -> list[Path]:
    """Write CSVs, SVG plots and report.json for whatever results are given."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = out / name
        p.write_text(text)
        written.append(p)

    report: dict = {"runs": {}}
    for run in runs:
        put(f"run_{run.mode}.csv", trajectory_csv(run))
        if run.decisions:
            put(f"decisions_{run.mode}.csv", decisions_csv(run))
        put(f"run_{run.mode}.svg", plotting.run_svg(run, title=f"{run.mode} gNB"))
        report["runs"][run.mode] = run.aggregates()
    if comparison is not None:
        by_mode = {r.mode: r for r in runs}
        put("compare.csv", compare_csv(by_mode["static"], by_mode["controlled"]))
        put("compare.svg", plotting.compare_svg(by_mode["static"], by_mode["controlled"]))
        report["comparison"] = comparison
    if localization is not None:
        put("localization.csv", localization_csv(localization))
        report["localization"] = localization.as_dict()
    if extra:
        report.update(extra)
    put("report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return written
