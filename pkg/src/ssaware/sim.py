"""Deterministic scenario runner.

Per tick: truth is observed by every sensing actor, senders broadcast CPMs
to the ego over the simulated channel, the ego filters its own and the
delivered detections, retires stale tracks and builds a scene. Truth then
advances one step under the estimator's motion model plus bounded noise.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, cpm
from . import zonoset as zs
from .awareness import LOCAL, AwarenessEngine, metrics, scene_record
from .channel import ChannelConfig, V2XChannel
from .estimator import NoiseBound, state_matrix, wrap_angle
from .frames import FovSector, Obstacle, Pose2D, TruthObject, measurement_to_global, reference_offset, synth_perceive
from .scenario import ScenarioConfig, dump_scenario

TRUTH_STREAM = 0x7275
PERCEPTION_STREAM = 0x7065


class ContainmentViolation(RuntimeError):
    """A true state fell outside an emitted set during a self-checked run."""


@dataclass
class TickRecord:
    tick: int
    time: float
    detections: dict  # sensing actor id -> sorted ids of detected actors
    local_classes: list  # class hints of the ego's local tracks
    scene_classes: dict  # provenance -> sorted class hints present in the scene


@dataclass
class Containment:
    corrected_checked: int = 0
    corrected_violations: int = 0
    fused_checked: int = 0
    fused_violations: int = 0
    mixed_groups: int = 0
    failures: list = field(default_factory=list)


@dataclass
class RunResult:
    config: ScenarioConfig
    truth: np.ndarray  # (ticks, actors, 3): x, y, speed
    headings: np.ndarray  # (ticks, actors)
    scenes: list
    timeline: list
    containment: Containment
    metrics: list
    excluded: int
    messages_sent: int
    messages_dropped: int
    out_of_order: int
    files: dict = field(default_factory=dict)

    def actor_index(self, actor_id: str) -> int:
        return [a.id for a in self.config.actors].index(actor_id)


def time_ms(tick: int, cfg: ScenarioConfig) -> int:
    return round(tick * 1000 / cfg.tick_rate)


def _target(actor, t: float):
    speed, heading = None, None
    for w in actor.profile:
        if w.t <= t + 1e-9:
            speed = w.speed
            if w.heading is not None:
                heading = w.heading
    return speed, heading


class _Truth:
    """Ground-truth motion: ``x+ = F(theta) x + q`` with ``q`` inside the process box."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng([cfg.seed, TRUTH_STREAM])
        self.Q = np.asarray(cfg.noise.process, dtype=float)
        n = len(cfg.actors)
        self.x = np.zeros((n, 3))
        self.theta = np.zeros(n)
        for i, a in enumerate(cfg.actors):
            speed, heading = _target(a, 0.0)
            self.x[i] = (a.pose[0], a.pose[1], 0.0 if a.static or speed is None else speed)
            self.theta[i] = wrap_angle(a.pose[2] if heading is None else heading)

    def advance(self, t_next: float):
        cfg, dt, f = self.cfg, self.cfg.dt, self.cfg.noise.truth_process_fraction
        for i, a in enumerate(cfg.actors):
            if a.static or a.role == "obstacle":
                continue
            target, _ = _target(a, t_next - dt)
            amp = f if a.process_noise else 0.0
            u = self.rng.uniform(-1.0, 1.0, size=3)
            q = np.zeros(3)
            q[:2] = amp * u[:2] * self.Q[:2]
            ramp = 0.0 if target is None else np.clip(target - self.x[i, 2], -0.5 * self.Q[2], 0.5 * self.Q[2])
            q[2] = ramp + 0.5 * amp * u[2] * self.Q[2]
            x = state_matrix(self.theta[i], dt) @ self.x[i] + q
            x[2] = max(x[2], 0.0)
            self.x[i] = x
            _, heading = _target(a, t_next)
            if heading is not None:
                self.theta[i] = wrap_angle(heading)

    def pose(self, i: int) -> Pose2D:
        return Pose2D(self.x[i, 0], self.x[i, 1], self.theta[i])


def obstacles_of(cfg: ScenarioConfig) -> list[Obstacle]:
    obs = [Obstacle(o.x, o.y, o.length, o.width, o.heading) for o in cfg.obstacles]
    obs += [Obstacle(a.pose[0], a.pose[1], a.length, a.width, a.pose[2]) for a in cfg.actors if a.role == "obstacle"]
    return obs


def sensor_fov(actor, pose: Pose2D) -> tuple[Pose2D, FovSector]:
    sensor = reference_offset(pose, actor.ref_point_offset)
    return sensor, FovSector(sensor, actor.fov.range, actor.fov.half_angle)


def run(
    cfg: ScenarioConfig,
    out_dir=None,
    self_check: bool = False,
    keep_scenes: bool = True,
    checked_sets: list | None = None,
) -> RunResult:
    """Simulate ``cfg`` and, if ``out_dir`` is given, write all artifacts there.

    With ``self_check`` a containment violation raises :class:`ContainmentViolation`
    at the end of the run; violations are always counted in the result. If
    ``checked_sets`` is a list, every ``(kind, set, true_state)`` that went
    through the containment check is appended to it.
    """
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    actors = cfg.actors
    ids = [a.id for a in actors]
    ego_i = next(i for i, a in enumerate(actors) if a.role == "ego")
    senders = [i for i, a in enumerate(actors) if a.role == "sender"]
    sensing = [ego_i] + senders
    perceivable = [i for i, a in enumerate(actors) if a.role != "obstacle"]
    station_of = {actors[i].station_id: i for i in senders}
    obstacles = obstacles_of(cfg)

    noise = NoiseBound(process=cfg.noise.process, measurement=cfg.noise.local, step=cfg.dt)
    engine = AwarenessEngine(
        noise=noise,
        max_generators=cfg.generator_budget,
        gate=cfg.awareness.gate,
        retire_after=cfg.awareness.retire_after,
        initial_radii=cfg.initial_radii.model_dump(),
    )
    msg_log = (out / "messages.ndjson").open("w") if out else None
    scene_log = (out / "scenes.ndjson").open("w") if out else None
    ch = cfg.channel
    channel = V2XChannel(
        ChannelConfig(ch.drop_probability, ch.latency_min, ch.latency_max, ch.range, cfg.seed), log=msg_log
    )
    truth = _Truth(cfg)
    n_ticks = cfg.ticks
    truth_hist = np.zeros((n_ticks, len(actors), 3))
    head_hist = np.zeros((n_ticks, len(actors)))
    scenes, timeline = [], []
    cont = Containment()

    def truth_at(actor_i: int, t: float) -> np.ndarray:
        return truth_hist[round(t * cfg.tick_rate), actor_i]

    def check(z, x, what, t, who):
        if checked_sets is not None:
            checked_sets.append((what, z, x.copy()))
        ok = bool(zs.contains_points(z, x[None, :])[0])
        if not ok and len(cont.failures) < 20:
            cont.failures.append({"kind": what, "time": t, "track": who, "truth": x.tolist(), "set": zs.to_text(z)})
        return ok

    try:
        for k in range(n_ticks):
            ms = time_ms(k, cfg)
            t = ms / 1000.0
            truth_hist[k] = truth.x
            head_hist[k] = truth.theta
            poses = {i: truth.pose(i) for i in range(len(actors))}
            detections = {}
            local_meas = []
            for i in sensing:
                a = actors[i]
                sensor, fov = sensor_fov(a, poses[i])
                objs = [
                    TruthObject(j, poses[j], float(truth.x[j, 2]), actors[j].length, actors[j].width, actors[j].cls)
                    for j in perceivable
                    if j != i
                ]
                r = cfg.noise.local if i == ego_i else cfg.noise.external
                rng = np.random.default_rng([cfg.seed, PERCEPTION_STREAM, k, i])
                dets = synth_perceive(sensor, fov, objs, obstacles, r, rng, timestamp=t, source_id=a.id)
                detections[a.id] = sorted(ids[m.object_id] for m in dets)
                if i == ego_i:
                    local_meas = [measurement_to_global(m, sensor) for m in dets]
                else:
                    msg = cpm.build_cpm(
                        a.station_id, a.station_type, poses[i], truth.x[i, 2], a.ref_point_offset, dets, ms
                    )
                    channel.send(a.station_id, poses[i], ids[ego_i], poses[ego_i], msg, float(ms))

            updates = engine.ingest(LOCAL, local_meas)
            for d in channel.deliver_until(float(ms)):
                msg = cpm.decode(d.payload)
                updates += engine.ingest(msg.station_id, cpm.poc_to_measurements(msg))
            for u in updates:
                cont.corrected_checked += 1
                x = truth_at(u.measurement.object_id, u.measurement.timestamp)
                if not check(u.track.corrected_set, x, "corrected", u.measurement.timestamp, u.track.track_id):
                    cont.corrected_violations += 1

            engine.retire(t)
            scene = engine.scene(
                t, poses[ego_i], [sensor_fov(actors[i], poses[i])[1] for i in sensing], obstacles
            )
            by_id = {tr.track_id: tr for tr in scene.tracks}
            for rep in scene.reports:
                owners = {by_id[m].object_id for m in rep.member_track_ids}
                if len(owners) != 1 or None in owners:
                    cont.mixed_groups += 1
                    continue
                cont.fused_checked += 1
                if not check(rep.fused_set, truth_at(owners.pop(), t), "fused", t, rep.group_id):
                    cont.fused_violations += 1

            timeline.append(
                TickRecord(
                    tick=k,
                    time=t,
                    detections=detections,
                    local_classes=sorted(tr.class_hint for tr in scene.by_provenance("local")),
                    scene_classes={
                        p: sorted(tr.class_hint for tr in scene.by_provenance(p)) for p in ("local", "external", "fused")
                    },
                )
            )
            if scene_log is not None:
                scene_log.write(json.dumps(scene_record(scene), separators=(",", ":")) + "\n")
            if keep_scenes:
                scenes.append(scene)
            if k + 1 < n_ticks:
                truth.advance(time_ms(k + 1, cfg) / 1000.0)
    finally:
        if msg_log:
            msg_log.close()
        if scene_log:
            scene_log.close()

    truth_map = truth_lookup(cfg, truth_hist)
    names = {actors[i].station_id: ids[i] for i in senders}
    rows, excluded = metrics(scenes, truth_map, gate=cfg.awareness.gate, source_names=names) if keep_scenes else ([], 0)
    result = RunResult(
        config=cfg,
        truth=truth_hist,
        headings=head_hist,
        scenes=scenes,
        timeline=timeline,
        containment=cont,
        metrics=rows,
        excluded=excluded,
        messages_sent=channel.sent,
        messages_dropped=channel.dropped,
        out_of_order=engine.out_of_order,
    )
    if out is not None:
        _write_artifacts(result, out)
    if self_check and (cont.corrected_violations or cont.fused_violations):
        raise ContainmentViolation(
            f"{cont.corrected_violations} corrected-set and {cont.fused_violations} fused-set containment violations"
        )
    return result


def truth_lookup(cfg: ScenarioConfig, truth_hist: np.ndarray) -> dict:
    """``{time_ms: {actor_id: (x, y, class)}}`` for every perceivable actor."""
    table = {}
    for k in range(truth_hist.shape[0]):
        table[time_ms(k, cfg)] = {
            a.id: (float(truth_hist[k, i, 0]), float(truth_hist[k, i, 1]), a.cls)
            for i, a in enumerate(cfg.actors)
            if a.role != "obstacle"
        }
    return table


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_artifacts(res: RunResult, out: Path):
    cfg = res.config
    (out / "config.yaml").write_text(dump_scenario(cfg))
    with (out / "truth.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_ms", "actor", "x", "y", "speed", "heading", "length", "width", "class"])
        for k in range(res.truth.shape[0]):
            for i, a in enumerate(cfg.actors):
                x, y, s = res.truth[k, i]
                w.writerow([time_ms(k, cfg), a.id, repr(float(x)), repr(float(y)), repr(float(s)), repr(float(res.headings[k, i])), a.length, a.width, a.cls])
    with (out / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["actor", "provenance", "source", "samples", "rmse_m", "mean_area_m2"])
        for r in res.metrics:
            w.writerow([r["actor"], r["provenance"], r["source"], r["samples"], f"{r['rmse_m']:.6f}", f"{r['mean_area_m2']:.6f}"])
    c = res.containment
    summary = {
        "ticks": len(res.timeline),
        "messagesSent": res.messages_sent,
        "messagesDropped": res.messages_dropped,
        "outOfOrder": res.out_of_order,
        "metricsExcluded": res.excluded,
        "containment": {
            "correctedChecked": c.corrected_checked,
            "correctedViolations": c.corrected_violations,
            "fusedChecked": c.fused_checked,
            "fusedViolations": c.fused_violations,
            "mixedGroups": c.mixed_groups,
            "failures": c.failures,
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files = ["config.yaml", "truth.csv", "messages.ndjson", "scenes.ndjson", "metrics.csv", "summary.json"]
    manifest = {
        "scenario": cfg.name,
        "seed": cfg.seed,
        "configSha256": _sha256(out / "config.yaml"),
        "versions": {
            "ssaware": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "files": {name: _sha256(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    res.files = {name: out / name for name in files + ["manifest.json"]}
