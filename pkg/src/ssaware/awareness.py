"""The ego vehicle's shared situational awareness.

Each source (the ego's own perception, or a remote station) keeps its own
table of filtered tracks. A scene is built by aligning every track to the
scene time, grouping tracks whose position sets intersect, and fusing each
group of two or more into one set. Fused sets are outputs only; they are
never fed back into the per-source filters.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import zonoset as zs
from .estimator import (
    INITIAL_RADII,
    Measurement,
    NoiseBound,
    OutOfOrderMeasurement,
    RoadUserTrack,
    init_track,
    propagate,
    step_track,
)
from .frames import FovSector, Obstacle, Pose2D, global_to_local
from .zonoset import Zonotope

LOCAL = "local"
DEFAULT_GATE = 3.0
DEFAULT_RETIRE_AFTER = 2.0


@dataclass(frozen=True)
class TrackUpdate:
    source: object
    track: RoadUserTrack
    measurement: Measurement
    initialised: bool


@dataclass(frozen=True)
class FusionReport:
    group_id: str
    member_track_ids: tuple
    weights: tuple
    fused_set: Zonotope
    area: float
    center_ev: tuple


@dataclass
class SceneMap:
    time: float
    ego_pose: Pose2D
    tracks: list  # per-source tracks as last corrected, followed by fused tracks
    fovs: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    associations: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def by_provenance(self, provenance: str) -> list:
        return [t for t in self.tracks if t.provenance == provenance]


def _source_key(source):
    return (0, "") if source == LOCAL else (1, str(source))


class AwarenessEngine:
    """Track tables per source plus the scene-building pipeline."""

    def __init__(
        self,
        noise: NoiseBound | None = None,
        max_generators: int = zs.DEFAULT_MAX_GENERATORS,
        gate: float = DEFAULT_GATE,
        retire_after: float = DEFAULT_RETIRE_AFTER,
        initial_radii: dict | None = None,
    ):
        self.noise = noise or NoiseBound()
        self.max_generators = max_generators
        self.gate = gate
        self.retire_after = retire_after
        self.initial_radii = dict(INITIAL_RADII if initial_radii is None else initial_radii)
        self.tables: dict = {}
        self.out_of_order = 0
        self._next_local = 0

    def _radii(self, m: Measurement):
        radii = np.asarray(self.initial_radii.get(m.class_hint, self.initial_radii["unknown"]), dtype=float)
        return np.maximum(radii, m.half_widths)

    def _gate_local(self, table: dict, m: Measurement, taken: set):
        best, best_d = None, self.gate
        for tid, tr in table.items():
            if tid in taken or tr.class_hint != m.class_hint:
                continue
            c = tr.corrected_set.c
            dt = max(m.timestamp - tr.last_update, 0.0)
            px = c[0] + dt * c[2] * math.cos(tr.heading)
            py = c[1] + dt * c[2] * math.sin(tr.heading)
            d = math.hypot(px - m.y[0], py - m.y[1])
            if d <= best_d:
                best, best_d = tid, d
        return best

    def ingest(self, source, measurements) -> list[TrackUpdate]:
        """Run one filter step per measurement of ``source``.

        Remote sources keep their sender's object ids; the local source
        associates by nearest-neighbour gating on position and class.
        """
        table = self.tables.setdefault(source, {})
        provenance = "local" if source == LOCAL else "external"
        updates = []
        taken = set()
        for m in measurements:
            if source == LOCAL:
                tid = self._gate_local(table, m, taken)
                if tid is None:
                    tid = f"{LOCAL}/{self._next_local}"
                    self._next_local += 1
            else:
                tid = f"{source}/{m.object_id}"
            taken.add(tid)
            track = table.get(tid)
            if track is None:
                track = init_track(m, self._radii(m), track_id=tid, provenance=provenance)
                initialised = True
            else:
                try:
                    track = step_track(track, m, self.noise, self.max_generators)
                except OutOfOrderMeasurement:
                    self.out_of_order += 1
                    continue
                initialised = False
            table[tid] = track
            updates.append(TrackUpdate(source, track, m, initialised))
        return updates

    def ingest_share(self, share) -> RoadUserTrack:
        """Adopt a remotely estimated set directly as an external track."""
        table = self.tables.setdefault(share.station_id, {})
        tid = f"{share.station_id}/est{share.track_id}"
        t = share.generation_time / 1000.0
        old = table.get(tid)
        if old is not None and t < old.last_update:
            self.out_of_order += 1
            return old
        track = RoadUserTrack(
            track_id=tid,
            corrected_set=zs.reduce_order(share.zonotope(), self.max_generators),
            heading=share.heading,
            last_update=t,
            provenance="external",
            source=share.station_id,
        )
        table[tid] = track
        return track

    def retire(self, now: float) -> int:
        dropped = 0
        for table in self.tables.values():
            for tid in [tid for tid, tr in table.items() if now - tr.last_update > self.retire_after]:
                del table[tid]
                dropped += 1
        return dropped

    def snapshot(self) -> dict:
        return {src: dict(table) for src, table in sorted(self.tables.items(), key=lambda kv: _source_key(kv[0]))}

    def scene(self, now: float, ego_pose: Pose2D, fovs=(), obstacles=()) -> SceneMap:
        return build_scene(now, ego_pose, self.snapshot(), self.noise, fovs, obstacles)


def associate(tracks) -> list[list]:
    """Connected components of the position-set intersection graph.

    Returns groups of track ids, each sorted, ordered by their first member.
    """
    tracks = sorted(tracks, key=lambda t: t.track_id)
    n = len(tracks)
    proj = [t.corrected_set.project((0, 1)) for t in tracks]
    rows, cols = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if zs.intersects(proj[i], proj[j]):
                rows.append(i)
                cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    groups = defaultdict(list)
    for t, lab in zip(tracks, labels):
        groups[lab].append(t.track_id)
    return sorted(groups.values())


def fuse_group(group, ego_pose: Pose2D | None = None) -> FusionReport:
    group = list(group)
    if len(group) < 2:
        raise ValueError("fusion needs at least two member tracks")
    sets = [t.corrected_set for t in group]
    w = zs.optimal_weights(sets)
    fused = zs.fuse(sets, w)
    ids = tuple(t.track_id for t in group)
    center_ev = (
        global_to_local(ego_pose, fused.c[:2]) if ego_pose is not None else (float(fused.c[0]), float(fused.c[1]))
    )
    return FusionReport(
        group_id="+".join(ids),
        member_track_ids=ids,
        weights=tuple(float(v) for v in w),
        fused_set=fused,
        area=zs.area_2d(fused),
        center_ev=tuple(float(v) for v in center_ev),
    )


def align(track: RoadUserTrack, now: float, noise: NoiseBound) -> RoadUserTrack:
    """Track predicted forward to ``now`` (unchanged if already current)."""
    dt = now - track.last_update
    if dt <= 0:
        return track
    return replace(track, corrected_set=propagate(track.corrected_set, track.heading, dt, noise), last_update=now)


def build_scene(now, ego_pose: Pose2D, track_tables: dict, noise: NoiseBound, fovs=(), obstacles=()) -> SceneMap:
    source_tracks = [
        tr
        for _, table in sorted(track_tables.items(), key=lambda kv: _source_key(kv[0]))
        for _, tr in sorted(table.items())
    ]
    aligned = {tr.track_id: align(tr, now, noise) for tr in source_tracks}
    groups = [g for g in associate(aligned.values()) if len(g) >= 2]
    fused_tracks, reports = [], []
    for g in groups:
        members = [aligned[tid] for tid in g]
        report = fuse_group(members, ego_pose)
        reports.append(report)
        lead = max(members, key=lambda t: (t.last_update, t.track_id))
        fused_tracks.append(
            RoadUserTrack(
                track_id=f"fused/{report.group_id}",
                corrected_set=report.fused_set,
                heading=lead.heading,
                last_update=now,
                provenance="fused",
                source="fused",
                class_hint=lead.class_hint,
                length=lead.length,
                width=lead.width,
            )
        )
    return SceneMap(
        time=now,
        ego_pose=ego_pose,
        tracks=source_tracks + fused_tracks,
        fovs=list(fovs),
        obstacles=list(obstacles),
        associations=[list(g) for g in groups],
        reports=reports,
    )


def _zono_record(z: Zonotope) -> dict:
    return {"center": z.c.tolist(), "generators": z.G.tolist()}


def scene_record(scene: SceneMap) -> dict:
    """JSON-ready record of one scene (one line of ``scenes.ndjson``)."""
    ego = scene.ego_pose
    return {
        "time": scene.time,
        "egoPose": [ego.x, ego.y, ego.heading],
        "tracks": [
            {
                "trackId": t.track_id,
                "source": t.source if isinstance(t.source, str) else int(t.source),
                "provenance": t.provenance,
                "class": t.class_hint,
                "heading": t.heading,
                "lastUpdate": t.last_update,
                "footprint": [t.length, t.width],
                "set": _zono_record(t.corrected_set),
                "centerEv": list(global_to_local(ego, t.corrected_set.c[:2])),
                "area": zs.area_2d(t.corrected_set),
            }
            for t in scene.tracks
        ],
        "associations": scene.associations,
        "fusion": [
            {
                "groupId": r.group_id,
                "members": list(r.member_track_ids),
                "weights": list(r.weights),
                "set": _zono_record(r.fused_set),
                "area": r.area,
                "centerEv": list(r.center_ev),
            }
            for r in scene.reports
        ],
        "fovs": [[f.origin.x, f.origin.y, f.origin.heading, f.range, f.half_angle] for f in scene.fovs],
        "obstacles": [[o.x, o.y, o.length, o.width, o.heading] for o in scene.obstacles],
    }


def scene_from_record(rec: dict) -> SceneMap:
    tracks = [
        RoadUserTrack(
            track_id=t["trackId"],
            corrected_set=Zonotope(t["set"]["center"], np.array(t["set"]["generators"]).reshape(3, -1)),
            heading=t["heading"],
            last_update=t["lastUpdate"],
            provenance=t["provenance"],
            source=t["source"],
            class_hint=t["class"],
            length=t["footprint"][0],
            width=t["footprint"][1],
        )
        for t in rec["tracks"]
    ]
    return SceneMap(
        time=rec["time"],
        ego_pose=Pose2D(*rec["egoPose"]),
        tracks=tracks,
        fovs=[FovSector(Pose2D(*f[:3]), f[3], f[4]) for f in rec["fovs"]],
        obstacles=[Obstacle(*o) for o in rec["obstacles"]],
        associations=rec["associations"],
    )


METRIC_COLUMNS = ("actor", "provenance", "source", "samples", "rmse_m", "mean_area_m2")


def metrics(scenes, truth, gate: float = DEFAULT_GATE, source_names: dict | None = None):
    """RMSE of set centers and mean set area per actor and provenance.

    ``truth`` maps a time in integer milliseconds to ``{actor: (x, y, class)}``.
    Each track sample is compared with the truth at its own update time (fused
    sets at the scene time) and attributed to the nearest actor of the same
    class within ``gate`` meters; samples with no such actor are excluded and
    counted. Returns ``(rows, excluded)``.
    """
    names = source_names or {}
    seen = set()
    acc = defaultdict(lambda: [0, 0.0, 0.0])
    excluded = 0
    for scene in scenes:
        for t in scene.tracks:
            key = (t.track_id, t.last_update)
            if key in seen:
                continue
            seen.add(key)
            actors = truth.get(round(t.last_update * 1000))
            c = t.corrected_set.c
            best, best_d = None, gate
            for name, (x, y, cls) in (actors or {}).items():
                if cls != t.class_hint and t.class_hint != "unknown":
                    continue
                d = math.hypot(c[0] - x, c[1] - y)
                if d <= best_d:
                    best, best_d = name, d
            if best is None:
                excluded += 1
                continue
            src = "fused" if t.provenance == "fused" else names.get(t.source, str(t.source))
            slot = acc[(best, t.provenance, src)]
            slot[0] += 1
            slot[1] += best_d * best_d
            slot[2] += zs.area_2d(t.corrected_set)
    rows = []
    for (actor, prov, src), (n, sq, area) in sorted(acc.items()):
        rows.append(
            {
                "actor": actor,
                "provenance": prov,
                "source": src,
                "samples": n,
                "rmse_m": math.sqrt(sq / n),
                "mean_area_m2": area / n,
            }
        )
    return rows, excluded
