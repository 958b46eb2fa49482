import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ssaware import awareness as aw
from ssaware import cpm
from ssaware import zonoset as zs
from ssaware.channel import ChannelConfig, V2XChannel
from ssaware.estimator import Measurement, NoiseBound, RoadUserTrack, state_matrix
from ssaware.frames import FovSector, Obstacle, Pose2D, TruthObject, global_to_local, synth_perceive
from ssaware.zonoset import Zonotope

R_LOCAL = (0.3, 0.3, 0.2)


def meas(y, t, object_id=None, cls="pedestrian", r=R_LOCAL, heading=0.0):
    return Measurement(y, heading, r, t, object_id=object_id, class_hint=cls)


def track(tid, c, radii=(1, 1, 1), prov="local", source="local", t=0.0, cls="pedestrian"):
    return RoadUserTrack(tid, Zonotope(c, np.diag(radii)), 0.0, t, prov, source, cls)


def test_first_measurement_initialises_then_steps():
    eng = aw.AwarenessEngine()
    up = eng.ingest(aw.LOCAL, [meas([0, 0, 1], 0.0)])
    assert up[0].initialised and up[0].track.track_id == "local/0"
    for k in range(1, 11):
        (u,) = eng.ingest(aw.LOCAL, [meas([0.1 * k, 0, 1], round(0.1 * k, 10))])
        assert not u.initialised and u.track.track_id == "local/0"
    assert eng.tables[aw.LOCAL]["local/0"].updates == 11


def test_local_gating_separates_objects_and_classes():
    eng = aw.AwarenessEngine()
    eng.ingest(aw.LOCAL, [meas([0, 0, 0], 0.0), meas([10, 0, 0], 0.0), meas([0.5, 0, 0], 0.0, cls="vehicle")])
    assert sorted(eng.tables[aw.LOCAL]) == ["local/0", "local/1", "local/2"]
    ups = eng.ingest(aw.LOCAL, [meas([10.2, 0, 0], 0.1), meas([0.1, 0, 0], 0.1)])
    assert [u.track.track_id for u in ups] == ["local/1", "local/0"]


def test_external_identity_follows_sender_object_id():
    eng = aw.AwarenessEngine()
    eng.ingest(7, [meas([0, 0, 0], 0.0, object_id=3)])
    eng.ingest(7, [meas([50, 0, 0], 0.1, object_id=3)])
    assert list(eng.tables[7]) == ["7/3"]
    assert eng.tables[7]["7/3"].provenance == "external"


def test_out_of_order_is_dropped_and_counted():
    eng = aw.AwarenessEngine()
    eng.ingest(7, [meas([0, 0, 0], 1.0, object_id=1)])
    before = eng.tables[7]["7/1"]
    assert eng.ingest(7, [meas([0, 0, 0], 0.5, object_id=1)]) == []
    assert eng.out_of_order == 1 and eng.tables[7]["7/1"] is before


def test_retire_drops_stale_tracks():
    eng = aw.AwarenessEngine(retire_after=2.0)
    eng.ingest(aw.LOCAL, [meas([0, 0, 0], 0.0)])
    assert eng.retire(2.0) == 0
    assert eng.retire(2.05) == 1 and eng.tables[aw.LOCAL] == {}


def test_containment_with_lossy_channel():
    """A sender's external stream over a 30 % lossy link keeps the truth in every set."""
    rng = np.random.default_rng(21)
    noise = NoiseBound()
    eng = aw.AwarenessEngine(noise=noise)
    channel = V2XChannel(ChannelConfig(drop_probability=0.3, seed=4))
    sender = Pose2D(20, -5, 2.0)
    receiver = Pose2D(0, 0, 0)
    fov = FovSector(sender, 100, math.pi)
    thetas = [0.3, -1.2, 2.5]
    X = np.array([[5.0, 3.0, 1.0], [10.0, -2.0, 0.5], [0.0, 8.0, 1.5]])
    history = {}
    checked = 0
    for k in range(300):
        if k:
            for i, th in enumerate(thetas):
                X[i] = state_matrix(th, 0.1) @ X[i] + rng.uniform(-1, 1, 3) * noise.process
        history[k * 100] = X.copy()
        truth = [TruthObject(i, Pose2D(X[i, 0], X[i, 1], th), X[i, 2], 1, 1, "pedestrian") for i, th in enumerate(thetas)]
        dets = synth_perceive(sender, fov, truth, [], (0.5, 0.5, 0.3), rng, k * 0.1, 9)
        channel.send(9, sender, "ev", receiver, cpm.build_cpm(9, "vehicle", sender, 0.0, (0, 0), dets, k * 100), k * 100.0)
        for d in channel.deliver_until(k * 100.0):
            for u in eng.ingest(9, cpm.poc_to_measurements(cpm.decode(d.payload))):
                x = history[round(u.track.last_update * 1000)][u.track.object_id]
                z = u.track.corrected_set
                assert oracles.lp_member(z.c, z.G, x)
                checked += 1
    assert channel.dropped > 60 and checked > 500


def test_associate_examples():
    a = track("a", [0, 0, 0])
    b = track("b", [10, 0, 0])
    assert aw.associate([a, b]) == [["a"], ["b"]]
    chain = [track("a", [0, 0, 0]), track("b", [1.8, 0, 0]), track("c", [3.6, 0, 0])]
    assert not zs.intersects(chain[0].corrected_set.project(), chain[2].corrected_set.project())
    assert aw.associate(chain) == [["a", "b", "c"]]


def test_associate_ignores_speed():
    a = track("a", [0, 0, 0])
    b = track("b", [0.5, 0, 9])
    assert aw.associate([a, b]) == [["a", "b"]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_associate_is_order_independent(seed):
    rng = np.random.default_rng(seed)
    tracks = [track(f"t{i}", [*rng.uniform(-6, 6, 2), 0], rng.uniform(0.2, 1.5, 3)) for i in range(8)]
    groups = aw.associate(tracks)
    shuffled = list(tracks)
    random.Random(seed).shuffle(shuffled)
    assert aw.associate(shuffled) == groups
    ids = [tid for g in groups for tid in g]
    assert sorted(ids) == sorted(t.track_id for t in tracks)


def test_three_sources_see_one_pedestrian():
    rng = np.random.default_rng(0)
    ped = np.array([5.0, 6.0, 0.5])
    tracks = []
    for src, r in (("local", R_LOCAL), (2, (0.5, 0.5, 0.3)), (3, (0.5, 0.5, 0.3))):
        m = meas(ped + rng.uniform(-1, 1, 3) * r, 0.0, r=r)
        eng = aw.AwarenessEngine()
        eng.ingest(src, [m])
        tracks.extend(eng.tables[src].values())
    tracks.append(track("car", [20, 0, 0], (2, 2, 1), cls="vehicle"))
    groups = aw.associate(tracks)
    assert sorted(len(g) for g in groups) == [1, 3]


def test_fuse_group_examples():
    a = track("a", [1, 2, 3])
    rep = aw.fuse_group([a, a])
    assert rep.weights == (0.5, 0.5)
    assert rep.fused_set == Zonotope(a.corrected_set.c, np.hstack([a.corrected_set.G / 2] * 2))
    assert rep.area == pytest.approx(zs.area_2d(a.corrected_set))
    b = track("b", [1, 0, 0])
    c = track("c", [0, 0, 0])
    rep = aw.fuse_group([c, b])
    assert rep.fused_set.c.tolist() == [0.5, 0, 0]
    assert zs.interval_hull(rep.fused_set)[1].tolist() == [1, 1, 1]
    assert sum(rep.weights) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        aw.fuse_group([a])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fused_set_keeps_truth_when_members_do(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=3)
    members = []
    for i in range(3):
        G = rng.normal(scale=0.5, size=(3, 5))
        c = x - G @ rng.uniform(-1, 1, 5)
        members.append(RoadUserTrack(f"m{i}", Zonotope(c, G), 0.0, 0.0))
    rep = aw.fuse_group(members)
    assert oracles.lp_member(rep.fused_set.c, rep.fused_set.G, x)


def engine_with(sources):
    eng = aw.AwarenessEngine()
    local_rng, remote_rng = np.random.default_rng(1), np.random.default_rng(2)
    for k in range(20):
        t = round(0.1 * k, 10)
        y = np.array([5 + 0.05 * k, 6, 0.5])
        if "local" in sources:
            eng.ingest(aw.LOCAL, [meas(y + local_rng.uniform(-1, 1, 3) * R_LOCAL, t)])
        if 2 in sources:
            noisy = y + remote_rng.uniform(-1, 1, 3) * np.array([0.5, 0.5, 0.3])
            eng.ingest(2, [meas(noisy, t, object_id=4, r=(0.5, 0.5, 0.3))])
    return eng


def test_scene_without_external_sources_is_local_view():
    eng = engine_with({"local"})
    scene = eng.scene(1.9, Pose2D(0, 0))
    assert scene.associations == [] and scene.reports == []
    assert [t.track_id for t in scene.tracks] == list(eng.tables[aw.LOCAL])


def test_scene_fuses_and_partitions():
    eng = engine_with({"local", 2})
    scene = eng.scene(1.9, Pose2D(0, 0, 0.3), [FovSector(Pose2D(0, 0), 10, 1.0)], [Obstacle(0, 4.5, 6, 2.2)])
    fused = scene.by_provenance("fused")
    assert len(fused) == 1 and scene.associations == [["2/4", "local/0"]]
    ids = [tid for g in scene.associations for tid in g]
    assert len(ids) == len(set(ids))
    rep = scene.reports[0]
    assert rep.center_ev == pytest.approx(global_to_local(Pose2D(0, 0, 0.3), rep.fused_set.c[:2]))


def test_removing_a_source_leaves_others_unchanged():
    both = engine_with({"local", 2})
    alone = engine_with({"local"})
    assert set(alone.tables) == {aw.LOCAL}
    assert alone.tables[aw.LOCAL] == both.tables[aw.LOCAL]


def test_scene_record_round_trip():
    eng = engine_with({"local", 2})
    scene = eng.scene(1.9, Pose2D(1, 2, 0.3), [FovSector(Pose2D(0, 0), 10, 1.0)], [Obstacle(0, 4.5, 6, 2.2)])
    rec = json.loads(json.dumps(aw.scene_record(scene)))
    back = aw.scene_from_record(rec)
    assert [t.corrected_set for t in back.tracks] == [t.corrected_set for t in scene.tracks]
    assert back.associations == scene.associations
    assert rec["fusion"][0]["members"] == ["2/4", "local/0"]
    assert set(rec["tracks"][0]) == {
        "trackId", "source", "provenance", "class", "heading", "lastUpdate", "footprint", "set", "centerEv", "area",
    }


def test_metrics_examples():
    scene = aw.SceneMap(0.0, Pose2D(0, 0), [track("a", [3, 4, 0])])
    rows, excluded = aw.metrics([scene], {0: {"ped": (0.0, 0.0, "pedestrian")}}, gate=10)
    assert rows[0]["rmse_m"] == 5.0 and rows[0]["samples"] == 1 and excluded == 0
    assert rows[0]["mean_area_m2"] == 4.0
    exact = aw.SceneMap(0.0, Pose2D(0, 0), [track("a", [1, 2, 0])])
    rows, _ = aw.metrics([exact, exact], {0: {"ped": (1.0, 2.0, "pedestrian")}})
    assert rows[0]["rmse_m"] == 0.0 and rows[0]["samples"] == 1
    rows, excluded = aw.metrics([scene], {})
    assert rows == [] and excluded == 1
