import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ssaware import cpm, wirefuzz
from ssaware.cpm import CpmMessage, EstimateShare, PerceivedObject
from ssaware.frames import FovSector, Pose2D, TruthObject, reference_offset, synth_perceive
from ssaware.zonoset import Zonotope

GOLDEN = Path(__file__).parent / "golden"


def golden(name) -> bytes:
    return bytes.fromhex((GOLDEN / name).read_text().strip())


def one_object_message():
    return CpmMessage(
        station_id=2,
        station_type="vehicle",
        reference_position=(40.0, -4.0),
        heading=math.pi,
        speed=0.8,
        ref_point_offset=(2.5, 0.0),
        perceived_objects=(PerceivedObject(4, 37.5, -10.0, 0.5, math.pi / 2, 0.5, 0.5, (0.5, 0.5, 0.3), "pedestrian"),),
        generation_time=12300,
    )


def test_golden_one_object_cpm():
    msg = one_object_message()
    data = golden("cpm_one_object.hex")
    independent = oracles.pack_cpm(
        2, 0, (40.0, -4.0), math.pi, 0.8, (2.5, 0.0),
        [dict(id=4, x=37.5, y=-10.0, speed=0.5, theta=math.pi / 2, length=0.5, width=0.5, r=(0.5, 0.5, 0.3), class_code=1)],
        12300,
    )
    assert independent == data
    assert cpm.encode(msg) == data
    assert cpm.decode(data) == msg


def test_golden_empty_cpm_has_fixed_size():
    msg = CpmMessage(3, "rsu", (12.0, 12.0), -math.pi / 2, 0.0, (0.0, 0.0), (), 0)
    data = golden("cpm_empty.hex")
    assert cpm.encode(msg) == data
    assert oracles.pack_cpm(3, 1, (12.0, 12.0), -math.pi / 2, 0.0, (0.0, 0.0), [], 0) == data
    assert len(data) == 68
    assert len(cpm.encode(one_object_message())) == 68 + 75


def test_golden_estimate_share():
    share = EstimateShare(3, 7, (5.0, 6.0, 0.5), ((1.0, 0.0, 0.25), (0.0, 1.0, -0.25), (0.0, 0.0, 0.8)), -math.pi / 2, 4500)
    data = golden("est_share.hex")
    assert oracles.pack_est(3, 7, share.center, share.generators, share.heading, 4500) == data
    assert cpm.encode(share) == data
    assert cpm.decode(data) == share
    z = share.zonotope()
    assert EstimateShare.from_zonotope(3, 7, z, share.heading, 4500) == share


def test_decode_errors_are_distinct():
    data = cpm.encode(one_object_message())
    with pytest.raises(cpm.TruncatedError):
        cpm.decode(data[:-1])
    with pytest.raises(cpm.TruncatedError):
        cpm.decode(b"CP")
    with pytest.raises(cpm.FormatError):
        cpm.decode(b"XPM1" + data[4:])
    with pytest.raises(cpm.VersionError):
        cpm.decode(data[:4] + b"\x02" + data[5:])
    with pytest.raises(cpm.LengthOverrunError):
        cpm.decode(data + b"\x00")
    overrun = bytearray(data)
    overrun[58:60] = (500).to_bytes(2, "little")
    with pytest.raises(cpm.LengthOverrunError):
        cpm.decode(bytes(overrun))
    kinds = {cpm.FormatError, cpm.VersionError, cpm.TruncatedError, cpm.LengthOverrunError}
    assert len(kinds) == 4 and all(issubclass(k, cpm.WireError) for k in kinds)


def test_encode_rejects_invalid_messages():
    base = one_object_message()
    obj = base.perceived_objects[0]
    with pytest.raises(cpm.LengthOverrunError):
        cpm.encode(CpmMessage(1, "vehicle", (0, 0), 0, 0, (0, 0), (obj,) * 129, 0))
    cpm.encode(CpmMessage(1, "vehicle", (0, 0), 0, 0, (0, 0), (obj,) * 128, 0))
    bad = [
        CpmMessage(2**32, "vehicle", (0, 0), 0, 0),
        CpmMessage(1, "bus", (0, 0), 0, 0),
        CpmMessage(1, "vehicle", (math.nan, 0), 0, 0),
        CpmMessage(1, "vehicle", (0, 0), 0, 0, generation_time=-1),
        CpmMessage(1, "vehicle", (0, 0), 0, 0, perceived_objects=(PerceivedObject(1, 0, 0, 0, 0, 1, 1, (-0.1, 0, 0)),)),
        CpmMessage(1, "vehicle", (0, 0), 0, 0, perceived_objects=(PerceivedObject(70000, 0, 0, 0, 0, 1, 1),)),
    ]
    for msg in bad:
        with pytest.raises(cpm.WireError):
            cpm.encode(msg)
    with pytest.raises(cpm.WireError):
        cpm.encode(EstimateShare(1, 1, (0.0, 0.0), ((1.0,), (1.0, 2.0)), 0.0, 0))
    with pytest.raises(TypeError):
        cpm.encode("not a message")


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_round_trip_random_messages(seed):
    msg = wirefuzz.random_message(np.random.default_rng(seed))
    assert cpm.decode(cpm.encode(msg)) == msg


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_encoding_is_injective(seed):
    rng = np.random.default_rng(seed)
    a, b = wirefuzz.random_message(rng), wirefuzz.random_message(rng)
    assert (cpm.encode(a) == cpm.encode(b)) == (a == b)
    # a single-field change always shows up in the bytes
    c = wirefuzz.random_cpm(rng)
    d = CpmMessage(**{**c.__dict__, "speed": c.speed + 1.0})
    assert cpm.encode(c) != cpm.encode(d)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=300))
def test_decode_never_crashes_on_arbitrary_bytes(data):
    try:
        cpm.decode(data)
    except cpm.WireError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_decode_never_crashes_on_mutations(seed):
    rng = np.random.default_rng(seed)
    data = wirefuzz.mutate(cpm.encode(wirefuzz.random_message(rng)), rng)
    try:
        cpm.decode(data)
    except cpm.WireError:
        pass


def test_fuzz_harness_reports_no_mismatch():
    stats = wirefuzz.fuzz(2000, seed=3)
    assert stats["roundtrip_mismatches"] == 0
    assert stats["decoded"] + sum(stats["rejected"].values()) == 2000


def test_poc_examples():
    obj = PerceivedObject(1, 10.0, 0.0, 2.0, 0.0, 4, 2, (0.5, 0.5, 0.3), "vehicle")
    m = cpm.poc_to_measurements(CpmMessage(1, "vehicle", (0, 0), 0.0, 0, (0, 0), (obj,), 2500))[0]
    assert m.y.tolist() == [10.0, 0.0, 2.0]
    assert m.timestamp == 2.5 and m.source_id == 1 and m.object_id == 1
    m = cpm.poc_to_measurements(CpmMessage(1, "vehicle", (3, 4), math.pi / 2, 0, (0, 0), (obj,), 0))[0]
    assert m.y[:2] == pytest.approx([3, 14], abs=1e-9)
    assert m.heading == pytest.approx(math.pi / 2)
    assert m.half_widths.tolist() == [0.5, 0.5, 0.3]


def test_synthetic_loop_recovers_truth_within_r():
    rng = np.random.default_rng(8)
    r = np.array([0.5, 0.5, 0.3])
    for trial in range(50):
        body = Pose2D(*rng.uniform(-50, 50, 2), rng.uniform(-math.pi, math.pi))
        offset = tuple(rng.uniform(-3, 3, 2))
        sensor = reference_offset(body, offset)
        truth = [
            TruthObject(i, Pose2D(*(np.array(sensor.position) + rng.uniform(-30, 30, 2)), rng.uniform(-3, 3)), rng.uniform(0, 5), 4, 2)
            for i in range(4)
        ]
        dets = synth_perceive(sensor, FovSector(sensor, 100, math.pi), truth, [], r, rng)
        msg = cpm.decode(cpm.encode(cpm.build_cpm(2, "vehicle", body, 1.0, offset, dets, 100 * trial)))
        for m, obj in zip(cpm.poc_to_measurements(msg), truth):
            assert m.object_id == obj.actor_id
            # the error box lives in the sensor axes
            err = m.rows() @ (m.y - np.array([*obj.pose.position, obj.speed]))
            assert np.all(np.abs(err) <= r + 1e-9)
            assert m.heading == pytest.approx(obj.pose.heading, abs=1e-9) or abs(abs(m.heading - obj.pose.heading) - 2 * math.pi) < 1e-9


def test_estimate_share_round_trip_preserves_zonotope():
    z = Zonotope([1, 2, 3], np.random.default_rng(0).normal(size=(3, 7)))
    share = EstimateShare.from_zonotope(5, 9, z, 0.2, 100)
    assert cpm.decode(cpm.encode(share)).zonotope() == z
