import json
from pathlib import Path

import pytest

from deskgrid.cluster import wire

GOLDEN = json.loads((Path(__file__).parent / "golden" / "wire_golden.json").read_text())


@pytest.mark.parametrize("sample", GOLDEN, ids=lambda s: s["name"])
def test_golden_encodings_are_stable(sample):
    msg = wire.WireMessage(variant=sample["variant"],
                           correlation_id=sample["correlation_id"],
                           sender_id=sample["sender_id"],
                           payload=sample["payload"])
    assert wire.encode(msg).hex() == sample["hex"]


@pytest.mark.parametrize("sample", GOLDEN, ids=lambda s: s["name"])
def test_golden_decodes(sample):
    blob = bytes.fromhex(sample["hex"])
    decoded = wire.decode_body(blob[4:])
    assert decoded.variant == sample["variant"]
    assert decoded.correlation_id == sample["correlation_id"]
    assert decoded.payload == sample["payload"]
    assert decoded.proto_version == wire.PROTO_VERSION


def test_every_request_has_exactly_one_reply():
    assert wire.REQUEST_REPLY == {
        "Register": "Ack", "Heartbeat": "Ack", "Allocate": "Allocated",
        "Step": "StepResult", "Reset": "Ack", "Release": "Ack",
        "StatusQuery": "StatusReport",
    }


def test_correlation_id_round_trips_through_reply():
    req = wire.WireMessage("Allocate", "corr-77", "client", {"task_id": "t"})
    rep = req.reply("Allocated", "controller", {"session_id": "s"})
    assert rep.correlation_id == "corr-77"
    err = req.error("controller", "NoCapacity")
    assert err.correlation_id == "corr-77"
    assert err.payload["code"] == "NoCapacity"


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        wire.encode(wire.WireMessage("Explode", "c", "s", {}))
    body = json.dumps({"proto_version": 1, "variant": "Explode",
                       "correlation_id": "c", "sender_id": "s",
                       "payload": {}}).encode()
    with pytest.raises(ValueError):
        wire.decode_body(body)


def test_version_mismatch_rejected():
    body = json.dumps({"proto_version": 0, "variant": "Ack",
                       "correlation_id": "c", "sender_id": "s",
                       "payload": {}}).encode()
    with pytest.raises(ValueError):
        wire.decode_body(body)
