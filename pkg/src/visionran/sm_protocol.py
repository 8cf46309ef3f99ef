"""POS and VIS service-model messages, their JSON wire format, and the E2 message bus.

Every SM type carries integers only: positions in cm, velocities in cm/s,
angles in rad x 100, timestamps in microseconds.  Conversion from SI floats
happens in :func:`m_to_cm` / :func:`rad_to_q` and nowhere else.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

INT16 = (-(2**15), 2**15 - 1)
INT32 = (-(2**31), 2**31 - 1)
UINT32 = (0, 2**32 - 1)
INT64 = (-(2**63), 2**63 - 1)

THETA_MAX = 158  # round(100 * pi / 2)
PHI_MAX = 315  # round(100 * pi), magnitude

POS_IND = "POS_IND"
VIS_IND = "VIS_IND"
POS_CTRL = "POS_CTRL"
KINDS = (POS_IND, VIS_IND, POS_CTRL)


class SMError(ValueError):
    """Base class for wire-format errors."""


class MalformedMessage(SMError):
    """Payload is not parseable JSON."""


class SchemaViolation(SMError):
    """Missing/extra field, wrong type, or out-of-range value."""


class LengthMismatch(SMError):
    """``len`` disagrees with the number of entries."""


class UnknownSubscriber(KeyError):
    pass


# ---------------------------------------------------------------------------
# unit conversion

def _round_half_away(value: float, scale: int) -> int:
    # the float's shortest repr is taken as its decimal value, so 1.005 m -> 101 cm
    return int((Decimal(repr(float(value))) * scale).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def m_to_cm(value: float) -> int:
    return _round_half_away(value, 100)


def rad_to_q(angle: float) -> int:
    """Radians to the rad x 100 integer carried by the SMs."""
    return _round_half_away(angle, 100)


def cm_to_m(value: int) -> float:
    return value / 100.0


def q_to_rad(value: int) -> float:
    return value / 100.0


# ---------------------------------------------------------------------------
# message types

@dataclass(frozen=True)
class PosDataEntry:
    id: int
    x: int
    y: int
    z: int
    vx: int = 0
    vy: int = 0
    vz: int = 0
    theta: int = 0
    phi: int = 0


@dataclass(frozen=True)
class PosIndication:
    pos_stats: tuple[PosDataEntry, ...] = ()
    len: int | None = None
    tstamp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pos_stats", tuple(self.pos_stats))
        if self.len is None:
            object.__setattr__(self, "len", len(self.pos_stats))


@dataclass(frozen=True)
class PosControl:
    x: int
    y: int
    z: int
    tstamp: int = 0


@dataclass(frozen=True)
class VisDataEntry:
    id: int
    cls: int
    bbx: int
    bby: int
    bbw: int
    bbh: int
    theta: int
    phi: int
    r: int


@dataclass(frozen=True)
class VisIndication:
    vis_stats: tuple[VisDataEntry, ...] = ()
    len: int | None = None
    tstamp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vis_stats", tuple(self.vis_stats))
        if self.len is None:
            object.__setattr__(self, "len", len(self.vis_stats))


# wire field order, identical to the SM tables
POS_ENTRY_FIELDS = ("id", "x", "y", "z", "vx", "vy", "vz", "theta", "phi")
VIS_ENTRY_FIELDS = ("id", "cls", "bbx", "bby", "bbw", "bbh", "theta", "phi", "r")
POS_CTRL_FIELDS = ("x", "y", "z", "tstamp")

_POS_ENTRY_RANGES = {"id": INT16, "theta": (-THETA_MAX, THETA_MAX), "phi": (-PHI_MAX, PHI_MAX)}
_VIS_ENTRY_RANGES = {
    "id": INT16,
    "theta": (-THETA_MAX, THETA_MAX),
    "phi": (-PHI_MAX, PHI_MAX),
    "r": (0, INT32[1]),
    "bbw": (1, INT32[1]),
    "bbh": (1, INT32[1]),
}


def _check_int(name: str, value, bounds: tuple[int, int]) -> int:
    # bool is an int subclass; JSON true/false must not pass as integers
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{name}: expected integer, got {type(value).__name__}")
    lo, hi = bounds
    if not lo <= value <= hi:
        raise SchemaViolation(f"{name}={value} outside [{lo}, {hi}]")
    return value


def _check_entry(obj, fields: tuple[str, ...], ranges: dict) -> None:
    for name in fields:
        _check_int(name, getattr(obj, name), ranges.get(name, INT32))


def _check_keys(d, expected: tuple[str, ...], what: str) -> None:
    if not isinstance(d, dict):
        raise SchemaViolation(f"{what}: expected JSON object")
    keys = set(d)
    missing = [k for k in expected if k not in keys]
    extra = sorted(keys - set(expected))
    if missing or extra:
        raise SchemaViolation(f"{what}: missing={missing} extra={extra}")


def _dumps(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def _loads(payload: bytes):
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedMessage(str(exc)) from exc


def _indication_to_dict(entries, list_key, fields, ranges, length, tstamp) -> dict:
    for e in entries:
        _check_entry(e, fields, ranges)
    _check_int("len", length, UINT32)
    _check_int("tstamp", tstamp, INT64)
    if length != len(entries):
        raise LengthMismatch(f"len={length} but {len(entries)} entries")
    return {
        list_key: [{f: getattr(e, f) for f in fields} for e in entries],
        "len": length,
        "tstamp": tstamp,
    }


def _indication_from_bytes(payload, list_key, fields, ranges, entry_cls, msg_cls):
    d = _loads(payload)
    _check_keys(d, (list_key, "len", "tstamp"), msg_cls.__name__)
    raw = d[list_key]
    if not isinstance(raw, list):
        raise SchemaViolation(f"{list_key}: expected array")
    entries = []
    for item in raw:
        _check_keys(item, fields, entry_cls.__name__)
        for name in fields:
            _check_int(name, item[name], ranges.get(name, INT32))
        entries.append(entry_cls(**{f: item[f] for f in fields}))
    length = _check_int("len", d["len"], UINT32)
    tstamp = _check_int("tstamp", d["tstamp"], INT64)
    if length != len(entries):
        raise LengthMismatch(f"len={length} but {len(entries)} entries")
    return msg_cls(tuple(entries), length, tstamp)


def encode_pos_indication(msg: PosIndication) -> bytes:
    return _dumps(_indication_to_dict(
        msg.pos_stats, "pos_stats", POS_ENTRY_FIELDS, _POS_ENTRY_RANGES, msg.len, msg.tstamp))


def decode_pos_indication(payload: bytes) -> PosIndication:
    return _indication_from_bytes(
        payload, "pos_stats", POS_ENTRY_FIELDS, _POS_ENTRY_RANGES, PosDataEntry, PosIndication)


def encode_vis_indication(msg: VisIndication) -> bytes:
    return _dumps(_indication_to_dict(
        msg.vis_stats, "vis_stats", VIS_ENTRY_FIELDS, _VIS_ENTRY_RANGES, msg.len, msg.tstamp))


def decode_vis_indication(payload: bytes) -> VisIndication:
    return _indication_from_bytes(
        payload, "vis_stats", VIS_ENTRY_FIELDS, _VIS_ENTRY_RANGES, VisDataEntry, VisIndication)


def encode_pos_control(msg: PosControl) -> bytes:
    for name in ("x", "y", "z"):
        _check_int(name, getattr(msg, name), INT32)
    _check_int("tstamp", msg.tstamp, INT64)
    return _dumps({f: getattr(msg, f) for f in POS_CTRL_FIELDS})


def decode_pos_control(payload: bytes) -> PosControl:
    d = _loads(payload)
    _check_keys(d, POS_CTRL_FIELDS, "PosControl")
    for name in ("x", "y", "z"):
        _check_int(name, d[name], INT32)
    _check_int("tstamp", d["tstamp"], INT64)
    return PosControl(**d)


ENCODERS = {POS_IND: encode_pos_indication, VIS_IND: encode_vis_indication, POS_CTRL: encode_pos_control}
DECODERS = {POS_IND: decode_pos_indication, VIS_IND: decode_vis_indication, POS_CTRL: decode_pos_control}


def encode(kind: str, msg) -> bytes:
    return ENCODERS[kind](msg)


def decode(kind: str, payload: bytes):
    return DECODERS[kind](payload)


# ---------------------------------------------------------------------------
# bus

@dataclass(frozen=True)
class BusEnvelope:
    sender: str
    kind: str
    payload: bytes
    delivery_tick: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")


def envelope_to_line(env: BusEnvelope) -> str:
    """One newline-terminated JSON line, for a loopback stream transport."""
    return json.dumps(
        {"sender": env.sender, "kind": env.kind, "delivery_tick": env.delivery_tick,
         "payload": env.payload.decode("ascii")},
        separators=(",", ":"),
    ) + "\n"


def envelope_from_line(line: str) -> BusEnvelope:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(str(exc)) from exc
    _check_keys(d, ("sender", "kind", "delivery_tick", "payload"), "BusEnvelope")
    return BusEnvelope(d["sender"], d["kind"], d["payload"].encode("ascii"), d["delivery_tick"])


@dataclass
class _Subscription:
    kinds: frozenset
    pending: list = field(default_factory=list)  # (tick, sender, seq, envelope)


class MessageBus:
    """In-process stand-in for the E2 interface, driven by virtual ticks.

    A subscriber sees every envelope of its kinds published after it
    subscribed.  ``poll`` orders by (delivery tick, sender, send order).
    """

    def __init__(self):
        self.tick = 0
        self._seq = 0
        self._subs: dict[str, _Subscription] = {}
        self._lock = threading.Lock()

    def subscribe(self, name: str, kinds: Iterable[str] = KINDS) -> None:
        with self._lock:
            self._subs[name] = _Subscription(frozenset(kinds))

    def advance_to(self, tick: int) -> None:
        if tick < self.tick:
            raise ValueError("virtual time cannot go backwards")
        self.tick = tick

    def publish(self, env: BusEnvelope) -> int:
        """Queue ``env`` for every matching subscriber; returns its sequence number."""
        if env.delivery_tick < self.tick:
            raise ValueError(f"delivery_tick {env.delivery_tick} is in the past (now {self.tick})")
        with self._lock:
            seq = self._seq
            self._seq += 1
            for sub in self._subs.values():
                if env.kind in sub.kinds:
                    sub.pending.append((env.delivery_tick, env.sender, seq, env))
        return seq

    def poll(self, subscriber: str, up_to_tick: int) -> list[BusEnvelope]:
        with self._lock:
            try:
                sub = self._subs[subscriber]
            except KeyError:
                raise UnknownSubscriber(subscriber) from None
            ready = [p for p in sub.pending if p[0] <= up_to_tick]
            sub.pending = [p for p in sub.pending if p[0] > up_to_tick]
        ready.sort(key=lambda p: p[:3])
        return [p[3] for p in ready]
