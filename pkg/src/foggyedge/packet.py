"""Interest/Data packets and their TLV wire encoding.

Every TLV is ``type (1 byte) | length (2 bytes, big-endian) | value``.
Flags are always encoded so that toggling one never shifts the others;
optional fields are only emitted when present.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Optional, Union

from .naming import FeName, parse_name, serialize_name

DEFAULT_HOP_BUDGET = 32
RESULT_SIZE = 512  # bytes of computed output carried by a result

# reserved microservice names for control traffic
HMM_SYNC = "hmm_sync"
CODE = "code"
VFG_PARK = "vfg_park"
VFG_DEPART = "vfg_depart"
VFG_EXIT = "vfg_exit"
CONTROL_SERVICES = frozenset({HMM_SYNC, CODE, VFG_PARK, VFG_DEPART, VFG_EXIT})

__all__ = [
    "AdmissionInfo",
    "ComputedResult",
    "Data",
    "DecodeError",
    "HandoverTarget",
    "HmmBatch",
    "HmmEntry",
    "Interest",
    "MicroserviceCode",
    "PayloadKind",
    "SlotAssignment",
    "decode",
    "duplicate_key",
    "encode",
    "iter_tlv",
    "tlv",
    "wire_size",
]


class T(IntEnum):
    INTEREST = 0x05
    DATA = 0x06
    NAME = 0x07
    NONCE = 0x0A
    ACCESS_RIGHTS = 0x20
    OFFLOADING = 0x21
    ADHOC_RESPONSE = 0x22
    MS_AVAILABILITY = 0x23
    LAST_SYNC_TIME = 0x24
    ADMISSION_INFO = 0x25
    HOP_BUDGET = 0x26
    PARKING_TIME = 0x27
    RESOURCES = 0x28
    PAYLOAD_KIND = 0x30
    PAYLOAD = 0x31
    MS_FETCH = 0x32
    MORE_ACCESS_RIGHTS = 0x33
    TEXT = 0x40
    INT = 0x41
    RECORD = 0x42


class PayloadKind(IntEnum):
    ComputedResult = 1
    MicroserviceCode = 2
    HmmBatch = 3
    SlotAssignment = 4
    HandoverTarget = 5


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class AdmissionInfo:
    estimated_parking_time: int  # ticks
    available_resources: int


@dataclass(frozen=True)
class ComputedResult:
    producer: str
    size: int = RESULT_SIZE
    kind = PayloadKind.ComputedResult


@dataclass(frozen=True)
class MicroserviceCode:
    microservice: str
    code_size: int  # 0 on the fetch acknowledgement, which carries no code
    kind = PayloadKind.MicroserviceCode


@dataclass(frozen=True)
class HmmEntry:
    hmac: str
    microservice_name: str
    created_at: int


@dataclass(frozen=True)
class HmmBatch:
    records: tuple[HmmEntry, ...]
    batch_max_time: int
    kind = PayloadKind.HmmBatch


@dataclass(frozen=True)
class SlotAssignment:
    vehicle_id: str
    slot: int  # -1 marks a rejection (lot full) or a release acknowledgement
    kind = PayloadKind.SlotAssignment


@dataclass(frozen=True)
class HandoverTarget:
    departing: str
    assignments: tuple[tuple[str, str], ...]  # (instance id, target vehicle or "")
    kind = PayloadKind.HandoverTarget


Payload = Union[ComputedResult, MicroserviceCode, HmmBatch, SlotAssignment, HandoverTarget]


@dataclass(frozen=True)
class Interest:
    name: FeName
    nonce: int
    access_rights: Optional[str] = None
    offloading: bool = False
    adhoc_response: bool = False
    microservice_availability: bool = False
    last_sync_time: Optional[int] = None
    admission_info: Optional[AdmissionInfo] = None
    hop_budget: int = DEFAULT_HOP_BUDGET

    def __post_init__(self):
        if not 0 <= self.nonce < 2**64:
            raise ValueError("nonce must fit in 64 bits")
        if not 0 <= self.hop_budget < 256:
            raise ValueError("hop_budget must fit in one byte")
        if self.last_sync_time is not None and self.name.microservice != HMM_SYNC:
            raise ValueError("last_sync_time is only carried by HMM sync Interests")
        if self.admission_info is not None and self.name.microservice != VFG_PARK:
            raise ValueError("admission_info is only carried by parking admission Interests")


@dataclass(frozen=True)
class Data:
    name: FeName
    payload: Payload
    adhoc_response: bool = False
    microservice_fetch: bool = False
    more_access_rights: bool = False

    @property
    def payload_kind(self) -> PayloadKind:
        return self.payload.kind

    def __post_init__(self):
        if self.more_access_rights and self.payload.kind is not PayloadKind.HmmBatch:
            raise ValueError("more_access_rights is only valid on HmmBatch payloads")
        if self.microservice_fetch and self.payload.kind is not PayloadKind.MicroserviceCode:
            raise ValueError("microservice_fetch Data must carry a MicroserviceCode payload")


Packet = Union[Interest, Data]


def duplicate_key(i: Interest) -> tuple[str, int]:
    return (serialize_name(i.name), i.nonce)


# -- TLV primitives ---------------------------------------------------------

def tlv(t: int, value: bytes) -> bytes:
    if len(value) > 0xFFFF:
        raise ValueError(f"TLV value too long ({len(value)} bytes)")
    return struct.pack(">BH", t, len(value)) + value


def iter_tlv(buf: bytes) -> Iterator[tuple[int, bytes]]:
    pos = 0
    while pos < len(buf):
        if pos + 3 > len(buf):
            raise DecodeError("truncated TLV header")
        t, n = struct.unpack_from(">BH", buf, pos)
        pos += 3
        if pos + n > len(buf):
            raise DecodeError("truncated TLV value")
        yield t, buf[pos:pos + n]
        pos += n


def _u64(v: int) -> bytes:
    return struct.pack(">Q", v)


def _i64(v: int) -> bytes:
    return struct.pack(">q", v)


def _flag(v: bool) -> bytes:
    return b"\x01" if v else b"\x00"


def _text(s: str) -> bytes:
    return tlv(T.TEXT, s.encode("utf-8"))


def _int(v: int) -> bytes:
    return tlv(T.INT, _i64(v))


def _encode_payload(p: Payload) -> bytes:
    if isinstance(p, ComputedResult):
        return _text(p.producer) + _int(p.size)
    if isinstance(p, MicroserviceCode):
        return _text(p.microservice) + _int(p.code_size)
    if isinstance(p, HmmBatch):
        body = _int(p.batch_max_time)
        for r in p.records:
            body += tlv(T.RECORD, _text(r.hmac) + _text(r.microservice_name) + _int(r.created_at))
        return body
    if isinstance(p, SlotAssignment):
        return _text(p.vehicle_id) + _int(p.slot)
    if isinstance(p, HandoverTarget):
        body = _text(p.departing)
        for inst, target in p.assignments:
            body += tlv(T.RECORD, _text(inst) + _text(target))
        return body
    raise TypeError(f"unknown payload {p!r}")


def encode(p: Packet) -> bytes:
    name = tlv(T.NAME, serialize_name(p.name).encode("utf-8"))
    if isinstance(p, Interest):
        body = name + tlv(T.NONCE, _u64(p.nonce))
        if p.access_rights is not None:
            body += tlv(T.ACCESS_RIGHTS, p.access_rights.encode("ascii"))
        body += tlv(T.OFFLOADING, _flag(p.offloading))
        body += tlv(T.ADHOC_RESPONSE, _flag(p.adhoc_response))
        body += tlv(T.MS_AVAILABILITY, _flag(p.microservice_availability))
        if p.last_sync_time is not None:
            body += tlv(T.LAST_SYNC_TIME, _i64(p.last_sync_time))
        if p.admission_info is not None:
            a = p.admission_info
            body += tlv(T.ADMISSION_INFO,
                        tlv(T.PARKING_TIME, _i64(a.estimated_parking_time))
                        + tlv(T.RESOURCES, _i64(a.available_resources)))
        body += tlv(T.HOP_BUDGET, bytes([p.hop_budget]))
        return tlv(T.INTEREST, body)
    if isinstance(p, Data):
        body = name + tlv(T.PAYLOAD_KIND, bytes([p.payload.kind]))
        body += tlv(T.PAYLOAD, _encode_payload(p.payload))
        body += tlv(T.ADHOC_RESPONSE, _flag(p.adhoc_response))
        body += tlv(T.MS_FETCH, _flag(p.microservice_fetch))
        body += tlv(T.MORE_ACCESS_RIGHTS, _flag(p.more_access_rights))
        return tlv(T.DATA, body)
    raise TypeError(f"cannot encode {type(p).__name__}")


# -- decoding ---------------------------------------------------------------

def _fields(buf: bytes) -> dict[int, bytes]:
    out: dict[int, bytes] = {}
    for t, v in iter_tlv(buf):
        if t in out:
            raise DecodeError(f"repeated TLV type {t:#x}")
        out[t] = v
    return out


def _list(buf: bytes, t: int) -> list[bytes]:
    return [v for tt, v in iter_tlv(buf) if tt == t]


def _read_flag(v: bytes) -> bool:
    if v not in (b"\x00", b"\x01"):
        raise DecodeError("flag must be a single 0/1 byte")
    return v == b"\x01"


def _read_i64(v: bytes) -> int:
    if len(v) != 8:
        raise DecodeError("integer field must be 8 bytes")
    return struct.unpack(">q", v)[0]


def _scalars(buf: bytes) -> list:
    out = []
    for t, v in iter_tlv(buf):
        if t == T.TEXT:
            out.append(v.decode("utf-8"))
        elif t == T.INT:
            out.append(_read_i64(v))
        else:
            raise DecodeError(f"unexpected TLV type {t:#x} in record")
    return out


def _decode_payload(kind: PayloadKind, buf: bytes) -> Payload:
    if kind in (PayloadKind.HmmBatch, PayloadKind.HandoverTarget):
        head = [(t, v) for t, v in iter_tlv(buf) if t != T.RECORD]
        recs = [_scalars(r) for r in _list(buf, T.RECORD)]
        (t0, v0), = head
        if kind is PayloadKind.HmmBatch:
            return HmmBatch(tuple(HmmEntry(*r) for r in recs), _read_i64(v0))
        return HandoverTarget(v0.decode("utf-8"), tuple(tuple(r) for r in recs))
    a, b = _scalars(buf)
    if kind is PayloadKind.ComputedResult:
        return ComputedResult(a, b)
    if kind is PayloadKind.MicroserviceCode:
        return MicroserviceCode(a, b)
    return SlotAssignment(a, b)


def decode(buf: bytes) -> Packet:
    (outer, body), = list(iter_tlv(buf))
    f = _fields(body)
    name = parse_name(f[T.NAME].decode("utf-8"))
    if outer == T.INTEREST:
        admission = None
        if T.ADMISSION_INFO in f:
            a = _fields(f[T.ADMISSION_INFO])
            admission = AdmissionInfo(_read_i64(a[T.PARKING_TIME]), _read_i64(a[T.RESOURCES]))
        return Interest(
            name=name,
            nonce=struct.unpack(">Q", f[T.NONCE])[0],
            access_rights=f[T.ACCESS_RIGHTS].decode("ascii") if T.ACCESS_RIGHTS in f else None,
            offloading=_read_flag(f[T.OFFLOADING]),
            adhoc_response=_read_flag(f[T.ADHOC_RESPONSE]),
            microservice_availability=_read_flag(f[T.MS_AVAILABILITY]),
            last_sync_time=_read_i64(f[T.LAST_SYNC_TIME]) if T.LAST_SYNC_TIME in f else None,
            admission_info=admission,
            hop_budget=f[T.HOP_BUDGET][0],
        )
    if outer == T.DATA:
        kind = PayloadKind(f[T.PAYLOAD_KIND][0])
        return Data(
            name=name,
            payload=_decode_payload(kind, f[T.PAYLOAD]),
            adhoc_response=_read_flag(f[T.ADHOC_RESPONSE]),
            microservice_fetch=_read_flag(f[T.MS_FETCH]),
            more_access_rights=_read_flag(f[T.MORE_ACCESS_RIGHTS]),
        )
    raise DecodeError(f"unknown packet type {outer:#x}")


def wire_size(p: Packet) -> int:
    """Bytes on the link: the encoding plus any simulated body it stands for."""
    n = len(encode(p))
    if isinstance(p, Data):
        if isinstance(p.payload, ComputedResult):
            n += p.payload.size
        elif isinstance(p.payload, MicroserviceCode):
            n += p.payload.code_size
    return n
