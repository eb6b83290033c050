"""Microservice access rights: HMAC-to-name mappings (HMMs) and their sync.

An edge authorizes a request when the Interest's ``access_rights`` digest is
a key of its Access Store and maps to the requested microservice.  Missing
mappings are pulled from the cloud in batches keyed on ``last_sync_time``.
"""

from __future__ import annotations

import hashlib
import hmac
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from .naming import FeName, parse_name, serialize_name
from .packet import HmmEntry, Interest

VIN_RE = re.compile(r"^[A-HJ-NPR-Z0-9]{17}$")
VIN_ALPHABET = "ABCDEFGHJKLMNPRSTUVWXYZ0123456789"
DEFAULT_BATCH_LIMIT = 64

__all__ = [
    "AccessStore",
    "HmmRecord",
    "InvalidVin",
    "MissingAccessRights",
    "apply_batch",
    "compute_hmac",
    "load_bootstrap",
    "sync_step",
    "verify",
]

HmmRecord = HmmEntry


class InvalidVin(ValueError):
    pass


class MissingAccessRights(Exception):
    pass


def compute_hmac(microservice: Union[FeName, str], vin: str) -> str:
    """HMAC-SHA-256 of the canonical param-less name, keyed by the VIN."""
    if not isinstance(vin, str) or not VIN_RE.match(vin):
        raise InvalidVin(f"not a valid VIN: {vin!r}")
    if isinstance(microservice, str):
        microservice = parse_name(microservice)
    msg = serialize_name(microservice.without_params()).encode("utf-8")
    return hmac.new(vin.encode("ascii"), msg, hashlib.sha256).hexdigest()


@dataclass
class AccessStore:
    records: dict[str, HmmRecord] = field(default_factory=dict)
    last_sync_time: int = -1  # cold: records stamped at tick 0 are still newer

    def register(self, record: HmmRecord) -> None:
        """Cloud-side insertion; creation times must not go backwards."""
        if record.hmac in self.records:
            raise ValueError(f"duplicate HMAC {record.hmac}")
        if self.records and record.created_at < self.latest():
            raise ValueError("created_at must be non-decreasing in insertion order")
        self.records[record.hmac] = record

    def latest(self) -> int:
        return max((r.created_at for r in self.records.values()), default=0)

    def copy(self) -> "AccessStore":
        return AccessStore(dict(self.records), self.last_sync_time)

    def __len__(self):
        return len(self.records)


def verify(store: AccessStore, i: Interest, protected: bool = True) -> bool:
    """True when the Interest's digest maps to the requested microservice."""
    if i.access_rights is None:
        if protected:
            raise MissingAccessRights(serialize_name(i.name))
        return True
    rec = store.records.get(i.access_rights)
    if rec is None:
        return False
    return rec.microservice_name == serialize_name(i.name.without_params())


def sync_step(cloud: AccessStore, last_sync_time: int,
              batch_limit: int = DEFAULT_BATCH_LIMIT) -> tuple[list[HmmRecord], bool]:
    """Cloud side of one sync round: records newer than ``last_sync_time``.

    A batch never ends in the middle of a group of equal ``created_at``
    values, since the follow-up round only asks for strictly newer records.
    When a single group is larger than ``batch_limit`` it is returned whole.
    """
    if batch_limit < 1:
        raise ValueError("batch_limit must be >= 1")
    newer = sorted((r for r in cloud.records.values() if r.created_at > last_sync_time),
                   key=lambda r: (r.created_at, r.hmac))
    if len(newer) <= batch_limit:
        return newer, False
    cut = batch_limit
    while cut > 0 and newer[cut].created_at == newer[cut - 1].created_at:
        cut -= 1
    if cut == 0:
        t0 = newer[0].created_at
        cut = sum(1 for r in newer if r.created_at == t0)
    return newer[:cut], cut < len(newer)


def batch_max_time(batch: list[HmmRecord], last_sync_time: int) -> int:
    return max((r.created_at for r in batch), default=last_sync_time)


def apply_batch(store: AccessStore, batch: Iterable[HmmRecord], max_time: int) -> AccessStore:
    for r in batch:
        store.records[r.hmac] = r
    store.last_sync_time = max(store.last_sync_time, max_time)
    return store


def load_bootstrap(path: Union[str, Path], store: Optional[AccessStore] = None) -> AccessStore:
    """Read ``<hex-digest> <canonical-name> <created_at-ticks>`` lines into a store."""
    store = store if store is not None else AccessStore()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields")
        digest, name, created = parts
        if not re.fullmatch(r"[0-9a-f]{64}", digest):
            raise ValueError(f"{path}:{lineno}: digest must be 64 lowercase hex chars")
        canonical = serialize_name(parse_name(name).without_params())
        store.register(HmmRecord(digest, canonical, int(created)))
    return store


def write_bootstrap(path: Union[str, Path], store: AccessStore) -> None:
    lines = [f"{r.hmac} {r.microservice_name} {r.created_at}"
             for r in sorted(store.records.values(), key=lambda r: (r.created_at, r.hmac))]
    Path(path).write_text("\n".join(lines) + "\n")
