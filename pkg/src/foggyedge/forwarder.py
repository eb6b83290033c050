"""Per-node NDN forwarding engine.

Faces are plain integers owned by the node; face 0 is the local application.
The forwarder never touches links itself, it only returns what to send where.
"""

from __future__ import annotations

from collections import Counter, OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

from .naming import FeName, region_prefix_match, serialize_name
from .packet import ComputedResult, Data, Interest

APP_FACE = 0

__all__ = [
    "APP_FACE",
    "ContentStore",
    "CsEntry",
    "Fib",
    "FibEntry",
    "Forwarder",
    "InterestAction",
    "DataAction",
    "Pit",
    "PitEntry",
    "rpit_swap",
]


@dataclass
class FibEntry:
    prefix: tuple[str, ...]
    faces: list[int]

    def __post_init__(self):
        if not self.faces:
            raise ValueError("FIB entry needs at least one face")
        if len(self.prefix) > 3:
            raise ValueError("FIB prefixes cover at most the 3 region components")


class Fib:
    def __init__(self):
        self._entries: dict[tuple[str, ...], FibEntry] = {}

    def add(self, prefix: Sequence[str], faces: Iterable[int]) -> None:
        prefix = tuple(prefix)
        entry = self._entries.get(prefix)
        if entry is None:
            self._entries[prefix] = FibEntry(prefix, list(faces))
        else:
            for f in faces:
                if f not in entry.faces:
                    entry.faces.append(f)

    def remove(self, prefix: Sequence[str]) -> None:
        self._entries.pop(tuple(prefix), None)

    def lookup(self, name: FeName) -> Optional[FibEntry]:
        """Longest region-prefix match; an entry matches only if all its components do."""
        best = None
        for prefix, entry in self._entries.items():
            if region_prefix_match(name, prefix) != len(prefix):
                continue
            if best is None or len(prefix) > len(best.prefix):
                best = entry
        return best

    def entries(self) -> list[FibEntry]:
        return sorted(self._entries.values(), key=lambda e: e.prefix)

    def __len__(self):
        return len(self._entries)


@dataclass
class PitEntry:
    name: FeName
    incoming: set[int]
    outgoing: set[int]
    nonces: set[int]
    created_at: int
    expiry: int
    adhoc_response: bool = False
    local_offload: bool = False  # the local app handed this request upstream
    swapped: bool = False  # currently in R-PIT orientation

    @property
    def key(self) -> str:
        return serialize_name(self.name)


def rpit_swap(entry: PitEntry, lifetime: int = 0, now: Optional[int] = None) -> PitEntry:
    """Exchange incoming and outgoing faces in place; extend expiry by ``lifetime``."""
    entry.incoming, entry.outgoing = entry.outgoing, entry.incoming
    entry.swapped = not entry.swapped
    if lifetime:
        base = entry.expiry if now is None else max(entry.expiry, now)
        entry.expiry = base + lifetime
    return entry


class Pit:
    def __init__(self):
        self._entries: dict[str, PitEntry] = {}
        self.expired = 0

    def get(self, name: FeName, now: Optional[int] = None) -> Optional[PitEntry]:
        key = serialize_name(name)
        entry = self._entries.get(key)
        if entry is not None and now is not None and entry.expiry <= now:
            del self._entries[key]
            self.expired += 1
            return None
        return entry

    def insert(self, entry: PitEntry) -> None:
        self._entries[entry.key] = entry

    def remove(self, name: FeName) -> Optional[PitEntry]:
        return self._entries.pop(serialize_name(name), None)

    def purge_expired(self, now: int) -> int:
        dead = [k for k, e in self._entries.items() if e.expiry <= now]
        for k in dead:
            del self._entries[k]
        self.expired += len(dead)
        return len(dead)

    def entries(self) -> list[PitEntry]:
        return list(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def __contains__(self, name: FeName) -> bool:
        return serialize_name(name) in self._entries


@dataclass
class CsEntry:
    name: FeName
    data: Data
    inserted_at: int
    expires_at: Optional[int] = None


class ContentStore:
    """Exact-match cache with LRU eviction and optional per-entry freshness."""

    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self._entries: OrderedDict[str, CsEntry] = OrderedDict()
        self.evictions = 0

    def get(self, name: FeName, now: int) -> Optional[Data]:
        key = serialize_name(name)
        entry = self._entries.get(key)
        if entry is None:
            return None
        if entry.expires_at is not None and entry.expires_at <= now:
            del self._entries[key]
            return None
        self._entries.move_to_end(key)
        return entry.data

    def insert(self, data: Data, now: int, freshness: Optional[int] = None) -> None:
        if self.capacity <= 0:
            return
        key = serialize_name(data.name)
        expires = None if freshness is None else now + freshness
        self._entries[key] = CsEntry(data.name, data, now, expires)
        self._entries.move_to_end(key)
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
            self.evictions += 1

    def entries(self) -> list[CsEntry]:
        return list(self._entries.values())

    def __len__(self):
        return len(self._entries)


@dataclass
class InterestAction:
    verdict: str  # cache_hit | forwarded | aggregated | duplicate | no_route | hop_limit
    sends: list[tuple[int, object]] = field(default_factory=list)
    entry: Optional[PitEntry] = None


@dataclass
class DataAction:
    verdict: str  # delivered | rpit_swap | rpit_consumed | unsolicited
    sends: list[tuple[int, Data]] = field(default_factory=list)
    entry: Optional[PitEntry] = None


class Forwarder:
    def __init__(
        self,
        node_id: str,
        pit_lifetime: int = 4_000_000,
        rpit_lifetime: int = 2_000_000,
        cs_capacity: int = 256,
        freshness: Optional[Callable[[FeName], Optional[int]]] = None,
    ):
        self.node_id = node_id
        self.fib = Fib()
        self.pit = Pit()
        self.cs = ContentStore(cs_capacity)
        self.pit_lifetime = pit_lifetime
        self.rpit_lifetime = rpit_lifetime
        self.freshness = freshness
        self.counters: Counter[str] = Counter()

    # -- Interests -----------------------------------------------------------

    def on_interest(self, face_in: int, i: Interest, now: int,
                    out_faces: Optional[Sequence[int]] = None) -> InterestAction:
        """Process an Interest arriving on ``face_in``.

        ``out_faces`` is a strategy override; when given it replaces the FIB
        choice.  An offloading Interest re-injected by the local app hands an
        existing entry upstream instead of aggregating on it.
        """
        if i.hop_budget <= 0:
            self.counters["hop_limit"] += 1
            return InterestAction("hop_limit")

        cached = self.cs.get(i.name, now)
        if cached is not None:
            self.counters["cs_hit"] += 1
            return InterestAction("cache_hit", [(face_in, cached)])

        entry = self.pit.get(i.name, now)
        if entry is not None and i.nonce in entry.nonces and not i.offloading:
            self.counters["duplicate"] += 1
            return InterestAction("duplicate", entry=entry)

        handoff = entry is not None and i.offloading and face_in == APP_FACE
        if entry is not None and not handoff:
            entry.incoming.add(face_in)
            entry.nonces.add(i.nonce)
            self.counters["aggregated"] += 1
            return InterestAction("aggregated", entry=entry)

        if out_faces is not None:
            faces = [f for f in out_faces if f != face_in]
        else:
            fib_entry = self.fib.lookup(i.name)
            faces = [f for f in fib_entry.faces if f != face_in] if fib_entry else []
        if not faces:
            self.counters["no_route"] += 1
            return InterestAction("no_route", entry=entry)

        if handoff:
            entry.outgoing.discard(APP_FACE)
            entry.outgoing.update(faces)
            entry.nonces.add(i.nonce)
            entry.local_offload = True
            entry.adhoc_response = entry.adhoc_response or i.adhoc_response
            entry.expiry = max(entry.expiry, now + self.pit_lifetime)
        else:
            entry = PitEntry(
                name=i.name,
                incoming={face_in},
                outgoing=set(faces),
                nonces={i.nonce},
                created_at=now,
                expiry=now + self.pit_lifetime,
                adhoc_response=i.adhoc_response,
            )
            self.pit.insert(entry)
        out = replace(i, hop_budget=i.hop_budget - 1) if face_in != APP_FACE else i
        self.counters["forwarded"] += 1
        return InterestAction("forwarded", [(f, out) for f in sorted(faces)], entry)

    # -- Data ----------------------------------------------------------------

    def on_data(self, face_in: int, d: Data, now: int) -> DataAction:
        entry = self.pit.get(d.name, now)
        if entry is None:
            self.counters["unsolicited"] += 1
            return DataAction("unsolicited")

        if d.microservice_fetch:
            # code request riding back to the offloader: keep state, flip it
            if entry.local_offload:
                targets = [APP_FACE]
            else:
                targets = sorted(f for f in entry.incoming if f != face_in)
            rpit_swap(entry, self.rpit_lifetime, now)
            self.counters["rpit_swap"] += 1
            return DataAction("rpit_swap", [(f, d) for f in targets], entry)

        targets = sorted(f for f in entry.incoming if f != face_in)
        if entry.swapped:
            # code Data consumes the R-PIT state and restores the original orientation
            rpit_swap(entry)
            self.counters["rpit_consumed"] += 1
            return DataAction("rpit_consumed", [(f, d) for f in targets], entry)

        self.pit.remove(d.name)
        if isinstance(d.payload, ComputedResult):
            fresh = self.freshness(d.name) if self.freshness else None
            self.cs.insert(d, now, fresh)
        self.counters["delivered"] += 1
        return DataAction("delivered", [(f, d) for f in targets], entry)

    # -- debugging -----------------------------------------------------------

    def dump(self) -> str:
        lines = [f"node {self.node_id}", "FIB"]
        for e in self.fib.entries():
            lines.append(f"  /{'/'.join(e.prefix)} faces={','.join(map(str, e.faces))}")
        lines.append("PIT")
        for e in sorted(self.pit.entries(), key=lambda e: e.key):
            lines.append(
                f"  {e.key} in={sorted(e.incoming)} out={sorted(e.outgoing)} "
                f"created={e.created_at} expiry={e.expiry} adhoc={int(e.adhoc_response)} "
                f"swapped={int(e.swapped)}"
            )
        lines.append("CS")
        for e in sorted(self.cs.entries(), key=lambda e: serialize_name(e.name)):
            lines.append(f"  {serialize_name(e.name)} at={e.inserted_at} expires={e.expires_at}")
        return "\n".join(lines)
