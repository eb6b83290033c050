"""Hierarchical microservice names.

Grammar::

    FE:/<country>/<city>/<district> | <microservice> [? <param> (, <param>)*]

Whitespace is tolerated around ``|``, ``?`` and ``,`` on input and never
emitted.  The canonical wire form is what every table keys on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

SCHEME = "FE:/"
RESERVED = frozenset("/|?,")

__all__ = [
    "FeName",
    "MalformedName",
    "parse_name",
    "serialize_name",
    "region_prefix_match",
    "valid_component",
]


class MalformedName(ValueError):
    pass


def valid_component(comp: str) -> bool:
    if not comp:
        return False
    if not comp.isprintable():
        return False
    return not any(c in RESERVED or c.isspace() for c in comp)


@dataclass(frozen=True)
class FeName:
    country: str
    city: str
    district: str
    microservice: str
    params: tuple[str, ...] = ()

    def __post_init__(self):
        # accept lists from callers but keep the value hashable
        if not isinstance(self.params, tuple):
            object.__setattr__(self, "params", tuple(self.params))
        for comp in (self.country, self.city, self.district, self.microservice, *self.params):
            if not isinstance(comp, str) or not valid_component(comp):
                raise MalformedName(f"invalid name component {comp!r}")

    @property
    def region(self) -> tuple[str, str, str]:
        return (self.country, self.city, self.district)

    def without_params(self) -> "FeName":
        if not self.params:
            return self
        return FeName(self.country, self.city, self.district, self.microservice)

    def with_params(self, *params: str) -> "FeName":
        return FeName(self.country, self.city, self.district, self.microservice, params)

    def __str__(self) -> str:
        return serialize_name(self)


def _strip(part: str, left: bool, right: bool, raw: str) -> str:
    """Remove whitespace only on the sides adjacent to a separator."""
    out = part
    if left:
        out = out.lstrip()
    if right:
        out = out.rstrip()
    if not valid_component(out):
        raise MalformedName(f"bad component {part!r} in {raw!r}")
    return out


def parse_name(raw: str) -> FeName:
    if not isinstance(raw, str) or not raw:
        raise MalformedName("empty name")
    if not raw.startswith(SCHEME):
        raise MalformedName(f"missing {SCHEME} scheme: {raw!r}")
    body = raw[len(SCHEME):]
    halves = body.split("|")
    if len(halves) != 2:
        raise MalformedName(f"expected exactly one '|' in {raw!r}")
    region_part, service_part = halves

    region = region_part.split("/")
    if len(region) != 3:
        raise MalformedName(f"region needs 3 components, got {len(region)} in {raw!r}")
    country = _strip(region[0], False, False, raw)
    city = _strip(region[1], False, False, raw)
    district = _strip(region[2], False, True, raw)

    if "?" in service_part:
        service, param_part = service_part.split("?", 1)
        microservice = _strip(service, True, True, raw)
        pieces = param_part.split(",")
        last = len(pieces) - 1
        params = tuple(_strip(p, True, i < last, raw) for i, p in enumerate(pieces))
    else:
        microservice = _strip(service_part, True, False, raw)
        params = ()
    return FeName(country, city, district, microservice, params)


def serialize_name(n: FeName) -> str:
    out = f"{SCHEME}{n.country}/{n.city}/{n.district}|{n.microservice}"
    if n.params:
        out += "?" + ",".join(n.params)
    return out


def region_prefix_match(n: FeName, prefix: Sequence[str]) -> int:
    """Count leading region components of ``n`` equal to ``prefix``."""
    if len(prefix) > 3:
        raise ValueError("region prefixes have at most 3 components")
    count = 0
    for mine, theirs in zip(n.region, prefix):
        if mine != theirs:
            break
        count += 1
    return count
