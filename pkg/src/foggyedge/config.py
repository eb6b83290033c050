"""Scenario configuration and its flat ``section.key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union, get_type_hints

from .compute import DEFAULT_CATALOG, MicroserviceSpec

MODES = ("FoggyEdge", "EdgeOnly", "CloudOnly")

__all__ = ["ConfigError", "MODES", "ScenarioConfig", "load_config", "parse_config", "parse_rates"]


class ConfigError(ValueError):
    """Raised with one message per offending field."""

    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ScenarioConfig:
    # scenario
    scenario_mode: str = "FoggyEdge"
    scenario_seed: int = 42
    scenario_duration_s: float = 120.0
    scenario_warmup_fraction: float = 0.1
    scenario_rate: float = 1.0
    scenario_rates: tuple[float, ...] = tuple(float(r) for r in range(1, 11))
    # topology
    topology_n_edges: int = 3
    topology_edge_spacing_m: float = 400.0
    topology_direction: int = 1
    topology_n_consumers: int = 10
    topology_consumer_speed_min: float = 8.0
    topology_consumer_speed_max: float = 16.0
    topology_consumer_retx_s: float = 0.25
    topology_consumer_give_up_s: float = 10.0
    topology_waypoints: str = ""
    # edges
    edge_resources: int = 900
    edge_speed_factor: float = 1.0
    edge_queue_capacity: int = 1
    edge_code_fraction: float = 1.0
    edge_load_threshold: int = 0
    edge_vec_lifetime_s: float = 2.0
    # fog
    fog_slots: int = 20
    fog_initial_vehicles: int = 8
    fog_vehicle_resources: int = 800
    fog_speed_factor: float = 1.0
    fog_arrival_rate: float = 0.02
    fog_stay_min_s: float = 300.0
    fog_stay_max_s: float = 3600.0
    fog_stay_jitter_min: float = 0.5
    fog_initial_elapsed: bool = True
    # cloud
    cloud_speed_factor: float = 1.0
    # links
    link_adhoc_latency_s: float = 0.002
    link_adhoc_bandwidth: int = 6_000_000
    link_adhoc_range_m: float = 200.0
    link_edge_latency_s: float = 0.005
    link_edge_bandwidth: int = 100_000_000
    link_cloud_latency_s: float = 0.040
    link_cloud_bandwidth: int = 100_000_000
    # forwarding
    forwarder_pit_lifetime_s: float = 4.0
    forwarder_rpit_lifetime_s: float = 2.0
    forwarder_cs_capacity: int = 256
    # access control
    access_presync: bool = True
    access_batch_limit: int = 64
    # output
    output_trace: bool = True
    # microservice overrides: service -> {attribute: value}
    catalog_overrides: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return self.scenario_mode

    @property
    def seed(self) -> int:
        return self.scenario_seed

    @property
    def warmup_ticks(self) -> int:
        return int(round(self.scenario_duration_s * self.scenario_warmup_fraction * 1e6))

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def catalog(self) -> dict[str, MicroserviceSpec]:
        out = {}
        for spec in DEFAULT_CATALOG:
            over = self.catalog_overrides.get(spec.service, {})
            out[spec.service] = dataclasses.replace(spec, **over) if over else spec
        return out

    def validate(self) -> "ScenarioConfig":
        p = []
        if self.scenario_mode not in MODES:
            p.append(f"scenario.mode: must be one of {', '.join(MODES)}")
        rates = list(self.scenario_rates) + [self.scenario_rate]
        if any(r < 1 for r in rates):
            p.append("scenario.rate(s): every rate must be >= 1")
        if self.scenario_duration_s <= 0:
            p.append("scenario.duration_s: must be positive")
        if not 0 <= self.scenario_warmup_fraction < 1:
            p.append("scenario.warmup_fraction: duration must exceed warmup")
        if self.topology_n_edges < 2:
            p.append("topology.n_edges: need at least 2 edges")
        if self.topology_direction not in (1, -1):
            p.append("topology.direction: must be 1 or -1")
        if self.topology_n_consumers < 1:
            p.append("topology.n_consumers: must be >= 1")
        if not 0 <= self.topology_consumer_speed_min <= self.topology_consumer_speed_max:
            p.append("topology.consumer_speed_min/max: need 0 <= min <= max")
        if not 0 <= self.edge_code_fraction <= 1:
            p.append("edge.code_fraction: must lie in [0, 1]")
        if not 0 < self.fog_stay_jitter_min <= 1:
            p.append("fog.stay_jitter_min: must lie in (0, 1]")
        if self.fog_stay_min_s > self.fog_stay_max_s:
            p.append("fog.stay_min_s: must not exceed fog.stay_max_s")
        for name in ("edge_resources", "fog_vehicle_resources", "link_adhoc_bandwidth",
                     "link_edge_bandwidth", "link_cloud_bandwidth", "access_batch_limit",
                     "edge_speed_factor", "fog_speed_factor", "cloud_speed_factor"):
            if getattr(self, name) <= 0:
                p.append(f"{name.replace('_', '.', 1)}: must be positive")
        for svc, over in self.catalog_overrides.items():
            if svc not in {s.service for s in DEFAULT_CATALOG}:
                p.append(f"catalog.{svc}: unknown microservice")
        if not p:
            try:
                self.catalog()
            except ValueError as e:
                p.append(f"catalog: {e}")
        if p:
            raise ConfigError(p)
        return self


_CATALOG_FIELDS = {"demand": int, "base_duration": float, "code_size": int,
                   "protected": bool, "freshness": float}


def _coerce(raw: str, typ, key: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw.replace("_", ""))
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        return tuple(parse_rates(raw))
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(typ, '__name__', 'list')}") from None


def parse_rates(raw: str) -> list[float]:
    """``1..10``, ``1,2,5`` or a mix such as ``1..3,5``."""
    out: list[float] = []
    for part in raw.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            out.extend(float(r) for r in range(int(a), int(b) + 1))
        elif part:
            out.append(float(part))
    if not out:
        raise ValueError(raw)
    return out


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = dataclasses.replace(base) if base else ScenarioConfig()
    cfg.catalog_overrides = {k: dict(v) for k, v in cfg.catalog_overrides.items()}
    hints = get_type_hints(ScenarioConfig)
    known = {f.name for f in fields(ScenarioConfig)} - {"catalog_overrides"}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'section.key = value'")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        try:
            if parts[0] == "catalog" and len(parts) == 3:
                if parts[2] not in _CATALOG_FIELDS:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                val = _coerce(raw, _CATALOG_FIELDS[parts[2]], key)
                cfg.catalog_overrides.setdefault(parts[1], {})[parts[2]] = val
                continue
            attr = key.replace(".", "_")
            if len(parts) != 2 or attr not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            setattr(cfg, attr, _coerce(raw, hints[attr], key))
        except ConfigError as e:
            problems.extend(e.problems)
    if problems:
        raise ConfigError(problems)
    return cfg.validate()


def load_config(path: Union[str, Path], base: ScenarioConfig | None = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not UTF-8 text") from None
    return parse_config(text, base)
