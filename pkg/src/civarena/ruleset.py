"""Ruleset loading, validation and serialization.

A ruleset is a human-editable INI-style document (one section per
definition) that fixes all game content: terrains, unit types, buildings,
technologies, governments and diplomatic states. The engine is fully
content-agnostic; both the paper-scale and the mini ruleset drive it
unchanged. See docs/ruleset-format.md for the file schema.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

__all__ = [
    "Capacities",
    "TerrainDef",
    "UnitDef",
    "BuildingDef",
    "TechDef",
    "GovernmentDef",
    "Ruleset",
    "RulesetError",
    "load_ruleset",
    "loads_ruleset",
    "serialize_ruleset",
    "tech_reachable",
    "tech_depth",
]

FORMAT_VERSION = 1

# Fixed infrastructure layer enumeration (34 slots). The first entries are
# load-bearing for the engine; the tail is reserved padding.
INFRASTRUCTURE = (
    "road",
    "railroad",
    "irrigation",
    "farmland",
    "mine",
    "fortress",
    "airbase",
    "hut",
    "pollution",
    "fallout",
    "river",
    "oil_well",
    "buoy",
    "ruins",
    "special_food",
    "special_shield",
    "special_trade",
) + tuple(f"reserved_{i}" for i in range(17, 34))

INFRA_INDEX = {name: i for i, name in enumerate(INFRASTRUCTURE)}

# Fixed output type enumeration (6 slots).
OUTPUT_TYPES = ("food", "shield", "trade", "gold", "science", "luxury")

# Extra tile yield granted by each infrastructure flag, as
# (food, shield, trade) deltas. Flags not listed yield nothing.
INFRA_YIELD = {
    "road": (0, 0, 1),
    "railroad": (0, 1, 0),
    "irrigation": (1, 0, 0),
    "farmland": (1, 0, 0),
    "mine": (0, 1, 0),
    "river": (0, 0, 1),
    "oil_well": (0, 1, 0),
    "special_food": (2, 0, 0),
    "special_shield": (0, 2, 0),
    "special_trade": (0, 0, 2),
}

SPECIALIST_KINDS = ("luxury", "science", "tax")


class RulesetError(ValueError):
    """Raised for parse errors and validation failures."""


@dataclass(frozen=True)
class Capacities:
    """Schema ceilings shared by the observation encoders."""

    max_players: int = 255
    unit_types: int = 52
    building_types: int = 68
    tech_types: int = 88
    government_types: int = 7
    infrastructure_layers: int = 34
    output_types: int = 6
    terrain_types: int = 14
    diplomatic_states: int = 7  # 5 named + no-contact + reserved


@dataclass(frozen=True)
class TerrainDef:
    name: str
    move_cost: int
    food: int
    shield: int
    trade: int
    is_land: bool
    defense_bonus_pct: int = 100


@dataclass(frozen=True)
class UnitDef:
    name: str
    attack_strength: int
    defense_strength: int
    firepower: int
    max_hp: int
    move_points: int
    produce_cost: int
    can_transport: bool = False
    transport_capacity: int = 0
    obsoleted_by: int | None = None
    required_tech: int | None = None
    is_military: bool = False
    is_naval: bool = False
    is_settler: bool = False
    is_worker: bool = False
    vision_radius: int = 2


@dataclass(frozen=True)
class BuildingDef:
    name: str
    cost: int
    upkeep: int
    is_wonder: bool = False
    required_tech: int | None = None


@dataclass(frozen=True)
class TechDef:
    name: str
    cost: int
    prerequisites: tuple[int, ...] = ()


@dataclass(frozen=True)
class GovernmentDef:
    name: str
    max_luxury: int = 70
    max_science: int = 70
    max_tax: int = 70


@dataclass(frozen=True)
class Ruleset:
    name: str
    version: int
    terrain_defs: tuple[TerrainDef, ...]
    unit_defs: tuple[UnitDef, ...]
    building_defs: tuple[BuildingDef, ...]
    tech_defs: tuple[TechDef, ...]
    government_defs: tuple[GovernmentDef, ...]
    diplomatic_states: tuple[str, ...]
    opening_units: tuple[int, ...]
    spaceship_buildings: tuple[int, ...]
    capacities: Capacities = field(default_factory=Capacities)

    def terrain_index(self, name: str) -> int | None:
        for i, t in enumerate(self.terrain_defs):
            if t.name == name:
                return i
        return None

    def unit_index(self, name: str) -> int | None:
        for i, u in enumerate(self.unit_defs):
            if u.name == name:
                return i
        return None

    def building_index(self, name: str) -> int | None:
        for i, b in enumerate(self.building_defs):
            if b.name == name:
                return i
        return None

    def tech_index(self, name: str) -> int | None:
        for i, t in enumerate(self.tech_defs):
            if t.name == name:
                return i
        return None

    def government_index(self, name: str) -> int | None:
        for i, g in enumerate(self.government_defs):
            if g.name == name:
                return i
        return None

    @property
    def initial_government(self) -> int:
        for i, g in enumerate(self.government_defs):
            if g.name != "Anarchy":
                return i
        return 0

    @property
    def anarchy_government(self) -> int | None:
        return self.government_index("Anarchy")


def _parse_name_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _get_bool(section, key: str, default: bool = False) -> bool:
    raw = section.get(key)
    if raw is None:
        return default
    raw = raw.strip().lower()
    if raw in ("yes", "true", "1", "on"):
        return True
    if raw in ("no", "false", "0", "off"):
        return False
    raise RulesetError(f"bad boolean {raw!r} for key {key!r}")


def _get_int(section, key: str, default: int | None = None) -> int:
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise RulesetError(f"missing required key {key!r} in [{section.name}]")
        return default
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise RulesetError(f"bad integer {raw!r} for key {key!r}") from exc


def loads_ruleset(text: str) -> Ruleset:
    """Parse and validate a ruleset document from a string."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise RulesetError(f"parse error: {exc}") from exc

    if "ruleset" not in parser:
        raise RulesetError("missing [ruleset] header section")
    header = parser["ruleset"]
    name = header.get("name", "").strip()
    if not name:
        raise RulesetError("missing ruleset name")
    version = _get_int(header, "version", FORMAT_VERSION)

    terrain_names: list[str] = []
    unit_names: list[str] = []
    building_names: list[str] = []
    tech_names: list[str] = []
    gov_names: list[str] = []
    for section in parser.sections():
        if ":" not in section:
            continue
        kind, _, def_name = section.partition(":")
        def_name = def_name.strip()
        target = {
            "terrain": terrain_names,
            "unit": unit_names,
            "building": building_names,
            "tech": tech_names,
            "government": gov_names,
        }.get(kind)
        if target is None:
            raise RulesetError(f"unknown section kind [{section}]")
        if def_name in target:
            raise RulesetError(f"duplicate definition [{section}]")
        target.append(def_name)

    tech_idx = {n: i for i, n in enumerate(tech_names)}
    unit_idx = {n: i for i, n in enumerate(unit_names)}
    building_idx = {n: i for i, n in enumerate(building_names)}

    def tech_ref(section, key: str) -> int | None:
        raw = section.get(key)
        if raw is None or not raw.strip():
            return None
        raw = raw.strip()
        if raw not in tech_idx:
            raise RulesetError(f"[{section.name}] references unknown tech {raw!r}")
        return tech_idx[raw]

    terrains = []
    for n in terrain_names:
        s = parser[f"terrain:{n}"]
        terrains.append(
            TerrainDef(
                name=n,
                move_cost=_get_int(s, "move_cost"),
                food=_get_int(s, "food"),
                shield=_get_int(s, "shield"),
                trade=_get_int(s, "trade"),
                is_land=_get_bool(s, "is_land", True),
                defense_bonus_pct=_get_int(s, "defense_bonus_pct", 100),
            )
        )

    units = []
    for n in unit_names:
        s = parser[f"unit:{n}"]
        obsoleted = s.get("obsoleted_by")
        if obsoleted is not None and obsoleted.strip():
            obsoleted = obsoleted.strip()
            if obsoleted not in unit_idx:
                raise RulesetError(f"[unit:{n}] references unknown unit {obsoleted!r}")
            obsoleted_i = unit_idx[obsoleted]
        else:
            obsoleted_i = None
        units.append(
            UnitDef(
                name=n,
                attack_strength=_get_int(s, "attack"),
                defense_strength=_get_int(s, "defense"),
                firepower=_get_int(s, "firepower", 1),
                max_hp=_get_int(s, "hp"),
                move_points=_get_int(s, "moves"),
                produce_cost=_get_int(s, "cost"),
                can_transport=_get_bool(s, "can_transport"),
                transport_capacity=_get_int(s, "transport_capacity", 0),
                obsoleted_by=obsoleted_i,
                required_tech=tech_ref(s, "required_tech"),
                is_military=_get_bool(s, "military"),
                is_naval=_get_bool(s, "naval"),
                is_settler=_get_bool(s, "settler"),
                is_worker=_get_bool(s, "worker"),
                vision_radius=_get_int(s, "vision_radius", 2),
            )
        )

    buildings = []
    for n in building_names:
        s = parser[f"building:{n}"]
        buildings.append(
            BuildingDef(
                name=n,
                cost=_get_int(s, "cost"),
                upkeep=_get_int(s, "upkeep", 0),
                is_wonder=_get_bool(s, "wonder"),
                required_tech=tech_ref(s, "required_tech"),
            )
        )

    techs = []
    for n in tech_names:
        s = parser[f"tech:{n}"]
        prereq_names = _parse_name_list(s.get("requires", ""))
        prereqs = []
        for p in prereq_names:
            if p not in tech_idx:
                raise RulesetError(f"[tech:{n}] references unknown tech {p!r}")
            prereqs.append(tech_idx[p])
        techs.append(TechDef(name=n, cost=_get_int(s, "cost"), prerequisites=tuple(prereqs)))

    governments = []
    for n in gov_names:
        s = parser[f"government:{n}"]
        governments.append(
            GovernmentDef(
                name=n,
                max_luxury=_get_int(s, "max_luxury", 70),
                max_science=_get_int(s, "max_science", 70),
                max_tax=_get_int(s, "max_tax", 70),
            )
        )

    if "diplomacy" not in parser:
        raise RulesetError("missing [diplomacy] section")
    dipl_states = tuple(_parse_name_list(parser["diplomacy"].get("states", "")))

    if "opening" not in parser:
        raise RulesetError("missing [opening] section")
    opening = []
    for u in _parse_name_list(parser["opening"].get("units", "")):
        if u not in unit_idx:
            raise RulesetError(f"[opening] references unknown unit {u!r}")
        opening.append(unit_idx[u])

    spaceship = []
    if "victory" in parser:
        for b in _parse_name_list(parser["victory"].get("spaceship", "")):
            if b not in building_idx:
                raise RulesetError(f"[victory] references unknown building {b!r}")
            spaceship.append(building_idx[b])

    ruleset = Ruleset(
        name=name,
        version=version,
        terrain_defs=tuple(terrains),
        unit_defs=tuple(units),
        building_defs=tuple(buildings),
        tech_defs=tuple(techs),
        government_defs=tuple(governments),
        diplomatic_states=dipl_states,
        opening_units=tuple(opening),
        spaceship_buildings=tuple(spaceship),
    )
    validate_ruleset(ruleset)
    return ruleset


def load_ruleset(path) -> Ruleset:
    """Load and validate a ruleset file. Pure: no global state."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_ruleset(fh.read())


def validate_ruleset(rs: Ruleset) -> None:
    """Raise RulesetError naming the first violated invariant."""
    caps = rs.capacities
    checks = (
        (len(rs.terrain_defs), caps.terrain_types, "terrain"),
        (len(rs.unit_defs), caps.unit_types, "unit"),
        (len(rs.building_defs), caps.building_types, "building"),
        (len(rs.tech_defs), caps.tech_types, "tech"),
        (len(rs.government_defs), caps.government_types, "government"),
    )
    for count, cap, label in checks:
        if count == 0:
            raise RulesetError(f"ruleset defines no {label} types")
        if count > cap:
            raise RulesetError(f"{label} count {count} exceeds capacity {cap}")

    if len(rs.diplomatic_states) != 5:
        raise RulesetError(
            f"diplomatic_states must have exactly 5 entries, got {len(rs.diplomatic_states)}"
        )

    n_techs = len(rs.tech_defs)
    for i, t in enumerate(rs.tech_defs):
        for p in t.prerequisites:
            if not 0 <= p < n_techs:
                raise RulesetError(f"tech {t.name!r} prerequisite index {p} out of range")
        if t.cost < 0:
            raise RulesetError(f"tech {t.name!r} has negative cost")

    for u in rs.unit_defs:
        if u.obsoleted_by is not None and not 0 <= u.obsoleted_by < len(rs.unit_defs):
            raise RulesetError(f"unit {u.name!r} obsoleted_by index out of range")
        if u.required_tech is not None and not 0 <= u.required_tech < n_techs:
            raise RulesetError(f"unit {u.name!r} required_tech index out of range")
        for f in ("attack_strength", "defense_strength", "firepower", "max_hp",
                  "move_points", "produce_cost", "transport_capacity"):
            if getattr(u, f) < 0:
                raise RulesetError(f"unit {u.name!r} has negative {f}")

    for b in rs.building_defs:
        if b.required_tech is not None and not 0 <= b.required_tech < n_techs:
            raise RulesetError(f"building {b.name!r} required_tech index out of range")

    for t in rs.terrain_defs:
        if t.move_cost < 1:
            raise RulesetError(f"terrain {t.name!r} move_cost must be >= 1")
        if t.defense_bonus_pct < 1:
            raise RulesetError(f"terrain {t.name!r} defense_bonus_pct must be >= 1")

    for g in rs.government_defs:
        for f in ("max_luxury", "max_science", "max_tax"):
            v = getattr(g, f)
            if not 0 <= v <= 100:
                raise RulesetError(f"government {g.name!r} {f} must be in [0,100]")

    for i in rs.opening_units:
        if not 0 <= i < len(rs.unit_defs):
            raise RulesetError("opening unit index out of range")
    for i in rs.spaceship_buildings:
        if not 0 <= i < len(rs.building_defs):
            raise RulesetError("spaceship building index out of range")

    if not any(t.is_land for t in rs.terrain_defs):
        raise RulesetError("ruleset needs at least one land terrain")

    _check_tech_cycles(rs)


def _check_tech_cycles(rs: Ruleset) -> None:
    # Kahn's algorithm; leftovers mean a cycle.
    n = len(rs.tech_defs)
    indegree = [0] * n
    dependents: list[list[int]] = [[] for _ in range(n)]
    for i, t in enumerate(rs.tech_defs):
        indegree[i] = len(set(t.prerequisites))
        for p in set(t.prerequisites):
            dependents[p].append(i)
    queue = [i for i in range(n) if indegree[i] == 0]
    seen = 0
    while queue:
        i = queue.pop()
        seen += 1
        for d in dependents[i]:
            indegree[d] -= 1
            if indegree[d] == 0:
                queue.append(d)
    if seen != n:
        cyclic = sorted(i for i in range(n) if indegree[i] > 0)
        names = ", ".join(rs.tech_defs[i].name for i in cyclic[:4])
        raise RulesetError(f"tech cycle involving: {names}")


def tech_reachable(rs: Ruleset, known, goal: int) -> list[int]:
    """Topologically ordered unknown prerequisites ending at goal.

    `known` is a boolean sequence over tech indices. Returns [] when the
    goal is already known. Acyclicity is guaranteed by validation.
    """
    if not 0 <= goal < len(rs.tech_defs):
        raise ValueError(f"goal {goal} out of range")
    if known[goal]:
        return []
    order: list[int] = []
    visited: set[int] = set()

    def visit(i: int) -> None:
        if i in visited or known[i]:
            return
        visited.add(i)
        for p in sorted(set(rs.tech_defs[i].prerequisites)):
            visit(p)
        order.append(i)

    visit(goal)
    return order


def tech_depth(rs: Ruleset) -> list[int]:
    """Longest-prerequisite-chain depth per tech (roots have depth 0)."""
    n = len(rs.tech_defs)
    depth = [-1] * n

    def visit(i: int) -> int:
        if depth[i] >= 0:
            return depth[i]
        prereqs = rs.tech_defs[i].prerequisites
        depth[i] = 0 if not prereqs else 1 + max(visit(p) for p in set(prereqs))
        return depth[i]

    for i in range(n):
        visit(i)
    return depth


def _fmt_bool(v: bool) -> str:
    return "yes" if v else "no"


def serialize_ruleset(rs: Ruleset) -> str:
    """Render a ruleset back to the file format. Round-trips exactly."""
    out = io.StringIO()
    w = out.write
    w("[ruleset]\n")
    w(f"name = {rs.name}\n")
    w(f"version = {rs.version}\n\n")
    w("[diplomacy]\n")
    w(f"states = {', '.join(rs.diplomatic_states)}\n\n")
    w("[opening]\n")
    w(f"units = {', '.join(rs.unit_defs[i].name for i in rs.opening_units)}\n\n")
    if rs.spaceship_buildings:
        w("[victory]\n")
        w(f"spaceship = {', '.join(rs.building_defs[i].name for i in rs.spaceship_buildings)}\n\n")

    for t in rs.terrain_defs:
        w(f"[terrain:{t.name}]\n")
        w(f"move_cost = {t.move_cost}\n")
        w(f"food = {t.food}\nshield = {t.shield}\ntrade = {t.trade}\n")
        w(f"is_land = {_fmt_bool(t.is_land)}\n")
        if t.defense_bonus_pct != 100:
            w(f"defense_bonus_pct = {t.defense_bonus_pct}\n")
        w("\n")

    for u in rs.unit_defs:
        w(f"[unit:{u.name}]\n")
        w(f"attack = {u.attack_strength}\ndefense = {u.defense_strength}\n")
        w(f"firepower = {u.firepower}\nhp = {u.max_hp}\nmoves = {u.move_points}\n")
        w(f"cost = {u.produce_cost}\n")
        if u.can_transport:
            w(f"can_transport = yes\ntransport_capacity = {u.transport_capacity}\n")
        if u.obsoleted_by is not None:
            w(f"obsoleted_by = {rs.unit_defs[u.obsoleted_by].name}\n")
        if u.required_tech is not None:
            w(f"required_tech = {rs.tech_defs[u.required_tech].name}\n")
        for flag, key in (
            (u.is_military, "military"),
            (u.is_naval, "naval"),
            (u.is_settler, "settler"),
            (u.is_worker, "worker"),
        ):
            if flag:
                w(f"{key} = yes\n")
        if u.vision_radius != 2:
            w(f"vision_radius = {u.vision_radius}\n")
        w("\n")

    for b in rs.building_defs:
        w(f"[building:{b.name}]\n")
        w(f"cost = {b.cost}\nupkeep = {b.upkeep}\n")
        if b.is_wonder:
            w("wonder = yes\n")
        if b.required_tech is not None:
            w(f"required_tech = {rs.tech_defs[b.required_tech].name}\n")
        w("\n")

    for t in rs.tech_defs:
        w(f"[tech:{t.name}]\n")
        w(f"cost = {t.cost}\n")
        if t.prerequisites:
            w(f"requires = {', '.join(rs.tech_defs[p].name for p in t.prerequisites)}\n")
        w("\n")

    for g in rs.government_defs:
        w(f"[government:{g.name}]\n")
        w(f"max_luxury = {g.max_luxury}\nmax_science = {g.max_science}\nmax_tax = {g.max_tax}\n\n")

    return out.getvalue()


def ruleset_to_dict(rs: Ruleset) -> dict:
    """JSON-able form used inside save files and replays."""
    def defs(items):
        out = []
        for item in items:
            d = {}
            for f in fields(item):
                v = getattr(item, f.name)
                if isinstance(v, tuple):
                    v = list(v)
                d[f.name] = v
            out.append(d)
        return out

    return {
        "name": rs.name,
        "version": rs.version,
        "terrain_defs": defs(rs.terrain_defs),
        "unit_defs": defs(rs.unit_defs),
        "building_defs": defs(rs.building_defs),
        "tech_defs": defs(rs.tech_defs),
        "government_defs": defs(rs.government_defs),
        "diplomatic_states": list(rs.diplomatic_states),
        "opening_units": list(rs.opening_units),
        "spaceship_buildings": list(rs.spaceship_buildings),
    }


def ruleset_from_dict(data: dict) -> Ruleset:
    def build(cls, items):
        out = []
        for d in items:
            kwargs = dict(d)
            for k, v in kwargs.items():
                if isinstance(v, list):
                    kwargs[k] = tuple(v)
            out.append(cls(**kwargs))
        return tuple(out)

    rs = Ruleset(
        name=data["name"],
        version=int(data["version"]),
        terrain_defs=build(TerrainDef, data["terrain_defs"]),
        unit_defs=build(UnitDef, data["unit_defs"]),
        building_defs=build(BuildingDef, data["building_defs"]),
        tech_defs=build(TechDef, data["tech_defs"]),
        government_defs=build(GovernmentDef, data["government_defs"]),
        diplomatic_states=tuple(data["diplomatic_states"]),
        opening_units=tuple(data["opening_units"]),
        spaceship_buildings=tuple(data["spaceship_buildings"]),
    )
    validate_ruleset(rs)
    return rs


def builtin_ruleset_path(name: str) -> str:
    """Absolute path of a ruleset file shipped with the package.

    Built-in names are "mini" and "paper_scale".
    """
    return str(Path(__file__).resolve().parent / "data" / f"{name}.ruleset")
