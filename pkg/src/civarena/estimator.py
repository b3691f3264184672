"""Combinatorial state and action space size estimates.

Two reference scenarios are covered: the opening position after five
turns (2 settlers, 2 workers, 1 explorer on a large map), counted as
exact integers, and a midgame position (default 100 units, 50 cities)
whose sizes only fit as base-10 logarithms.

All integer arithmetic is exact; logarithms are taken last. The
midgame action bound composes per-group contributions rounded up to
whole powers of ten, so the reported exponent is the sum of whole
decades, one per group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

# Opening-scenario geometry: one move per turn for five turns spans an
# 11x11 square (121 tiles); founding a city on the way reaches a 9x9
# square (81 tiles). A fresh city has 5 build options and 24 working
# options. The explorer covers 3 tiles per turn, a 31x31 square.
SETTLER_POSITIONS = 121
CITY_POSITIONS = 81
CITY_BUILD_OPTIONS = 5
CITY_WORK_OPTIONS = 24
WORKER_POSITIONS = 121
WORKER_JOB_STATES = 81 * 3
EXPLORER_SPAN = 31
# Ordered pairs of prospective city sites that collide (cities founded
# too close to each other), removed from the two-settler square.
CITY_CONFLICT_PAIRS = 1521

# Joint action count for the opening configuration. The count bundles
# an averaging assumption ("two working options on each tile on
# average") that does not decompose into the per-unit move counts, so
# it is kept as a single reference constant.
TURN0_ACTION_COUNT = 19800


@dataclass(frozen=True)
class SpaceEstimate:
    """Exact integers for the opening scenario, log10 reals for midgame."""

    settlers_states: int = 0
    workers_states: int = 0
    explorer_states: int = 0
    turn5_total_states: int = 0
    turn5_actions: int = 0
    late_state_log10: float = 0.0
    late_action_log10: float = 0.0
    inputs: dict = field(default_factory=dict)


def estimate_turn5() -> SpaceEstimate:
    """Exact opening-position space sizes after five turns."""
    single_settler = SETTLER_POSITIONS + (
        CITY_POSITIONS * CITY_BUILD_OPTIONS * CITY_WORK_OPTIONS)
    city_states = CITY_POSITIONS * CITY_BUILD_OPTIONS * CITY_WORK_OPTIONS
    # Square the single-settler count for the pair, drop the colliding
    # city placements and the duplicated bare-settler diagonal, and
    # halve because the settlers are interchangeable.
    settlers = (single_settler * single_settler
                - CITY_CONFLICT_PAIRS * CITY_BUILD_OPTIONS * CITY_WORK_OPTIONS
                - SETTLER_POSITIONS) // 2
    single_worker = WORKER_POSITIONS + WORKER_JOB_STATES
    workers = (single_worker * single_worker
               - WORKER_POSITIONS - WORKER_JOB_STATES) // 2
    explorer = EXPLORER_SPAN * EXPLORER_SPAN
    total = settlers * workers * explorer
    return SpaceEstimate(
        settlers_states=settlers,
        workers_states=workers,
        explorer_states=explorer,
        turn5_total_states=total,
        turn5_actions=TURN0_ACTION_COUNT,
        inputs={
            "turns": 5,
            "settler_positions": SETTLER_POSITIONS,
            "city_positions": CITY_POSITIONS,
            "city_build_options": CITY_BUILD_OPTIONS,
            "city_work_options": CITY_WORK_OPTIONS,
            "city_states": city_states,
            "explorer_span": EXPLORER_SPAN,
        },
    )


def _whole_decades(count: int, options: int) -> int:
    """Smallest d with options**count <= 10**d."""
    if count == 0:
        return 0
    return math.ceil(count * math.log10(options))


def estimate_midgame(land_tiles: int = 2000, units: int = 100,
                     cities: int = 50, placements_per_city: int = 10,
                     improvements_per_city: int = 20,
                     producible_per_city: int = 20,
                     unit_action_base: int = 10) -> SpaceEstimate:
    """Midgame lower bounds as base-10 logarithms.

    States: each unit may stand on half the land, each city keeps one
    of `placements_per_city` sites and any subset of its improvements.
    Actions: `unit_action_base` choices per unit and one production
    pick per city, each group widened to a whole power of ten.
    """
    if units < 0 or cities < 0:
        raise ValueError("unit and city counts must not be negative")
    if land_tiles < 2:
        raise ValueError("need at least two land tiles")
    if min(placements_per_city, improvements_per_city,
           producible_per_city, unit_action_base) < 1:
        raise ValueError("per-entity option counts must be at least 1")

    state_log10 = (units * math.log10(land_tiles / 2)
                   + cities * math.log10(placements_per_city)
                   + cities * improvements_per_city * math.log10(2))
    action_log10 = float(
        _whole_decades(units, unit_action_base)
        + _whole_decades(cities, producible_per_city))
    return SpaceEstimate(
        late_state_log10=state_log10,
        late_action_log10=action_log10,
        inputs={
            "land_tiles": land_tiles,
            "units": units,
            "cities": cities,
            "placements_per_city": placements_per_city,
            "improvements_per_city": improvements_per_city,
            "producible_per_city": producible_per_city,
            "unit_action_base": unit_action_base,
        },
    )


def report_lines(estimate: SpaceEstimate) -> list:
    """Plain-text table rows for the CLI."""
    rows = []
    if estimate.turn5_total_states:
        rows.append(("settlers_states", str(estimate.settlers_states)))
        rows.append(("workers_states", str(estimate.workers_states)))
        rows.append(("explorer_states", str(estimate.explorer_states)))
        rows.append(("turn5_total_states",
                     f"{estimate.turn5_total_states} "
                     f"(10^{math.log10(estimate.turn5_total_states):.2f})"))
        rows.append(("turn5_actions", str(estimate.turn5_actions)))
    else:
        rows.append(("late_state_log10",
                     f"{estimate.late_state_log10:.2f}"))
        rows.append(("late_action_log10",
                     f"{estimate.late_action_log10:.2f}"))
    for key, value in sorted(estimate.inputs.items()):
        rows.append((f"input.{key}", str(value)))
    width = max(len(k) for k, _ in rows)
    return [f"{key.ljust(width)}  {value}" for key, value in rows]
