"""Round-based combat resolution with exact integer win odds.

Each round the attacker wins with probability A/(A+D) where A and D are
integer powers scaled so that veteran (x1.5), fortification (x1.5),
terrain bonuses, and city walls (x3) never need fractions. The round
loser takes the winner's firepower in damage; the fight ends when one
side's hp reaches zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from .rng import GameRng
from .ruleset import UnitDef

# Scale slots: strength x veteran(2|3) x fortify(2|3) x terrain_pct x walls_pct.
# The attacker has no fortify/terrain/walls modifiers, so its fixed slots
# keep both sides on the same scale.
VETERAN_SCALE = {False: 2, True: 3}


def attack_power(udef: UnitDef, veteran: bool) -> int:
    return udef.attack_strength * VETERAN_SCALE[veteran] * 2 * 100 * 100


def defense_power(udef: UnitDef, veteran: bool, fortified: bool,
                  terrain_pct: int = 100, walls_pct: int = 100) -> int:
    fort = 3 if fortified else 2
    return udef.defense_strength * VETERAN_SCALE[veteran] * fort * terrain_pct * walls_pct


@dataclass
class CombatOutcome:
    winner: str
    rounds: int
    attacker_hp: int
    defender_hp: int
    draws: int


def resolve_combat(attacker, defender, attacker_def: UnitDef, defender_def: UnitDef,
                   a_power: int, d_power: int, rng: GameRng) -> CombatOutcome:
    """Fight to the death; consumes exactly one rng draw per round."""
    if a_power < 0 or d_power < 0:
        raise ValueError("combat powers must be non-negative")
    if a_power + d_power == 0:
        raise ValueError("at least one side needs positive power")
    can_kill_defender = a_power > 0 and attacker_def.firepower > 0
    can_kill_attacker = d_power > 0 and defender_def.firepower > 0
    if not (can_kill_defender or can_kill_attacker):
        raise ValueError("combat cannot terminate: no side can deal damage")
    a_hp, d_hp = attacker.hp, defender.hp
    rounds = 0
    while a_hp > 0 and d_hp > 0:
        rounds += 1
        if rng.randbelow(a_power + d_power) < a_power:
            d_hp -= attacker_def.firepower
        else:
            a_hp -= defender_def.firepower
    winner = "attacker" if d_hp <= 0 else "defender"
    return CombatOutcome(
        winner=winner,
        rounds=rounds,
        attacker_hp=max(0, a_hp),
        defender_hp=max(0, d_hp),
        draws=rounds,
    )
