"""Combat resolution against an exact Markov-chain oracle."""

from fractions import Fraction
from functools import lru_cache

import pytest

from civarena.combat import (
    CombatOutcome,
    attack_power,
    defense_power,
    resolve_combat,
    VETERAN_SCALE,
)
from civarena.ruleset import UnitDef
from civarena.rng import GameRng


def make_unit_def(attack=1, defense=1, firepower=1, hp=10, name="Test"):
    return UnitDef(name=name, attack_strength=attack, defense_strength=defense,
                   firepower=firepower, max_hp=hp, move_points=1, produce_cost=10,
                   is_military=True)


class Body:
    """Minimal hp carrier standing in for a Unit."""

    def __init__(self, hp):
        self.hp = hp


def win_probability(a_power, d_power, a_fp, d_fp, a_hp, d_hp):
    """Exact attacker win probability via memoized recursion.

    Each round the attacker scores with probability a/(a+d); the loser
    takes the winner's firepower. Computed independently of the combat
    module, in exact rational arithmetic.
    """
    p = Fraction(a_power, a_power + d_power)

    @lru_cache(maxsize=None)
    def rec(ah, dh):
        if dh <= 0:
            return Fraction(1)
        if ah <= 0:
            return Fraction(0)
        return p * rec(ah, dh - a_fp) + (1 - p) * rec(ah - d_fp, dh)

    return rec(a_hp, d_hp)


def trial_frequency(a_power, d_power, a_def, d_def, a_hp, d_hp, trials, seed):
    rng = GameRng(seed)
    wins = 0
    for _ in range(trials):
        out = resolve_combat(Body(a_hp), Body(d_hp), a_def, d_def,
                             a_power, d_power, rng)
        if out.winner == "attacker":
            wins += 1
    return wins / trials


def test_reference_fixture_exact_oracle_value():
    # Powers 2 vs 1, firepower 1, both sides 2 hp.
    p = win_probability(2, 1, 1, 1, 2, 2)
    assert p == Fraction(20, 27)


def test_reference_fixture_frequency_within_tolerance():
    a_def = make_unit_def(firepower=1, hp=2)
    d_def = make_unit_def(firepower=1, hp=2)
    freq = trial_frequency(2, 1, a_def, d_def, 2, 2, 10_000, seed=99)
    assert abs(freq - 20 / 27) < 0.02


def test_symmetric_duel_frequency():
    # Equal powers and firepower = max hp: a single round decides.
    a_def = make_unit_def(firepower=10, hp=10)
    d_def = make_unit_def(firepower=10, hp=10)
    freq = trial_frequency(5, 5, a_def, d_def, 10, 10, 10_000, seed=7)
    assert abs(freq - 0.5) < 0.02


@pytest.mark.parametrize("a_power,d_power,a_fp,d_fp,a_hp,d_hp,seed", [
    (3, 1, 1, 1, 3, 3, 1),
    (1, 3, 2, 1, 4, 5, 2),
    (4, 4, 3, 2, 6, 6, 3),
    (2, 5, 1, 2, 5, 3, 4),
])
def test_fuzzed_fixtures_match_oracle(a_power, d_power, a_fp, d_fp, a_hp, d_hp, seed):
    expect = float(win_probability(a_power, d_power, a_fp, d_fp, a_hp, d_hp))
    a_def = make_unit_def(firepower=a_fp, hp=a_hp)
    d_def = make_unit_def(firepower=d_fp, hp=d_hp)
    freq = trial_frequency(a_power, d_power, a_def, d_def, a_hp, d_hp,
                           10_000, seed=seed)
    assert abs(freq - expect) < 0.02


def test_zero_attack_power_always_loses():
    a_def = make_unit_def(attack=0)
    d_def = make_unit_def()
    rng = GameRng(5)
    for _ in range(50):
        out = resolve_combat(Body(10), Body(10), a_def, d_def, 0, 100, rng)
        assert out.winner == "defender"
        assert out.attacker_hp == 0
        assert out.defender_hp == 10  # zero attacker round wins


def test_loser_hp_zero_and_draws_equal_rounds():
    a_def = make_unit_def(firepower=3, hp=7)
    d_def = make_unit_def(firepower=2, hp=9)
    rng = GameRng(11)
    for _ in range(200):
        before = rng.draws
        out = resolve_combat(Body(7), Body(9), a_def, d_def, 120, 80, rng)
        assert out.draws == out.rounds == rng.draws - before
        if out.winner == "attacker":
            assert out.defender_hp == 0 and out.attacker_hp > 0
        else:
            assert out.attacker_hp == 0 and out.defender_hp > 0


def test_power_formulas_scaled_integers():
    udef = make_unit_def(attack=4, defense=3)
    assert attack_power(udef, veteran=False) == 4 * 2 * 2 * 100 * 100
    assert attack_power(udef, veteran=True) == 4 * 3 * 2 * 100 * 100
    assert defense_power(udef, veteran=False, fortified=False) == 3 * 2 * 2 * 100 * 100
    # Veteran and fortification each scale by 3/2; terrain and walls by pct.
    assert defense_power(udef, veteran=True, fortified=True,
                         terrain_pct=150, walls_pct=300) == 3 * 3 * 3 * 150 * 300
    assert VETERAN_SCALE[True] * 2 == VETERAN_SCALE[False] * 3


def test_cannot_terminate_guard():
    # Neither side can deal damage: attacker has zero power, defender has
    # zero firepower.
    a_def = make_unit_def(attack=0, firepower=1)
    d_def = make_unit_def(firepower=0)
    with pytest.raises(ValueError):
        resolve_combat(Body(5), Body(5), a_def, d_def, 0, 10, GameRng(1))
    with pytest.raises(ValueError):
        resolve_combat(Body(5), Body(5), a_def, d_def, 0, 0, GameRng(1))


def test_outcome_is_plain_record():
    out = CombatOutcome(winner="attacker", rounds=3, attacker_hp=2,
                        defender_hp=0, draws=3)
    assert out.rounds == out.draws
