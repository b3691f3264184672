"""Deterministic RNG stream for game states.

PCG32 keeps the serialized stream tiny (two 64-bit words plus a draw
counter) and behaves identically on every platform, which the replay and
conservation tests rely on. The draw counter counts logical draws
(one per randbelow/choice call), not raw generator steps.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_PCG_MULT = 6364136223846793005


def derive_seed(seed: int, label: str) -> int:
    """Derive an independent 64-bit subseed from a master seed and a label."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class GameRng:
    """PCG32 generator with a serializable state and a logical draw counter."""

    __slots__ = ("_state", "_inc", "draws")

    def __init__(self, seed: int, stream: int = 0):
        self._state = 0
        self._inc = ((stream << 1) | 1) & _MASK64
        self._step()
        self._state = (self._state + (seed & _MASK64)) & _MASK64
        self._step()
        self.draws = 0

    def _step(self) -> int:
        old = self._state
        self._state = (old * _PCG_MULT + self._inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n). Counts as one draw."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        self.draws += 1
        if n == 1:
            return 0
        # Classic rejection sampling keeps the distribution exactly uniform.
        limit = (1 << 32) - ((1 << 32) % n)
        while True:
            value = self._step()
            if value < limit:
                return value % n

    def choice(self, seq):
        if not seq:
            raise ValueError("choice on empty sequence")
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        """Fisher-Yates; n-1 logical draws for n items."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def chance(self, num: int, den: int) -> bool:
        """True with probability num/den (exact integer arithmetic)."""
        if den <= 0 or num < 0:
            raise ValueError("chance needs den >= 1 and num >= 0")
        return self.randbelow(den) < num

    def state_dict(self) -> dict:
        return {"state": self._state, "inc": self._inc, "draws": self.draws}

    @classmethod
    def from_state(cls, data: dict) -> "GameRng":
        rng = cls.__new__(cls)
        rng._state = int(data["state"]) & _MASK64
        rng._inc = int(data["inc"]) & _MASK64
        rng.draws = int(data["draws"])
        return rng

    def clone(self) -> "GameRng":
        return GameRng.from_state(self.state_dict())
