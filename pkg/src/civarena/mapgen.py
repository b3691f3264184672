"""Seeded terrain generation: fractal heightmap, climate bands, starts.

The generator only consumes randomness from its own derived stream, so
map layout never perturbs in-game stochastic draws. Terrain kinds are
looked up by name with graceful fallbacks, letting small rulesets that
lack e.g. deserts still generate sensible maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import GameRng, derive_seed
from .ruleset import INFRA_INDEX, Ruleset


@dataclass
class MapBuild:
    terrain: np.ndarray
    infra: np.ndarray
    start_positions: list


class MapGenError(ValueError):
    pass


def _noise_layer(rng: GameRng, width: int, height: int, cells: int) -> np.ndarray:
    """Bilinear value noise on a (cells+1)^2 lattice, scaled to the map."""
    lattice = np.array(
        [[rng.randbelow(65536) for _y in range(cells + 1)] for _x in range(cells + 1)],
        dtype=np.float64,
    ) / 65535.0
    xs = np.linspace(0.0, cells, width)
    ys = np.linspace(0.0, cells, height)
    x0 = np.minimum(xs.astype(np.int64), cells - 1)
    y0 = np.minimum(ys.astype(np.int64), cells - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[None, :]
    a = lattice[np.ix_(x0, y0)]
    b = lattice[np.ix_(x0 + 1, y0)]
    c = lattice[np.ix_(x0, y0 + 1)]
    d = lattice[np.ix_(x0 + 1, y0 + 1)]
    return a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + c * (1 - fx) * fy + d * fx * fy


def _fractal(rng: GameRng, width: int, height: int) -> np.ndarray:
    total = np.zeros((width, height), dtype=np.float64)
    amplitude = 1.0
    norm = 0.0
    for cells in (3, 6, 12):
        total += amplitude * _noise_layer(rng, width, height, cells)
        norm += amplitude
        amplitude *= 0.5
    return total / norm


def _terrain_picker(ruleset: Ruleset):
    by_name = {t.name: i for i, t in enumerate(ruleset.terrain_defs)}
    first_land = next(i for i, t in enumerate(ruleset.terrain_defs) if t.is_land)
    first_water = next(
        (i for i, t in enumerate(ruleset.terrain_defs) if not t.is_land), first_land
    )

    def pick(*names: str, land: bool = True) -> int:
        for name in names:
            if name in by_name:
                return by_name[name]
        return first_land if land else first_water

    return pick


def generate_map(ruleset: Ruleset, config) -> MapBuild:
    """Deterministic map build for (ruleset, config.seed)."""
    width, height = config.width, config.height
    rng = GameRng(derive_seed(config.seed, "mapgen"))
    pick = _terrain_picker(ruleset)

    elevation = _fractal(rng, width, height)
    moisture = _fractal(rng, width, height)

    n_tiles = width * height
    land_count = max(1, min(n_tiles - 1, round(config.land_fraction * n_tiles)))
    threshold = np.sort(elevation.reshape(-1))[n_tiles - land_count]
    land = elevation >= threshold

    terrain = np.zeros((width, height), dtype=np.int8)
    infra = np.zeros((width, height), dtype=np.uint64)

    water_elev = elevation[~land]
    deep_cut = np.quantile(water_elev, 0.35) if water_elev.size else 0.0
    land_elev = elevation[land]
    mountain_cut = np.quantile(land_elev, 0.90) if land_elev.size else 1.0
    hill_cut = np.quantile(land_elev, 0.72) if land_elev.size else 1.0

    ys = np.arange(height, dtype=np.float64)
    latitude = np.abs(2.0 * ys / max(1, height - 1) - 1.0)  # 0 equator, 1 pole

    for x in range(width):
        for y in range(height):
            lat = latitude[y]
            elev = elevation[x, y]
            wet = moisture[x, y]
            if not land[x, y]:
                terrain[x, y] = (
                    pick("Deep Ocean", "Ocean", land=False)
                    if elev < deep_cut
                    else pick("Ocean", land=False)
                )
                continue
            if lat > 0.92:
                terrain[x, y] = pick("Glacier", "Tundra", "Hills")
            elif lat > 0.80:
                terrain[x, y] = pick("Tundra", "Plains")
            elif elev >= mountain_cut:
                terrain[x, y] = pick("Mountains", "Hills")
            elif elev >= hill_cut:
                terrain[x, y] = pick("Hills", "Mountains")
            elif wet > 0.72:
                if lat < 0.25:
                    terrain[x, y] = pick("Jungle", "Forest")
                elif wet > 0.82:
                    terrain[x, y] = pick("Swamp", "Forest")
                else:
                    terrain[x, y] = pick("Forest", "Grassland")
            elif wet < 0.30 and lat < 0.55:
                terrain[x, y] = pick("Desert", "Steppe", "Plains")
            elif wet >= 0.52:
                terrain[x, y] = pick("Grassland", "Plains")
            elif wet >= 0.40:
                terrain[x, y] = pick("Plains", "Grassland")
            else:
                terrain[x, y] = pick("Steppe", "Plains")

    _small_lakes(ruleset, terrain, pick)
    _carve_rivers(rng, terrain, elevation, infra, ruleset)
    _scatter_huts(rng, terrain, infra, ruleset)
    _scatter_specials(rng, terrain, infra, ruleset)

    starts = _start_positions(rng, ruleset, terrain, config.players)
    return MapBuild(terrain=terrain, infra=infra, start_positions=starts)


def _small_lakes(ruleset: Ruleset, terrain: np.ndarray, pick) -> None:
    """Relabel tiny enclosed water bodies as lakes (4-connected, ≤4 tiles)."""
    lake = pick("Lake", land=False)
    water_ids = {i for i, t in enumerate(ruleset.terrain_defs) if not t.is_land}
    if ruleset.terrain_defs[lake].is_land:
        return
    width, height = terrain.shape
    seen = np.zeros_like(terrain, dtype=bool)
    for x in range(width):
        for y in range(height):
            if seen[x, y] or int(terrain[x, y]) not in water_ids:
                continue
            component = [(x, y)]
            seen[x, y] = True
            queue = [(x, y)]
            while queue:
                cx, cy = queue.pop()
                for nx, ny in ((cx + 1, cy), (cx - 1, cy), (cx, cy + 1), (cx, cy - 1)):
                    if 0 <= nx < width and 0 <= ny < height and not seen[nx, ny] \
                            and int(terrain[nx, ny]) in water_ids:
                        seen[nx, ny] = True
                        component.append((nx, ny))
                        queue.append((nx, ny))
            if len(component) <= 4:
                for cx, cy in component:
                    terrain[cx, cy] = lake


def _land_mask(ruleset: Ruleset, terrain: np.ndarray) -> np.ndarray:
    land_ids = [i for i, t in enumerate(ruleset.terrain_defs) if t.is_land]
    return np.isin(terrain, land_ids)


def _carve_rivers(rng: GameRng, terrain: np.ndarray, elevation: np.ndarray,
                  infra: np.ndarray, ruleset: Ruleset) -> None:
    river_bit = np.uint64(1 << INFRA_INDEX["river"])
    land = _land_mask(ruleset, terrain)
    coords = [(x, y) for x in range(terrain.shape[0]) for y in range(terrain.shape[1])
              if land[x, y]]
    if not coords:
        return
    coords.sort(key=lambda c: -elevation[c])
    sources = coords[: max(1, len(coords) // 4)]
    for _ in range(max(1, terrain.size // 80)):
        x, y = sources[rng.randbelow(len(sources))]
        for _step in range(20):
            if not land[x, y]:
                break
            infra[x, y] |= river_bit
            options = []
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == 0 and dy == 0:
                        continue
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < terrain.shape[0] and 0 <= ny < terrain.shape[1]:
                        if not (int(infra[nx, ny]) & int(river_bit)):
                            options.append((elevation[nx, ny], nx, ny))
            if not options:
                break
            options.sort()
            x, y = options[0][1], options[0][2]


def _scatter_huts(rng: GameRng, terrain: np.ndarray, infra: np.ndarray,
                  ruleset: Ruleset) -> None:
    hut_bit = np.uint64(1 << INFRA_INDEX["hut"])
    land = _land_mask(ruleset, terrain)
    coords = [(x, y) for x in range(terrain.shape[0]) for y in range(terrain.shape[1])
              if land[x, y]]
    target = len(coords) // 40
    for _ in range(target):
        x, y = coords[rng.randbelow(len(coords))]
        infra[x, y] |= hut_bit


def _scatter_specials(rng: GameRng, terrain: np.ndarray, infra: np.ndarray,
                      ruleset: Ruleset) -> None:
    bits = [np.uint64(1 << INFRA_INDEX[n])
            for n in ("special_food", "special_shield", "special_trade")]
    land = _land_mask(ruleset, terrain)
    for x in range(terrain.shape[0]):
        for y in range(terrain.shape[1]):
            if land[x, y] and rng.chance(1, 16):
                infra[x, y] |= bits[rng.randbelow(3)]


def _start_positions(rng: GameRng, ruleset: Ruleset, terrain: np.ndarray,
                     players: int) -> list:
    """Greedy max-min spread of start tiles over hospitable land."""
    land = _land_mask(ruleset, terrain)
    width, height = terrain.shape
    scores = {}
    for x in range(width):
        for y in range(height):
            if not land[x, y]:
                continue
            tdef = ruleset.terrain_defs[int(terrain[x, y])]
            if tdef.food + tdef.shield == 0:
                continue
            neighbors = sum(
                1
                for dx in (-1, 0, 1)
                for dy in (-1, 0, 1)
                if (dx or dy)
                and 0 <= x + dx < width
                and 0 <= y + dy < height
                and land[x + dx, y + dy]
            )
            if neighbors >= 2:
                scores[(x, y)] = neighbors
    candidates = sorted(scores)
    if not candidates:
        candidates = sorted(
            (x, y) for x in range(width) for y in range(height) if land[x, y]
        )
    if len(candidates) < players:
        raise MapGenError("not enough land for start positions")
    chosen = [candidates[rng.randbelow(len(candidates))]]
    while len(chosen) < players:
        best = None
        best_dist = -1
        for cand in candidates:
            if cand in chosen:
                continue
            dist = min(max(abs(cand[0] - c[0]), abs(cand[1] - c[1])) for c in chosen)
            if dist > best_dist:
                best = cand
                best_dist = dist
        chosen.append(best)
    return chosen
