"""Bundled benchmark domains: ground-truth models, instances, state samplers.

Each fixture couples a domain file shipped under data/ with an instance
maker and an initial-state sampler. Samplers return legal states only, and
every shipped domain is dead-end free from its sampled states, so random
walks of any length succeed.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np

from .ground import GroundIndex, Proposition
from .pddl import parse_domain, parse_problem
from .types import Domain, DomainError, Instance, LiftedModel

StateSampler = Callable[[GroundIndex, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class DomainFixture:
    key: str
    domain: Domain
    model: LiftedModel
    make_instance: Callable[..., Instance]
    sample_state: StateSampler
    default_sizes: dict[str, int]

    def default_instance(self) -> Instance:
        return self.make_instance(**self.default_sizes)


def _read_data(filename: str) -> str:
    return resources.files("liftfix.strips").joinpath("data", filename).read_text()


def load_domain_file(filename: str) -> tuple[Domain, LiftedModel]:
    """Parse a domain file shipped under data/."""
    return parse_domain(_read_data(filename))


def load_problem_file(filename: str, domain: Domain) -> Instance:
    _, instance = parse_problem(_read_data(filename), domain)
    return instance


def _empty(idx: GroundIndex) -> np.ndarray:
    return np.zeros(idx.n_props, dtype=bool)


def _on(idx: GroundIndex, state: np.ndarray, pred: str, *objs: str) -> None:
    p = Proposition(idx.domain.predicate(pred), objs)
    state[idx.prop_index[p]] = True


def _pick(rng: np.random.Generator, items: list[str]) -> str:
    return items[int(rng.integers(len(items)))]


# Blocksworld


def make_blocksworld(domain: Domain, blocks: int = 5) -> Instance:
    return Instance(domain, {f"b{i}": "object" for i in range(1, blocks + 1)})


def sample_blocksworld(idx: GroundIndex, rng: np.random.Generator) -> np.ndarray:
    """Arm empty, blocks arranged into uniformly assembled random towers."""
    state = _empty(idx)
    order = list(idx.instance.objects_of_type("object"))
    rng.shuffle(order)
    towers: list[list[str]] = []
    for block in order:
        # Slot 0 starts a fresh tower; slot i+1 goes on top of tower i.
        slot = int(rng.integers(len(towers) + 1))
        if slot == 0:
            towers.append([block])
        else:
            towers[slot - 1].append(block)
    _on(idx, state, "arm-empty")
    for tower in towers:
        _on(idx, state, "on-table", tower[0])
        _on(idx, state, "clear", tower[-1])
        for below, above in zip(tower, tower[1:]):
            _on(idx, state, "on", above, below)
    return state


# Gripper


def make_gripper(domain: Domain, balls: int = 6, grippers: int = 2, rooms: int = 2) -> Instance:
    objects: dict[str, str] = {}
    objects.update({f"room{i}": "room" for i in range(1, rooms + 1)})
    objects.update({f"ball{i}": "ball" for i in range(1, balls + 1)})
    objects.update({f"g{i}": "gripper" for i in range(1, grippers + 1)})
    return Instance(domain, objects)


def sample_gripper(idx: GroundIndex, rng: np.random.Generator) -> np.ndarray:
    """Robot in a random room, balls in random rooms, all grippers free."""
    state = _empty(idx)
    inst = idx.instance
    rooms = inst.objects_of_type("room")
    _on(idx, state, "at-robby", _pick(rng, rooms))
    for ball in inst.objects_of_type("ball"):
        _on(idx, state, "at", ball, _pick(rng, rooms))
    for g in inst.objects_of_type("gripper"):
        _on(idx, state, "free", g)
    return state


# Hanoi


def make_hanoi(domain: Domain, discs: int = 4, pegs: int = 3) -> Instance:
    objects: dict[str, str] = {}
    objects.update({f"d{i}": "disc" for i in range(1, discs + 1)})
    objects.update({f"peg{i}": "object" for i in range(1, pegs + 1)})
    return Instance(domain, objects)


def sample_hanoi(idx: GroundIndex, rng: np.random.Generator) -> np.ndarray:
    """Discs stacked legally on random pegs, size facts set throughout.

    Disc size follows name order (natural sort, shortest name smallest), so
    d1 is the smallest. Every disc counts as smaller than every peg.
    """
    state = _empty(idx)
    objs = idx.instance.objects
    discs = sorted((o for o, t in objs.items() if t == "disc"), key=lambda o: (len(o), o))
    pegs = sorted(o for o, t in objs.items() if t != "disc")
    for i, d in enumerate(discs):
        for bigger in discs[i + 1 :]:
            _on(idx, state, "smaller", d, bigger)
        for peg in pegs:
            _on(idx, state, "smaller", d, peg)
    top = {peg: peg for peg in pegs}
    for d in reversed(discs):
        peg = _pick(rng, pegs)
        _on(idx, state, "on", d, top[peg])
        top[peg] = d
    for t in top.values():
        _on(idx, state, "clear", t)
    return state


# Logistics


def make_logistics(
    domain: Domain,
    cities: int = 2,
    airports: int = 2,
    locations: int = 2,
    trucks: int = 2,
    airplanes: int = 2,
    packages: int = 6,
) -> Instance:
    """Logistics instance; `locations` counts the plain (non-airport) ones."""
    if airports < cities:
        raise DomainError("need at least one airport per city")
    objects: dict[str, str] = {}
    objects.update({f"c{i}": "city" for i in range(1, cities + 1)})
    objects.update({f"a{i}": "airport" for i in range(1, airports + 1)})
    objects.update({f"l{i}": "location" for i in range(1, locations + 1)})
    objects.update({f"t{i}": "truck" for i in range(1, trucks + 1)})
    objects.update({f"pl{i}": "airplane" for i in range(1, airplanes + 1)})
    objects.update({f"p{i}": "obj" for i in range(1, packages + 1)})
    return Instance(domain, objects)


def _city_locations(inst: Instance) -> dict[str, list[str]]:
    """Static topology: airports, then plain locations, round-robin by city."""
    cities = inst.objects_of_type("city")
    airports = inst.objects_of_type("airport")
    plain = [l for l in inst.objects_of_type("location") if l not in set(airports)]
    by_city: dict[str, list[str]] = {c: [] for c in cities}
    for i, a in enumerate(airports):
        by_city[cities[i % len(cities)]].append(a)
    for i, l in enumerate(plain):
        by_city[cities[i % len(cities)]].append(l)
    return by_city


def sample_logistics(idx: GroundIndex, rng: np.random.Generator) -> np.ndarray:
    """Fixed city topology; vehicles and packages at random locations."""
    state = _empty(idx)
    inst = idx.instance
    cities = inst.objects_of_type("city")
    by_city = _city_locations(inst)
    for c, locs in by_city.items():
        for l in locs:
            _on(idx, state, "in-city", c, l)
    for i, truck in enumerate(inst.objects_of_type("truck")):
        _on(idx, state, "at", _pick(rng, by_city[cities[i % len(cities)]]), truck)
    airports = inst.objects_of_type("airport")
    for plane in inst.objects_of_type("airplane"):
        _on(idx, state, "at", _pick(rng, airports), plane)
    locations = inst.objects_of_type("location")
    for package in inst.objects_of_type("obj"):
        _on(idx, state, "at", _pick(rng, locations), package)
    return state


# Sliding 8-puzzle


def make_eight_puzzle(domain: Domain, side: int = 3) -> Instance:
    if not 2 <= side <= 9:
        raise DomainError("side must be in 2..9 (single-digit grid coordinates)")
    objects: dict[str, str] = {}
    objects.update({f"t{i}": "tile" for i in range(1, side * side)})
    objects.update(
        {f"p{r}{c}": "position" for r in range(1, side + 1) for c in range(1, side + 1)}
    )
    return Instance(domain, objects)


def sample_eight_puzzle(idx: GroundIndex, rng: np.random.Generator) -> np.ndarray:
    """Random tile arrangement; symmetric neighbor facts from the p{r}{c} grid."""
    state = _empty(idx)
    inst = idx.instance
    tiles = sorted(inst.objects_of_type("tile"), key=lambda o: (len(o), o))
    positions = inst.objects_of_type("position")
    coord = {p: (int(p[1]), int(p[2])) for p in positions}
    for p in positions:
        for q in positions:
            if abs(coord[p][0] - coord[q][0]) + abs(coord[p][1] - coord[q][1]) == 1:
                _on(idx, state, "neighbor", p, q)
    shuffled = [positions[i] for i in rng.permutation(len(positions))]
    _on(idx, state, "blank", shuffled[-1])
    for tile, pos in zip(tiles, shuffled):
        _on(idx, state, "at", pos, tile)
    return state


_SPECS: dict[str, tuple[str, Callable[..., Instance], StateSampler, dict[str, int]]] = {
    "blocksworld": ("blocks.pddl", make_blocksworld, sample_blocksworld, {"blocks": 5}),
    "gripper": (
        "gripper.pddl",
        make_gripper,
        sample_gripper,
        {"balls": 6, "grippers": 2, "rooms": 2},
    ),
    "hanoi": ("hanoi.pddl", make_hanoi, sample_hanoi, {"discs": 4, "pegs": 3}),
    "logistics": (
        "logistics.pddl",
        make_logistics,
        sample_logistics,
        {
            "cities": 2,
            "airports": 2,
            "locations": 2,
            "trucks": 2,
            "airplanes": 2,
            "packages": 6,
        },
    ),
    "eight-puzzle": ("eight_puzzle.pddl", make_eight_puzzle, sample_eight_puzzle, {"side": 3}),
}

FIXTURE_KEYS = tuple(_SPECS)

_CACHE: dict[str, DomainFixture] = {}


def fixture(key: str) -> DomainFixture:
    """Load (and cache) a bundled domain fixture by key."""
    if key not in _SPECS:
        raise KeyError(f"unknown domain {key!r}; available: {', '.join(FIXTURE_KEYS)}")
    if key not in _CACHE:
        filename, maker, sampler, sizes = _SPECS[key]
        domain, model = load_domain_file(filename)

        def make(_domain=domain, _maker=maker, **kwargs):
            return _maker(_domain, **kwargs)

        _CACHE[key] = DomainFixture(
            key=key,
            domain=domain,
            model=model,
            make_instance=make,
            sample_state=sampler,
            default_sizes=sizes,
        )
    return _CACHE[key]
