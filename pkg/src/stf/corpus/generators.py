"""Seeded synthetic datasets for the three shipped scenarios.

All randomness comes from :class:`~stf.ml.prng.SplitMix64`, so a given
``(seed, n)`` always yields the same bytes.

pingpong  ``ip_block,hour,attacker``
    ip_block uniform in 0..255, hour uniform in 0..23.  attacker is true iff
    ip_block >= 200 and hour <= 5, then flipped with probability 0.02.
nialm     ``t,aggregate,app1_on,app2_on``
    app1 (1000 W) is on when ``t % 40 < 20``; app2 (400 W) is on when
    ``t % 70 < 21``.  aggregate = 100 W base + appliances + N(0, 20^2),
    rounded to 0.1 W.
prices    ``t,price``
    p_t = s_t + 0.8 (p_{t-1} - s_{t-1}) + N(0, 1) with the daily profile
    s_t = 50 + 10 sin(2 pi t / 24) and p_0 = 50; rounded to 1e-4.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Union

from stf.ml.dataset import format_cell
from stf.ml.prng import SplitMix64

FLIP_RATE = 0.02
NIALM_SIGMA = 20.0
PRICE_AR = 0.8


class GeneratorError(ValueError):
    pass


def attacker_rule(ip_block: int, hour: int) -> bool:
    return 200 <= ip_block <= 255 and 0 <= hour <= 5


def gen_pingpong(seed: int = 0, n: int = 1000) -> list[tuple]:
    if n < 20:
        raise GeneratorError("pingpong needs n >= 20")
    rng = SplitMix64(seed)
    rows = []
    for _ in range(n):
        ip = rng.below(256)
        hour = rng.below(24)
        label = attacker_rule(ip, hour)
        if rng.random() < FLIP_RATE:
            label = not label
        rows.append((ip, hour, label))
    return rows


def app1_on(t: int) -> bool:
    return t % 40 < 20


def app2_on(t: int) -> bool:
    return t % 70 < 21


def nialm_level(t: int) -> float:
    return 100.0 + (1000.0 if app1_on(t) else 0.0) + (400.0 if app2_on(t) else 0.0)


def gen_nialm(seed: int = 0, n: int = 2000) -> list[tuple]:
    if n < 200:
        raise GeneratorError("nialm needs T >= 200")
    rng = SplitMix64(seed)
    return [(t, round(nialm_level(t) + rng.normal(0.0, NIALM_SIGMA), 1), app1_on(t), app2_on(t))
            for t in range(n)]


def price_profile(t: int) -> float:
    return 50.0 + 10.0 * math.sin(2 * math.pi * t / 24)


def gen_prices(seed: int = 0, n: int = 2000, noise: float = 1.0, ar: float = PRICE_AR) -> \
        list[tuple]:
    if n < 200:
        raise GeneratorError("prices needs T >= 200")
    rng = SplitMix64(seed)
    p = 50.0
    rows = [(0, p)]
    for t in range(1, n):
        eps = rng.normal(0.0, noise) if noise else 0.0
        p = price_profile(t) + ar * (p - price_profile(t - 1)) + eps
        rows.append((t, round(p, 4)))
    return rows


GENERATORS = {
    "pingpong": (gen_pingpong, ("ip_block", "hour", "attacker")),
    "nialm": (gen_nialm, ("t", "aggregate", "app1_on", "app2_on")),
    "prices": (gen_prices, ("t", "price")),
}


def to_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(format_cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def synth(name: str, seed: int = 0, n: int = 1000) -> str:
    """CSV text of a named generator."""
    if name not in GENERATORS:
        raise GeneratorError(f"unknown scenario '{name}' (known: {', '.join(GENERATORS)})")
    fn, header = GENERATORS[name]
    return to_csv(header, fn(seed, n))


def write_synth(name: str, path: Union[str, Path], seed: int = 0, n: int = 1000) -> Path:
    path = Path(path)
    path.write_text(synth(name, seed, n), encoding="utf-8", newline="")
    return path
