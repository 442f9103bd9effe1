"""Named random streams derived from one master seed.

Each stochastic concern (arrivals, sizes, routing, burst phases, ...) gets
its own ``random.Random``. The stream seed is

    splitmix64((master mod 2**64) XOR splitmix64(fnv1a64(name)))

so drawing more numbers from one stream never shifts another, and runs
with the same master seed see the same arrivals whatever the controller does.
"""

from __future__ import annotations

import random

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def stream_seed(master: int, name: str) -> int:
    return splitmix64((master & _MASK) ^ splitmix64(fnv1a64(name.encode("utf-8"))))


def stream(master: int, name: str) -> random.Random:
    return random.Random(stream_seed(master, name))
