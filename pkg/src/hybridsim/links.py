"""Fluid-flow link with strict-priority QoS classes and guaranteed shares.

Bandwidth is re-divided at every arrival and departure:

* each active class first receives its guaranteed ``share * bandwidth``;
* whatever the active classes do not claim (idle classes' shares plus any
  unassigned bandwidth) goes to the highest-priority active class;
* transfers of the same class split their class rate equally.

The link is work-conserving, so it runs at full bandwidth whenever it is
non-empty and ``busy_time`` equals carried volume / bandwidth.
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Iterable, Sequence

_EPS = 1e-12


class FluidLink:
    def __init__(self, bandwidth: float, propagation_delay: float,
                 classes: Sequence[str], shares: dict[str, float]):
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self.bandwidth = float(bandwidth)
        self.delay = float(propagation_delay)
        self.classes = list(classes)  # priority order, highest first
        self.shares = {c: float(shares.get(c, 0.0)) for c in self.classes}
        # class -> {key: [remaining, size]}; dicts keep arrival order
        self._active: dict[str, dict[Hashable, list[float]]] = {c: {} for c in self.classes}
        self._rates: dict[str, float] = {}
        self.last_time = 0.0
        self.busy_time = 0.0

    def __len__(self):
        return sum(len(v) for v in self._active.values())

    def set_share(self, now: float, cls: str, share: float) -> None:
        self.advance(now)
        self.shares[cls] = float(share)
        self._recompute()

    def class_rates(self) -> dict[str, float]:
        return dict(self._rates)

    def _recompute(self) -> None:
        active = [c for c in self.classes if self._active[c]]
        rates = {c: self.shares[c] * self.bandwidth for c in active}
        if active:
            rates[active[0]] += self.bandwidth - sum(rates.values())
        self._rates = rates

    def _transfer_rate(self, cls: str) -> float:
        return self._rates.get(cls, 0.0) / len(self._active[cls])

    def advance(self, now: float) -> None:
        dt = now - self.last_time
        if dt < 0:
            raise ValueError(f"link clock moved backwards: {self.last_time} -> {now}")
        if dt > 0 and len(self):
            self.busy_time += dt
            for cls, transfers in self._active.items():
                if not transfers:
                    continue
                r = self._transfer_rate(cls)
                for rec in transfers.values():
                    rec[0] -= r * dt
        self.last_time = now

    def add(self, now: float, key: Hashable, size: float, cls: str) -> None:
        self.advance(now)
        self._active[cls][key] = [float(size), float(size)]
        self._recompute()

    def next_departure(self) -> tuple[float, Hashable] | None:
        """Earliest transmission end ``(time, key)`` if no rates change."""
        best = None
        for cls, transfers in self._active.items():
            if not transfers:
                continue
            r = self._transfer_rate(cls)
            if r <= 0:
                continue
            for key, rec in transfers.items():
                t = self.last_time + max(rec[0], 0.0) / r
                if best is None or t < best[0]:
                    best = (t, key)
        return best

    def pop_finished(self, now: float, force: Hashable | None = None) -> list[Hashable]:
        """Advance to ``now`` and remove transfers whose data has all been sent."""
        self.advance(now)
        done = []
        for transfers in self._active.values():
            for key, (rem, size) in list(transfers.items()):
                if key == force or rem <= _EPS * max(1.0, size):
                    done.append(key)
                    del transfers[key]
        if done:
            self._recompute()
        return done


def transmit_schedule(link: FluidLink,
                      arrivals: Iterable[tuple[float, Hashable, float, str]]) -> dict:
    """Offline fluid schedule: ``{key: delivery time}`` including propagation delay.

    ``arrivals`` holds ``(start, key, size, cls)`` tuples.
    """
    pending = sorted(arrivals, key=lambda a: a[0])
    out = {}
    i = 0
    while i < len(pending) or len(link):
        nxt = link.next_departure()
        t_arr = pending[i][0] if i < len(pending) else math.inf
        if nxt is not None and nxt[0] <= t_arr:
            for key in link.pop_finished(nxt[0], force=nxt[1]):
                out[key] = nxt[0] + link.delay
        else:
            start, key, size, cls = pending[i]
            link.add(start, key, size, cls)
            i += 1
    return out
