"""Discrete-event simulator of a local + cloud service infrastructure.

Requests arrive from traffic profiles, are routed to the local or cloud
segment, cross that segment's fluid QoS link (if any), and queue at the
least-loaded node of the segment. A request not answered within
``dupTimeoutSec`` is re-sent by the client as a duplicate; siblings are never
cancelled, so duplicates burn capacity exactly when it is scarce.

Every ``periodSec`` the control loop samples the state vector, runs the
configured policy and applies the result (zero-order hold until the next
epoch).
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import control
from .links import FluidLink
from .rng import stream
from .scenario import (ExponentialSize, OnOffTraffic, Scenario,
                       ScenarioValidationError, validate_scenario)
from .trace import COMPLETED, DROPPED, IN_SERVICE, Request, Trace

# event kinds; the integer order never decides ties, the sequence number does
_ARRIVAL, _LINK, _DELIVER, _DONE, _TIMEOUT, _EPOCH = range(6)


class SimulationAborted(RuntimeError):
    """Raised when the event budget runs out; carries the partial trace."""

    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class _Node:
    id: str
    segment: str
    rate: float
    base_capacity: float
    capacity: float
    queue_limit: int
    queues: dict[str, deque] = field(default_factory=dict)
    waiting: int = 0
    in_service: Request | None = None
    service_started: float = 0.0
    busy_time: float = 0.0

    @property
    def load(self) -> int:
        return self.waiting + (self.in_service is not None)


class _Source:
    """Arrival process for one traffic profile, with its own random streams."""

    def __init__(self, spec, seed: int, index: int, classes: list[str]):
        self.spec = spec
        name = spec.seed_stream
        self.arrivals = stream(seed, f"{name}/arrivals")
        self.phases = stream(seed, f"{name}/phases")
        self.sizes = stream(seed, f"{name}/sizes")
        self.mix = stream(seed, f"{name}/classes")
        self.index = index
        self.classes = [c for c in classes if c in spec.qos_class_mix]
        weights = [spec.qos_class_mix[c] for c in self.classes]
        self.cum = list(itertools.accumulate(weights))
        self.end = math.inf if spec.end_sec is None else spec.end_sec
        if isinstance(spec, OnOffTraffic):
            self.on = spec.start_on
            self.phase_end = spec.start_sec + self._phase_length()
        else:
            self.on = True
            self.phase_end = math.inf

    def _phase_length(self) -> float:
        mean = self.spec.mean_on_sec if self.on else self.spec.mean_off_sec
        return self.phases.expovariate(1.0 / mean)

    def _rate(self) -> float:
        if isinstance(self.spec, OnOffTraffic):
            return self.spec.on_rate if self.on else self.spec.off_rate
        return self.spec.rate

    def next_after(self, t: float) -> float:
        # thinning-free piecewise Poisson: restart the clock at phase switches
        while True:
            cand = t + self.arrivals.expovariate(self._rate())
            if cand <= self.phase_end:
                return cand if cand < self.end else math.inf
            t = self.phase_end
            if t >= self.end:
                return math.inf
            self.on = not self.on
            self.phase_end = t + self._phase_length()

    def draw_request_attrs(self) -> tuple[str, float]:
        u = self.mix.random() * self.cum[-1]
        cls = self.classes[-1]
        for c, edge in zip(self.classes, self.cum):
            if u < edge:
                cls = c
                break
        size_spec = self.spec.size
        if isinstance(size_spec, ExponentialSize):
            size = self.sizes.expovariate(1.0 / size_spec.mean)
        else:
            size = self.sizes.lognormvariate(size_spec.mu, size_spec.sigma)
        return cls, size


class Simulation:
    """One run of a scenario. Single-threaded; not reusable after :meth:`run`."""

    def __init__(self, scenario: Scenario, seed: int, controller: str | None = None,
                 check: bool = True):
        if check:
            errors = validate_scenario(scenario)
            if errors:
                raise ScenarioValidationError(errors)
        self.sc = scenario
        self.seed = int(seed)
        self.now = 0.0
        self.horizon = float(scenario.horizon_sec)
        self._heap: list = []
        self._seq = itertools.count()
        self.event_count = 0

        self.classes = list(scenario.qos_classes)
        self.nodes: dict[str, _Node] = {}
        for ns in scenario.topology.nodes:
            self.nodes[ns.id] = _Node(
                id=ns.id, segment=ns.segment, rate=ns.service_rate_per_capacity,
                base_capacity=ns.capacity, capacity=ns.capacity, queue_limit=ns.queue_limit,
                queues={c: deque() for c in self.classes})
        self.links: dict[str, FluidLink] = {}
        self._link_gen: dict[str, int] = {}
        for ls in scenario.topology.links:
            self.links[ls.id] = FluidLink(ls.bandwidth, ls.propagation_delay_sec,
                                          self.classes, ls.qos_shares)
            self._link_gen[ls.id] = 0
        disp = scenario.topology.dispatcher
        self.segment_nodes = {"local": sorted(disp.local_nodes), "cloud": sorted(disp.cloud_nodes)}
        self.segment_link = {"local": disp.local_link, "cloud": disp.cloud_link}

        self.routing = stream(self.seed, "routing")
        self.sources = [_Source(tr, self.seed, i, self.classes)
                        for i, tr in enumerate(scenario.traffic)]

        loop = scenario.control_loop
        self.period = loop.period_sec
        self.state_labels = list(loop.state_labels)
        self.control_labels = list(loop.control_labels)
        self.wan_share_class = loop.wan_share_class
        self.bounds = scenario.control_bounds()
        self.policy = scenario.build_policy(controller)
        self.route_cloud_frac = 0.0
        self.u = np.array(loop.u0, dtype=float)

        self.dup_timeout = scenario.duplication.dup_timeout_sec
        self.max_dup_depth = scenario.duplication.max_dup_depth

        self.requests: list[Request] = []
        self._in_transit: dict[int, Request] = {}
        self._ids = itertools.count()
        self.family_done: set[int] = set()
        self.completed = 0
        self.dropped = 0
        self.dups_since_epoch = 0
        self._wan_busy_mark = 0.0
        self._epoch_t: list[int] = []
        self._epoch_x: list[np.ndarray] = []
        self._epoch_u: list[np.ndarray] = []
        self._started = False
        self.actuate(self.u)

    # -- event plumbing -----------------------------------------------------

    def schedule(self, time: float, kind: int, payload=None) -> None:
        if time < self.now:
            raise AssertionError(f"event scheduled in the past: {time} < {self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def _start(self) -> None:
        self._started = True
        for src in self.sources:
            t = src.next_after(src.spec.start_sec)
            if t <= self.horizon:
                self.schedule(t, _ARRIVAL, src)
        self.schedule(0.0, _EPOCH, 0)

    def run_until(self, t_end: float) -> None:
        """Process every event with timestamp ``<= t_end``."""
        if not self._started:
            self._start()
        t_end = min(t_end, self.horizon)
        heap = self._heap
        limit = self.sc.max_events
        while heap and heap[0][0] <= t_end:
            time, _, kind, payload = heapq.heappop(heap)
            if time < self.now:
                raise AssertionError(f"event out of order: {time} < {self.now}")
            if self.event_count >= limit:
                raise SimulationAborted(
                    f"event budget of {limit} exhausted at t={time:.6g}", self.trace())
            self.now = time
            self.event_count += 1
            if kind == _ARRIVAL:
                self._on_arrival(payload)
            elif kind == _LINK:
                self._on_link(*payload)
            elif kind == _DELIVER:
                self._enqueue(payload)
            elif kind == _DONE:
                self._on_done(payload)
            elif kind == _TIMEOUT:
                self._on_timeout(payload)
            else:
                self._on_epoch(payload)
        if t_end > self.now:
            self.now = t_end

    def run(self) -> Trace:
        self.run_until(self.horizon)
        return self.trace()

    # -- requests -----------------------------------------------------------

    def submit(self, size: float, qos_class: str, route: str | None = None,
               parent: Request | None = None) -> Request:
        """Create a request at the current time and dispatch it."""
        req = Request(id=next(self._ids), parent_id=None if parent is None else parent.id,
                      qos_class=qos_class, size=size, created_at=self.now)
        if parent is not None:
            req.root_id = parent.root_id
            req.depth = parent.depth + 1
        self.requests.append(req)
        self.dispatch(req, route)
        if self.max_dup_depth > 0 and req.depth < self.max_dup_depth:
            self.schedule(self.now + self.dup_timeout, _TIMEOUT, req)
        return req

    def _on_arrival(self, src: _Source) -> None:
        cls, size = src.draw_request_attrs()
        self.submit(size, cls)
        t = src.next_after(self.now)
        if t <= self.horizon:
            self.schedule(t, _ARRIVAL, src)

    def dispatch(self, req: Request, route: str | None = None) -> str:
        draw = self.routing.random()  # always drawn, keeps paired runs aligned
        if route is None:
            route = "cloud" if draw < self.route_cloud_frac else "local"
        req.route = route
        link_id = self.segment_link[route]
        if link_id is None:
            self._enqueue(req)
        else:
            link = self.links[link_id]
            link.add(self.now, req.id, req.size, req.qos_class)
            self._reschedule_link(link_id)
            self._in_transit[req.id] = req
        return route

    def _reschedule_link(self, link_id: str) -> None:
        self._link_gen[link_id] += 1
        nxt = self.links[link_id].next_departure()
        if nxt is not None:
            self.schedule(max(nxt[0], self.now), _LINK, (link_id, self._link_gen[link_id], nxt[1]))

    def _on_link(self, link_id: str, gen: int, key) -> None:
        if gen != self._link_gen[link_id]:
            return  # superseded by a later rate change
        link = self.links[link_id]
        for rid in link.pop_finished(self.now, force=key):
            req = self._in_transit.pop(rid)
            self.schedule(self.now + link.delay, _DELIVER, req)
        self._reschedule_link(link_id)

    def pick_node(self, segment: str) -> _Node:
        """Least-loaded node of the segment; ties go to the lowest id."""
        return min((self.nodes[i] for i in self.segment_nodes[segment]),
                   key=lambda nd: (nd.load, nd.id))

    def _enqueue(self, req: Request) -> None:
        node = self.pick_node(req.route)
        req.dispatched_at = self.now
        if node.in_service is None:
            self._start_service(node, req)
        elif node.waiting >= node.queue_limit:
            req.status = DROPPED
            self.dropped += 1
        else:
            node.queues[req.qos_class].append(req)
            node.waiting += 1

    def _start_service(self, node: _Node, req: Request) -> None:
        node.in_service = req
        node.service_started = self.now
        req.status = IN_SERVICE
        self.schedule(self.now + req.size / (node.rate * node.capacity), _DONE, node)

    def _on_done(self, node: _Node) -> None:
        req = node.in_service
        node.busy_time += self.now - node.service_started
        req.status = COMPLETED
        req.completed_at = self.now
        self.completed += 1
        self.family_done.add(req.root_id)
        node.in_service = None
        for cls in self.classes:
            q = node.queues[cls]
            if q:
                node.waiting -= 1
                self._start_service(node, q.popleft())
                break

    def _on_timeout(self, req: Request) -> None:
        if req.root_id in self.family_done:
            return
        self.dups_since_epoch += 1
        self.submit(req.size, req.qos_class, parent=req)

    # -- control loop -------------------------------------------------------

    def sample_state(self) -> np.ndarray:
        out = np.empty(len(self.state_labels))
        for i, lab in enumerate(self.state_labels):
            if lab == "local_queue_len":
                out[i] = sum(self.nodes[n].load for n in self.segment_nodes["local"])
            elif lab == "cloud_queue_len":
                out[i] = sum(self.nodes[n].load for n in self.segment_nodes["cloud"])
            elif lab == "wan_utilization":
                out[i] = self._wan_utilization()
            elif lab == "dup_count":
                out[i] = self.dups_since_epoch
            else:
                raise KeyError(lab)
        return out

    def _wan_utilization(self) -> float:
        link_id = self.segment_link["cloud"]
        if link_id is None:
            return 0.0
        link = self.links[link_id]
        link.advance(self.now)
        busy = link.busy_time - self._wan_busy_mark
        return min(1.0, max(0.0, busy / self.period))

    def actuate(self, u) -> None:
        u = np.asarray(u, dtype=float)
        for j, lab in enumerate(self.control_labels):
            v = float(u[j])
            if lab == "route_cloud_frac":
                self.route_cloud_frac = v
            elif lab == "wan_share":
                link_id = self.segment_link["cloud"]
                self.links[link_id].set_share(self.now, self.wan_share_class, v)
                self._reschedule_link(link_id)
            elif lab == "cloud_capacity":
                for nid in self.segment_nodes["cloud"]:
                    nd = self.nodes[nid]
                    nd.capacity = nd.base_capacity * v
            else:
                raise KeyError(lab)
        self.u = u.copy()

    def _on_epoch(self, k: int) -> None:
        x = self.sample_state()
        u = control.apply_policy(self.policy, x, self.u, self.bounds)
        self.actuate(u)
        self._epoch_t.append(k)
        self._epoch_x.append(x)
        self._epoch_u.append(self.u.copy())
        link_id = self.segment_link["cloud"]
        if link_id is not None:
            self._wan_busy_mark = self.links[link_id].busy_time
        self.dups_since_epoch = 0
        nxt = (k + 1) * self.period
        if nxt <= self.horizon:
            self.schedule(nxt, _EPOCH, k + 1)

    # -- results ------------------------------------------------------------

    def trace(self) -> Trace:
        n, m = len(self.state_labels), len(self.control_labels)
        busy = {}
        for nd in self.nodes.values():
            b = nd.busy_time
            if nd.in_service is not None:
                b += self.now - nd.service_started
            busy[nd.id] = b
        generated = len(self.requests)
        in_flight = generated - self.completed - self.dropped
        return Trace(
            t=np.array(self._epoch_t, dtype=np.int64),
            x=np.array(self._epoch_x, dtype=float).reshape(len(self._epoch_x), n),
            u=np.array(self._epoch_u, dtype=float).reshape(len(self._epoch_u), m),
            requests=list(self.requests),
            event_count=self.event_count,
            conservation={"generated": generated, "completed": self.completed,
                          "dropped": self.dropped, "in_flight": in_flight},
            node_busy=busy,
        )


def run(scenario: Scenario, seed: int, controller: str | None = None) -> Trace:
    """Simulate ``scenario`` to its horizon. Deterministic in ``(scenario, seed, controller)``."""
    return Simulation(scenario, seed, controller).run()
