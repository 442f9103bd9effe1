"""Scenario files: strict JSON schema, parsing, and semantic validation.

Parsing (:func:`parse_scenario`) rejects bad syntax, wrong types and unknown
keys. Validation (:func:`validate_scenario`) checks value ranges and cross
references and reports every violation it finds.

Infinite state/control bounds are written as ``null``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic.alias_generators import to_camel

from . import control
from .model import BoxConstraints, LinearModel

SCHEMA_VERSION = 1

STATE_SENSORS = ("local_queue_len", "cloud_queue_len", "wan_utilization", "dup_count")
ACTUATORS = ("route_cloud_frac", "wan_share", "cloud_capacity")
SOURCE = "source"
BASELINE = "none"

_SAFE_NAME = re.compile(r"^[A-Za-z0-9._-]+$")


class ScenarioParseError(ValueError):
    """Syntax or schema error; ``errors`` holds ``(json_pointer, message)`` pairs."""

    def __init__(self, message: str, errors=()):
        super().__init__(message)
        self.errors = list(errors)


class ScenarioValidationError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", alias_generator=to_camel,
                              populate_by_name=True, frozen=True)


# -- topology ---------------------------------------------------------------

class NodeSpec(_Strict):
    id: str
    segment: Literal["local", "cloud"]
    service_rate_per_capacity: float = 10.0
    capacity: float = 1.0
    queue_discipline: Literal["priority_fifo"] = "priority_fifo"
    queue_limit: int = 1000


class LinkSpec(_Strict):
    id: str
    endpoints: tuple[str, str]
    bandwidth: float = 1000.0
    propagation_delay_sec: float = 0.0
    qos_shares: dict[str, float] = Field(default_factory=dict)


class DispatcherSpec(_Strict):
    local_nodes: list[str]
    cloud_nodes: list[str]
    local_link: Optional[str] = None
    cloud_link: Optional[str] = None


def _default_nodes():
    return [NodeSpec(id="local-0", segment="local"), NodeSpec(id="cloud-0", segment="cloud")]


def _default_links():
    return [LinkSpec(id="wan", endpoints=(SOURCE, "cloud-0"), bandwidth=1000.0,
                     propagation_delay_sec=0.02,
                     qos_shares={"interactive": 0.3, "data": 0.5})]


class TopologySpec(_Strict):
    nodes: list[NodeSpec] = Field(default_factory=_default_nodes)
    links: list[LinkSpec] = Field(default_factory=_default_links)
    dispatcher: DispatcherSpec = Field(default_factory=lambda: DispatcherSpec(
        local_nodes=["local-0"], cloud_nodes=["cloud-0"], cloud_link="wan"))


# -- traffic ----------------------------------------------------------------

class LognormalSize(_Strict):
    kind: Literal["lognormal"]
    mu: float = 0.0
    sigma: float = 0.5


class ExponentialSize(_Strict):
    kind: Literal["exponential"]
    mean: float = 1.0


SizeSpec = Annotated[Union[LognormalSize, ExponentialSize], Field(discriminator="kind")]


class PoissonTraffic(_Strict):
    kind: Literal["poisson"]
    rate: float
    qos_class_mix: dict[str, float] = Field(default_factory=lambda: {"data": 1.0})
    size: SizeSpec = Field(default_factory=lambda: LognormalSize(kind="lognormal"))
    seed_stream: str = "traffic"
    start_sec: float = 0.0
    end_sec: Optional[float] = None


class OnOffTraffic(_Strict):
    kind: Literal["onOffBurst"]
    on_rate: float
    off_rate: float
    mean_on_sec: float
    mean_off_sec: float
    start_on: bool = False
    qos_class_mix: dict[str, float] = Field(default_factory=lambda: {"data": 1.0})
    size: SizeSpec = Field(default_factory=lambda: LognormalSize(kind="lognormal"))
    seed_stream: str = "traffic"
    start_sec: float = 0.0
    end_sec: Optional[float] = None


TrafficSpec = Annotated[Union[PoissonTraffic, OnOffTraffic], Field(discriminator="kind")]


# -- control ----------------------------------------------------------------

class NonePolicySpec(_Strict):
    kind: Literal["none"]


class StaticPolicySpec(_Strict):
    kind: Literal["static"]
    u: list[float]


class PropThresholdSpec(_Strict):
    kind: Literal["prop_threshold"]
    component_index: int
    low_water: float
    high_water: float
    step_frac: float
    control_index: int


class OneStepSpec(_Strict):
    kind: Literal["one_step"]
    A: list[list[float]] = Field(alias="A")
    B: list[list[float]] = Field(alias="B")
    x_ref: list[float]


PolicySpec = Annotated[Union[NonePolicySpec, StaticPolicySpec, PropThresholdSpec, OneStepSpec],
                       Field(discriminator="kind")]


class BoundsSpec(_Strict):
    lower: list[Optional[float]]
    upper: list[Optional[float]]


class ControlLoopSpec(_Strict):
    period_sec: float = 1.0
    state_labels: list[str] = Field(default_factory=lambda: list(STATE_SENSORS))
    control_labels: list[str] = Field(default_factory=lambda: list(ACTUATORS))
    wan_share_class: str = "data"
    state_bounds: Optional[BoundsSpec] = None
    control_bounds: BoundsSpec = Field(default_factory=lambda: BoundsSpec(
        lower=[0.0, 0.1, 1.0], upper=[1.0, 0.7, 4.0]))
    u0: list[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0])
    policy: str = BASELINE
    policies: dict[str, PolicySpec] = Field(default_factory=dict)


class DuplicationSpec(_Strict):
    dup_timeout_sec: float = 2.0
    max_dup_depth: int = 2


class OutputsSpec(_Strict):
    directory: str = "out"
    histogram_bins: int = 40


class Scenario(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str
    horizon_sec: float = 100.0
    seed: int = 0
    max_events: int = 10_000_000
    qos_classes: list[str] = Field(default_factory=lambda: ["interactive", "data"])
    topology: TopologySpec = Field(default_factory=TopologySpec)
    traffic: list[TrafficSpec] = Field(default_factory=list)
    control_loop: ControlLoopSpec = Field(default_factory=ControlLoopSpec)
    duplication: DuplicationSpec = Field(default_factory=DuplicationSpec)
    outputs: OutputsSpec = Field(default_factory=OutputsSpec)

    # -- derived views ------------------------------------------------------

    def node(self, node_id: str) -> NodeSpec:
        return next(n for n in self.topology.nodes if n.id == node_id)

    def link(self, link_id: str) -> LinkSpec:
        return next(lk for lk in self.topology.links if lk.id == link_id)

    def state_bounds(self) -> BoxConstraints:
        n = len(self.control_loop.state_labels)
        b = self.control_loop.state_bounds
        if b is None:
            return BoxConstraints.unbounded(n)
        return _box(b)

    def control_bounds(self) -> BoxConstraints:
        return _box(self.control_loop.control_bounds)

    def controller_names(self) -> list[str]:
        return [BASELINE] + [k for k in self.control_loop.policies if k != BASELINE]

    def build_policy(self, name: str | None = None) -> control.ControlPolicy:
        name = self.control_loop.policy if name is None else name
        if name == BASELINE:
            return control.NoControl()
        try:
            spec = self.control_loop.policies[name]
        except KeyError:
            raise KeyError(f"unknown controller {name!r}; scenario defines "
                           f"{self.controller_names()}") from None
        if isinstance(spec, NonePolicySpec):
            return control.NoControl()
        if isinstance(spec, StaticPolicySpec):
            return control.StaticPolicy(np.array(spec.u))
        if isinstance(spec, PropThresholdSpec):
            return control.PropThreshold(spec.component_index, spec.low_water,
                                         spec.high_water, spec.step_frac, spec.control_index)
        model = LinearModel(np.array(spec.A, dtype=float), np.array(spec.B, dtype=float),
                            self.state_bounds(), self.control_bounds())
        return control.OneStep(model, np.array(spec.x_ref))

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)


def _box(b: BoundsSpec) -> BoxConstraints:
    lo = [-math.inf if v is None else v for v in b.lower]
    hi = [math.inf if v is None else v for v in b.upper]
    return BoxConstraints(np.array(lo, dtype=float), np.array(hi, dtype=float))


# -- parsing ----------------------------------------------------------------

def _pointer(raw, loc) -> str:
    # Pydantic puts discriminator tags into ``loc``; drop parts the document lacks.
    parts, cur = [], raw
    for i, p in enumerate(loc):
        last = i == len(loc) - 1
        if isinstance(cur, dict) and p in cur:
            parts.append(str(p))
            cur = cur[p]
        elif isinstance(cur, list) and isinstance(p, int) and p < len(cur):
            parts.append(str(p))
            cur = cur[p]
        elif last or not isinstance(cur, (dict, list)):
            parts.append(str(p))
    return "/" + "/".join(parts)


def scenario_from_dict(raw) -> Scenario:
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        errs = [(_pointer(raw, e["loc"]), e["msg"]) for e in exc.errors()]
        msg = "; ".join(f"{p}: {m}" for p, m in errs)
        raise ScenarioParseError(f"schema error: {msg}", errs) from None


def loads_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            [(f"line {exc.lineno}, column {exc.colno}", exc.msg)]) from None
    return scenario_from_dict(raw)


def parse_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc.strerror}") from None
    return loads_scenario(text)


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package; the ``.json`` suffix is optional."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(__file__).parent / "scenarios" / name


def bundled_scenarios() -> list[Path]:
    return sorted((Path(__file__).parent / "scenarios").glob("*.json"))


# -- validation -------------------------------------------------------------

def _check_bounds(errors, where, spec: BoundsSpec, d):
    if len(spec.lower) != d or len(spec.upper) != d:
        errors.append(f"{where}: expected {d} lower/upper entries, got "
                      f"{len(spec.lower)}/{len(spec.upper)}")
        return False
    for i, (lo, hi) in enumerate(zip(spec.lower, spec.upper)):
        lo_v = -math.inf if lo is None else lo
        hi_v = math.inf if hi is None else hi
        if lo_v > hi_v:
            errors.append(f"{where}: lower[{i}]={lo_v} exceeds upper[{i}]={hi_v}")
    return True


def _check_traffic(errors, i, tr, classes):
    where = f"traffic[{i}]"
    if isinstance(tr, PoissonTraffic):
        if not tr.rate > 0:
            errors.append(f"{where}: rate must be > 0, got {tr.rate}")
    else:
        for f in ("on_rate", "off_rate", "mean_on_sec", "mean_off_sec"):
            v = getattr(tr, f)
            if not v > 0:
                errors.append(f"{where}: {to_camel(f)} must be > 0, got {v}")
    if not tr.qos_class_mix:
        errors.append(f"{where}: qosClassMix is empty")
    for cls, w in tr.qos_class_mix.items():
        if cls not in classes:
            errors.append(f"{where}: qosClassMix references unknown class {cls!r}")
        if w < 0:
            errors.append(f"{where}: weight for {cls!r} is negative")
    total = sum(tr.qos_class_mix.values())
    if tr.qos_class_mix and abs(total - 1.0) > 1e-9:
        errors.append(f"{where}: qosClassMix weights sum to {total}, expected 1")
    if isinstance(tr.size, LognormalSize) and tr.size.sigma < 0:
        errors.append(f"{where}: size sigma must be >= 0")
    if isinstance(tr.size, ExponentialSize) and not tr.size.mean > 0:
        errors.append(f"{where}: size mean must be > 0")
    if tr.start_sec < 0:
        errors.append(f"{where}: startSec must be >= 0")
    if tr.end_sec is not None and tr.end_sec <= tr.start_sec:
        errors.append(f"{where}: endSec {tr.end_sec} must exceed startSec {tr.start_sec}")


def _check_policy(errors, name, spec, n, m, cbounds: BoxConstraints | None):
    where = f"controlLoop.policies[{name!r}]"
    if isinstance(spec, StaticPolicySpec):
        if len(spec.u) != m:
            errors.append(f"{where}: u has length {len(spec.u)}, expected {m}")
        elif cbounds is not None and not cbounds.contains(spec.u):
            errors.append(f"{where}: u {spec.u} lies outside the control bounds")
    elif isinstance(spec, PropThresholdSpec):
        if not spec.low_water < spec.high_water:
            errors.append(f"{where}: lowWater {spec.low_water} must be < highWater {spec.high_water}")
        if not 0 < spec.step_frac <= 1:
            errors.append(f"{where}: stepFrac must be in (0, 1], got {spec.step_frac}")
        if not 0 <= spec.component_index < n:
            errors.append(f"{where}: componentIndex {spec.component_index} out of range for n={n}")
        if not 0 <= spec.control_index < m:
            errors.append(f"{where}: controlIndex {spec.control_index} out of range for m={m}")
    elif isinstance(spec, OneStepSpec):
        A, B = spec.A, spec.B
        if len(A) != n or any(len(r) != n for r in A):
            errors.append(f"{where}: A must be {n}x{n}")
        if len(B) != n or any(len(r) != m for r in B):
            errors.append(f"{where}: B must be {n}x{m}")
        if len(spec.x_ref) != n:
            errors.append(f"{where}: xRef has length {len(spec.x_ref)}, expected {n}")
        vals = [v for r in A for v in r] + [v for r in B for v in r] + list(spec.x_ref)
        if not all(math.isfinite(v) for v in vals):
            errors.append(f"{where}: matrices and xRef must be finite")


def validate_scenario(sc: Scenario) -> list[str]:
    """Every invariant violation in ``sc``; empty when the scenario is usable."""
    errors: list[str] = []
    if not sc.name or not _SAFE_NAME.match(sc.name):
        errors.append(f"name {sc.name!r} must be non-empty and filesystem-safe [A-Za-z0-9._-]")
    if not sc.horizon_sec > 0:
        errors.append(f"horizonSec must be > 0, got {sc.horizon_sec}")
    if sc.max_events < 1:
        errors.append("maxEvents must be >= 1")

    classes = sc.qos_classes
    if not classes:
        errors.append("qosClasses must list at least one class")
    if len(set(classes)) != len(classes):
        errors.append(f"qosClasses contains duplicates: {classes}")

    topo = sc.topology
    ids = [n.id for n in topo.nodes]
    if len(set(ids)) != len(ids):
        errors.append(f"duplicate node ids: {sorted({i for i in ids if ids.count(i) > 1})}")
    segments = {}
    for node in topo.nodes:
        where = f"node {node.id!r}"
        if node.id == SOURCE:
            errors.append(f"{where}: id {SOURCE!r} is reserved for the traffic source")
        if not node.service_rate_per_capacity > 0:
            errors.append(f"{where}: serviceRatePerCapacity must be > 0")
        if not node.capacity > 0:
            errors.append(f"{where}: capacity must be > 0")
        if node.queue_limit < 1:
            errors.append(f"{where}: queueLimit must be >= 1")
        segments[node.id] = node.segment
    if "local" not in segments.values():
        errors.append("topology needs at least one local node")
    if "cloud" not in segments.values():
        errors.append("topology needs at least one cloud node")

    link_ids = [lk.id for lk in topo.links]
    if len(set(link_ids)) != len(link_ids):
        errors.append("duplicate link ids")
    for lk in topo.links:
        where = f"link {lk.id!r}"
        if not lk.bandwidth > 0:
            errors.append(f"{where}: bandwidth must be > 0")
        if lk.propagation_delay_sec < 0:
            errors.append(f"{where}: propagationDelaySec must be >= 0")
        for ep in lk.endpoints:
            if ep != SOURCE and ep not in segments:
                errors.append(f"{where}: endpoint {ep!r} is not a node or {SOURCE!r}")
        for cls, share in lk.qos_shares.items():
            if cls not in classes:
                errors.append(f"{where}: share for unknown QoS class {cls!r}")
            if not 0 <= share <= 1:
                errors.append(f"{where}: share of {cls!r} = {share} outside [0, 1]")
        total = sum(lk.qos_shares.values())
        if total > 1 + 1e-12:
            errors.append(f"{where}: QoS shares sum to {total:g} > 1")

    disp = topo.dispatcher
    for seg, members in (("local", disp.local_nodes), ("cloud", disp.cloud_nodes)):
        if not members:
            errors.append(f"dispatcher: {seg}Nodes is empty")
        for nid in members:
            if nid not in segments:
                errors.append(f"dispatcher: {seg}Nodes references missing node {nid!r}")
            elif segments[nid] != seg:
                errors.append(f"dispatcher: node {nid!r} is in segment {segments[nid]!r}, not {seg!r}")
    for attr in ("local_link", "cloud_link"):
        lid = getattr(disp, attr)
        if lid is not None and lid not in link_ids:
            errors.append(f"dispatcher: {to_camel(attr)} references missing link {lid!r}")

    streams = [tr.seed_stream for tr in sc.traffic]
    if len(set(streams)) != len(streams):
        errors.append(f"traffic seedStream names must be unique: {streams}")
    for i, tr in enumerate(sc.traffic):
        _check_traffic(errors, i, tr, classes)

    loop = sc.control_loop
    if not loop.period_sec > 0:
        errors.append(f"controlLoop.periodSec must be > 0, got {loop.period_sec}")
    for lab in loop.state_labels:
        if lab not in STATE_SENSORS:
            errors.append(f"controlLoop.stateLabels: unknown sensor {lab!r} (known: {STATE_SENSORS})")
    if len(set(loop.state_labels)) != len(loop.state_labels) or not loop.state_labels:
        errors.append("controlLoop.stateLabels must be non-empty and unique")
    for lab in loop.control_labels:
        if lab not in ACTUATORS:
            errors.append(f"controlLoop.controlLabels: unknown actuator {lab!r} (known: {ACTUATORS})")
    if len(set(loop.control_labels)) != len(loop.control_labels) or not loop.control_labels:
        errors.append("controlLoop.controlLabels must be non-empty and map one-to-one to actuators")
    n, m = len(loop.state_labels), len(loop.control_labels)
    if loop.state_bounds is not None:
        _check_bounds(errors, "controlLoop.stateBounds", loop.state_bounds, n)
    cbounds = None
    if _check_bounds(errors, "controlLoop.controlBounds", loop.control_bounds, m):
        try:
            cbounds = sc.control_bounds()
        except ValueError:
            cbounds = None
    if len(loop.u0) != m:
        errors.append(f"controlLoop.u0 has length {len(loop.u0)}, expected {m}")
    elif cbounds is not None and not cbounds.contains(loop.u0):
        errors.append(f"controlLoop.u0 {loop.u0} lies outside the control bounds")

    if cbounds is not None:
        for j, lab in enumerate(loop.control_labels):
            lo, hi = cbounds.lower[j], cbounds.upper[j]
            if lab == "route_cloud_frac" and (lo < 0 or hi > 1):
                errors.append(f"controlBounds for route_cloud_frac must lie within [0, 1]")
            if lab == "cloud_capacity" and not lo > 0:
                errors.append(f"controlBounds lower for cloud_capacity must be > 0")
            if lab == "wan_share":
                if lo < 0 or hi > 1:
                    errors.append(f"controlBounds for wan_share must lie within [0, 1]")
                if loop.wan_share_class not in classes:
                    errors.append(f"controlLoop.wanShareClass {loop.wan_share_class!r} is not a QoS class")
                if disp.cloud_link is None or disp.cloud_link not in link_ids:
                    errors.append("wan_share actuator needs dispatcher.cloudLink")
                else:
                    lk = sc.link(disp.cloud_link)
                    others = sum(v for k, v in lk.qos_shares.items() if k != loop.wan_share_class)
                    if others + hi > 1 + 1e-12:
                        errors.append(f"wan_share upper bound {hi} plus other shares {others:g} "
                                      f"on link {lk.id!r} exceeds 1")

    if loop.policy != BASELINE and loop.policy not in loop.policies:
        errors.append(f"controlLoop.policy {loop.policy!r} is not defined in policies")
    for name, spec in loop.policies.items():
        if not name or not _SAFE_NAME.match(name):
            errors.append(f"controller name {name!r} must be filesystem-safe")
        if name == BASELINE and not isinstance(spec, NonePolicySpec):
            errors.append(f"controller name {BASELINE!r} is reserved for the uncontrolled baseline")
        _check_policy(errors, name, spec, n, m, cbounds)

    dup = sc.duplication
    if not dup.dup_timeout_sec > 0:
        errors.append(f"duplication.dupTimeoutSec must be > 0, got {dup.dup_timeout_sec}")
    if dup.max_dup_depth < 0:
        errors.append(f"duplication.maxDupDepth must be >= 0, got {dup.max_dup_depth}")
    if sc.outputs.histogram_bins < 1:
        errors.append("outputs.histogramBins must be >= 1")
    return errors


def load_valid_scenario(path: str | Path) -> Scenario:
    sc = parse_scenario(path)
    errors = validate_scenario(sc)
    if errors:
        raise ScenarioValidationError(errors)
    return sc
