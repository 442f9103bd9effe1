"""Simulation output: per-epoch ``(t, x, u)`` samples and the request log.

CSV layout::

    epochs.csv    t,x_0..x_{n-1},u_0..u_{m-1}
    requests.csv  id,parent_id,qos_class,size,created_at,dispatched_at,completed_at,route,status

Floats are written with ``repr`` so a read-back trace is bit-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REQUEST_COLUMNS = ("id", "parent_id", "qos_class", "size", "created_at",
                   "dispatched_at", "completed_at", "route", "status")

PENDING, IN_SERVICE, COMPLETED, DROPPED = "pending", "inService", "completed", "dropped"


@dataclass
class Request:
    id: int
    parent_id: int | None
    qos_class: str
    size: float
    created_at: float
    dispatched_at: float | None = None
    completed_at: float | None = None
    route: str = ""
    status: str = PENDING
    # not serialised
    root_id: int = -1
    depth: int = 0

    def __post_init__(self):
        if self.root_id < 0:
            self.root_id = self.id


@dataclass
class Trace:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    requests: list[Request]
    event_count: int = 0
    conservation: dict = field(default_factory=dict)
    node_busy: dict = field(default_factory=dict)

    @property
    def duplicate_count(self) -> int:
        return sum(1 for r in self.requests if r.parent_id is not None)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def epochs_csv(trace: Trace) -> str:
    n, m = trace.x.shape[1], trace.u.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)])
    for k in range(trace.t.size):
        w.writerow([int(trace.t[k])] + [repr(float(v)) for v in trace.x[k]]
                   + [repr(float(v)) for v in trace.u[k]])
    return buf.getvalue()


def requests_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REQUEST_COLUMNS)
    for r in trace.requests:
        w.writerow([_fmt(getattr(r, c)) for c in REQUEST_COLUMNS])
    return buf.getvalue()


def trace_digest(trace: Trace) -> str:
    h = hashlib.sha256()
    h.update(epochs_csv(trace).encode())
    h.update(requests_csv(trace).encode())
    return h.hexdigest()


def write_trace(trace: Trace, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ep, rq = out / "epochs.csv", out / "requests.csv"
    ep.write_text(epochs_csv(trace))
    rq.write_text(requests_csv(trace))
    return ep, rq


def read_epochs(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(t, x, u)`` arrays from an epochs CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty epochs file")
    header = rows[0]
    if not header or header[0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    xi = [i for i, c in enumerate(header) if c.startswith("x_")]
    ui = [i for i, c in enumerate(header) if c.startswith("u_")]
    body = rows[1:]
    t = np.array([int(r[0]) for r in body], dtype=np.int64)
    x = np.array([[float(r[i]) for i in xi] for r in body], dtype=float).reshape(len(body), len(xi))
    u = np.array([[float(r[i]) for i in ui] for r in body], dtype=float).reshape(len(body), len(ui))
    return t, x, u


def _opt_float(s: str) -> float | None:
    return None if s == "" else float(s)


def read_requests(path: str | Path) -> list[Request]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    by_id: dict[int, Request] = {}
    out = []
    for row in rows:
        parent = None if row["parent_id"] == "" else int(row["parent_id"])
        req = Request(
            id=int(row["id"]), parent_id=parent, qos_class=row["qos_class"],
            size=float(row["size"]), created_at=float(row["created_at"]),
            dispatched_at=_opt_float(row["dispatched_at"]),
            completed_at=_opt_float(row["completed_at"]),
            route=row["route"], status=row["status"],
        )
        by_id[req.id] = req
        out.append(req)
    # rebuild family lineage; parents may appear after children in the file
    for req in out:
        root, depth, cur = req.id, 0, req
        while cur.parent_id is not None and cur.parent_id in by_id:
            cur = by_id[cur.parent_id]
            root, depth = cur.id, depth + 1
        req.root_id, req.depth = root, depth
    return out


def read_trace(directory: str | Path) -> Trace:
    d = Path(directory)
    t, x, u = read_epochs(d / "epochs.csv")
    reqs = read_requests(d / "requests.csv")
    return Trace(t=t, x=x, u=u, requests=reqs)
