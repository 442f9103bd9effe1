"""Discrete-time linear plant ``x(t+1) = A x(t) + B u(t)`` with box constraints.

State and control vectors are plain 1-D float arrays; :func:`as_vector`
checks dimension and finiteness at the boundaries where that matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class NonFiniteError(ValueError):
    """A NaN or infinity appeared where finite values are required."""


def as_vector(values, n: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {n}")
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        raise NonFiniteError(f"{name}[{bad[0]}] is not finite ({v[bad[0]]})")
    return v


def as_matrix(values, shape: tuple[int | None, int | None] = (None, None),
              name: str = "matrix") -> np.ndarray:
    M = np.asarray(values, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    for axis, want in enumerate(shape):
        if want is not None and M.shape[axis] != want:
            raise DimensionError(f"{name} has shape {M.shape}, expected {shape}")
    if not np.all(np.isfinite(M)):
        i, j = np.argwhere(~np.isfinite(M))[0]
        raise NonFiniteError(f"{name}[{i},{j}] is not finite")
    return M


@dataclass(frozen=True)
class BoxConstraints:
    """Axis-aligned box ``lower <= v <= upper``; infinite edges allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError(f"bounds length mismatch: {lo.size} lower vs {hi.size} upper")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise NonFiniteError("bounds must not contain NaN")
        bad = np.flatnonzero(lo > hi)
        if bad.size:
            i = bad[0]
            raise ValueError(f"lower[{i}]={lo[i]} exceeds upper[{i}]={hi[i]}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def unbounded(cls, d: int) -> "BoxConstraints":
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    def contains(self, v, atol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - atol) and np.all(v <= self.upper + atol))


@dataclass(frozen=True)
class StateSemantics:
    """Names and units for the state components. Metadata only."""

    labels: tuple[str, ...]
    units: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "units", tuple(self.units) or ("",) * len(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"state labels must be unique: {self.labels}")
        if len(self.units) != len(self.labels):
            raise DimensionError("one unit per label required")

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    state_bounds: BoxConstraints = field(default=None)  # type: ignore[assignment]
    control_bounds: BoxConstraints = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = as_matrix(self.B, shape=(n, None), name="B")
        m = B.shape[1]
        sb = self.state_bounds if self.state_bounds is not None else BoxConstraints.unbounded(n)
        cb = self.control_bounds if self.control_bounds is not None else BoxConstraints.unbounded(m)
        if sb.d != n:
            raise DimensionError(f"state bounds have d={sb.d}, model has n={n}")
        if cb.d != m:
            raise DimensionError(f"control bounds have d={cb.d}, model has m={m}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "state_bounds", sb)
        object.__setattr__(self, "control_bounds", cb)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def step(model: LinearModel, x, u) -> np.ndarray:
    """One transition ``A x + B u``. No projection onto the state box."""
    x = as_vector(x, model.n, name="x")
    u = as_vector(u, model.m, name="u")
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = model.A @ x + model.B @ u
    bad = np.flatnonzero(~np.isfinite(nxt))
    if bad.size:
        raise NonFiniteError(f"step produced non-finite component x[{bad[0]}]")
    return nxt


def project(v, bounds: BoxConstraints) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != bounds.d:
        raise DimensionError(f"vector of shape {v.shape} vs bounds of dimension {bounds.d}")
    return np.minimum(np.maximum(v, bounds.lower), bounds.upper)


def spectral_radius(A, max_iter: int = 1000, tol: float = 1e-10) -> float:
    """Largest eigenvalue magnitude by a normalised power method on ``A^(2^k)``.

    Squaring the iterate each round makes the estimate
    ``||A^(2^k)||^(2^-k)`` converge (Gelfand's formula) even for complex
    conjugate pairs and defective eigenvalues, where plain vector power
    iteration oscillates or crawls.
    """
    M = as_matrix(A, name="A")
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    norm = np.linalg.norm(M)
    if norm == 0.0:
        return 0.0
    log_scale = math.log(norm)  # log ||A^(2^k)||, tracked without overflow
    M = M / norm
    estimate = norm
    for k in range(1, max_iter + 1):
        M = M @ M
        nrm = np.linalg.norm(M)
        if nrm == 0.0:
            return 0.0  # nilpotent
        log_scale = 2.0 * log_scale + math.log(nrm)
        M = M / nrm
        # 2**k overflows float exponent range near k=1024
        new = math.exp(log_scale / 2.0**k) if k < 1000 else estimate
        if abs(new - estimate) <= tol * max(1.0, new):
            return new
        estimate = new
    return estimate
