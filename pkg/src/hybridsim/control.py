"""Control policies: the one-step model-based regulator and two baselines.

Every policy maps the sampled state (plus the previous control) to a control
vector inside the control box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .model import (BoxConstraints, DimensionError, LinearModel, as_vector,
                    project)

_RIDGE = 1e-9
_PGD_ITERS = 500
_PGD_TOL = 1e-10


@dataclass(frozen=True)
class NoControl:
    """Hold the previous control forever."""


@dataclass(frozen=True)
class StaticPolicy:
    u_fixed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_fixed", as_vector(self.u_fixed, name="u_fixed"))


@dataclass(frozen=True)
class PropThreshold:
    """Hysteresis band on one state component driving one control component.

    Above ``high_water`` the control moves up by ``step_frac`` of its range,
    below ``low_water`` it moves down by the same amount, otherwise it holds.
    """

    component_index: int
    low_water: float
    high_water: float
    step_frac: float
    control_index: int

    def __post_init__(self):
        if not self.low_water < self.high_water:
            raise ValueError(f"low_water {self.low_water} must be < high_water {self.high_water}")
        if not 0.0 < self.step_frac <= 1.0:
            raise ValueError(f"step_frac must be in (0, 1], got {self.step_frac}")
        if self.component_index < 0 or self.control_index < 0:
            raise IndexError("indices must be non-negative")


@dataclass(frozen=True)
class OneStep:
    model: LinearModel
    x_ref: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_ref", as_vector(self.x_ref, self.model.n, name="x_ref"))


ControlPolicy = Union[NoControl, StaticPolicy, PropThreshold, OneStep]


class OneStepResult(NamedTuple):
    u: np.ndarray
    objective: float
    iterations: int
    uncontrollable: bool


def _largest_eig(S: np.ndarray, iters: int = 1000, tol: float = 1e-12) -> float:
    v = np.ones(S.shape[0]) / np.sqrt(S.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = S @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ S @ v)
        if abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    return lam


def one_step_solve(model: LinearModel, x, x_ref) -> OneStepResult:
    """Box-constrained minimiser of ``||x_ref - (A x + B u)||^2`` over ``u``."""
    x = as_vector(x, model.n, name="x")
    x_ref = as_vector(x_ref, model.n, name="x_ref")
    bounds = model.control_bounds
    B = model.B
    r = x_ref - model.A @ x

    BtB = B.T @ B
    Btr = B.T @ r
    u = np.linalg.solve(BtB + _RIDGE * np.eye(model.m), Btr)
    u = project(u, bounds)

    L = _largest_eig(BtB)
    uncontrollable = L == 0.0 and bool(np.any(r != 0.0))
    it = 0
    if L > 0.0:
        # warm start on the face the projected solution lands on; PGD then
        # stops after one step when that face already holds the optimum
        u = _polish_active_set(BtB, Btr, r, B, u, bounds)
        step_size = 1.0 / L
        for it in range(1, _PGD_ITERS + 1):
            grad = BtB @ u - Btr
            nxt = project(u - step_size * grad, bounds)
            moved = np.max(np.abs(nxt - u))
            u = nxt
            if moved < _PGD_TOL:
                break
        u = _polish_active_set(BtB, Btr, r, B, u, bounds)
    resid = r - B @ u
    return OneStepResult(u, float(resid @ resid), it, uncontrollable)


def _polish_active_set(BtB, Btr, r, B, u, bounds: BoxConstraints) -> np.ndarray:
    # Exact solve on the face PGD settled on; kept only if feasible and no worse.
    at_bound = (u <= bounds.lower) | (u >= bounds.upper)
    free = ~at_bound
    if not free.any():
        return u
    cand = u.copy()
    rhs = Btr[free] - BtB[np.ix_(free, at_bound)] @ u[at_bound]
    H = BtB[np.ix_(free, free)]
    try:
        cand[free] = np.linalg.lstsq(H, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return u
    if not bounds.contains(cand):
        return u
    before = r - B @ u
    after = r - B @ cand
    return cand if after @ after <= before @ before else u


def one_step_control(model: LinearModel, x, x_ref) -> np.ndarray:
    return one_step_solve(model, x, x_ref).u


def prop_threshold_control(policy: PropThreshold, x, u_prev,
                           bounds: BoxConstraints) -> np.ndarray:
    x = as_vector(x, name="x")
    u = as_vector(u_prev, bounds.d, name="u_prev").copy()
    if policy.component_index >= x.size:
        raise IndexError(f"component_index {policy.component_index} out of range for n={x.size}")
    if policy.control_index >= u.size:
        raise IndexError(f"control_index {policy.control_index} out of range for m={u.size}")
    j = policy.control_index
    delta = policy.step_frac * (bounds.upper[j] - bounds.lower[j])
    level = x[policy.component_index]
    if level > policy.high_water:
        u[j] += delta
    elif level < policy.low_water:
        u[j] -= delta
    return project(u, bounds)


def apply_policy(policy: ControlPolicy, x, u_prev, bounds: BoxConstraints) -> np.ndarray:
    """Run ``policy`` for one epoch; the result always lies inside ``bounds``."""
    u_prev = as_vector(u_prev, bounds.d, name="u_prev")
    if isinstance(policy, NoControl):
        return project(u_prev, bounds)
    if isinstance(policy, StaticPolicy):
        if policy.u_fixed.size != bounds.d:
            raise DimensionError(f"u_fixed has length {policy.u_fixed.size}, bounds d={bounds.d}")
        return project(policy.u_fixed, bounds)
    if isinstance(policy, PropThreshold):
        return prop_threshold_control(policy, x, u_prev, bounds)
    if isinstance(policy, OneStep):
        if policy.model.m != bounds.d:
            raise DimensionError(f"model has m={policy.model.m}, bounds d={bounds.d}")
        return project(one_step_control(policy.model, x, policy.x_ref), bounds)
    raise TypeError(f"unknown policy type {type(policy).__name__}")
