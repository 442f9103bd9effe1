"""Least-squares identification of ``(A, B)`` from one-step transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (BoxConstraints, DimensionError, LinearModel, as_matrix,
                    as_vector, spectral_radius, step)

# Normal matrices worse-conditioned than this are treated as singular.
_SINGULAR_COND = 1e12


class InsufficientDataError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class IdentTrace:
    """Epoch samples ``(t, x(t), u(t))``; ``t`` increases by exactly 1."""

    t: np.ndarray  # (T,) int
    x: np.ndarray  # (T, n)
    u: np.ndarray  # (T, m)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64).reshape(-1)
        x = as_matrix(self.x, shape=(t.size, None), name="x trace")
        u = np.asarray(self.u, dtype=float)
        if u.ndim == 2 and u.shape[0] == t.size and u.shape[1] == 0:
            pass
        else:
            u = as_matrix(u, shape=(t.size, None), name="u trace")
        if t.size > 1 and np.any(np.diff(t) != 1):
            i = int(np.flatnonzero(np.diff(t) != 1)[0])
            raise ValueError(f"epoch index jumps from {t[i]} to {t[i + 1]}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    def __len__(self):
        return self.t.size

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class FitReport:
    model: LinearModel
    residual_rms: np.ndarray
    condition_number: float
    spectral_radius_a: float

    def to_dict(self) -> dict:
        return {
            "A": self.model.A.tolist(),
            "B": self.model.B.tolist(),
            "residual_rms": self.residual_rms.tolist(),
            "condition_number": self.condition_number,
            "spectral_radius_a": self.spectral_radius_a,
        }


def _power_max_eig(S: np.ndarray, max_iter: int = 1000, tol: float = 1e-10) -> float:
    """Dominant eigenvalue of a symmetric PSD matrix by power iteration."""
    v = np.ones(S.shape[0]) / np.sqrt(S.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        w = S @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ S @ v)
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            return new
        lam = new
    return lam


def _condition(G: np.ndarray) -> tuple[float, np.ndarray | None]:
    """Condition number of G and its Cholesky factor (None when singular)."""
    lam_max = _power_max_eig(G)
    if lam_max == 0.0:
        return np.inf, None
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        return np.inf, None

    def solve(b):
        return np.linalg.solve(L.T, np.linalg.solve(L, b))

    # inverse iteration: dominant eigenvalue of G^-1 is 1/lam_min
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    mu = 0.0
    for _ in range(1000):
        w = solve(v)
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            return np.inf, None
        v = w / nw
        new = float(v @ solve(v))
        if abs(new - mu) <= 1e-10 * abs(new):
            mu = new
            break
        mu = new
    if mu <= 0.0:
        return np.inf, None
    return lam_max * mu, L


def fit_least_squares(trace: IdentTrace,
                      bounds: tuple[BoxConstraints, BoxConstraints] | None = None,
                      ridge: float = 0.0) -> FitReport:
    """Regress ``x(t+1)`` on ``[x(t); u(t)]`` through the (ridged) normal equations.

    ``bounds`` (state box, control box) are attached to the returned model
    and play no part in the regression.
    """
    if not np.isfinite(ridge) or ridge < 0:
        raise ValueError(f"ridge must be finite and >= 0, got {ridge}")
    n, m = trace.n, trace.m
    T = len(trace)
    if T < n + m + 1:
        raise InsufficientDataError(
            f"need at least n+m+1 = {n + m + 1} epochs, trace has {T}")

    Z = np.hstack([trace.x[:-1], trace.u[:-1]])  # (T-1, n+m)
    Y = trace.x[1:]
    ZtZ = Z.T @ Z
    cond_gram, _ = _condition(ZtZ)
    G = ZtZ + ridge * np.eye(n + m)
    cond_g, L = _condition(G)
    if L is None or (ridge == 0.0 and cond_g > _SINGULAR_COND):
        if ridge == 0.0:
            raise RankDeficiencyError(
                "normal matrix is singular: regressors are not persistently "
                "exciting; pass a positive ridge")
        raise RankDeficiencyError("normal matrix is singular even with ridge")
    theta_t = np.linalg.solve(L.T, np.linalg.solve(L, Z.T @ Y))  # (n+m, n)
    theta = theta_t.T
    A, B = theta[:, :n], theta[:, n:]

    if bounds is None:
        sb, cb = BoxConstraints.unbounded(n), BoxConstraints.unbounded(m)
    else:
        sb, cb = bounds
    model = LinearModel(A, B, sb, cb)
    resid = Y - Z @ theta_t
    rms = np.sqrt(np.mean(resid ** 2, axis=0))
    return FitReport(
        model=model,
        residual_rms=rms,
        condition_number=float(np.sqrt(cond_gram)),
        spectral_radius_a=spectral_radius(A),
    )


def simulate_rollout(model: LinearModel, x0, controls, noise_sigma: float = 0.0,
                     seed: int = 0) -> IdentTrace:
    """Iterate the model under ``controls``; one epoch per control vector.

    Gaussian noise with standard deviation ``noise_sigma`` is added to every
    state component after each transition.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    x = as_vector(x0, model.n, name="x0")
    U = np.asarray(controls, dtype=float)
    if U.ndim == 1 and model.m == 1:
        U = U.reshape(-1, 1)
    if U.ndim != 2 or U.shape[1] != model.m:
        raise DimensionError(f"controls have shape {U.shape}, expected (K, {model.m})")
    rng = np.random.default_rng(seed)
    xs = np.empty((U.shape[0], model.n))
    for k in range(U.shape[0]):
        xs[k] = x
        x = step(model, x, U[k])
        if noise_sigma > 0:
            x = x + rng.normal(0.0, noise_sigma, size=model.n)
    return IdentTrace(np.arange(U.shape[0]), xs, U)
