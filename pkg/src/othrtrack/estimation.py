"""Per-target state filtering and smoothing.

The filter runs an extended Kalman cycle on the ground-coordinate state
(rho, rho_dot, b, b_dot) against equivalent measurements: for each
propagation mode, the association-weighted mean of the gated returns with
covariance inflated by the inverse association mass.  Modes that received
no association mass are dropped from the stacked update.  The smoother is
an unscented Rauch-Tung-Striebel backward pass over the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .association import AssociationSummary, N_MODES
from .errors import NotPositiveDefiniteError
from .geometry import MODES, as_model

STATE_DIM = 4


@dataclass
class FilterState:
    """State estimate with covariance (rho km, rho_dot km/s, b rad, b_dot rad/s)."""

    x: np.ndarray
    P: np.ndarray

    def copy(self) -> "FilterState":
        return FilterState(self.x.copy(), self.P.copy())


@dataclass(frozen=True)
class EquivalentMeasurement:
    """Association-weighted measurement of one target through one mode.

    ``cov`` is the mode noise covariance divided by the association mass
    ``weight``; the limit weight -> 0 is handled by omitting the mode.
    """

    mode: int
    y: np.ndarray
    cov: np.ndarray
    weight: float


class ConstantVelocityModel:
    """Linear constant-velocity dynamics in (rho, b) over a fixed step."""

    def __init__(self, dt: float):
        self.dt = dt
        F = np.eye(STATE_DIM)
        F[0, 1] = dt
        F[2, 3] = dt
        self.F = F

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.F @ np.asarray(x, dtype=float)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        del x
        return self.F


def process_noise(stds: Sequence[float]) -> np.ndarray:
    """Diagonal process noise covariance from per-component stds."""
    return np.diag(np.square(np.asarray(stds, dtype=float)))


def predict(prior: FilterState, model, B: np.ndarray) -> FilterState:
    """Time update: x = f(x), P = J_f P J_f^T + B."""
    J = model.jacobian(prior.x)
    x = model(prior.x)
    P = J @ prior.P @ J.T + B
    return FilterState(x, 0.5 * (P + P.T))


def mode_heights(beta: np.ndarray, mode_idx: int) -> Tuple[float, float]:
    """(h_t, h_r) for a mode from the used-height vector [hE_it, hE_ir, hF_it, hF_ir]."""
    mode = MODES[mode_idx]
    h_t = beta[0] if mode.layer_t == "E" else beta[2]
    h_r = beta[1] if mode.layer_r == "E" else beta[3]
    return float(h_t), float(h_r)


def predict_measurement(
    pred: FilterState,
    beta: np.ndarray,
    geom,
    noise_covs: Sequence[np.ndarray],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-mode measurement prediction, innovation covariance and Jacobian.

    Returns (y_pred (4,3), S (4,3,3), J (4,3,4)) evaluated at the predicted
    state with the target's used heights ``beta``.  ``geom`` may be a
    RadarGeometry or any MeasurementModel.
    """
    model = as_model(geom)
    y_pred = np.zeros((N_MODES, 3))
    S = np.zeros((N_MODES, 3, 3))
    J = np.zeros((N_MODES, 3, STATE_DIM))
    for g in range(N_MODES):
        h_t, h_r = mode_heights(beta, g)
        y_pred[g] = model.u(pred.x, h_t, h_r)
        J[g] = model.jac_state(pred.x, h_t, h_r)
        S[g] = J[g] @ pred.P @ J[g].T + noise_covs[g]
        S[g] = 0.5 * (S[g] + S[g].T)
    return y_pred, S, J


def synthesize_equivalent(
    summary: AssociationSummary,
    target: int,
    noise_covs: Sequence[np.ndarray],
) -> List[EquivalentMeasurement]:
    """Equivalent measurements of one target from the association summary.

    Modes with zero association mass yield no equivalent measurement.
    """
    out = []
    for g in range(N_MODES):
        w = float(summary.weight[target, g])
        if w <= 0.0:
            continue
        out.append(
            EquivalentMeasurement(
                mode=g,
                y=summary.mean_measurement[target, g].copy(),
                cov=np.asarray(noise_covs[g], dtype=float) / w,
                weight=w,
            )
        )
    return out


def update(
    pred: FilterState,
    equivalents: Sequence[EquivalentMeasurement],
    y_pred: np.ndarray,
    jacobians: np.ndarray,
) -> FilterState:
    """Stacked measurement update over the modes present.

    With no equivalent measurement the prediction is returned unchanged.
    ``y_pred``/``jacobians`` are the per-mode predictions from
    ``predict_measurement``.
    """
    if not equivalents:
        return pred.copy()
    J = np.concatenate([jacobians[e.mode] for e in equivalents], axis=0)
    nu = np.concatenate([e.y - y_pred[e.mode] for e in equivalents])
    R_c = scipy.linalg.block_diag(*[e.cov for e in equivalents])
    S = J @ pred.P @ J.T + R_c
    try:
        cho = scipy.linalg.cho_factor(0.5 * (S + S.T), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("stacked innovation covariance is singular") from exc
    K = scipy.linalg.cho_solve(cho, J @ pred.P).T
    x = pred.x + K @ nu
    P = pred.P - K @ S @ K.T
    return FilterState(x, 0.5 * (P + P.T))


def _sqrt_psd(P: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, with a small jitter retry near singularity."""
    try:
        return scipy.linalg.cholesky(P, lower=True)
    except scipy.linalg.LinAlgError:
        pass
    jitter = 1e-9 * np.eye(P.shape[0])
    try:
        return scipy.linalg.cholesky(P + jitter, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("covariance square root failed") from exc


def sigma_points(x: np.ndarray, P: np.ndarray, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """Symmetric sigma-point set and weights for the unscented transform."""
    dim = len(x)
    spread = math.sqrt(dim + scale)
    L = _sqrt_psd(P)
    pts = np.empty((2 * dim + 1, dim))
    pts[0] = x
    pts[1 : dim + 1] = x + spread * L.T
    pts[dim + 1 :] = x - spread * L.T
    w = np.full(2 * dim + 1, 1.0 / (2.0 * (dim + scale)))
    w[0] = scale / (dim + scale)
    return pts, w


def urts_smooth(
    filtered: Sequence[FilterState],
    model,
    B: np.ndarray,
    scale: Optional[float] = None,
) -> List[FilterState]:
    """Unscented Rauch-Tung-Striebel smoother over a filtered sequence.

    The final-time smoothed state equals the final filtered state; each
    backward step forms sigma points at the filtered estimate, propagates
    them through the dynamics, and applies the smoother gain
    D = O (P_pred)^-1 built from the unscented cross-covariance O.
    """
    n = len(filtered)
    if n == 0:
        raise ValueError("filtered sequence must be nonempty")
    dim = len(filtered[0].x)
    if scale is None:
        scale = 3.0 - dim
    smoothed = [fs.copy() for fs in filtered]
    for t in range(n - 2, -1, -1):
        pts, w = sigma_points(filtered[t].x, filtered[t].P, scale)
        prop = np.array([model(p) for p in pts])
        x_minus = w @ prop
        dxp = prop - x_minus
        P_minus = (w[:, None] * dxp).T @ dxp + B
        dx = pts - filtered[t].x
        O = (w[:, None] * dx).T @ dxp
        D = scipy.linalg.solve(0.5 * (P_minus + P_minus.T), O.T, assume_a="sym").T
        x_s = filtered[t].x + D @ (smoothed[t + 1].x - x_minus)
        P_s = filtered[t].P + D @ (smoothed[t + 1].P - P_minus) @ D.T
        smoothed[t] = FilterState(x_s, 0.5 * (P_s + P_s.T))
    return smoothed
