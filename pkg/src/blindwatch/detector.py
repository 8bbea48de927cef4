"""Plaintext chi-squared anomaly detector on a steady-state Kalman filter.

Design time: solve the Riccati equation for the asymptotic error
covariance, form the gain, the residual covariance S = C P C' + R, and
the alarm threshold alpha = 2 * gamma_p_inv(n_y / 2, 1 - far_target), the
chi-squared quantile matching a desired false alarm rate.

Run time: whiten the innovation r = y - C xhat into the distance
z = r' S^-1 r and alarm on z > alpha (strict), then advance
xhat <- A xhat + B u + L r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .jsonio import mat_from_lists, mat_to_lists
from .numerics import dare_solve, gamma_p_inv, kalman_gain
from .plant import SystemModel


@dataclass(frozen=True)
class DetectorDesign:
    """Immutable design artifact; shareable across threads."""

    L: np.ndarray
    P: np.ndarray
    S: np.ndarray
    S_inv: np.ndarray
    alpha: float
    far_target: float
    n_y: int


@dataclass
class DetectorState:
    """Filter state; single owner, advanced sequentially."""

    xhat: np.ndarray


@dataclass(frozen=True)
class StepDiag:
    r: np.ndarray
    z: float
    a: int


def design(model: SystemModel, far_target: float, tol: float = 1e-12) -> DetectorDesign:
    """Design the steady-state detector for a target false alarm rate."""
    if not 0.0 < far_target < 1.0:
        raise DomainError(f"false alarm rate must lie in (0, 1), got {far_target}")
    sol = dare_solve(model.A, model.C, model.Q, model.R, tol=tol)
    L = kalman_gain(model.A, model.C, sol.P, model.R)
    S = model.C @ sol.P @ model.C.T + model.R
    S = 0.5 * (S + S.T)
    S_inv = np.linalg.inv(S)
    alpha = 2.0 * gamma_p_inv(model.n_y / 2.0, 1.0 - far_target)
    return DetectorDesign(
        L=L,
        P=sol.P,
        S=S,
        S_inv=S_inv,
        alpha=alpha,
        far_target=far_target,
        n_y=model.n_y,
    )


def detector_init(model: SystemModel) -> DetectorState:
    """Start the filter at the initial-state mean."""
    return DetectorState(xhat=model.x0_mean.copy())


def detector_step(
    design: DetectorDesign,
    state: DetectorState,
    u: np.ndarray,
    y: np.ndarray,
    model: SystemModel,
) -> StepDiag:
    """Consume one (u, y) pair; return residual, distance, and alarm bit."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n_y,) or u.shape != (model.n_u,):
        raise DimensionMismatch(f"u {u.shape}, y {y.shape}")
    r = y - model.C @ state.xhat
    z = float(r @ design.S_inv @ r)
    a = 1 if z > design.alpha else 0
    state.xhat = model.A @ state.xhat + model.B @ u + design.L @ r
    return StepDiag(r=r, z=z, a=a)


def design_to_json(design: DetectorDesign) -> dict:
    return {
        "L": mat_to_lists(design.L),
        "P": mat_to_lists(design.P),
        "S": mat_to_lists(design.S),
        "S_inv": mat_to_lists(design.S_inv),
        "alpha": design.alpha,
        "far_target": design.far_target,
        "n_y": design.n_y,
    }


def design_from_json(doc: dict) -> DetectorDesign:
    L = mat_from_lists(doc["L"])
    n_y = int(doc["n_y"])
    return DetectorDesign(
        L=L,
        P=mat_from_lists(doc["P"], rows=L.shape[0], cols=L.shape[0]),
        S=mat_from_lists(doc["S"], rows=n_y, cols=n_y),
        S_inv=mat_from_lists(doc["S_inv"], rows=n_y, cols=n_y),
        alpha=float(doc["alpha"]),
        far_target=float(doc["far_target"]),
        n_y=n_y,
    )
