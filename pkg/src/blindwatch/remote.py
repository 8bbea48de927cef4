"""Remote-side detector: runs entirely in the lifted signal space.

This module sees only an EncodedConfig and lifted vectors. It must stay
free of any import from the plaintext layers (plant, detector, coding);
the privacy argument of the whole package rests on the remote station
being able to run on composed matrices alone. A test enforces the import
boundary.

Per step, for lifted input util and lifted measurement ytil:

    rtil = res_y ytil - res_x xtil          lifted residual
    q    = |quad_factor rtil|^2             distance (stable factored form)
    ztil = z_lift q + z_mask ytil           lifted distance
    zeta = z_unlift (ztil - z_mask ytil)    recovered distance
    atil = a_mask ytil (+ a_lift if zeta > alpha)
    xtil <- step_x xtil + step_u util + step_y ytil

The station learns whether zeta crossed the threshold, nothing else: all
values it handles are masked by the sender's one-time pads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoded import EncodedConfig
from .errors import DimensionMismatch


@dataclass
class TargetState:
    """Lifted filter state; one per session, advanced sequentially."""

    xtil: np.ndarray


@dataclass(frozen=True)
class TargetDiag:
    rtil: np.ndarray
    ztil: np.ndarray
    atil: np.ndarray
    zeta: float


def target_init(config: EncodedConfig) -> TargetState:
    """Start on the lifted image of the plaintext filter's initial state."""
    return TargetState(xtil=config.x0.copy())


def target_step(
    config: EncodedConfig,
    state: TargetState,
    util: np.ndarray,
    ytil: np.ndarray,
) -> TargetDiag:
    """Consume one lifted (util, ytil) pair; emit the lifted alarm."""
    util = np.asarray(util, dtype=float)
    ytil = np.asarray(ytil, dtype=float)
    if util.shape != (config.dim_u,):
        raise DimensionMismatch(f"util: expected ({config.dim_u},), got {util.shape}")
    if ytil.shape != (config.dim_y,):
        raise DimensionMismatch(f"ytil: expected ({config.dim_y},), got {ytil.shape}")

    rtil = config.res_y @ ytil - config.res_x @ state.xtil
    g = config.quad_factor @ rtil
    q = float(g @ g)
    y_mask = config.z_mask @ ytil
    ztil = config.z_lift[:, 0] * q + y_mask
    zeta = float((config.z_unlift @ (ztil - y_mask))[0])
    atil = config.a_mask @ ytil
    if zeta > config.alpha:
        atil = config.a_lift[:, 0] + atil
    state.xtil = config.step_x @ state.xtil + config.step_u @ util + config.step_y @ ytil
    return TargetDiag(rtil=rtil, ztil=ztil, atil=atil, zeta=zeta)
