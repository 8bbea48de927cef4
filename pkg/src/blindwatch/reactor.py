"""Embedded benchmark: a stirred chemical reactor with a heat exchanger.

Four states, three measured outputs, three inputs, one scalar fault
channel that pushes on every state and output. Ships with reference
design tables (steady-state gain and residual covariance) used by the
validation tests and the design report.
"""

from __future__ import annotations

import math

import numpy as np

from .plant import AnomalyProfile, SystemModel

A = np.array(
    [
        [0.8353, 0.0, 0.0, 0.0],
        [0.0, 0.8324, 0.0, 0.0031],
        [0.0, 0.0001, 0.1633, 0.0],
        [0.0, 0.0280, 0.0172, 0.9320],
    ]
)
B = np.array(
    [
        [0.0458, 0.0, 0.0],
        [0.0, 0.0457, 0.0],
        [0.0, 0.0, 0.0231],
        [0.0, 0.0007, 0.0006],
    ]
)
C = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)
FAULT_STATE_MAP = np.array([[1.0], [2.0], [3.0], [4.0]])
FAULT_OUTPUT_MAP = np.array([[1.0], [2.0], [3.0]])
X0_MEAN = np.array([6.94, 13.76, 1.0, 1.0])
X0_COV = 0.001 * np.eye(4)

# Reference steady-state design tables for cross-checking. The computed
# gain reproduces every entry except (4,3); that entry is only consistent
# with A[4,3] = 0.0549 rather than the recorded 0.0172 (see tests).
REFERENCE_GAIN = np.array(
    [
        [0.8271, 0.0, 0.0],
        [0.0, 0.8243, 0.0002],
        [0.0, 0.0002, 0.1619],
        [0.0, 0.0481, 0.0543],
    ]
)
REFERENCE_RESIDUAL_COV = np.array(
    [
        [1.0169, 0.0, 0.0],
        [0.0, 1.0169, 0.0001],
        [0.0, 0.0001, 1.0105],
    ]
)

# Default lifted dimensions for this benchmark: state 4 -> 8, output 3 -> 4,
# input 3 -> 4, alarm 1 -> 2 (residual defaults to the lifted output size,
# distance to 2).
REACTOR_LIFT_DIMS = (8, 4, 4, 2)

FAR_TARGET = 0.1
FAULT_ONSET = 20
FAULT_VALUE = 0.9


def reactor_model(covariances: str = "design") -> SystemModel:
    """Benchmark model with one of two noise settings.

    "design" (default) uses Q = I, R = 0.01 I, the only covariances
    consistent with the reference gain and residual-covariance tables.
    "stated" uses the recorded nominal levels Q = R = 0.001 I, which are
    mutually inconsistent with those tables; kept for comparison runs.
    """
    if covariances == "design":
        Q, R = np.eye(4), 0.01 * np.eye(3)
    elif covariances == "stated":
        Q, R = 0.001 * np.eye(4), 0.001 * np.eye(3)
    else:
        raise ValueError(f"unknown covariance setting {covariances!r}")
    return SystemModel(
        A=A.copy(),
        B=B.copy(),
        C=C.copy(),
        fault_state_map=FAULT_STATE_MAP.copy(),
        fault_output_map=FAULT_OUTPUT_MAP.copy(),
        Q=Q,
        R=R,
        x0_mean=X0_MEAN.copy(),
        x0_cov=X0_COV.copy(),
    ).validate()


def reactor_input(k: int) -> np.ndarray:
    """Reference input 50 cos(0.5 k)^2, broadcast to all three channels."""
    return np.full(3, 50.0 * math.cos(0.5 * k) ** 2)


def reactor_fault(onset: int = FAULT_ONSET, value: float = FAULT_VALUE) -> AnomalyProfile:
    """Constant additive fault on the scalar fault channel."""
    return AnomalyProfile(kind="step", onset=onset, value=np.array([value]))
