"""Discrete-time stochastic LTI plant with optional additive faults.

    x[k+1] = A x[k] + B u[k] + t[k] + fault_state_map * delta[k]
    y[k]   = C x[k] + w[k]          + fault_output_map * delta[k]

t ~ N(0, Q) and w ~ N(0, R) are white; the initial state is
N(x0_mean, x0_cov). A step emits y from the pre-update state, then
advances x, matching a one-step-ahead filter's indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .jsonio import mat_from_lists, mat_to_lists, vec_from_lists


@dataclass(frozen=True)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    fault_state_map: np.ndarray
    fault_output_map: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_fault(self) -> int:
        return self.fault_state_map.shape[1]

    def validate(self) -> "SystemModel":
        n_x, n_y, n_u, n_f = self.n_x, self.n_y, self.n_u, self.n_fault
        shapes = {
            "A": (self.A, (n_x, n_x)),
            "B": (self.B, (n_x, n_u)),
            "C": (self.C, (n_y, n_x)),
            "fault_state_map": (self.fault_state_map, (n_x, n_f)),
            "fault_output_map": (self.fault_output_map, (n_y, n_f)),
            "Q": (self.Q, (n_x, n_x)),
            "R": (self.R, (n_y, n_y)),
            "x0_cov": (self.x0_cov, (n_x, n_x)),
        }
        for name, (M, want) in shapes.items():
            if M.shape != want:
                raise DimensionMismatch(f"{name}: expected {want}, got {M.shape}")
        if self.x0_mean.shape != (n_x,):
            raise DimensionMismatch(f"x0_mean: expected ({n_x},), got {self.x0_mean.shape}")
        for name in ("Q", "R", "x0_cov"):
            _chol(getattr(self, name), name)
        return self


def _chol(M: np.ndarray, name: str) -> np.ndarray:
    if np.linalg.norm(M - M.T, "fro") > 1e-9 * max(1.0, np.linalg.norm(M, "fro")):
        raise NotPositiveDefinite(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} is not positive definite") from exc


@dataclass
class AnomalyProfile:
    """Additive fault schedule: nothing, or a constant step from `onset` on."""

    kind: str = "none"
    onset: int = 0
    value: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))
        if self.kind not in ("none", "step"):
            raise ValueError(f"unknown fault kind {self.kind!r}")

    def delta_at(self, k: int) -> np.ndarray:
        if self.kind == "step" and k >= self.onset:
            return self.value
        return np.zeros_like(self.value)

    def active_at(self, k: int) -> bool:
        return self.kind == "step" and k >= self.onset


@dataclass
class PlantState:
    """Single-owner simulation state; advance sequentially with plant_step."""

    k: int
    x: np.ndarray
    rng: np.random.Generator
    noise: bool
    _chol_q: np.ndarray
    _chol_r: np.ndarray


def plant_init(model: SystemModel, seed, noise: bool = True) -> PlantState:
    """Draw x[1] ~ N(x0_mean, x0_cov); with noise=False start at the mean.

    `seed` may be an int or a numpy SeedSequence; the same seed replays the
    same trajectory bit for bit.
    """
    chol_q = _chol(model.Q, "Q")
    chol_r = _chol(model.R, "R")
    chol_0 = _chol(model.x0_cov, "x0_cov")
    rng = np.random.default_rng(seed)
    if noise:
        x = model.x0_mean + chol_0 @ rng.standard_normal(model.n_x)
    else:
        x = model.x0_mean.copy()
    return PlantState(k=1, x=x, rng=rng, noise=noise, _chol_q=chol_q, _chol_r=chol_r)


def plant_step(model: SystemModel, state: PlantState, u: np.ndarray, delta: np.ndarray | None = None) -> np.ndarray:
    """Emit y for the current state, then advance the state in place."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.n_u,):
        raise DimensionMismatch(f"u: expected ({model.n_u},), got {u.shape}")
    if delta is None:
        delta = np.zeros(model.n_fault)
    else:
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (model.n_fault,):
            raise DimensionMismatch(f"delta: expected ({model.n_fault},), got {delta.shape}")

    y = model.C @ state.x + model.fault_output_map @ delta
    x_next = model.A @ state.x + model.B @ u + model.fault_state_map @ delta
    if state.noise:
        y = y + state._chol_r @ state.rng.standard_normal(model.n_y)
        x_next = x_next + state._chol_q @ state.rng.standard_normal(model.n_x)
    state.x = x_next
    state.k += 1
    return y


def model_to_json(model: SystemModel) -> dict:
    return {
        "A": mat_to_lists(model.A),
        "B": mat_to_lists(model.B),
        "C": mat_to_lists(model.C),
        "fault_state_map": mat_to_lists(model.fault_state_map),
        "fault_output_map": mat_to_lists(model.fault_output_map),
        "Q": mat_to_lists(model.Q),
        "R": mat_to_lists(model.R),
        "x0_mean": mat_to_lists(model.x0_mean),
        "x0_cov": mat_to_lists(model.x0_cov),
    }


def model_from_json(doc: dict) -> SystemModel:
    A = mat_from_lists(doc["A"])
    n_x = A.shape[0]
    B = mat_from_lists(doc["B"], rows=n_x)
    C = mat_from_lists(doc["C"], cols=n_x)
    n_y, n_u = C.shape[0], B.shape[1]
    fsm = mat_from_lists(doc["fault_state_map"], rows=n_x)
    model = SystemModel(
        A=A,
        B=B,
        C=C,
        fault_state_map=fsm,
        fault_output_map=mat_from_lists(doc["fault_output_map"], rows=n_y, cols=fsm.shape[1]),
        Q=mat_from_lists(doc["Q"], rows=n_x, cols=n_x),
        R=mat_from_lists(doc["R"], rows=n_y, cols=n_y),
        x0_mean=vec_from_lists(doc["x0_mean"], length=n_x),
        x0_cov=mat_from_lists(doc["x0_cov"], rows=n_x, cols=n_x),
    )
    return model.validate()
