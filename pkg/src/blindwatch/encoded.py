"""The matrix bundle a remote station needs to run the lifted detector.

This is everything the remote side ever receives: composed products of
the secret lifting matrices with the plaintext design. No plaintext model
matrix, gain, covariance, or individual lifting matrix appears here, and
this module deliberately imports nothing from the plaintext layers so the
remote code cannot reach them.

Field map (dims: lifted state dx, input du, output dy, residual dr,
distance dz, alarm da):

    step_x (dx,dx), step_u (dx,du), step_y (dx,dy)  filter recursion
    res_y  (dr,dy), res_x  (dr,dx)                  lifted residual
    quad   (dr,dr)                                  distance weight
    quad_factor (dr,dr)                             quad_factor'quad_factor = quad
    z_lift (dz,1), z_unlift (1,dz), z_mask (dz,dy)  lifted distance
    a_lift (da,1), a_mask (da,dy)                   lifted alarm
    alpha                                           threshold
    x0     (dx,)                                    initial lifted state

The distance is evaluated as the squared norm of quad_factor @ rtil, not
as rtil' quad rtil: the two are algebraically identical, but the factored
form avoids the catastrophic cancellation the large masking noise induces
in the raw quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class EncodedConfig:
    step_x: np.ndarray
    step_u: np.ndarray
    step_y: np.ndarray
    res_y: np.ndarray
    res_x: np.ndarray
    quad: np.ndarray
    quad_factor: np.ndarray
    z_lift: np.ndarray
    z_unlift: np.ndarray
    z_mask: np.ndarray
    a_lift: np.ndarray
    a_mask: np.ndarray
    alpha: float
    x0: np.ndarray

    @property
    def dim_x(self) -> int:
        return self.step_x.shape[0]

    @property
    def dim_u(self) -> int:
        return self.step_u.shape[1]

    @property
    def dim_y(self) -> int:
        return self.step_y.shape[1]

    @property
    def dim_r(self) -> int:
        return self.res_y.shape[0]

    @property
    def dim_z(self) -> int:
        return self.z_lift.shape[0]

    @property
    def dim_a(self) -> int:
        return self.a_lift.shape[0]

    def validate(self) -> "EncodedConfig":
        dx, du, dy = self.dim_x, self.dim_u, self.dim_y
        dr, dz, da = self.dim_r, self.dim_z, self.dim_a
        shapes = {
            "step_x": (self.step_x, (dx, dx)),
            "step_u": (self.step_u, (dx, du)),
            "step_y": (self.step_y, (dx, dy)),
            "res_y": (self.res_y, (dr, dy)),
            "res_x": (self.res_x, (dr, dx)),
            "quad": (self.quad, (dr, dr)),
            "quad_factor": (self.quad_factor, (dr, dr)),
            "z_lift": (self.z_lift, (dz, 1)),
            "z_unlift": (self.z_unlift, (1, dz)),
            "z_mask": (self.z_mask, (dz, dy)),
            "a_lift": (self.a_lift, (da, 1)),
            "a_mask": (self.a_mask, (da, dy)),
        }
        for name, (M, want) in shapes.items():
            if M.shape != want:
                raise DimensionMismatch(f"{name}: expected {want}, got {M.shape}")
        if self.x0.shape != (dx,):
            raise DimensionMismatch(f"x0: expected ({dx},), got {self.x0.shape}")
        qnorm = max(1.0, float(np.linalg.norm(self.quad, "fro")))
        if np.linalg.norm(self.quad - self.quad.T, "fro") > 1e-9 * qnorm:
            raise DimensionMismatch("quad is not symmetric")
        recomposed = self.quad_factor.T @ self.quad_factor
        if np.linalg.norm(recomposed - self.quad, "fro") > 1e-8 * qnorm:
            raise DimensionMismatch("quad_factor does not factor quad")
        return self


_MATRIX_FIELDS = (
    "step_x",
    "step_u",
    "step_y",
    "res_y",
    "res_x",
    "quad",
    "quad_factor",
    "z_lift",
    "z_unlift",
    "z_mask",
    "a_lift",
    "a_mask",
)


def config_to_json(config: EncodedConfig) -> dict:
    doc = {name: np.asarray(getattr(config, name), dtype=float).tolist() for name in _MATRIX_FIELDS}
    doc["alpha"] = float(config.alpha)
    doc["x0"] = np.asarray(config.x0, dtype=float).tolist()
    return doc


def config_from_json(doc: dict) -> EncodedConfig:
    fields = {}
    for name in _MATRIX_FIELDS:
        M = np.asarray(doc[name], dtype=float)
        if M.ndim != 2:
            raise DimensionMismatch(f"{name}: expected a matrix")
        fields[name] = M
    x0 = np.asarray(doc["x0"], dtype=float)
    if x0.ndim != 1:
        raise DimensionMismatch("x0: expected a vector")
    return EncodedConfig(alpha=float(doc["alpha"]), x0=x0, **fields).validate()
