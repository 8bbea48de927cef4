"""User-side coding: key generation, signal lifting, alarm decoding.

A key is a set of secret random matrices that lift every signal into a
higher-dimensional space, plus kernel bases that inject one-time masking
noise invisible to the matching left inverses. The user encodes (u, y)
before disclosure, ships only composed products (EncodedConfig) to the
remote detector, and decodes the returned lifted alarms.

Keyfiles written by key_to_json are secrets. They must never be sent to
the remote station; the remote side only ever needs the EncodedConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import DetectorDesign
from .encoded import EncodedConfig
from .errors import DecodeDrift, DimensionMismatch, DimsInvalid, RankRetryExhausted
from .jsonio import mat_from_lists, mat_to_lists
from .numerics import RANK_TOL, kernel_basis, left_inverse
from .plant import SystemModel

DECODE_TOL = 1e-6
MAX_RANK_RETRIES = 16

DEFAULT_SCALE_SMALL = 0.1
DEFAULT_SCALE_LARGE = 100.0
DEFAULT_PAD_MEAN = 1e3
DEFAULT_PAD_STD = 1e2


@dataclass(frozen=True)
class KeyDims:
    """Lifted dimensions: state x, output y, input u, alarm a, residual r,
    distance z."""

    nx: int
    ny: int
    nu: int
    na: int
    nr: int
    nz: int

    def validate(self, n_x: int, n_y: int, n_u: int) -> "KeyDims":
        checks = (
            (self.nx > n_x, f"lifted state dim {self.nx} must exceed {n_x}"),
            (self.ny > n_y, f"lifted output dim {self.ny} must exceed {n_y}"),
            (self.nu > n_u, f"lifted input dim {self.nu} must exceed {n_u}"),
            (self.nr >= self.ny, f"residual dim {self.nr} must be >= {self.ny}"),
            (self.nz > 1, f"distance dim {self.nz} must exceed 1"),
            (self.na > 1, f"alarm dim {self.na} must exceed 1"),
        )
        for ok, msg in checks:
            if not ok:
                raise DimsInvalid(msg)
        return self


@dataclass(frozen=True)
class KeySet:
    """Secret lifting matrices, their left inverses, and the masking-noise
    kernel bases. Immutable; treat as key material."""

    dims: KeyDims
    y_lift: np.ndarray
    u_lift: np.ndarray
    x_lift: np.ndarray
    a_lift: np.ndarray
    z_lift: np.ndarray
    r_mix: np.ndarray
    z_mask: np.ndarray
    a_mask: np.ndarray
    y_unlift: np.ndarray
    u_unlift: np.ndarray
    x_unlift: np.ndarray
    a_unlift: np.ndarray
    z_unlift: np.ndarray
    r_unmix: np.ndarray
    y_pad: np.ndarray
    u_pad: np.ndarray
    pad_mean: float
    pad_std: float
    seed: int | None = None


def _full_rank(M: np.ndarray) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return s.size > 0 and s[0] > 0.0 and s[-1] > RANK_TOL * s[0]


def _sample_full_rank(rng, rows, cols, scale, what):
    for _ in range(MAX_RANK_RETRIES):
        M = rng.uniform(-scale, scale, size=(rows, cols))
        if _full_rank(M):
            return M
    raise RankRetryExhausted(f"no full-rank draw for {what} ({rows}x{cols})")


def keygen(
    dims: KeyDims,
    n_x: int,
    n_y: int,
    n_u: int,
    seed,
    scale_small: float = DEFAULT_SCALE_SMALL,
    scale_large: float = DEFAULT_SCALE_LARGE,
    pad_mean: float = DEFAULT_PAD_MEAN,
    pad_std: float = DEFAULT_PAD_STD,
) -> KeySet:
    """Sample a fresh key: small uniform entries for the lifting maps,
    large ones for the measurement-dependent masks."""
    dims.validate(n_x, n_y, n_u)
    rng = np.random.default_rng(seed)
    y_lift = _sample_full_rank(rng, dims.ny, n_y, scale_small, "y_lift")
    u_lift = _sample_full_rank(rng, dims.nu, n_u, scale_small, "u_lift")
    x_lift = _sample_full_rank(rng, dims.nx, n_x, scale_small, "x_lift")
    a_lift = _sample_full_rank(rng, dims.na, 1, scale_small, "a_lift")
    z_lift = _sample_full_rank(rng, dims.nz, 1, scale_small, "z_lift")
    r_mix = _sample_full_rank(rng, dims.nr, dims.ny, scale_small, "r_mix")
    z_mask = _sample_full_rank(rng, dims.nz, dims.ny, scale_large, "z_mask")
    a_mask = _sample_full_rank(rng, dims.na, dims.ny, scale_large, "a_mask")

    y_unlift = left_inverse(y_lift)
    u_unlift = left_inverse(u_lift)
    return KeySet(
        dims=dims,
        y_lift=y_lift,
        u_lift=u_lift,
        x_lift=x_lift,
        a_lift=a_lift,
        z_lift=z_lift,
        r_mix=r_mix,
        z_mask=z_mask,
        a_mask=a_mask,
        y_unlift=y_unlift,
        u_unlift=u_unlift,
        x_unlift=left_inverse(x_lift),
        a_unlift=left_inverse(a_lift),
        z_unlift=left_inverse(z_lift),
        r_unmix=left_inverse(r_mix),
        y_pad=kernel_basis(y_unlift),
        u_pad=kernel_basis(u_unlift),
        pad_mean=pad_mean,
        pad_std=pad_std,
        seed=seed if isinstance(seed, int) else None,
    )


def identity_padding_key(dims: KeyDims, n_x: int, n_y: int, n_u: int) -> KeySet:
    """Degenerate zero-noise key: every lift is an identity over zero rows.

    Turns the whole encoded pipeline into the plaintext pipeline with
    zero-padded vectors; the coding-off baseline for tests and debugging.
    """
    dims.validate(n_x, n_y, n_u)

    def pad_eye(rows, cols):
        M = np.zeros((rows, cols))
        M[:cols, :cols] = np.eye(cols)
        return M

    y_lift = pad_eye(dims.ny, n_y)
    u_lift = pad_eye(dims.nu, n_u)
    x_lift = pad_eye(dims.nx, n_x)
    a_lift = pad_eye(dims.na, 1)
    z_lift = pad_eye(dims.nz, 1)
    r_mix = np.eye(dims.nr, dims.ny)
    return KeySet(
        dims=dims,
        y_lift=y_lift,
        u_lift=u_lift,
        x_lift=x_lift,
        a_lift=a_lift,
        z_lift=z_lift,
        r_mix=r_mix,
        z_mask=np.zeros((dims.nz, dims.ny)),
        a_mask=np.zeros((dims.na, dims.ny)),
        y_unlift=y_lift.T.copy(),
        u_unlift=u_lift.T.copy(),
        x_unlift=x_lift.T.copy(),
        a_unlift=a_lift.T.copy(),
        z_unlift=z_lift.T.copy(),
        r_unmix=np.eye(dims.ny, dims.nr),
        y_pad=kernel_basis(y_lift.T),
        u_pad=kernel_basis(u_lift.T),
        pad_mean=0.0,
        pad_std=0.0,
        seed=None,
    )


def _pad_noise(key: KeySet, basis: np.ndarray, rng) -> np.ndarray:
    s = key.pad_mean + key.pad_std * rng.standard_normal(basis.shape[1])
    return basis @ s


def encode_y_traced(key: KeySet, y: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Lift a measurement; also return the one-time pad term added to it."""
    y = np.asarray(y, dtype=float)
    if y.shape != (key.y_lift.shape[1],):
        raise DimensionMismatch(f"y: expected ({key.y_lift.shape[1]},), got {y.shape}")
    pad = _pad_noise(key, key.y_pad, rng)
    return key.y_lift @ y + pad, pad


def encode_y(key: KeySet, y: np.ndarray, rng) -> np.ndarray:
    """Lift a measurement with fresh one-time masking noise."""
    return encode_y_traced(key, y, rng)[0]


def encode_u_traced(key: KeySet, u: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Lift an input; also return the one-time pad term added to it."""
    u = np.asarray(u, dtype=float)
    if u.shape != (key.u_lift.shape[1],):
        raise DimensionMismatch(f"u: expected ({key.u_lift.shape[1]},), got {u.shape}")
    pad = _pad_noise(key, key.u_pad, rng)
    return key.u_lift @ u + pad, pad


def encode_u(key: KeySet, u: np.ndarray, rng) -> np.ndarray:
    """Lift an input with fresh one-time masking noise."""
    return encode_u_traced(key, u, rng)[0]


def decode_alarm(key: KeySet, atil: np.ndarray, ytil: np.ndarray) -> int:
    """Recover the alarm bit from a lifted alarm and its step's lifted
    measurement. The raw value is exact algebra up to float error, so
    anything farther than DECODE_TOL from {0, 1} means the key or the
    stream is wrong."""
    atil = np.asarray(atil, dtype=float)
    ytil = np.asarray(ytil, dtype=float)
    if atil.shape != (key.dims.na,):
        raise DimensionMismatch(f"atil: expected ({key.dims.na},), got {atil.shape}")
    if ytil.shape != (key.dims.ny,):
        raise DimensionMismatch(f"ytil: expected ({key.dims.ny},), got {ytil.shape}")
    raw = float((key.a_unlift @ (atil - key.a_mask @ ytil))[0])
    bit = round(raw)
    if bit not in (0, 1) or abs(raw - bit) > DECODE_TOL:
        raise DecodeDrift(f"decoded alarm {raw!r} is not a clean bit")
    return bit


def build_encoded_config(key: KeySet, model: SystemModel, design: DetectorDesign) -> EncodedConfig:
    """Compose the remote station's matrix bundle from key and design.

    The distance weight is also shipped in factored form: with
    M = y_unlift @ r_unmix and S = chol chol', the factor
    G = chol^-1 M satisfies G'G = M' S^-1 M = quad, and evaluating
    |G rtil|^2 sidesteps the cancellation in rtil' quad rtil. G is
    zero-padded to square so no shape hints at plaintext dimensions
    beyond what the rank of quad already gives away.
    """
    if key.y_lift.shape[1] != model.n_y or key.u_lift.shape[1] != model.n_u or key.x_lift.shape[1] != model.n_x:
        raise DimensionMismatch("key was generated for different plant dimensions")
    A, B, C = model.A, model.B, model.C
    L = design.L
    M = key.y_unlift @ key.r_unmix
    chol = np.linalg.cholesky(design.S)
    G = np.linalg.solve(chol, M)
    quad_factor = np.vstack([G, np.zeros((key.dims.nr - G.shape[0], key.dims.nr))])
    quad = M.T @ design.S_inv @ M
    return EncodedConfig(
        step_x=key.x_lift @ (A - L @ C) @ key.x_unlift,
        step_u=key.x_lift @ B @ key.u_unlift,
        step_y=key.x_lift @ L @ key.y_unlift,
        res_y=key.r_mix.copy(),
        res_x=key.r_mix @ key.y_lift @ C @ key.x_unlift,
        quad=0.5 * (quad + quad.T),
        quad_factor=quad_factor,
        z_lift=key.z_lift.copy(),
        z_unlift=key.z_unlift.copy(),
        z_mask=key.z_mask.copy(),
        a_lift=key.a_lift.copy(),
        a_mask=key.a_mask.copy(),
        alpha=design.alpha,
        x0=key.x_lift @ model.x0_mean,
    ).validate()


_KEY_MATRICES = (
    "y_lift",
    "u_lift",
    "x_lift",
    "a_lift",
    "z_lift",
    "r_mix",
    "z_mask",
    "a_mask",
    "y_unlift",
    "u_unlift",
    "x_unlift",
    "a_unlift",
    "z_unlift",
    "r_unmix",
    "y_pad",
    "u_pad",
)


def key_to_json(key: KeySet) -> dict:
    """Serialize a key. The result is secret key material: store it like a
    private key and never send it to the remote station."""
    doc = {name: mat_to_lists(getattr(key, name)) for name in _KEY_MATRICES}
    doc["dims"] = {
        "nx": key.dims.nx,
        "ny": key.dims.ny,
        "nu": key.dims.nu,
        "na": key.dims.na,
        "nr": key.dims.nr,
        "nz": key.dims.nz,
    }
    doc["pad_mean"] = key.pad_mean
    doc["pad_std"] = key.pad_std
    doc["seed"] = key.seed
    return doc


def key_from_json(doc: dict) -> KeySet:
    dims = KeyDims(**{k: int(v) for k, v in doc["dims"].items()})
    mats = {name: mat_from_lists(doc[name]) for name in _KEY_MATRICES}
    return KeySet(
        dims=dims,
        pad_mean=float(doc["pad_mean"]),
        pad_std=float(doc["pad_std"]),
        seed=doc.get("seed"),
        **mats,
    )
