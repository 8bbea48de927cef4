"""Lockstep experiment runner: plant, plaintext detector, and the lifted
pipeline side by side.

Every run drives the plaintext detector and the encoded detector on the
same signals and logs both, so equivalence is checkable step by step. In
networked modes the official lifted alarm comes from the transport while
an in-process shadow session supplies the diagnostics; the two are
asserted bit-identical, which is what keeps CSV output byte-identical
across local, TCP, and HTTP runs.

Alarm equivalence is only claimed outside the boundary band
|z - alpha| <= 1e-9 * max(1, alpha): exactly at the threshold a one-ulp
difference may legitimately flip the bit. Band hits are counted, never
silently ignored.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .coding import (
    KeyDims,
    KeySet,
    build_encoded_config,
    decode_alarm,
    encode_u_traced,
    encode_y_traced,
    keygen,
)
from .detector import DetectorDesign, design, detector_init, detector_step
from .encoded import config_to_json
from .errors import TransportError
from .plant import AnomalyProfile, SystemModel, plant_init, plant_step
from .remote import target_init, target_step

BOUNDARY_BAND = 1e-9
CSV_FMT = "%.17g"


@dataclass(frozen=True)
class TraceRecord:
    k: int
    y: np.ndarray
    ytil: np.ndarray
    u: np.ndarray
    util: np.ndarray
    z: float
    zeta: float
    a: int
    atil: np.ndarray
    ahat: int
    fault_active: int


@dataclass
class RunSummary:
    horizon: int
    mode: str
    fault_onset: int | None
    far_pre_fault: float | None
    detection_post_fault: float | None
    alarm_mismatches: int
    boundary_band_steps: int
    max_lift_err: float
    max_residual_rel_err: float
    max_distance_rel_err: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ExperimentConfig:
    model: SystemModel
    far_target: float
    horizon: int
    seed: int
    profile: AnomalyProfile = field(default_factory=AnomalyProfile)
    dims: KeyDims | None = None
    scale_small: float = 0.1
    scale_large: float = 100.0
    pad_mean: float = 1e3
    pad_std: float = 1e2
    mode: str = "local"
    addr: str | None = None
    input_fn: Callable[[int], np.ndarray] | None = None
    noise: bool = True


def default_dims(model: SystemModel) -> KeyDims:
    """One extra dimension per signal, two for the state; alarm and
    distance both go to length 2."""
    return KeyDims(
        nx=model.n_x + 2,
        ny=model.n_y + 1,
        nu=model.n_u + 1,
        na=2,
        nr=model.n_y + 1,
        nz=2,
    )


class _HttpChannel:
    """Client for the HTTP station; mirrors wire.StepChannel."""

    def __init__(self, client, owns_client: bool):
        self._client = client
        self._owns = owns_client
        self._sid = None

    @classmethod
    def connect(cls, addr: str | None, client=None) -> "_HttpChannel":
        if client is not None:
            return cls(client, owns_client=False)
        import httpx

        return cls(httpx.Client(base_url=addr or "http://127.0.0.1:7734"), owns_client=True)

    def _check(self, resp, expect: int):
        if resp.status_code != expect:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text}")
        return resp.json()

    def send_config(self, config):
        doc = self._check(
            self._client.post("/v1/sessions", json={"config": config_to_json(config)}), 201
        )
        self._sid = doc["session_id"]

    def step(self, k: int, util: np.ndarray, ytil: np.ndarray) -> np.ndarray:
        doc = self._check(
            self._client.post(
                f"/v1/sessions/{self._sid}/steps",
                json={"k": k, "u_enc": list(map(float, util)), "y_enc": list(map(float, ytil))},
            ),
            200,
        )
        return np.asarray(doc["a_enc"], dtype=float)

    def close(self):
        if self._sid is not None:
            self._client.delete(f"/v1/sessions/{self._sid}")
        if self._owns:
            self._client.close()


def _open_channel(cfg: ExperimentConfig, econfig, http_client):
    if cfg.mode == "local":
        return None
    if cfg.mode == "networked":
        from .wire import StepChannel

        channel = StepChannel.connect(cfg.addr)
    elif cfg.mode == "http":
        channel = _HttpChannel.connect(cfg.addr, client=http_client)
    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")
    channel.send_config(econfig)
    return channel


def run_experiment(
    cfg: ExperimentConfig,
    collect_records: bool = True,
    http_client=None,
) -> tuple[list[TraceRecord], RunSummary]:
    """Run the full pipeline for cfg.horizon steps and summarize it."""
    model = cfg.model
    dims = cfg.dims or default_dims(model)
    plant_seed, key_seed, enc_seed = np.random.SeedSequence(cfg.seed).spawn(3)

    det_design = design(model, cfg.far_target)
    key = keygen(
        dims,
        model.n_x,
        model.n_y,
        model.n_u,
        key_seed,
        scale_small=cfg.scale_small,
        scale_large=cfg.scale_large,
        pad_mean=cfg.pad_mean,
        pad_std=cfg.pad_std,
    )
    econfig = build_encoded_config(key, model, det_design)
    return _run_pipeline(cfg, det_design, key, econfig, plant_seed, enc_seed, collect_records, http_client)


def _run_pipeline(
    cfg: ExperimentConfig,
    det_design: DetectorDesign,
    key: KeySet,
    econfig,
    plant_seed,
    enc_seed,
    collect_records: bool,
    http_client,
) -> tuple[list[TraceRecord], RunSummary]:
    model = cfg.model
    input_fn = cfg.input_fn or (lambda k: np.zeros(model.n_u))
    enc_rng = np.random.default_rng(enc_seed)

    plant = plant_init(model, plant_seed, noise=cfg.noise)
    det = detector_init(model)
    shadow = target_init(econfig)
    channel = _open_channel(cfg, econfig, http_client)

    band_tol = BOUNDARY_BAND * max(1.0, det_design.alpha)
    records: list[TraceRecord] = []
    mismatches = 0
    band_steps = 0
    max_lift = 0.0
    max_res = 0.0
    max_dist = 0.0
    pre_alarms = post_alarms = pre_steps = post_steps = 0
    onset = cfg.profile.onset if cfg.profile.kind == "step" else None

    try:
        for k in range(1, cfg.horizon + 1):
            u = np.asarray(input_fn(k), dtype=float)
            delta = cfg.profile.delta_at(k)
            y = plant_step(model, plant, u, delta)
            pdiag = detector_step(det_design, det, u, y, model)

            ytil, ypad = encode_y_traced(key, y, enc_rng)
            util, _ = encode_u_traced(key, u, enc_rng)
            tdiag = target_step(econfig, shadow, util, ytil)
            if channel is None:
                atil = tdiag.atil
            else:
                atil = channel.step(k, util, ytil)
                if not np.array_equal(atil, tdiag.atil):
                    raise TransportError(f"remote alarm diverged from local shadow at k={k}")
            ahat = decode_alarm(key, atil, ytil)

            in_band = abs(pdiag.z - det_design.alpha) <= band_tol
            if in_band:
                band_steps += 1
            elif ahat != pdiag.a:
                mismatches += 1

            lift_ref = key.x_lift @ det.xhat
            lift_err = float(
                np.linalg.norm(shadow.xtil - lift_ref) / (1.0 + np.linalg.norm(lift_ref))
            )
            res_ref = key.r_mix @ (key.y_lift @ pdiag.r + ypad)
            res_err = float(
                np.linalg.norm(tdiag.rtil - res_ref) / (1.0 + np.linalg.norm(tdiag.rtil))
            )
            dist_err = abs(tdiag.zeta - pdiag.z) / (1.0 + pdiag.z)
            max_lift = max(max_lift, lift_err)
            max_res = max(max_res, res_err)
            max_dist = max(max_dist, dist_err)

            if onset is not None and k >= onset:
                post_alarms += ahat
                post_steps += 1
            else:
                pre_alarms += ahat
                pre_steps += 1

            if collect_records:
                records.append(
                    TraceRecord(
                        k=k,
                        y=y,
                        ytil=ytil,
                        u=u,
                        util=util,
                        z=pdiag.z,
                        zeta=tdiag.zeta,
                        a=pdiag.a,
                        atil=atil,
                        ahat=ahat,
                        fault_active=int(cfg.profile.active_at(k)),
                    )
                )
    finally:
        if channel is not None:
            channel.close()

    summary = RunSummary(
        horizon=cfg.horizon,
        mode=cfg.mode,
        fault_onset=onset,
        far_pre_fault=(pre_alarms / pre_steps) if pre_steps else None,
        detection_post_fault=(post_alarms / post_steps) if post_steps else None,
        alarm_mismatches=mismatches,
        boundary_band_steps=band_steps,
        max_lift_err=max_lift,
        max_residual_rel_err=max_res,
        max_distance_rel_err=max_dist,
    )
    return records, summary


def run_false_alarm_rates(
    model: SystemModel,
    far_target: float,
    horizon: int,
    base_seed: int,
    runs: int,
    input_fn: Callable[[int], np.ndarray] | None = None,
    alpha_override: float | None = None,
) -> list[float]:
    """Per-seed anomaly-free alarm rates of the plaintext detector.

    The encoded path provably produces identical alarms, so calibration
    runs skip the coding layer for speed. alpha_override replaces the
    designed threshold, for sanity checks like alpha = 0.
    """
    input_fn = input_fn or (lambda k: np.zeros(model.n_u))
    det_design = design(model, far_target)
    if alpha_override is not None:
        det_design = dataclasses.replace(det_design, alpha=float(alpha_override))
    rates = []
    for child in np.random.SeedSequence(base_seed).spawn(runs):
        plant = plant_init(model, child)
        det = detector_init(model)
        alarms = 0
        for k in range(1, horizon + 1):
            u = np.asarray(input_fn(k), dtype=float)
            y = plant_step(model, plant, u)
            alarms += detector_step(det_design, det, u, y, model).a
        rates.append(alarms / horizon)
    return rates


def trace_header(record: TraceRecord) -> list[str]:
    def group(prefix, n):
        return [f"{prefix}{i + 1}" for i in range(n)]

    return (
        ["k"]
        + group("y", record.y.size)
        + group("yt", record.ytil.size)
        + group("u", record.u.size)
        + group("ut", record.util.size)
        + ["z", "zeta", "a"]
        + group("at", record.atil.size)
        + ["ahat", "fault"]
    )


def trace_csv_text(records: Iterable[TraceRecord]) -> str:
    """Render records as CSV with 17 significant digits, enough for exact
    float64 round trips."""
    records = list(records)
    if not records:
        return ""
    out = io.StringIO()
    out.write(",".join(trace_header(records[0])) + "\n")
    for rec in records:
        cells = [str(rec.k)]
        for vec in (rec.y, rec.ytil, rec.u, rec.util):
            cells.extend(CSV_FMT % v for v in vec)
        cells.append(CSV_FMT % rec.z)
        cells.append(CSV_FMT % rec.zeta)
        cells.append(str(rec.a))
        cells.extend(CSV_FMT % v for v in rec.atil)
        cells.append(str(rec.ahat))
        cells.append(str(rec.fault_active))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def write_trace_csv(records: Iterable[TraceRecord], path: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_csv_text(records))


def read_trace_csv(path: str) -> list[TraceRecord]:
    """Parse a trace written by write_trace_csv back into records."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        counts = {}
        for name in header:
            for prefix in ("yt", "ut", "at", "y", "u"):
                if name.startswith(prefix) and name[len(prefix) :].isdigit():
                    counts[prefix] = max(counts.get(prefix, 0), int(name[len(prefix) :]))
                    break
        records = []
        for line in fh:
            cells = line.strip().split(",")
            pos = 0

            def take(n):
                nonlocal pos
                out = cells[pos : pos + n]
                pos += n
                return out

            k = int(take(1)[0])
            y = np.array([float(v) for v in take(counts["y"])])
            ytil = np.array([float(v) for v in take(counts["yt"])])
            u = np.array([float(v) for v in take(counts["u"])])
            util = np.array([float(v) for v in take(counts["ut"])])
            z = float(take(1)[0])
            zeta = float(take(1)[0])
            a = int(take(1)[0])
            atil = np.array([float(v) for v in take(counts["at"])])
            ahat = int(take(1)[0])
            fault = int(take(1)[0])
            records.append(
                TraceRecord(
                    k=k, y=y, ytil=ytil, u=u, util=util, z=z, zeta=zeta, a=a,
                    atil=atil, ahat=ahat, fault_active=fault,
                )
            )
        return records
