"""Command line entry points.

The CLI is a thin client over the library: it loads or embeds a model,
designs the detector, generates keys, runs lockstep experiments (locally
or against a remote station over TCP or HTTP), calibrates false alarm
rates, and serves the remote station itself. All file formats are the
JSON and CSV layouts defined by the library modules.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .coding import (
    DEFAULT_PAD_MEAN,
    DEFAULT_PAD_STD,
    DEFAULT_SCALE_LARGE,
    DEFAULT_SCALE_SMALL,
    KeyDims,
    build_encoded_config,
    key_from_json,
    key_to_json,
    keygen,
)
from .detector import design, design_to_json
from .errors import BlindwatchError
from .harness import (
    ExperimentConfig,
    default_dims,
    run_experiment,
    run_false_alarm_rates,
    write_trace_csv,
)
from .plant import AnomalyProfile, SystemModel, model_from_json
from .reactor import (
    FAR_TARGET,
    FAULT_ONSET,
    FAULT_VALUE,
    REACTOR_LIFT_DIMS,
    reactor_fault,
    reactor_input,
    reactor_model,
)

REACTOR_INPUT_NOTE = "50*cos(0.5*k)^2 broadcast to all input channels"


def _astar(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"false alarm rate must lie in (0, 1), got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _load_model(spec: str, covariances: str) -> SystemModel:
    if spec == "reactor":
        return reactor_model(covariances)
    with open(spec, "r", encoding="utf-8") as fh:
        return model_from_json(json.load(fh))


def _parse_dims(text: str | None, model: SystemModel, model_name: str) -> KeyDims:
    if text is None:
        if model_name == "reactor":
            nx, ny, nu, na = REACTOR_LIFT_DIMS
            return KeyDims(nx=nx, ny=ny, nu=nu, na=na, nr=ny, nz=2)
        return default_dims(model)
    parts = text.split(",")
    if not 4 <= len(parts) <= 6:
        raise argparse.ArgumentTypeError(
            "--dims takes NX,NY,NU,NA with optional ,NR,NZ"
        )
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dims entries must be integers: {text!r}")
    nx, ny, nu, na = values[:4]
    nr = values[4] if len(values) > 4 else ny
    nz = values[5] if len(values) > 5 else 2
    return KeyDims(nx=nx, ny=ny, nu=nu, na=na, nr=nr, nz=nz)


def _input_fn(model_name: str, model: SystemModel):
    if model_name == "reactor":
        return reactor_input, REACTOR_INPUT_NOTE
    return (lambda k: np.zeros(model.n_u)), "zero input"


def _fault_profile(args) -> AnomalyProfile:
    if args.fault_onset is None and args.fault_value is None:
        return AnomalyProfile()
    if args.fault_onset is None or args.fault_value is None:
        raise argparse.ArgumentTypeError(
            "--fault-onset and --fault-value must be given together"
        )
    return AnomalyProfile(kind="step", onset=args.fault_onset, value=np.array([args.fault_value]))


def _fmt_matrix(M: np.ndarray) -> str:
    return np.array2string(
        np.asarray(M), formatter={"float_kind": lambda v: f"{v: .4f}"}, separator=", "
    )


def _dims_doc(dims: KeyDims) -> dict:
    return {"x": dims.nx, "y": dims.ny, "u": dims.nu, "a": dims.na, "r": dims.nr, "z": dims.nz}


def _emit(doc: dict):
    print(json.dumps(doc, indent=2))


def cmd_design(args) -> int:
    model = _load_model(args.model, args.covariances)
    det = design(model, args.astar)
    print("filter gain L:")
    print(_fmt_matrix(det.L))
    print("steady-state error covariance P:")
    print(_fmt_matrix(det.P))
    print("innovation covariance S:")
    print(_fmt_matrix(det.S))
    print(f"threshold alpha = {det.alpha:.10g}  (false alarm target {args.astar})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(design_to_json(det), fh, indent=2)
        print(f"design written to {args.out}")
    return 0


def cmd_keygen(args) -> int:
    model = _load_model(args.model, args.covariances)
    dims = _parse_dims(args.dims, model, args.model)
    key = keygen(
        dims,
        model.n_x,
        model.n_y,
        model.n_u,
        args.seed,
        scale_small=args.scale_small,
        scale_large=args.scale_large,
        pad_mean=args.pad_mean,
        pad_std=args.pad_std,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(key_to_json(key), fh)
    print(f"key written to {args.out}")
    print("keep this file secret: it decodes every signal in the session "
          "and must never be sent to the remote station")
    _emit({"dims": _dims_doc(dims), "seed": args.seed})
    return 0


def _run_and_report(args, model, model_name: str, profile: AnomalyProfile,
                    dims: KeyDims, extra: dict, noise: bool = True) -> int:
    input_fn, input_note = _input_fn(model_name, model)
    cfg = ExperimentConfig(
        model=model,
        far_target=args.astar,
        horizon=args.horizon,
        seed=args.seed,
        profile=profile,
        dims=dims,
        scale_small=args.scale_small,
        scale_large=args.scale_large,
        pad_mean=args.pad_mean,
        pad_std=args.pad_std,
        mode=args.mode,
        addr=args.addr,
        input_fn=input_fn,
        noise=noise,
    )
    records, summary = run_experiment(cfg, collect_records=bool(args.out))
    if args.out:
        write_trace_csv(records, args.out)
    doc = {"model": model_name, "input": input_note, "lifted_dims": _dims_doc(dims)}
    doc.update(extra)
    doc.update(summary.to_json())
    if args.out:
        doc["trace"] = args.out
    _emit(doc)
    return 0


def cmd_simulate(args) -> int:
    model = _load_model(args.model, args.covariances)
    profile = _fault_profile(args)
    dims = _parse_dims(args.dims, model, args.model)
    extra = {}
    if profile.kind == "step":
        extra["fault"] = {"onset": profile.onset, "value": float(profile.value[0])}
    return _run_and_report(args, model, args.model, profile, dims, extra,
                           noise=not args.no_noise)


def cmd_casestudy(args) -> int:
    model = reactor_model()
    args.astar = FAR_TARGET
    args.scale_small = DEFAULT_SCALE_SMALL
    args.scale_large = DEFAULT_SCALE_LARGE
    args.pad_mean = DEFAULT_PAD_MEAN
    args.pad_std = DEFAULT_PAD_STD
    nx, ny, nu, na = REACTOR_LIFT_DIMS
    dims = KeyDims(nx=nx, ny=ny, nu=nu, na=na, nr=ny, nz=2)
    profile = reactor_fault(FAULT_ONSET, FAULT_VALUE)
    extra = {
        "fault": {"onset": FAULT_ONSET, "value": FAULT_VALUE},
        "far_target": FAR_TARGET,
        "notes": [
            "measurement dimension is lifted from 3 to 4 on the wire",
            "alarm dimension is lifted from 1 to 2 on the wire",
        ],
    }
    return _run_and_report(args, model, "reactor", profile, dims, extra)


def cmd_far(args) -> int:
    model = _load_model(args.model, args.covariances)
    input_fn, input_note = _input_fn(args.model, model)
    rates = run_false_alarm_rates(
        model,
        args.astar,
        horizon=args.horizon,
        base_seed=args.seed,
        runs=args.runs,
        input_fn=input_fn,
        alpha_override=args.override_alpha,
    )
    mean = float(np.mean(rates))
    stderr = float(np.std(rates, ddof=1) / np.sqrt(len(rates))) if len(rates) > 1 else 0.0
    _emit(
        {
            "model": args.model,
            "input": input_note,
            "far_target": args.astar,
            "alpha_override": args.override_alpha,
            "runs": args.runs,
            "horizon": args.horizon,
            "rates": rates,
            "mean": mean,
            "stderr": stderr,
        }
    )
    return 0


def cmd_serve(args) -> int:
    if args.transport == "tcp":
        from .wire import serve

        serve(args.addr)
    else:
        from .service import serve_http
        from .wire import parse_addr

        host, port = parse_addr(args.addr or "127.0.0.1:7734")
        serve_http(host, port)
    return 0


def _read_signals_csv(path: str, n_u: int, n_y: int):
    """Yield (u, y) rows from a CSV carrying u1..u{n_u} and y1..y{n_y}
    columns; trace files written by simulate qualify."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        try:
            u_cols = [header.index(f"u{i + 1}") for i in range(n_u)]
            y_cols = [header.index(f"y{i + 1}") for i in range(n_y)]
        except ValueError as exc:
            raise BlindwatchError(f"signal file {path} lacks a u/y column: {exc}")
        for line in fh:
            cells = line.strip().split(",")
            u = np.array([float(cells[i]) for i in u_cols])
            y = np.array([float(cells[i]) for i in y_cols])
            yield u, y


def cmd_client(args) -> int:
    from .wire import client_session

    model = _load_model(args.model, args.covariances)
    det = design(model, args.astar)
    with open(args.key, "r", encoding="utf-8") as fh:
        key = key_from_json(json.load(fh))
    config = build_encoded_config(key, model, det)
    rng = np.random.default_rng(args.seed)
    signals = _read_signals_csv(args.signals, model.n_u, model.n_y)
    lines = ["k,alarm"]
    alarms = 0
    steps = 0
    for k, bit in client_session(args.addr, key, config, signals, rng):
        lines.append(f"{k},{bit}")
        alarms += bit
        steps += 1
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    _emit({"steps": steps, "alarms": alarms, "rate": (alarms / steps) if steps else None})
    return 0


def _add_model_args(p):
    p.add_argument("--model", default="reactor",
                   help="'reactor' or a path to a model JSON file")
    p.add_argument("--covariances", choices=("design", "stated"), default="design",
                   help="noise covariance convention for the built-in reactor")


def _add_key_args(p):
    p.add_argument("--dims", default=None,
                   help="lifted dims NX,NY,NU,NA with optional ,NR,NZ")
    p.add_argument("--scale-small", type=float, default=DEFAULT_SCALE_SMALL)
    p.add_argument("--scale-large", type=float, default=DEFAULT_SCALE_LARGE)
    p.add_argument("--pad-mean", type=float, default=DEFAULT_PAD_MEAN)
    p.add_argument("--pad-std", type=float, default=DEFAULT_PAD_STD)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindwatch",
        description="privacy-preserving remote anomaly detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design the detector and print L, P, S, alpha")
    _add_model_args(p)
    p.add_argument("--astar", type=_astar, default=FAR_TARGET,
                   help="target false alarm rate in (0, 1)")
    p.add_argument("--out", default=None, help="write the design JSON here")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("keygen", help="sample a secret coding key")
    _add_model_args(p)
    _add_key_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="keyfile path (keep secret)")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("simulate", help="run the lockstep pipeline and write a trace")
    _add_model_args(p)
    _add_key_args(p)
    p.add_argument("--astar", type=_astar, default=FAR_TARGET)
    p.add_argument("--horizon", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fault-onset", type=_positive_int, default=None)
    p.add_argument("--fault-value", type=float, default=None)
    p.add_argument("--no-noise", action="store_true",
                   help="run the plant deterministically from the mean")
    p.add_argument("--mode", choices=("local", "networked", "http"), default="local")
    p.add_argument("--addr", default=None, help="remote station HOST:PORT or URL")
    p.add_argument("--out", default=None, help="trace CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("casestudy", help="reproduce the built-in reactor experiment")
    p.add_argument("--horizon", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("local", "networked", "http"), default="local")
    p.add_argument("--addr", default=None)
    p.add_argument("--out", default="casestudy_trace.csv", help="trace CSV path")
    p.set_defaults(func=cmd_casestudy)

    p = sub.add_parser("far", help="empirical false alarm rate over seeds")
    _add_model_args(p)
    p.add_argument("--astar", type=_astar, default=FAR_TARGET)
    p.add_argument("--horizon", type=_positive_int, default=2000)
    p.add_argument("--seed", type=int, default=0, help="base seed for the seed family")
    p.add_argument("--runs", type=_positive_int, default=10)
    p.add_argument("--override-alpha", type=float, default=None,
                   help="replace the designed threshold (sanity checks)")
    p.set_defaults(func=cmd_far)

    p = sub.add_parser("serve", help="run the remote station")
    p.add_argument("--addr", default=None, help="bind HOST:PORT")
    p.add_argument("--transport", choices=("tcp", "http"), default="tcp")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="stream a signal file to a remote station")
    _add_model_args(p)
    p.add_argument("--astar", type=_astar, default=FAR_TARGET)
    p.add_argument("--key", required=True, help="keyfile from keygen")
    p.add_argument("--signals", required=True,
                   help="CSV with u1..,y1.. columns (a simulate trace works)")
    p.add_argument("--seed", type=int, default=0, help="seed for fresh masking noise")
    p.add_argument("--addr", default=None, help="station HOST:PORT (or II_DETECT_ADDR)")
    p.add_argument("--out", default=None, help="alarm CSV path (default stdout)")
    p.set_defaults(func=cmd_client)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except BlindwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
