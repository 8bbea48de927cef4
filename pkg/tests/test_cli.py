"""Command line interface tests, driven through main() and a subprocess
for the blocking server command."""

from __future__ import annotations

import json
import re
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from blindwatch.cli import main
from blindwatch.detector import design, design_from_json
from blindwatch.harness import read_trace_csv
from blindwatch.numerics import gamma_p_inv
from blindwatch.plant import model_to_json
from blindwatch.reactor import reactor_model


def _json_tail(text: str) -> dict:
    return json.loads(text[text.index("{"):])


def _alpha_from(text: str) -> float:
    match = re.search(r"threshold alpha = ([0-9.eE+-]+)", text)
    assert match, text
    return float(match.group(1))


def test_design_reactor_alpha(capsys):
    assert main(["design", "--astar", "0.1"]) == 0
    out = capsys.readouterr().out
    assert _alpha_from(out) == pytest.approx(6.2514, abs=1e-3)
    assert "filter gain L" in out and "innovation covariance S" in out


def test_design_median_threshold(capsys):
    # three output channels at a 50 percent target: twice the chi-squared
    # median with 3 degrees of freedom
    assert main(["design", "--astar", "0.5"]) == 0
    want = 2.0 * gamma_p_inv(1.5, 0.5)
    assert _alpha_from(capsys.readouterr().out) == pytest.approx(want, abs=1e-6)
    assert want == pytest.approx(2.3659738843753377, abs=1e-12)


def test_design_invalid_astar_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["design", "--astar", "1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["design", "--astar", "0"])
    assert exc.value.code == 2


def test_design_writes_loadable_json(tmp_path, capsys):
    out = tmp_path / "design.json"
    assert main(["design", "--astar", "0.1", "--out", str(out)]) == 0
    capsys.readouterr()
    with open(out) as fh:
        det = design_from_json(json.load(fh))
    want = design(reactor_model(), 0.1)
    assert np.array_equal(det.L, want.L)
    assert det.alpha == want.alpha


def test_design_from_model_file(tmp_path, capsys):
    path = tmp_path / "model.json"
    with open(path, "w") as fh:
        json.dump(model_to_json(reactor_model()), fh)
    assert main(["design", "--model", str(path), "--astar", "0.1"]) == 0
    alpha_file = _alpha_from(capsys.readouterr().out)
    assert main(["design", "--model", "reactor", "--astar", "0.1"]) == 0
    assert alpha_file == _alpha_from(capsys.readouterr().out)


def test_keygen_writes_secret_keyfile(tmp_path, capsys):
    out = tmp_path / "key.json"
    assert main(["keygen", "--seed", "9", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "secret" in printed and "never" in printed
    doc = _json_tail(printed)
    assert doc["dims"] == {"x": 8, "y": 4, "u": 4, "a": 2, "r": 4, "z": 2}
    from blindwatch.coding import key_from_json

    with open(out) as fh:
        key = key_from_json(json.load(fh))
    assert key.seed == 9 and key.dims.nx == 8


def test_keygen_custom_dims(tmp_path, capsys):
    out = tmp_path / "key.json"
    assert main(["keygen", "--dims", "9,5,5,3,6,4", "--out", str(out)]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert doc["dims"] == {"x": 9, "y": 5, "u": 5, "a": 3, "r": 6, "z": 4}


def test_keygen_bad_dims_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["keygen", "--dims", "8,4", "--out", str(tmp_path / "k.json")])
    assert exc.value.code == 2


def test_simulate_local_summary_and_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main([
        "simulate", "--horizon", "300", "--seed", "1",
        "--fault-onset", "150", "--fault-value", "0.9", "--out", str(out),
    ]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert doc["alarm_mismatches"] == 0
    assert doc["fault"] == {"onset": 150, "value": 0.9}
    assert doc["detection_post_fault"] > 0.5
    assert 0.0 <= doc["far_pre_fault"] <= 0.3
    assert "broadcast" in doc["input"]
    records = read_trace_csv(str(out))
    assert len(records) == 300
    assert all(rec.a == rec.ahat for rec in records)


def test_simulate_zero_noise_no_fault_never_alarms(capsys):
    assert main(["simulate", "--horizon", "200", "--no-noise"]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert doc["far_pre_fault"] == 0.0
    assert doc["alarm_mismatches"] == 0
    assert doc["max_distance_rel_err"] < 1e-8


def test_simulate_fault_flags_must_pair():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--horizon", "10", "--fault-onset", "5"])
    assert exc.value.code == 2


def test_simulate_rejects_bad_horizon():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--horizon", "0"])
    assert exc.value.code == 2


def test_casestudy_summary(tmp_path, capsys):
    out = tmp_path / "cs.csv"
    assert main(["casestudy", "--horizon", "120", "--out", str(out)]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert doc["alarm_mismatches"] == 0
    assert doc["fault"] == {"onset": 20, "value": 0.9}
    assert doc["detection_post_fault"] > 0.5
    assert doc["lifted_dims"] == {"x": 8, "y": 4, "u": 4, "a": 2, "r": 4, "z": 2}
    assert any("3 to 4" in note for note in doc["notes"])
    assert any("1 to 2" in note for note in doc["notes"])
    records = read_trace_csv(str(out))
    assert records[0].y.size == 3 and records[0].ytil.size == 4
    assert records[0].atil.size == 2


def test_far_hits_target(capsys):
    assert main(["far", "--horizon", "600", "--runs", "10", "--seed", "2"]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert len(doc["rates"]) == 10
    assert abs(doc["mean"] - 0.1) < 0.03
    assert doc["stderr"] < 0.03


def test_far_low_rate_operating_point(capsys):
    assert main([
        "far", "--astar", "0.01", "--horizon", "2000", "--runs", "10", "--seed", "3",
    ]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert 0.007 <= doc["mean"] <= 0.013


def test_far_alpha_override_zero_always_alarms(capsys):
    assert main([
        "far", "--horizon", "150", "--runs", "3", "--override-alpha", "0",
    ]) == 0
    doc = _json_tail(capsys.readouterr().out)
    assert doc["mean"] == 1.0


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_listening(port: int, timeout: float = 10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.3):
                return
        except OSError:
            time.sleep(0.1)
    raise TimeoutError(f"server on port {port} never came up")


def test_serve_and_client_round_trip(tmp_path, capsys):
    port = _free_port()
    server = subprocess.Popen(
        [sys.executable, "-m", "blindwatch.cli", "serve", "--addr", f"127.0.0.1:{port}"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        _wait_listening(port)
        key_path = tmp_path / "key.json"
        trace_path = tmp_path / "trace.csv"
        alarms_path = tmp_path / "alarms.csv"
        assert main(["keygen", "--seed", "4", "--out", str(key_path)]) == 0
        assert main([
            "simulate", "--horizon", "150", "--seed", "6",
            "--fault-onset", "60", "--fault-value", "0.9", "--out", str(trace_path),
        ]) == 0
        capsys.readouterr()
        assert main([
            "client", "--key", str(key_path), "--signals", str(trace_path),
            "--addr", f"127.0.0.1:{port}", "--out", str(alarms_path),
        ]) == 0
        doc = _json_tail(capsys.readouterr().out)
        assert doc["steps"] == 150

        # remote decisions agree with the plaintext alarms in the trace,
        # even though the station only ever saw lifted vectors
        records = read_trace_csv(str(trace_path))
        lines = alarms_path.read_text().strip().splitlines()
        assert lines[0] == "k,alarm"
        got = [tuple(map(int, line.split(","))) for line in lines[1:]]
        assert got == [(rec.k, rec.a) for rec in records]
    finally:
        server.terminate()
        server.wait(timeout=10)


def test_client_bad_signals_file_is_runtime_error(tmp_path, capsys):
    key_path = tmp_path / "key.json"
    assert main(["keygen", "--seed", "1", "--out", str(key_path)]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1,2\n")
    code = main([
        "client", "--key", str(key_path), "--signals", str(bad),
        "--addr", "127.0.0.1:1",
    ])
    assert code == 1
    assert "error" in capsys.readouterr().err
