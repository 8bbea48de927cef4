#!/usr/bin/env python3
"""Render figures from a trace CSV written by `blindwatch simulate`.

Produces two PNGs next to the output stem: <stem>_signals.png compares
each plaintext measurement channel with the lifted channels that travel
on the wire, and <stem>_alarms.png compares the plaintext alarm, the
lifted alarm components, and the decoded alarm.

Usage: plot_trace.py TRACE_CSV [--stem OUTSTEM]
"""

from __future__ import annotations

import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from blindwatch.harness import read_trace_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("trace", help="trace CSV from the simulate or casestudy command")
    parser.add_argument("--stem", default=None, help="output filename stem")
    args = parser.parse_args()

    records = read_trace_csv(args.trace)
    if not records:
        parser.error(f"{args.trace} holds no records")
    stem = args.stem or str(pathlib.Path(args.trace).with_suffix(""))

    k = np.array([r.k for r in records])
    y = np.array([r.y for r in records])
    ytil = np.array([r.ytil for r in records])
    a = np.array([r.a for r in records])
    atil = np.array([r.atil for r in records])
    ahat = np.array([r.ahat for r in records])
    fault = np.array([r.fault_active for r in records])

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for i in range(y.shape[1]):
        top.plot(k, y[:, i], label=f"y{i + 1}")
    top.set_ylabel("measurement")
    top.legend(loc="upper right", ncol=y.shape[1])
    top.set_title("plaintext measurements vs lifted measurements on the wire")
    for i in range(ytil.shape[1]):
        bottom.plot(k, ytil[:, i], label=f"lifted y{i + 1}")
    bottom.set_ylabel("lifted measurement")
    bottom.set_xlabel("step k")
    bottom.legend(loc="upper right", ncol=ytil.shape[1])
    if fault.any():
        onset = int(k[fault.argmax()])
        for ax in (top, bottom):
            ax.axvline(onset, color="k", linestyle=":", linewidth=1)
    fig.tight_layout()
    fig.savefig(f"{stem}_signals.png", dpi=120)
    plt.close(fig)

    fig, (top, bottom) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    top.step(k, a, where="post", label="alarm", linewidth=2)
    top.step(k, ahat, where="post", label="decoded alarm", linestyle="--")
    top.set_ylabel("alarm bit")
    top.set_yticks([0, 1])
    top.legend(loc="center right")
    top.set_title("plaintext vs lifted vs decoded alarms")
    for i in range(atil.shape[1]):
        bottom.plot(k, atil[:, i], label=f"lifted alarm {i + 1}")
    bottom.set_ylabel("lifted alarm")
    bottom.set_xlabel("step k")
    bottom.legend(loc="upper right")
    if fault.any():
        onset = int(k[fault.argmax()])
        for ax in (top, bottom):
            ax.axvline(onset, color="k", linestyle=":", linewidth=1)
    fig.tight_layout()
    fig.savefig(f"{stem}_alarms.png", dpi=120)
    plt.close(fig)

    print(f"wrote {stem}_signals.png and {stem}_alarms.png")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
