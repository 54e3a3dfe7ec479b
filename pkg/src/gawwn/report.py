"""Render training metrics into a CSV summary and matplotlib figures.

Reads the newline-delimited JSON stream written during training, emits the
same rows as CSV next to loss/accuracy curve images, and returns the list of
files written.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import FormatError, InputError


def read_metrics(path: str) -> list[dict]:
    if not os.path.exists(path):
        raise InputError(f"missing metrics file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: bad metrics record: {e}") from e
    return rows


def _smooth(values: np.ndarray, window: int = 10) -> np.ndarray:
    if len(values) < window:
        return values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def write_report(metrics_path: str, out_dir: str) -> list[str]:
    rows = read_metrics(metrics_path)
    if not rows:
        raise InputError(f"{metrics_path} holds no metric rows")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    fields = list(rows[0].keys())
    csv_path = os.path.join(out_dir, "metrics.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    written.append(csv_path)

    steps = np.array([r["step"] for r in rows])

    fig, ax = plt.subplots(figsize=(7, 4))
    if "d_loss" in fields:
        ax.plot(steps, [r["d_loss"] for r in rows], label="discriminator", alpha=0.6)
        ax.plot(steps, [r["g_loss"] for r in rows], label="generator", alpha=0.6)
    else:
        values = np.array([r["loss"] for r in rows], dtype=float)
        ax.plot(steps, values, label="loss", alpha=0.5)
        smoothed = _smooth(values)
        ax.plot(steps[len(steps) - len(smoothed):], smoothed, label="loss (smoothed)")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    loss_path = os.path.join(out_dir, "losses.png")
    fig.savefig(loss_path, dpi=110)
    plt.close(fig)
    written.append(loss_path)

    if "d_acc_real" in fields:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(steps, [r["d_acc_real"] for r in rows], label="D accuracy on real")
        ax.plot(steps, [r["d_acc_fake"] for r in rows], label="D accuracy on fake")
        ax.set_xlabel("step")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
        fig.tight_layout()
        acc_path = os.path.join(out_dir, "accuracy.png")
        fig.savefig(acc_path, dpi=110)
        plt.close(fig)
        written.append(acc_path)

    return written
