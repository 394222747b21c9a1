"""Plot export: whitespace-separated text files any plotting tool can read, optional PNGs."""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path

from .errors import ThzBeamError


def _read_csv(path, required):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise OSError(f"{path}: not found") from exc
    if not rows:
        raise ThzBeamError(f"{path}: no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise ThzBeamError(f"{path}: missing columns {', '.join(missing)}")
    try:
        return {c: [float(r[c]) for r in rows] for c in rows[0]}
    except (TypeError, ValueError) as exc:
        raise ThzBeamError(f"{path}: non-numeric value ({exc})") from exc


def _table(columns: dict, comment: str) -> str:
    names = list(columns)
    lines = [f"# {comment}", "# " + " ".join(names)]
    for row in zip(*columns.values()):
        lines.append(" ".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def rate_columns(table):
    """Rate-vs-SNR columns in display order (accuracy columns dropped)."""
    return {k: v for k, v in table.items() if not k.endswith("_acc")}


def export_plots(eval_csv, out_dir, predictions_csv=None, images=False):
    """Write ``rate_vs_snr.dat`` and, when predictions exist, AoA/ToA scatter files.

    All inputs are parsed before anything is written, so a bad input leaves
    no partial output. Returns the written paths.
    """
    table = _read_csv(eval_csv, ("snr_db", "ub_rate"))
    files = {"rate_vs_snr.dat": _table(rate_columns(table), "achievable rate (bit/s/Hz) vs SNR (dB)")}
    scatter = None
    if predictions_csv is not None and Path(predictions_csv).exists():
        scatter = _read_csv(predictions_csv, ("aoa_az_true", "aoa_az_pred", "toa_true", "toa_pred"))
        files["scatter_aoa.dat"] = _table(
            {"true_deg": [math.degrees(v) for v in scatter["aoa_az_true"]],
             "pred_deg": [math.degrees(v) for v in scatter["aoa_az_pred"]]},
            "strongest-path AoA azimuth, true vs predicted")
        files["scatter_toa.dat"] = _table({"true_s": scatter["toa_true"], "pred_s": scatter["toa_pred"]},
                                          "strongest-path ToA, true vs predicted")
    if images:
        try:
            import matplotlib
        except ImportError as exc:
            raise ThzBeamError("--images needs matplotlib (pip install thzbeam[plots])") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out / name
        tmp = path.with_name(name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
        written.append(path)
    if images:
        written += _render(table, scatter, out)
    return written


def _render(table, scatter, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in rate_columns(table).items():
        if name != "snr_db":
            ax.plot(table["snr_db"], values, marker="o", ms=3, label=name)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("rate (bit/s/Hz)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "rate_vs_snr.png", dpi=120)
    plt.close(fig)
    paths.append(out / "rate_vs_snr.png")
    if scatter is not None:
        for key, label, scale in (("aoa_az", "AoA azimuth (deg)", 180 / math.pi), ("toa", "ToA (s)", 1.0)):
            fig, ax = plt.subplots(figsize=(4, 4))
            t = [v * scale for v in scatter[f"{key}_true"]]
            p = [v * scale for v in scatter[f"{key}_pred"]]
            ax.scatter(t, p, s=4, alpha=0.5)
            lo, hi = min(t + p), max(t + p)
            ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
            ax.set_xlabel(f"true {label}")
            ax.set_ylabel(f"predicted {label}")
            fig.tight_layout()
            fig.savefig(out / f"scatter_{key.split('_')[0]}.png", dpi=120)
            plt.close(fig)
            paths.append(out / f"scatter_{key.split('_')[0]}.png")
    return paths
