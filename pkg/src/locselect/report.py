"""Static plots from an evaluation report: metric curves and posterior maps.

SVG output is byte-deterministic: the figure hash salt is pinned and the
creation date is stripped from the metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .pipeline import PipelineError, load_summary


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "locselect"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})


def _metric_curves(plt, cells: list[dict], metric: str, ylabel: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for variant in ("locselect", "unmasked"):
        rows = sorted((c for c in cells if c["variant"] == variant and c["snr_db"] is not None),
                      key=lambda c: c["snr_db"])
        ax.plot([c["snr_db"] for c in rows], [c[metric] for c in rows],
                marker="o", label=variant)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def _read_fig3(path: Path) -> tuple[dict, np.ndarray]:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line[1:].strip().split(" ", 1)
                if len(parts) == 2:
                    meta[parts[0]] = parts[1]
                continue
            if line.startswith("frame,"):
                continue
            values = line.rstrip("\n").split(",")
            rows.append([float(v) for v in values[1:]])
    return meta, np.array(rows)


def _posterior_map(plt, fig3_path: Path, out_path: Path, title: str) -> None:
    meta, grid = _read_fig3(fig3_path)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    im = ax.imshow(grid, aspect="auto", origin="lower", interpolation="nearest",
                   extent=(1, 360, 0, grid.shape[0]))
    ax.set_xlabel("DoA (degrees)")
    ax.set_ylabel("time frame")
    ax.set_title(title)
    if "theta_gt_deg" in meta:
        ax.axvline(float(meta["theta_gt_deg"]), color="w", ls="--", lw=1.0,
                   label="target DoA")
    if "interferer_deg" in meta:
        ax.axvline(float(meta["interferer_deg"]), color="r", ls=":", lw=1.0,
                   label="interferer DoA")
    ax.legend(loc="upper right", fontsize=7)
    fig.colorbar(im, ax=ax, label="pre-sigmoid activation")
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)


def cmd_report(config: ExperimentConfig) -> Path:
    """Render MAE/ACC-vs-SNR curves and the per-clip posterior heat maps."""
    report_dir = config.out_path() / "report"
    if not (report_dir / "report.json").exists():
        raise PipelineError(f"no report at {report_dir} — run `eval` first")
    with open(report_dir / "report.json") as fh:
        report = json.load(fh)
    if report.get("config_hash") != config.config_hash():
        raise PipelineError("report was produced by a different config")
    plt = _matplotlib()
    cells = load_summary(report_dir)
    plots = report_dir / "plots"
    _metric_curves(plt, cells, "mae_frame_deg", "MAE (degrees)", plots / "mae_vs_snr.svg")
    _metric_curves(plt, cells, "acc_frame", "ACC (fraction within tolerance)",
                   plots / "acc_vs_snr.svg")
    for variant in ("locselect", "unmasked"):
        fig3 = report_dir / f"fig3_{variant}.csv"
        if fig3.exists():
            _posterior_map(plt, fig3, plots / f"posterior_{variant}.svg",
                           f"network outputs (pre-sigmoid), {variant}")
    return plots
