"""Render run figures from a metrics log: coverage curve, wire usage by
category, per-namespace ground-station traffic, and the merged map."""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .mapping import decode_grid

WIRE_CATEGORIES = ["payload", "overhead", "retransmissions", "acks",
                   "discovery", "routing_control"]


def render_figures(records: list[dict], out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    samples = [r for r in records if r.get("type") == "sample"]
    summary = next((r for r in reversed(records) if r.get("type") == "summary"), None)
    written = []

    if samples:
        ts = [s["t"] for s in samples]

        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(ts, [s["coverage"] for s in samples], lw=1.5)
        ax.axhline(0.6, color="tab:red", ls="--", lw=0.8, label="60% target")
        ax.set_xlabel("simulated time [s]")
        ax.set_ylabel("coverage fraction")
        ax.set_ylim(0, 1)
        ax.legend(loc="lower right")
        ax.set_title("merged-map coverage of free space")
        path = os.path.join(out_dir, "coverage.png")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(7, 4))
        for cat in WIRE_CATEGORIES:
            ax.plot(ts, [s["wire"][cat] / 1e6 for s in samples], lw=1.2, label=cat)
        ax.set_xlabel("simulated time [s]")
        ax.set_ylabel("cumulative MB on wire")
        ax.legend(fontsize=8)
        ax.set_title("wire bytes by category")
        path = os.path.join(out_dir, "wire_bytes.png")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

        namespaces = sorted({ns for s in samples
                             for ns in s.get("gs_bytes_by_namespace", {})})
        if namespaces:
            fig, ax = plt.subplots(figsize=(7, 4))
            for ns in namespaces:
                ax.plot(ts, [s.get("gs_bytes_by_namespace", {}).get(ns, 0) / 1e3
                             for s in samples], lw=1.2, label=ns)
            ax.set_xlabel("simulated time [s]")
            ax.set_ylabel("cumulative kB received at GS")
            ax.legend(fontsize=8)
            ax.set_title("ground-station traffic by namespace")
            path = os.path.join(out_dir, "gs_traffic.png")
            fig.tight_layout()
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)

    if summary and summary.get("merged_map"):
        grid = decode_grid(summary["merged_map"])
        img = np.full(grid.cells.shape, 0.5)
        img[grid.free_mask()] = 1.0
        img[grid.occupied_mask()] = 0.0
        fig, ax = plt.subplots(figsize=(8, 6))
        ax.imshow(img.T, origin="lower", cmap="gray", vmin=0, vmax=1,
                  extent=(grid.origin.x,
                          grid.origin.x + grid.nx * grid.resolution,
                          grid.origin.y,
                          grid.origin.y + grid.ny * grid.resolution))
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        cov = summary.get("coverage")
        ax.set_title(f"final merged map (coverage {cov:.1%})" if cov is not None
                     else "final merged map")
        path = os.path.join(out_dir, "merged_map.png")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    return written
