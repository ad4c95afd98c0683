"""Report figures written next to the CSV/JSON outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import OutcomeReport  # noqa: E402
from .dynamics import TrajectoryRecord  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.0,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def plot_paths(tr: TrajectoryRecord, report: OutcomeReport, path) -> Path:
    """Agent paths, final formation, and the fitted orbit when there is one."""
    g = tr.graph
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for i in range(g.n):
            ax.plot(tr.states[:, i, 0], tr.states[:, i, 1], lw=0.8, label=f"agent {i + 1}")
        final = tr.states[-1]
        for t, h in g.edges:
            ax.plot(*np.array([final[t], final[h]]).T, color="k", lw=1.2)
        ax.plot(*tr.states[0].T, "o", mfc="none", color="0.4", ms=4, label="start")
        ax.plot(*final.T, "ko", ms=4)
        if report.kind == "orbit":
            ax.plot(*report.center, "r+", ms=10, mew=1.5, label="centre")
            th = np.linspace(0, 2 * np.pi, 200)
            for r in report.diagnostics.get("radii", []):
                ax.plot(report.center[0] + r * np.cos(th), report.center[1] + r * np.sin(th),
                        "r:", lw=0.6)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(f"outcome: {report.kind}")
        ax.legend(loc="upper left", bbox_to_anchor=(1.02, 1.0), frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_errors(tr: TrajectoryRecord, report: OutcomeReport, path) -> Path:
    """Edge-error deviation from the equilibrium output and edge-vector speed."""
    target = report.equilibrium_output if report.equilibrium_output is not None else 0.0
    dev = np.linalg.norm(tr.edge_errors - target, axis=1)
    zdot = np.linalg.norm(tr.edge_vector_rates, axis=(1, 2))
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 4.5), sharex=True)
        a1.semilogy(tr.times, np.maximum(dev, 1e-17))
        if report.convergence_rate is not None:
            t0 = tr.times[int(np.argmax(dev))]
            a1.semilogy(tr.times, dev.max() * np.exp(report.convergence_rate * (tr.times - t0)),
                        "k--", lw=0.7, label=f"rate {report.convergence_rate:.3g}")
            a1.legend(frameon=False)
        a1.set_ylim(1e-16, max(dev.max() * 3, 1e-15))
        a1.set_ylabel(r"$\|e - \bar e\|$")
        a2.plot(tr.times, zdot)
        a2.set_ylabel(r"$\|\dot z\|$")
        a2.set_xlabel("t")
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def write_report_figures(tr: TrajectoryRecord, report: OutcomeReport, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    return [plot_paths(tr, report, out_dir / "paths.png"),
            plot_errors(tr, report, out_dir / "errors.png")]
