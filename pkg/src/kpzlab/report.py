"""Plot-data files and their rendered figures.

Every experiment emits gnuplot-ready whitespace-separated text, one file
per figure family, with a comment header documenting the columns and the
intended axis scales.  The same records drive the optional matplotlib
rendering, which drops a PNG next to each data file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


@dataclass
class PlotData:
    """One figure family: labelled columns plus axis/scale metadata."""

    name: str
    columns: list[str]
    rows: np.ndarray
    title: str
    xlabel: str
    ylabel: str
    scale: str = "linear"  # linear | loglog | semilogx | semilogy
    series_split: int | None = None  # column index separating x from y-series

    def data_path(self, out_dir) -> Path:
        return Path(out_dir) / f"{self.name}.dat"

    def figure_path(self, out_dir) -> Path:
        return Path(out_dir) / f"{self.name}.png"


def write_plotdata(plot: PlotData, out_dir) -> Path:
    path = plot.data_path(out_dir)
    rows = np.atleast_2d(np.asarray(plot.rows, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"# {plot.title}\n")
        fh.write(f"# x: {plot.xlabel}   y: {plot.ylabel}\n")
        fh.write(f"# scale: {plot.scale}\n")
        fh.write("# columns: " + " ".join(plot.columns) + "\n")
        for row in rows:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")
    return path


def render_figure(plot: PlotData, out_dir) -> Path:
    rows = np.atleast_2d(np.asarray(plot.rows, dtype=float))
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    x = rows[:, 0]
    for j in range(1, rows.shape[1]):
        ax.plot(x, rows[:, j], marker="o", markersize=3, lw=1.2,
                label=plot.columns[j])
    if plot.scale in ("loglog", "semilogx"):
        ax.set_xscale("log")
    if plot.scale in ("loglog", "semilogy"):
        ax.set_yscale("log")
    ax.set_xlabel(plot.xlabel)
    ax.set_ylabel(plot.ylabel)
    ax.set_title(plot.title)
    if rows.shape[1] > 2:
        ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = plot.figure_path(out_dir)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def emit(plots, out_dir, figures: bool = True) -> list[Path]:
    """Write every plot-data file (and figure) and return the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for plot in plots:
        written.append(write_plotdata(plot, out_dir))
        if figures:
            written.append(render_figure(plot, out_dir))
    return written


# ---------------------------------------------------------------------------
# Figure-family builders
# ---------------------------------------------------------------------------


def roughness_plot(series_by_size: dict, name: str = "roughness_curves") -> PlotData:
    """(t, w) per lattice size on shared sample times, log-log."""
    sizes = sorted(series_by_size)
    # Sizes may use different grids; emit the union by interpolation.
    t_all = np.unique(np.concatenate([series_by_size[s].times for s in sizes]))
    cols = [np.interp(t_all, series_by_size[s].times, series_by_size[s].w)
            for s in sizes]
    rows = np.column_stack([t_all] + cols)
    return PlotData(
        name,
        ["t"] + [f"w_L{s}" for s in sizes],
        rows,
        "Interface roughness growth and saturation",
        "t [monolayers]",
        "w(L, t)",
        scale="loglog",
    )


def error_vs_resolution_plot(
    resolutions, errors_by_scheme: dict, name: str = "scheme_errors"
) -> PlotData:
    schemes = sorted(errors_by_scheme)
    rows = np.column_stack(
        [np.asarray(resolutions, float)]
        + [np.asarray(errors_by_scheme[s], float) for s in schemes]
    )
    return PlotData(
        name,
        ["J"] + list(schemes),
        rows,
        "Consecutive-resolution Monte Carlo errors",
        "modes J",
        "error",
        scale="loglog",
    )


def convergence_plot(rows_mdxe, name: str = "mesh_convergence") -> PlotData:
    rows = np.array([[r.m, r.dx, r.error] for r in rows_mdxe])
    return PlotData(
        name,
        ["m", "dx", "E"],
        rows,
        "Mesh-refinement error against the exact profile",
        "elements m",
        "E",
        scale="loglog",
    )


def profile_plot(x, profiles: dict, title: str, name: str) -> PlotData:
    labels = list(profiles)
    rows = np.column_stack([np.asarray(x, float)]
                           + [np.asarray(profiles[k], float) for k in labels])
    return PlotData(
        name, ["x"] + labels, rows, title, "x", "h", scale="linear",
    )


def shift_constants_plot(rungs, name: str = "shift_constants") -> PlotData:
    rows = np.array([[r.kappa, r.c_hat] for r in rungs])
    return PlotData(
        name,
        ["kappa", "C_hat"],
        rows,
        "Empirical renormalization shift versus mollifier scale",
        "kappa",
        "C_hat",
        scale="semilogy",
    )


def residual_plot(rungs, name: str = "profile_residuals") -> PlotData:
    rows = np.array([[r.kappa, r.residual] for r in rungs])
    return PlotData(
        name,
        ["kappa", "residual"],
        rows,
        "Shift-corrected profile distance to the Cole-Hopf solution",
        "kappa",
        "residual",
        scale="loglog",
    )


def kappa_refinement_plot(rungs, errors, name: str = "kappa_refinement") -> PlotData:
    rows = np.array(
        [[n, k, e] for (n, k), e in zip(rungs, errors)]
    )
    return PlotData(
        name,
        ["N", "kappa", "error"],
        rows,
        "Renormalized-equation error under coupled (N, kappa) refinement",
        "N",
        "error",
        scale="loglog",
    )


def crossover_plot(times, w, name: str = "crossover_roughness") -> PlotData:
    rows = np.column_stack([times, w])
    return PlotData(
        name,
        ["t", "w"],
        rows,
        "Roughness of the Cole-Hopf transform of the stochastic heat solution",
        "t",
        "w",
        scale="loglog",
    )
