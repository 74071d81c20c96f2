"""Figure rendering for completed runs.

Reads the CSV time series and the last VTK snapshot of a run directory and
renders PNG summaries with matplotlib (Agg backend, no display needed).
"""

import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import output as out


def _read_timeseries(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows) if rows else np.empty((0, len(header)))
    return header, data


def _latest_snapshot(directory, prefix, kind):
    pattern = os.path.join(directory, f"{prefix}_{kind}_*.vtk")
    matches = sorted(glob.glob(pattern))
    return matches[-1] if matches else None


def render_run_figures(directory, prefix):
    """Render the standard figure set; returns the list of files written."""
    written = []
    ts_path = os.path.join(directory, f"{prefix}_timeseries.csv")
    if os.path.exists(ts_path):
        header, data = _read_timeseries(ts_path)
        if len(data):
            written.append(_mass_figure(directory, prefix, header, data))
            written.append(_pore_figure(directory, prefix, header, data))
            probe_fig = _probe_figure(directory, prefix, header, data)
            if probe_fig:
                written.append(probe_fig)

    snap = _latest_snapshot(directory, prefix, "matrix")
    if snap:
        written.append(_field_figure(directory, prefix, snap))
    return written


def _mass_figure(directory, prefix, header, data):
    t = data[:, header.index("time")]
    mu = data[:, header.index("total_u_mass")]
    mw = data[:, header.index("total_w_mass")]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, mu, label="solute")
    ax.plot(t, mw, label="precipitate")
    ax.plot(t, mu + mw, "k--", label="total")
    ax.set_xlabel("time")
    ax.set_ylabel("mass")
    ax.legend()
    ax.set_title("mass history")
    fig.tight_layout()
    path = os.path.join(directory, f"{prefix}_mass.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _pore_figure(directory, prefix, header, data):
    t = data[:, header.index("time")]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, data[:, header.index("min_phi")], label="min porosity")
    ax.plot(t, data[:, header.index("min_eps")], label="min aperture")
    ax.set_xlabel("time")
    ax.legend()
    ax.set_title("pore structure extremes")
    fig.tight_layout()
    path = os.path.join(directory, f"{prefix}_pore.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _probe_figure(directory, prefix, header, data):
    probes = [(i, name) for i, name in enumerate(header)
              if name.startswith("probe_")]
    if not probes:
        return None
    t = data[:, header.index("time")]
    fig, ax = plt.subplots(figsize=(6, 4))
    for col, name in probes:
        ax.plot(t, data[:, col], label=name)
    ax.set_xlabel("time")
    ax.set_ylabel("concentration")
    ax.legend()
    ax.set_title("probe breakthrough")
    fig.tight_layout()
    path = os.path.join(directory, f"{prefix}_probes.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _field_figure(directory, prefix, snapshot_path):
    meta, fields = out.read_vtk_cell_fields(snapshot_path)
    nxp, nyp = meta["dimensions"][0], meta["dimensions"][1]
    nx, ny = nxp - 1, nyp - 1
    names = [n for n in ("p", "u", "w", "phi") if n in fields]
    fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.2))
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        img = fields[name].reshape(ny, nx)
        im = ax.imshow(img, origin="lower", aspect="auto")
        ax.set_title(name)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    path = os.path.join(directory, f"{prefix}_fields.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_convergence_figure(h_or_dt, errors, labels, path, xlabel="h"):
    """Log-log error plot for a refinement study."""
    fig, ax = plt.subplots(figsize=(5, 4))
    x = np.asarray(h_or_dt, dtype=float)
    for err, label in zip(errors, labels):
        ax.loglog(x, err, "o-", label=label)
    if len(x) > 1:
        ref = errors[0][0] * (x / x[0])
        ax.loglog(x, ref, "k:", label="order 1")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
