"""Figure rendering for run, sweep, and comparison outputs.

Renders matplotlib figures to files (format chosen by the path suffix, SVG in
the CLI defaults) built strictly from parsed trajectory CSV frames, so every
figure references only data present in its sources.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend pinned first)

from .logio import LogFrame  # noqa: E402

_COLORS = ("magenta", "tab:blue", "tab:red", "tab:green", "tab:orange", "tab:purple")


def _draw_scene(ax, obstacle=None, goal=None):
    if obstacle is not None:
        xo, yo, ro = obstacle
        ang = [i * 2 * math.pi / 128 for i in range(129)]
        ax.fill([xo + ro * math.cos(a) for a in ang],
                [yo + ro * math.sin(a) for a in ang],
                color="mistyrose", edgecolor="lightcoral", zorder=1)
    if goal is not None:
        gx, gy, rd = goal
        ang = [i * 2 * math.pi / 128 for i in range(129)]
        ax.plot([gx + rd * math.cos(a) for a in ang],
                [gy + rd * math.sin(a) for a in ang],
                color="green", linewidth=1.2, zorder=2)


def _plot_paths(ax, frames, labels):
    for frame, label, color in zip(frames, labels, _COLORS):
        xs = frame.floats("x")
        ys = frame.floats("y")
        ax.plot(xs, ys, color=color, linewidth=1.6, label=label, zorder=3)
        ax.plot(xs[0], ys[0], marker="D", color="black", markersize=6, zorder=4)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)


def _input_series(frame: LogFrame, channel: int):
    """(t, value) pairs of the applied input: uf column when present, else u."""
    ts, vals = [], []
    for i in range(len(frame)):
        uf = frame.columns[f"uf{channel}"][i]
        u = frame.columns[f"u{channel}"][i]
        v = uf if uf is not None else u
        if v is not None:
            ts.append(frame.columns["t"][i])
            vals.append(v)
    return ts, vals


def _plot_inputs(ax1, ax2, frames, labels):
    for frame, label, color in zip(frames, labels, _COLORS):
        for ax, ch in ((ax1, 1), (ax2, 2)):
            ts, vals = _input_series(frame, ch)
            ax.step(ts, vals, where="post", color=color, linewidth=1.2, label=label)
    ax1.set_ylabel("u1 (rad/s)")
    ax2.set_ylabel("u2 (N)")
    ax2.set_xlabel("t (s)")
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)


def save_run_figure(frame: LogFrame, path, obstacle=None, goal=None, label="run") -> None:
    """Trajectory plus input channels for a single run."""
    fig = plt.figure(figsize=(10, 4.2))
    ax_traj = fig.add_subplot(1, 2, 1)
    _draw_scene(ax_traj, obstacle, goal)
    _plot_paths(ax_traj, [frame], [label])
    ax_u1 = fig.add_subplot(2, 2, 2)
    ax_u2 = fig.add_subplot(2, 2, 4)
    _plot_inputs(ax_u1, ax_u2, [frame], [label])
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_compare_figure(frames, labels, path, obstacle=None, goal=None) -> None:
    """Overlayed trajectories and input channels for several runs."""
    fig = plt.figure(figsize=(11, 4.6))
    ax_traj = fig.add_subplot(1, 2, 1)
    _draw_scene(ax_traj, obstacle, goal)
    _plot_paths(ax_traj, frames, labels)
    ax_u1 = fig.add_subplot(2, 2, 2)
    ax_u2 = fig.add_subplot(2, 2, 4)
    _plot_inputs(ax_u1, ax_u2, frames, labels)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_sweep_figure(frames, labels, path, obstacle=None, goal=None) -> None:
    save_compare_figure(frames, labels, path, obstacle, goal)
