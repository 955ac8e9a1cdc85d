"""Optional SVG line charts of closed-loop trajectories (needs matplotlib)."""

from __future__ import annotations


def plot_trajectories(path, blocks) -> None:
    """States and controls against the step index, one line per (method, seed)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    styles = {"prob": "-", "dhp": "--"}
    fig, (ax_x, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for traj, method in blocks:
        steps = range(len(traj.states))
        ax_x.plot(steps, traj.states[:, 0], styles.get(method, "-"), lw=0.8,
                  label=f"{method} seed {traj.seed}")
        ax_u.plot(range(len(traj.controls)), traj.controls[:, 0], styles.get(method, "-"), lw=0.8)
    ax_x.axhline(0.0, color="k", lw=0.5)
    ax_x.set_ylabel("x")
    ax_u.set_ylabel("u")
    ax_u.set_xlabel("step")
    if len(blocks) <= 6:
        ax_x.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
