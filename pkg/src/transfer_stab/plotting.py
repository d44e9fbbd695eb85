"""Optional PNG renderings of the CSV artifacts (matplotlib, Agg backend)."""

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLES = {
    "target_set_edge": dict(color="tab:blue", lw=1.2, label="target data set edge"),
    "synthesis_ball": dict(color="tab:red", lw=1.2, label="ball used for synthesis"),
    "source_set": dict(color="tab:green", lw=1.2, label="source data set"),
    "source_neighbourhood": dict(color="tab:green", lw=1.0, ls="--", label="eps-neighbourhood of source set"),
}


def _png(fig):
    buf = io.BytesIO()
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def sets_figure(curves):
    fig, ax = plt.subplots(figsize=(5, 5))
    for name, segs in curves:
        if name == "true_target":
            a, b = segs[0][0]
            ax.plot([a], [b], "k*", ms=10, label="true target")
            continue
        style = dict(STYLES.get(name, {}))
        for j, pts in enumerate(segs):
            ax.plot(pts[:, 0], pts[:, 1], **style)
            style.pop("label", None)
    ax.set_xlabel("A")
    ax.set_ylabel("B")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(fontsize=7, loc="best")
    return _png(fig)


def eigs_figure(eigs):
    fig, ax = plt.subplots(figsize=(5, 5))
    t = np.linspace(0, 2 * np.pi, 400)
    ax.plot(np.cos(t), np.sin(t), "k-", lw=0.8)
    for i, lam in enumerate(eigs):
        k = int(np.argmax(np.abs(lam)))
        ax.plot(lam[k].real, lam[k].imag, "r*" if i == 0 else "b.", ms=9 if i == 0 else 5)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_aspect("equal")
    ax.set_title("largest-modulus closed-loop eigenvalue")
    return _png(fig)


def sweep_figure(radii):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(np.arange(len(radii)), radii, "b.")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("system index (0 = true target)")
    ax.set_ylabel("spectral radius")
    return _png(fig)


def render(plot_data):
    """Map of file name to PNG bytes for whatever the run produced."""
    out = {}
    if "curves" in plot_data:
        out["sets.png"] = sets_figure(plot_data["curves"])
    if "eigs" in plot_data:
        out["eigs.png"] = eigs_figure(plot_data["eigs"])
    if "radii" in plot_data:
        out["sweep.png"] = sweep_figure(plot_data["radii"])
    return out
