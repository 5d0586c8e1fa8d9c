"""Success and precision plots (rendered off-screen)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _plot(curve, path, xlabel, title, label):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(curve[:, 0], curve[:, 1], lw=2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("fraction of frames")
    ax.set_ylim(0, 1.02)
    ax.set_xlim(curve[0, 0], curve[-1, 0])
    ax.grid(alpha=0.3)
    ax.set_title(title)
    ax.legend(loc="lower left" if "overlap" in xlabel else "lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_success(report, path):
    return _plot(report.success_curve, path, "overlap threshold", "Success plot",
                 f"AUC {report.auc:.3f}")


def plot_precision(report, path):
    return _plot(report.precision_curve, path, "location error threshold (px)",
                 "Precision plot", f"DP@20 {report.dp20:.3f}")
