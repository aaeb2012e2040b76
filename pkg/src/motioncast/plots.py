"""Figure rendering for the report path: per-frame error curves to PNG."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_report_curves(reports, path, title=None):
    """One panel per subject, one line per method, MSE (cm^2) vs frame.

    Reports carrying full per-frame curves are drawn as lines; reports loaded
    from CSV (values at the chosen frame indices only) as marked points.
    """
    subjects = sorted({r.subject for r in reports})
    fig, axes = plt.subplots(
        1, len(subjects), figsize=(4.2 * len(subjects), 3.4), squeeze=False, sharey=True
    )
    for ax, subject in zip(axes[0], subjects):
        for rep in [r for r in reports if r.subject == subject]:
            if len(rep.curve) == len(rep.frame_indices):
                ax.plot(rep.frame_indices, rep.values, marker="o", label=rep.labeled_method())
            else:
                ax.plot(range(1, len(rep.curve) + 1), rep.curve, label=rep.labeled_method())
                ax.plot(rep.frame_indices, rep.values, "o", color=ax.lines[-1].get_color())
        ax.set_title(f"Subject {subject}")
        ax.set_xlabel("frame")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("MSE (cm$^2$)")
    axes[0][0].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_log(rows, path):
    """Reconstruction train/val curves from training log rows."""
    epochs = [r["epoch"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(epochs, [r["recon_train"] for r in rows], label="train")
    ax.plot(epochs, [r["recon_val"] for r in rows], label="val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("reconstruction loss")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
