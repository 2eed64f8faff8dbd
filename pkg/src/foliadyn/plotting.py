"""Figure rendering for the CLI report paths (headless, files only)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_kernel_table(table, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(table.rho_grid, table.density, lw=1.2)
    ax1.set_yscale("log")
    ax1.set_xlabel("hyperbolic radius")
    ax1.set_ylabel("kernel density")
    ax1.set_title(f"radial heat kernel, t = {table.time:g}")
    ax2.plot(table.rho_grid, table.radial_cdf, lw=1.2, color="firebrick")
    ax2.set_xlabel("hyperbolic radius")
    ax2.set_ylabel("radial CDF")
    ax2.axhline(1.0, color="gray", lw=0.6, ls=":")
    for ax in (ax1, ax2):
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_lyapunov_report(report, target, path):
    per = np.asarray(report.per_path, dtype=float)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.hist(per, bins=max(10, len(per) // 40), color="#35618f", alpha=0.85)
    ax1.axvline(report.chi_hat, color="k", lw=1.4,
                label=f"estimate {report.chi_hat:.3f}")
    if target is not None:
        ax1.axvline(target, color="firebrick", lw=1.2, ls="--",
                    label=f"formula {target:.3f}")
    ax1.set_xlabel("per-path exponent")
    ax1.set_ylabel("paths")
    ax1.legend(frameon=False, fontsize=8)
    order = np.arange(1, len(per) + 1)
    running = np.cumsum(per) / order
    ax2.plot(order, running, lw=1.0)
    if target is not None:
        ax2.axhline(target, color="firebrick", lw=1.0, ls="--")
    ax2.set_xlabel("paths")
    ax2.set_ylabel("running mean")
    for ax in (ax1, ax2):
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_occupation(grid, path):
    w = grid.normalized()
    n_charts = w.shape[0]
    fig, axes = plt.subplots(1, n_charts, figsize=(3.2 * n_charts, 3.1))
    if n_charts == 1:
        axes = [axes]
    for c, ax in enumerate(axes):
        im = ax.imshow(np.log10(w[c].T + 1e-12), origin="lower",
                       extent=(0, 1, 0, 1), cmap="magma")
        ax.set_title(f"chart {c}", fontsize=9)
        ax.set_xlabel("|u|$^2$")
        ax.set_ylabel("|v|$^2$")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.suptitle("occupation measure (log10 of cell mass)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_tv_matrix(diag, path):
    cps = diag["checkpoints"]
    fig, axes = plt.subplots(1, len(cps) + 1,
                             figsize=(3.2 * (len(cps) + 1), 3.0))
    for k, cp in enumerate(cps):
        ax = axes[k]
        im = ax.imshow(diag["tv"][cp], vmin=0, cmap="viridis")
        ax.set_title(f"TV matrix, T = {cp:g}", fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.8)
    ax = axes[-1]
    ax.plot(cps, [diag["max_tv"][cp] for cp in cps], "o-")
    ax.set_xlabel("horizon")
    ax.set_ylabel("max pairwise TV")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_eta_profile(rows, path):
    rows = np.asarray(rows, dtype=float)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.loglog(rows[:, 0], rows[:, 1], "o-", ms=3)
    ax1.set_xlabel("distance to the singular set")
    ax1.set_ylabel("eta estimate")
    ax2.semilogx(rows[:, 0], rows[:, 2], "o-", ms=3, color="firebrick")
    ax2.set_xlabel("distance to the singular set")
    ax2.set_ylabel("eta / (s log* s)")
    for ax in (ax1, ax2):
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_local_model_errors(hol_errs, curv_errs, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.hist(np.log10(np.maximum(hol_errs, 1e-18)), bins=40,
             color="#35618f")
    ax1.set_xlabel("log10 |holonomy error|")
    ax2.hist(np.log10(np.maximum(curv_errs, 1e-18)), bins=40,
             color="#8f4e35")
    ax2.set_xlabel("log10 relative curvature error")
    for ax in (ax1, ax2):
        ax.set_ylabel("cases")
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_integrability(vals, path):
    labels = list(vals)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    xs = np.arange(len(labels))
    ax.bar(xs, [vals[k] for k in labels], color="#46787a", width=0.6)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("occupation integral")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
