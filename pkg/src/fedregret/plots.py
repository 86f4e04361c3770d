"""Figure rendering for reports. All figures are SVG files written next to
the CSV/JSON output; the SVG hash salt is pinned so repeated renders of the
same data produce stable ids."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "fedregret"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _save(fig, path: str) -> str:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def render_regret_curve(result, path: str) -> str:
    """Cumulative regret and consensus error over time for a single run."""
    T = result.config.horizon
    t = np.arange(1, T + 1)
    fig, axes = plt.subplots(2, 1, figsize=(6.8, 6.0), sharex=True)
    axes[0].plot(t, result.regret_curve, lw=1.2, color="tab:blue")
    axes[0].set_ylabel("cumulative regret")
    axes[0].grid(alpha=0.3)
    axes[1].plot(t, result.mean_consensus, lw=0.9, color="tab:orange")
    axes[1].set_ylabel("consensus error $V_t$")
    axes[1].set_xlabel("step $t$")
    axes[1].grid(alpha=0.3)
    tau = result.config.sync_period
    axes[0].set_title(
        f"M={result.config.num_clients}, tau={tau}, "
        f"regret={result.regret:.4g} (se {result.regret_se:.2g})")
    fig.tight_layout()
    return _save(fig, path)


def render_scaling(sweep_result, path: str) -> str:
    """Log-log regret vs horizon with the fitted power law."""
    hs = np.array([c.overrides["horizon"] for c in sweep_result.cells], dtype=float)
    ys = np.array([c.result.regret for c in sweep_result.cells], dtype=float)
    ses = np.array([c.result.regret_se for c in sweep_result.cells], dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    ax.errorbar(hs, ys, yerr=ses, fmt="o", ms=4, capsize=3, color="tab:blue",
                label="measured")
    if "power" in sweep_result.fits:
        fit = sweep_result.fits["power"]
        grid = np.geomspace(hs.min(), hs.max(), 64)
        curve = fit.params["coefficient"] * grid ** fit.params["exponent"]
        ax.plot(grid, curve, "--", color="tab:red",
                label=(f"fit: T^{fit.params['exponent']:.3f} "
                       f"(R$^2$={fit.r_squared:.4f})"))
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("horizon $T$")
    ax.set_ylabel("regret")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def render_speedup(study, path: str) -> str:
    """Regret vs client count with the ratio to the baseline annotated."""
    ms = np.array([r["num_clients"] for r in study.rows], dtype=float)
    ys = np.array([r["regret"] for r in study.rows])
    ses = np.array([r["regret_se"] for r in study.rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    ax.errorbar(ms, ys, yerr=ses, fmt="o-", ms=5, capsize=3, color="tab:blue")
    for r in study.rows:
        ax.annotate(f"x{r['ratio_vs_baseline']:.3f}",
                    (r["num_clients"], r["regret"]),
                    textcoords="offset points", xytext=(6, 6), fontsize=8)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("clients $M$")
    ax.set_ylabel("regret")
    ax.grid(alpha=0.3)
    ax.set_title("variance reduction from client averaging")
    fig.tight_layout()
    return _save(fig, path)


def render_tau(study, path: str) -> str:
    """Regret vs sync period, with the recommended tau marked."""
    taus = np.array([r["sync_period"] for r in study.rows], dtype=float)
    ys = np.array([r["regret"] for r in study.rows])
    ses = np.array([r["regret_se"] for r in study.rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    ax.errorbar(taus, ys, yerr=ses, fmt="s-", ms=5, capsize=3, color="tab:green")
    ax.axvline(study.recommended, color="tab:red", ls=":",
               label=f"recommended tau*={study.recommended}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("sync period tau")
    ax.set_ylabel("regret")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
