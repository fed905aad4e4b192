"""Matplotlib renderings written next to the delimited reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def lambda_search_figure(per_lambda, path: Path):
    lams = [p[0] for p in per_lambda]
    qmins = [p[1] for p in per_lambda]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogx(lams, qmins, "o-", color="#2d5f8a")
    ax.axhline(0.0, color="#888888", lw=0.8)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("min of weight symbol on sample set")
    ax.set_title("exponential-weight convexity sweep")
    _save(fig, path)


def convergence_figure(hs, errors, slope, path: Path, ylabel="max error"):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.loglog(hs, errors, "o-", color="#2d5f8a", label=f"slope {slope:.2f}")
    ref = [errors[0] * (h / hs[0]) ** 2 for h in hs]
    ax.loglog(hs, ref, "--", color="#aaaaaa", label="order 2 reference")
    ax.set_xlabel("h")
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)


def tau_sweep_figure(max_per_tau, tau0_star, path: Path):
    taus = [p[0] for p in max_per_tau]
    cs = [p[1] for p in max_per_tau]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogx(taus, cs, "o-", color="#2d5f8a")
    if tau0_star is not None:
        ax.axvline(tau0_star, color="#b2432f", lw=0.9, ls="--",
                   label=r"stabilization $\tau_0^*$")
        ax.legend()
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel("max empirical constant")
    _save(fig, path)


def reconstruction_figure(xs, f_true, f_hat, path: Path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    if f_true.ndim == 1:
        ax.plot(xs, f_true, color="#444444", label="true source")
        ax.plot(xs, f_hat, "--", color="#b2432f", label="reconstruction")
        ax.set_xlabel("x")
        ax.legend()
    else:
        im = ax.imshow(np.abs(f_hat - f_true).T, origin="lower", cmap="magma")
        fig.colorbar(im, ax=ax, label="|error|")
        ax.set_title("reconstruction error")
    _save(fig, path)


def ratio_figure(ratios, path: Path, ylabel="stability ratio"):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(range(len(ratios)), ratios, "o", color="#2d5f8a", ms=4)
    ax.set_xlabel("pair")
    ax.set_ylabel(ylabel)
    _save(fig, path)


def noise_sweep_figure(levels, errors, slope, path: Path):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.loglog(levels, errors, "o-", color="#2d5f8a", label=f"slope {slope:.2f}")
    ax.set_xlabel("noise level")
    ax.set_ylabel("relative reconstruction error")
    ax.legend()
    _save(fig, path)
