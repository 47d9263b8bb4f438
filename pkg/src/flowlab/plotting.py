"""Figure emitters: every report path can render its tables as SVG files."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "flowlab"

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_audit_margins(reports: list[dict], path: str) -> str:
    names = [r["quantity_name"] for r in reports]
    margins = [r["margin"] for r in reports]
    colors = ["tab:green" if r["passed"] else "tab:red" for r in reports]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(names, margins, color=colors)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_ylabel("margin (bound + tol - worst)")
    ax.set_title("hypothesis audits")
    fig.tight_layout()
    return _save(fig, path)


def plot_witness(witness: dict, path: str, log_scale: bool = False) -> str:
    grid = np.asarray(witness["base_grid"], dtype=float).reshape(-1)
    g = np.asarray(witness["g"], dtype=float)
    nsq = grid**2
    alpha = witness.get("detail", {}).get("alpha", 1.0)
    C = witness["envelope_C"]
    if alpha > 0:
        env = C * np.exp((1.0 + nsq) ** alpha)
    else:
        env = C * (1.0 + nsq) ** witness["envelope_gamma"]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(grid, g, "o-", label="fitted witness g")
    ax.plot(grid, env, "--", label="growth envelope")
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("x")
    ax.set_ylabel("g(x)")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_semigroup(profile: dict, path: str) -> str:
    xs = np.asarray(profile["x_grid"], dtype=float).reshape(-1)
    vals = np.asarray(profile["values"], dtype=float)
    ses = np.asarray(profile["std_errors"], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(xs, vals, "o-", lw=1)
    ax.fill_between(xs, vals - 1.96 * ses, vals + 1.96 * ses, alpha=0.25,
                    label="95% band")
    ax.set_xlabel("x")
    ax.set_ylabel(f"E {profile.get('f_name', 'f')}(X_t(x))")
    ax.set_title(f"semigroup profile at t = {profile['t']}")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_moment_reports(reports: list[dict], path: str, title: str = "moment checks") -> str:
    ts = [r["time"] for r in reports]
    est = np.array([r["estimate"] for r in reports])
    se = np.array([r["std_error"] for r in reports])
    bound = [r["bound"] for r in reports]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.errorbar(ts, est, yerr=3 * se, fmt="o", capsize=3, label="estimate (3 SE)")
    ax.plot(ts, bound, "s--", color="tab:red", label="bound")
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_conjugacy(report: dict, path: str) -> str:
    dts = np.asarray(report["dt_levels"], dtype=float)
    med = np.asarray(report["medians"], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(dts, med, "o-")
    ax.set_xlabel("dt")
    ax.set_ylabel("median max_t |Y - Phi(X)|")
    ax.set_title("conjugacy error decay")
    ax.invert_xaxis()
    fig.tight_layout()
    return _save(fig, path)


def plot_lambda_trace(trace: list, path: str) -> str:
    lams = [row[0] for row in trace]
    totals = [row[1] + row[2] for row in trace]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(lams, totals, "o-", label="sup|u| + sup|du|")
    ax.axhline(0.5, color="tab:red", ls="--", label="acceptance 1/2")
    ax.set_xlabel("lambda")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
