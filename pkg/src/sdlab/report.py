"""SVG rendering of run artifacts for ``lab render``.

Plots are drawn with the Agg backend; the SVG hash salt is fixed and the date
metadata dropped so identical inputs give identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "sdlab"
matplotlib.rcParams["svg.fonttype"] = "path"


def _read_csv(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_lp_certificate(path: Path, out: Path, meta: dict) -> None:
    data = _read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(data["t"], data["norm"], label=r"$\|u(t)\|_p$")
    omega = meta.get("omega", 0.0)
    ax.plot(data["t"], data["bound"], "--", label=rf"$e^{{\omega t}}\|f\|_p$, $\omega$={omega:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.set_title(f"L^{meta.get('p', '?')} certificate")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def plot_hitting_curve(path: Path, out: Path, meta: dict) -> None:
    data = _read_csv(path)
    p = data["p_hat"]
    lo = [a - b for a, b in zip(p, data["ci_lo"])]
    hi = [b - a for a, b in zip(p, data["ci_hi"])]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(data["delta"], p, yerr=[lo, hi], fmt="o-", capsize=3)
    thr = meta.get("threshold")
    if thr is None:
        d = meta.get("d", 3)
        thr = 4.0 * (d / (d - 2.0)) ** 2
    ax.axvline(thr, color="gray", ls=":", label=f"4(d/(d-2))^2 = {thr:g}")
    ax.set_xlabel(r"$\delta$")
    ax.set_ylabel("hit probability")
    ax.set_title(f"eps_hit = {meta.get('eps_hit', '?')}")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


def plot_oscillation(path: Path, out: Path, meta: dict) -> None:
    data = _read_csv(path)
    r, osc = data["radius"], data["osc"]
    beta = data["fitted_beta"][0]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(r, osc, "o", label="osc")
    pos = [(a, b) for a, b in zip(r, osc) if b > 0]
    if pos:
        # anchor the fitted power law at the largest ball
        ra, oa = pos[-1]
        ax.loglog(r, [oa * (x / ra) ** beta for x in r], "--", label=rf"$\beta$ = {beta:.3g}")
    ax.set_xlabel("radius")
    ax.set_ylabel("oscillation")
    ax.legend()
    fig.tight_layout()
    _save(fig, out)


PLOTTERS = {"lp_certificate": plot_lp_certificate, "hitting_curve": plot_hitting_curve,
            "oscillation": plot_oscillation}


def render_index(index_path) -> dict:
    """Render every plottable artifact of an index; returns the rendered and skipped lists."""
    index_path = Path(index_path)
    with open(index_path) as fh:
        index = json.load(fh)
    base = index_path.parent
    rendered, skipped = [], []
    for exp in index.get("experiments", []):
        for art in exp.get("artifacts", []):
            series = art.get("series")
            if series is None:
                continue
            src = base / art["path"]
            plotter = PLOTTERS.get(series)
            if plotter is None:
                skipped.append({"path": art["path"], "reason": f"no plot for series {series!r}"})
                continue
            if not src.exists():
                skipped.append({"path": art["path"], "reason": "file missing"})
                continue
            out = src.with_suffix(".svg")
            try:
                plotter(src, out, art.get("meta", {}))
            except (KeyError, ValueError, IndexError) as exc:
                skipped.append({"path": art["path"], "reason": f"unreadable: {exc}"})
                continue
            rendered.append(str(out.relative_to(base)))
    for name in PLOTTERS:
        if not any(a.get("series") == name for e in index.get("experiments", [])
                   for a in e.get("artifacts", [])):
            skipped.append({"series": name, "reason": "not present in index"})
    return {"rendered": rendered, "skipped": skipped}

