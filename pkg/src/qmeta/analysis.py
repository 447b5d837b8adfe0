"""Scaling-law fits and summary tables over learning outcomes."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

HEISENBERG_BETA = 1.0


@dataclass(frozen=True)
class ScalingFit:
    """``f = alpha * C**(-beta)`` fitted in log10-log10 space."""

    alpha: float
    beta: float
    r_squared: float
    n_points: int

    def predict(self, c):
        return self.alpha * np.asarray(c, dtype=float) ** (-self.beta)


def fit_scaling(points) -> ScalingFit:
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least 2 (c_total, infidelity) points")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError("all points must be finite and strictly positive")
    x, y = np.log10(pts[:, 0]), np.log10(pts[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("c_total values must not all be equal")
    xm, ym = x.mean(), y.mean()
    slope = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
    intercept = ym - slope * xm
    ss_res = np.sum((y - (intercept + slope * x)) ** 2)
    ss_tot = np.sum((y - ym) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(10**intercept), float(-slope), float(r2), len(pts))


@dataclass(frozen=True)
class Summary:
    n: int
    mean_c_total: float
    stderr_c_total: float
    mean_infidelity: float
    stderr_infidelity: float
    mean_t_h: float
    halted_fraction: float
    delta_c_total: float | None = None
    baseline: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _get(o, name):
    return o[name] if isinstance(o, dict) else getattr(o, name)


def _stderr(v: np.ndarray) -> float:
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def summarize(outcomes, baseline=None, baseline_name: str | None = None) -> Summary:
    """Means, standard errors and halt fraction.

    ``baseline`` is another outcome series or a bare mean; ``delta_c_total``
    is then baseline minus this series (positive means this series is cheaper).
    """
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("summarize needs at least one outcome")
    c = np.array([_get(o, "c_total") for o in outcomes], dtype=float)
    f = np.array([_get(o, "infidelity") for o in outcomes], dtype=float)
    th = np.array([_get(o, "t_h") for o in outcomes], dtype=float)
    halted = np.array([_get(o, "halted") for o in outcomes], dtype=bool)
    delta = None
    if baseline is not None:
        base_mean = float(baseline) if np.isscalar(baseline) else summarize(baseline).mean_c_total
        delta = base_mean - float(c.mean())
    return Summary(len(outcomes), float(c.mean()), _stderr(c), float(f.mean()), _stderr(f),
                   float(th.mean()), float(halted.mean()), delta, baseline_name)


def points_from_rows(rows):
    """(mean_c_total, mean_infidelity) pairs from evaluation rows or dicts."""
    return [(float(_get(r, "mean_c_total")), float(_get(r, "mean_infidelity"))) for r in rows]


def read_points_csv(path, x_col: str = "mean_c_total", y_col: str = "mean_infidelity"):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(float(r[x_col]), float(r[y_col])) for r in csv.DictReader(fh)]


def read_qst_points(path):
    """Mean tomography infidelity per total-shot budget."""
    groups: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            groups.setdefault(int(r["total_shots"]), []).append(float(r["infidelity"]))
    return [(float(c), float(np.mean(v))) for c, v in sorted(groups.items())]


def read_points_jsonl(path):
    """Group per-instance outcome records by ``c_target`` and average them."""
    groups: dict = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            groups.setdefault(rec.get("c_target"), []).append(rec)
    return [(float(np.mean([r["c_total"] for r in g])), float(np.mean([r["infidelity"] for r in g])))
            for _, g in sorted(groups.items(), key=lambda kv: (kv[0] is None, kv[0]))]


def format_report(fit: ScalingFit, points) -> str:
    lines = ["c_total            infidelity", "-" * 32]
    lines += [f"{c:<18.6g} {f:.6g}" for c, f in points]
    lines += ["",
              f"alpha     = {fit.alpha:.6g}",
              f"beta      = {fit.beta:.6f}",
              f"R^2       = {fit.r_squared:.6f}",
              f"n_points  = {fit.n_points}",
              f"gap to Heisenberg limit (1 - beta) = {HEISENBERG_BETA - fit.beta:+.4f}"]
    return "\n".join(lines) + "\n"
