"""Error metrics against the exact oracles and grid evaluation/export."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["ErrorReport", "GridEval", "error_report", "evaluate_on_grid",
           "write_metrics_csv", "write_surface_csv"]


@dataclass(frozen=True)
class ErrorReport:
    """Global relative error, max absolute error and mean absolute error."""

    eps_r: float
    eps_inf: float
    eps_a: float
    grid_shape: tuple[int, int] | None = None
    problem: str = ""


def error_report(predicted, exact, grid_shape=None, problem: str = "") -> ErrorReport:
    """eps_r = ||u^ - u||_2 / ||u||_2, eps_inf = max|u^ - u|, eps_a = sum|u^ - u| / n."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    exact = np.asarray(exact, dtype=np.float64).ravel()
    if predicted.size == 0 or predicted.size != exact.size:
        raise ValueError("predicted and exact must have equal positive length")
    norm = float(np.linalg.norm(exact))
    if norm == 0.0:
        raise ValueError("relative error undefined for zero exact norm")
    diff = predicted - exact
    return ErrorReport(
        eps_r=float(np.linalg.norm(diff) / norm),
        eps_inf=float(np.max(np.abs(diff))),
        eps_a=float(np.sum(np.abs(diff)) / diff.size),
        grid_shape=grid_shape,
        problem=problem,
    )


@dataclass
class GridEval:
    x: np.ndarray
    t: np.ndarray
    predicted: np.ndarray
    exact: np.ndarray
    report: ErrorReport


def evaluate_on_grid(net, problem, nx: int = 100, nt: int = 100) -> GridEval:
    """Uniform tensor grid over the domain, floored at the oracle's minimum time."""
    if nx < 2 or nt < 2:
        raise ValueError("grid needs nx, nt >= 2")
    x_lo, x_hi, t_lo, t_hi = problem.domain
    xs = np.linspace(x_lo, x_hi, nx)
    ts = np.linspace(max(t_lo, problem.t_eval_min), t_hi, nt)
    xg, tg = np.meshgrid(xs, ts, indexing="ij")
    xf, tf = xg.ravel(), tg.ravel()
    predicted = np.asarray(net.predict(xf, tf))
    exact = np.asarray(problem.exact(xf, tf))
    report = error_report(predicted, exact, grid_shape=(nx, nt), problem=problem.pid)
    return GridEval(x=xf, t=tf, predicted=predicted, exact=exact, report=report)


def write_metrics_csv(path, report: ErrorReport, run_info: dict | None = None) -> None:
    info = dict(run_info or {})
    fields = list(info) + ["eps_r", "eps_inf", "eps_a", "nx", "nt"]
    nx, nt = report.grid_shape if report.grid_shape else ("", "")
    row = {**{k: info[k] for k in info},
           "eps_r": repr(float(report.eps_r)), "eps_inf": repr(float(report.eps_inf)),
           "eps_a": repr(float(report.eps_a)), "nx": nx, "nt": nt}
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields)
        wr.writeheader()
        wr.writerow(row)


def write_surface_csv(path, grid: GridEval) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "t", "u_pred", "u_exact", "abs_err"])
        for x, t, p, e in zip(grid.x, grid.t, grid.predicted, grid.exact):
            wr.writerow([repr(float(x)), repr(float(t)), repr(float(p)),
                         repr(float(e)), repr(float(abs(p - e)))])
