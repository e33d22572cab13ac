"""Outer training loops: full-batch Adam steps with multiplier/penalty updates,
best-model tracking keyed on the governing-equation loss, and run artifacts.

One iteration = one full-batch gradient step.  After each step the multiplier
update fires only while sqrt(penalty) exceeds its tolerance: the penalty
coefficients move by mu <- min(penalty * mu, mu_max) and the multipliers by
lam <- lam + mu * (component losses).  Runs stop early once the gradient norm
falls below its tolerance or when the loss diverges.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import backward
from .config import RunConfig
from .losses import (AlmState, LossBreakdown, alm_forward_loss, alm_inverse_loss,
                     pinns_inverse_loss, pinns_loss)
from .metrics import evaluate_on_grid, write_metrics_csv, write_surface_csv
from .network import (Network, check_architecture, extend_network, init_network,
                      load_checkpoint, save_checkpoint)
from .optim import (AdamState, LrSchedule, NonFiniteGradientError, ParamBounds,
                    adam_step, apply_poi_weight, clip_params, lr_at)
from .problems import get_problem
from .sampling import (Dataset, NoiseSpec, STREAM_EPOCH_STRIDE, add_noise,
                       sample_additional, sample_sets)

__all__ = ["RunResult", "DivergenceError", "HISTORY_COLUMNS", "update_multipliers",
           "train_forward", "train_inverse", "write_run_artifacts", "toy_alm_loop"]

HISTORY_COLUMNS = ("step", "total", "gover", "bc", "ic", "data", "penalty",
                   "mu_1", "mu_2", "lambda_1", "lambda_2", "lr")


class DivergenceError(RuntimeError):
    """Loss exceeded the divergence threshold or went non-finite."""

    def __init__(self, message: str, step: int, history: list):
        super().__init__(message)
        self.step = step
        self.history = history


@dataclass
class RunResult:
    best_net: Network
    best_loss: float
    best_gover_loss: float
    best_time: float
    best_step: int
    history: list[tuple]
    iterations_run: int
    terminated_early: bool = False
    v_best: np.ndarray | None = None
    v_final: np.ndarray | None = None
    v_errors: np.ndarray | None = None


def update_multipliers(state: AlmState, bd: LossBreakdown) -> AlmState:
    """Dual update, applied only while sqrt(penalty) > tolerance.

    The refreshed mu feeds the multiplier increments, matching the statement
    order of the iterative procedure.  Forward runs pair the multipliers with
    (boundary, initial) losses, inverse runs with (governing, data) losses.
    """
    if math.sqrt(bd.penalty) <= state.penalty_tol:
        return state
    new = state.copy()
    factor = bd.penalty if state.mu_growth is None else state.mu_growth
    # The penalty-scaled rule shrinks mu whenever penalty < 1; floor it at the
    # smallest positive normal so repeated shrinks cannot underflow to zero.
    new.mu = np.minimum(np.maximum(factor * state.mu, np.finfo(np.float64).tiny),
                        state.mu_max)
    if state.mode == "forward":
        pair = np.array([bd.bc_ls, bd.ic_ls])
    else:
        if bd.data_ls is None:
            raise ValueError("inverse multiplier update needs a data loss")
        pair = np.array([bd.gover_loss, bd.data_ls])
    new.lam = state.lam + new.mu * pair
    return new


def _history_row(step: int, bd: LossBreakdown, state: AlmState | None, lr: float):
    mu = state.mu if state is not None else (0.0, 0.0)
    lam = state.lam if state is not None else (0.0, 0.0)
    return (step, bd.total, bd.gover_loss, bd.bc_ls, bd.ic_ls,
            0.0 if bd.data_ls is None else bd.data_ls, bd.penalty,
            float(mu[0]), float(mu[1]), float(lam[0]), float(lam[1]), lr)


def _build_dataset(cfg: RunConfig, problem, stream_offset: int = 0) -> Dataset:
    data = sample_sets(problem, cfg.n_interior, cfg.n_boundary, cfg.n_initial,
                       cfg.seed, stream_offset, strategy=cfg.sampling_strategy)
    if cfg.mode == "inverse":
        slices = cfg.t_slices
        if slices is None:
            x_lo, x_hi, t_lo, t_hi = problem.domain
            slices = tuple(t_lo + (j + 1) * (t_hi - t_lo) / (cfg.t_num + 1)
                           for j in range(cfg.t_num))
        points = sample_additional(problem, slices, cfg.x_num, cfg.seed)
        spec = NoiseSpec(cfg.noise_distribution, cfg.noise_level, cfg.seed)
        noisy = add_noise(points[:, 2], spec)
        data.additional = np.column_stack([points[:, 0], points[:, 1], noisy])
        data.noise_meta = spec
    return data


def _initial_v(cfg: RunConfig, problem) -> np.ndarray:
    lo, hi = cfg.v_bounds
    v_init = cfg.v_init
    if v_init is True:  # YAML reads a bare `true` as a boolean
        v_init = "true"
    if isinstance(v_init, str):
        if v_init == "midpoint":
            v0 = np.array([(lo + hi) / 2.0, (lo + hi) / 2.0])
        elif v_init == "true":
            v0 = np.asarray(problem.true_v, dtype=np.float64)
        else:
            raise ValueError(f"unknown v_init {v_init!r}")
    else:
        v0 = np.asarray(v_init, dtype=np.float64) * np.ones(2)
    return v0.astype(np.float64)


def _run(cfg: RunConfig, problem, net: Network, make_loss, state: AlmState | None,
         bounds: ParamBounds | None) -> RunResult:
    inverse = cfg.mode == "inverse"
    n_theta = net.theta.size
    n_total = n_theta + (net.v.size if inverse else 0)
    adam = AdamState.init(n_total)
    schedule = LrSchedule(tuple(cfg.lr_boundaries), tuple(cfg.lr_values))
    poi_idx = list(range(n_theta, n_total))
    data = _build_dataset(cfg, problem)

    history: list[tuple] = []
    best_theta = net.theta.copy()
    best_v = net.v.copy() if inverse else None
    best_gover = math.inf
    best_loss = math.inf
    best_time = 0.0
    best_step = 0
    terminated = False
    t0 = time.perf_counter()
    total_steps = cfg.epochs * cfg.batches
    step = 0

    if total_steps == 0:
        bd, _ = make_loss(net, data, state)
        history.append(_history_row(0, bd, state, lr_at(schedule, 0)))
        best_loss, best_gover = bd.total, bd.gover_loss
        return _result(cfg, net, best_theta, best_v, best_loss, best_gover,
                       0.0, 0, history, 0, False, problem)

    for epoch in range(cfg.epochs):
        if cfg.resample_each_epoch and epoch > 0:
            data = _build_dataset(cfg, problem, stream_offset=STREAM_EPOCH_STRIDE * epoch)
        for _ in range(cfg.batches):
            lr = lr_at(schedule, step)
            bd, total = make_loss(net, data, state)
            if not math.isfinite(bd.total) or bd.total > cfg.divergence_threshold:
                raise DivergenceError(f"loss diverged at step {step}: {bd.total}",
                                      step, history)
            grad = backward(total.tape, total)
            gnorm = float(np.linalg.norm(grad))

            if inverse:
                grad = apply_poi_weight(grad, poi_idx, cfg.poi_weight)
                lr_vec = np.full(n_total, lr * cfg.theta_lr_scale)
                lr_vec[n_theta:] = lr
                flat = np.concatenate([net.theta, net.v])
                try:
                    adam, flat = adam_step(adam, flat, grad, lr_vec)
                except NonFiniteGradientError as exc:
                    raise DivergenceError(str(exc), step, history) from exc
                net.theta[:] = flat[:n_theta]
                net.v[:] = clip_params(flat[n_theta:], bounds)
            else:
                try:
                    adam, theta = adam_step(adam, net.theta, grad, lr)
                except NonFiniteGradientError as exc:
                    raise DivergenceError(str(exc), step, history) from exc
                net.theta[:] = theta

            fired = False
            if state is not None:
                new_state = update_multipliers(state, bd)
                fired = new_state is not state
                state = new_state
            if fired or step % cfg.record_every == 0:
                history.append(_history_row(step, bd, state, lr))

            if bd.gover_loss < best_gover:
                best_gover = bd.gover_loss
                best_loss = bd.total
                best_theta = net.theta.copy()
                best_v = net.v.copy() if inverse else None
                best_time = time.perf_counter() - t0
                best_step = step
            step += 1
            if gnorm <= (state.grad_tol if state is not None else cfg.grad_tol):
                terminated = True
                break
        if terminated:
            break

    return _result(cfg, net, best_theta, best_v, best_loss, best_gover,
                   best_time, best_step, history, step, terminated, problem)


def _result(cfg, net, best_theta, best_v, best_loss, best_gover, best_time,
            best_step, history, steps_run, terminated, problem) -> RunResult:
    best_net = net.copy()
    best_net.theta[:] = best_theta
    if best_v is not None:
        best_net.v = best_v.copy()
    best_net.iteration = best_step
    best_net.history_tail = [row[1] for row in history[-10:]]
    v_errors = None
    if best_v is not None:
        truth = np.asarray(problem.true_v, dtype=np.float64)
        v_errors = np.abs(best_v - truth) / np.abs(truth)
    return RunResult(best_net=best_net, best_loss=best_loss,
                     best_gover_loss=best_gover, best_time=best_time,
                     best_step=best_step, history=history,
                     iterations_run=steps_run, terminated_early=terminated,
                     v_best=best_v,
                     v_final=net.v.copy() if net.v is not None else None,
                     v_errors=v_errors)


def _get_problem(cfg: RunConfig):
    return get_problem(cfg.problem, nu=cfg.nu, series_terms=cfg.series_terms,
                       quad_points=cfg.quad_points, true_v=cfg.true_v)


def train_forward(cfg: RunConfig) -> RunResult:
    """Forward solve; ``method`` picks the augmented-Lagrangian or fixed-weight loss."""
    cfg.validate()
    if cfg.mode != "forward":
        raise ValueError("train_forward requires mode=forward")
    problem = _get_problem(cfg)
    net = init_network(cfg.layer_sizes(), cfg.seed, problem.domain,
                       problem=cfg.problem, dropout_rate=cfg.dropout)
    if cfg.method == "alm":
        state = AlmState(lam=np.array(cfg.lam0), mu=np.array(cfg.mu0),
                         mu_max=cfg.mu_max, penalty_tol=cfg.penalty_tol,
                         grad_tol=cfg.grad_tol, mode="forward",
                         mu_growth=cfg.mu_growth)

        def make_loss(net, data, st):
            return alm_forward_loss(net, problem, data, st)
    else:
        state = None
        lf, lb, li = cfg.pinns_weights

        def make_loss(net, data, st):
            return pinns_loss(net, problem, data, lf, lb, li)

    return _run(cfg, problem, net, make_loss, state, None)


def train_inverse(cfg: RunConfig, pretrained: Network | str | Path) -> RunResult:
    """Coefficient inversion from a pretrained forward model.

    Loads the checkpoint, optionally appends identity-initialized layers,
    initializes the coefficients inside their bounds and trains (theta, v)
    jointly; v is clipped to its bounds after every step.
    """
    cfg.validate()
    if cfg.mode != "inverse":
        raise ValueError("train_inverse requires mode=inverse")
    problem = _get_problem(cfg)
    net = pretrained if isinstance(pretrained, Network) else load_checkpoint(pretrained)
    check_architecture(net, cfg.layer_sizes())
    net = net.copy()
    if cfg.extra_hidden:
        net = extend_network(net, cfg.extra_hidden)
    net.problem = cfg.problem
    net.dropout_rate = cfg.dropout
    net.v = _initial_v(cfg, problem)
    bounds = ParamBounds(lo=np.full(2, cfg.v_bounds[0]),
                         hi=np.full(2, cfg.v_bounds[1]),
                         poi_weight=cfg.poi_weight)
    net.v = clip_params(net.v, bounds)
    kind, param = cfg.data_term, cfg.dist_param()
    if cfg.method == "alm":
        state = AlmState(lam=np.array(cfg.lam0), mu=np.array(cfg.mu0),
                         mu_max=cfg.mu_max, penalty_tol=cfg.penalty_tol,
                         grad_tol=cfg.grad_tol, mode="inverse",
                         mu_growth=cfg.mu_growth)

        def make_loss(net, data, st):
            return alm_inverse_loss(net, net.v, problem, data, st, kind, param)
    else:
        state = None
        lam_f, lam_e = cfg.pinns_inverse_weights

        def make_loss(net, data, st):
            return pinns_inverse_loss(net, net.v, problem, data, kind, param,
                                      lam_f, lam_e)

    return _run(cfg, problem, net, make_loss, state, bounds)


def toy_alm_loop(outer_iters: int = 500, lam0: float = 1.0, mu0: float = 1.0,
                 mu_growth: float = 2.0, mu_max: float = 1e18,
                 penalty_tol: float = 1e-16) -> np.ndarray:
    """Equality-constrained toy run through the same multiplier machinery.

    Minimizes (t1-1)^2 + (t2-2)^2 subject to c(t) = (t1+t2-1)^2 = 0; the
    analytic KKT point is (0, 1).  Each outer iteration solves the primal
    subproblem argmin f + lam c + (mu/2) c^2 exactly (it reduces to one
    monotone scalar cubic in h = t1+t2-1) and then applies
    ``update_multipliers`` with the constraint loss in the boundary slot.

    The penalty-scaled mu rule cannot converge here: once the constraint
    drops below one it shrinks mu geometrically, freezing the multiplier at
    a finite value while the squared constraint needs lam to keep growing.
    The toy therefore runs the classic fixed-growth-factor policy.
    """
    state = AlmState(lam=np.array([lam0, 0.0]), mu=np.array([mu0, mu0]),
                     mu_max=mu_max, penalty_tol=penalty_tol, mode="forward",
                     mu_growth=mu_growth)
    theta = np.array([0.0, 0.0])
    for _ in range(outer_iters):
        lam, mu = float(state.lam[0]), float(state.mu[0])
        # Stationarity gives theta = (1,2) - (lam + mu h^2) h (1,1) and the
        # scalar root condition G(h) = h (1 + 2 lam) + 2 mu h^3 - 2 = 0.
        h = 2.0 / (1.0 + 2.0 * lam)
        for _ in range(200):
            g = h * (1.0 + 2.0 * lam) + 2.0 * mu * h ** 3 - 2.0
            dg = 1.0 + 2.0 * lam + 6.0 * mu * h * h
            step = g / dg
            h -= step
            if abs(step) < 1e-18 * max(1.0, abs(h)):
                break
        scale = lam + mu * h * h
        theta = np.array([1.0 - scale * h, 2.0 - scale * h])
        c = h * h
        bd = LossBreakdown(total=0.0, gover_loss=0.0, bc_ls=c, ic_ls=0.0,
                           penalty=c * c)
        state = update_multipliers(state, bd)
    return theta


# -- artifacts -----------------------------------------------------------------


def write_run_artifacts(cfg: RunConfig, result: RunResult, out_dir) -> dict:
    """Write run.json, history.csv, best.ckpt, metrics.csv and surface.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = _get_problem(cfg)

    save_checkpoint(result.best_net, out / "best.ckpt")

    with open(out / "history.csv", "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in result.history:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")

    grid = evaluate_on_grid(result.best_net, problem, cfg.eval_nx, cfg.eval_nt)
    run_info = {"problem": cfg.problem, "method": cfg.method, "mode": cfg.mode,
                "seed": cfg.seed}
    write_metrics_csv(out / "metrics.csv", grid.report, run_info)
    write_surface_csv(out / "surface.csv", grid)

    metrics = {
        "best_loss": result.best_loss,
        "best_gover_loss": result.best_gover_loss,
        "best_step": result.best_step,
        "iterations_run": result.iterations_run,
        "terminated_early": result.terminated_early,
        "eps_r": grid.report.eps_r,
        "eps_inf": grid.report.eps_inf,
        "eps_a": grid.report.eps_a,
    }
    if result.v_best is not None:
        metrics.update({
            "v_1": float(result.v_best[0]),
            "v_2": float(result.v_best[1]),
            "v_final_1": float(result.v_final[0]),
            "v_final_2": float(result.v_final[1]),
            "error_v_1": float(result.v_errors[0]),
            "error_v_2": float(result.v_errors[1]),
        })
    payload = {
        "config": cfg.to_mapping(),
        "metrics": metrics,
        "timing": {"best_time_s": result.best_time},
    }
    with open(out / "run.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return metrics
