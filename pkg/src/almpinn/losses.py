"""Loss functionals: weighted-sum training loss, augmented-Lagrangian losses and
noise-distribution data terms.

Every data term is the per-point negative log-likelihood of its noise model
(up to an additive constant): squared error over 2 sigma^2 for normal noise,
absolute error over gamma for Laplace noise, and the skewed log form for
log-normal noise.  With sigma^2 = 1/2 and gamma = 1 the first two reduce to
plain mean squared / mean absolute residuals.

The formulas are written over generic numerics, so they drive both training
tapes (Var fields) and plain-array oracles in tests.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .autodiff import Tape, Var, vabs, vclamp_min, vln, vmean, vsquare

__all__ = [
    "LOGNORMAL_RESIDUAL_FLOOR",
    "DATA_TERM_KINDS",
    "DegenerateLossWarning",
    "LossBreakdown",
    "AlmState",
    "data_term_gaussian",
    "data_term_laplace",
    "data_term_lognormal",
    "data_term",
    "pinns_loss",
    "alm_forward_loss",
    "pinns_inverse_loss",
    "alm_inverse_loss",
]

LOGNORMAL_RESIDUAL_FLOOR = 1e-12
DATA_TERM_KINDS = ("gaussian", "laplace", "lognormal")


class DegenerateLossWarning(UserWarning):
    """Every residual hit the log-normal floor; the data term carries no signal."""


@dataclass
class LossBreakdown:
    """Scalar components of one loss evaluation.

    ``penalty`` is the sum of squared constraint values entering the mu/2
    penalty terms (boundary/initial for forward runs, governing/data for
    inverse runs); it also gates the multiplier update.
    """

    total: float
    gover_loss: float
    bc_ls: float
    ic_ls: float
    data_ls: float | None = None
    penalty: float = 0.0


@dataclass
class AlmState:
    """Multipliers and penalty coefficients of the augmented Lagrangian.

    For forward runs ``lam`` pairs with (boundary, initial) losses and ``mu``
    is one shared coefficient kept in both slots; for inverse runs ``lam``
    pairs with (governing, data) losses and the two ``mu`` entries evolve
    independently from their initial values.
    """

    lam: np.ndarray
    mu: np.ndarray
    mu_max: float = 1e4
    penalty_tol: float = 1e-4
    grad_tol: float = 1e-8
    mode: str = "forward"
    # None: mu is rescaled by the current penalty value (the iterative
    # procedure as written).  A number: classic fixed growth factor instead;
    # the written rule shrinks mu whenever penalty < 1, which freezes the
    # multipliers and cannot drive constraints to zero on its own.
    mu_growth: float | None = None

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64).copy()
        self.mu = np.asarray(self.mu, dtype=np.float64).copy()
        if self.mu.ndim == 0:
            self.mu = np.array([float(self.mu), float(self.mu)])
        if np.any(self.mu <= 0) or np.any(self.mu > self.mu_max):
            raise ValueError("penalty coefficients must satisfy 0 < mu <= mu_max")
        if not np.all(np.isfinite(self.lam)):
            raise ValueError("multipliers must be finite")

    def copy(self) -> "AlmState":
        return replace(self, lam=self.lam.copy(), mu=self.mu.copy())


# -- data terms ----------------------------------------------------------------


def data_term_gaussian(pred, obs, sigma: float):
    """mean((obs - pred)^2) / (2 sigma^2); the 2-norm form at sigma^2 = 1/2."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = obs - pred if isinstance(pred, Var) else np.asarray(obs) - pred
    return vmean(vsquare(r)) * (1.0 / (2.0 * sigma * sigma))


def data_term_laplace(pred, obs, gamma: float):
    """mean(|obs - pred|) / gamma; the 1-norm form at gamma = 1."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    r = obs - pred if isinstance(pred, Var) else np.asarray(obs) - pred
    return vmean(vabs(r)) * (1.0 / gamma)


def data_term_lognormal(pred, obs, sigma: float):
    """mean(ln(sqrt(2 pi) sigma r) + (ln r)^2 / (2 sigma^2)) with r = obs - pred.

    The form is the exact negative log-likelihood of log-normal errors and is
    undefined for r <= 0; such residuals are clamped to a small floor and the
    clamp zeroes their gradient.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = obs - pred if isinstance(pred, Var) else np.asarray(obs) - pred
    raw = r.value if isinstance(r, Var) else np.asarray(r)
    if np.all(raw <= LOGNORMAL_RESIDUAL_FLOOR):
        warnings.warn("all residuals clamped in log-normal data term",
                      DegenerateLossWarning, stacklevel=2)
    lnr = vln(vclamp_min(r, LOGNORMAL_RESIDUAL_FLOOR))
    return (vmean(lnr + vsquare(lnr) * (1.0 / (2.0 * sigma * sigma)))
            + math.log(math.sqrt(2.0 * math.pi) * sigma))


def data_term(kind: str, pred, obs, dist_param: float):
    if kind == "gaussian":
        return data_term_gaussian(pred, obs, dist_param)
    if kind == "laplace":
        return data_term_laplace(pred, obs, dist_param)
    if kind == "lognormal":
        return data_term_lognormal(pred, obs, dist_param)
    raise ValueError(f"unknown data term kind {kind!r}")


# -- composite losses ------------------------------------------------------------


def _as_float(x) -> float:
    return float(x.value) if isinstance(x, Var) else float(x)


def _components(net, problem, data, tape: Tape | None, include_v: bool,
                dropout_rng=None, need_interior=True, need_boundary=True,
                need_initial=True):
    """Governing/boundary/initial mean-square components on a fresh tape."""
    if need_interior and len(data.interior) == 0:
        raise ValueError("interior collocation set is empty")
    if need_boundary and len(data.boundary) == 0:
        raise ValueError("boundary set is empty")
    if need_initial and len(data.initial) == 0:
        raise ValueError("initial set is empty")
    layer_vars, v_var = net.register_params(tape, include_v)
    v = (v_var[0], v_var[1]) if v_var is not None else tuple(problem.true_v)

    lf = lb = li = None
    if need_interior:
        jet = net.forward_jet(data.interior[:, 0], data.interior[:, 1], tape,
                              layer_vars, dropout_rng)
        lf = vmean(vsquare(problem.residual(jet, v)))
    if need_boundary:
        ub = net.forward_values(data.boundary[:, 0], data.boundary[:, 1], tape,
                                layer_vars, dropout_rng)
        lb = vmean(vsquare(ub - data.boundary[:, 2]))
    if need_initial:
        t0 = np.zeros(len(data.initial)) + problem.domain[2]
        ui = net.forward_values(data.initial[:, 0], t0, tape, layer_vars, dropout_rng)
        li = vmean(vsquare(ui - data.initial[:, 1]))
    return lf, lb, li, layer_vars, v_var


def pinns_loss(net, problem, data, lam_f: float = 1.0, lam_b: float = 1.0,
               lam_i: float = 1.0, tape: Tape | None = None, dropout_rng=None):
    """Weighted-sum loss lam_f L_F + lam_b L_B + lam_i L_I (no multipliers)."""
    if tape is None:
        tape = Tape()
    if min(lam_f, lam_b, lam_i) < 0:
        raise ValueError("weights must be >= 0")
    lf, lb, li, _, _ = _components(net, problem, data, tape, include_v=False,
                                   dropout_rng=dropout_rng,
                                   need_interior=lam_f > 0 or len(data.interior) > 0,
                                   need_boundary=lam_b > 0 or len(data.boundary) > 0,
                                   need_initial=lam_i > 0 or len(data.initial) > 0)
    zero = 0.0
    total = ((lf * lam_f if lf is not None else zero)
             + (lb * lam_b if lb is not None else zero)
             + (li * lam_i if li is not None else zero))
    bd = LossBreakdown(total=_as_float(total),
                       gover_loss=_as_float(lf) if lf is not None else 0.0,
                       bc_ls=_as_float(lb) if lb is not None else 0.0,
                       ic_ls=_as_float(li) if li is not None else 0.0,
                       penalty=0.0)
    return bd, total


def alm_forward_loss(net, problem, data, state: AlmState, tape: Tape | None = None,
                     dropout_rng=None):
    """L_F + lam.(L_B, L_I) + (mu/2)(L_B^2 + L_I^2)."""
    if tape is None:
        tape = Tape()
    lf, lb, li, _, _ = _components(net, problem, data, tape, include_v=False,
                                   dropout_rng=dropout_rng)
    total = (lf + lb * float(state.lam[0]) + li * float(state.lam[1])
             + vsquare(lb) * (0.5 * float(state.mu[0]))
             + vsquare(li) * (0.5 * float(state.mu[1])))
    bc, ic = _as_float(lb), _as_float(li)
    bd = LossBreakdown(total=_as_float(total), gover_loss=_as_float(lf),
                       bc_ls=bc, ic_ls=ic, penalty=bc * bc + ic * ic)
    return bd, total


def _additional_pred(net, data, tape, layer_vars, dropout_rng):
    if data.additional is None or len(data.additional) == 0:
        raise ValueError("inverse losses require a non-empty additional dataset")
    return net.forward_values(data.additional[:, 0], data.additional[:, 1], tape,
                              layer_vars, dropout_rng)


def alm_inverse_loss(net, v, problem, data, state: AlmState, kind: str,
                     dist_param: float, tape: Tape | None = None, dropout_rng=None):
    """L_B + L_I + lam.(L_F, L_E) + (mu_F/2) L_F^2 + (mu_E/2) L_E^2.

    ``v`` is the trainable coefficient vector; it is registered on the tape
    after the network parameters, matching the flat gradient layout.
    """
    if tape is None:
        tape = Tape()
    if kind not in DATA_TERM_KINDS:
        raise ValueError(f"unknown data term kind {kind!r}")
    net = _with_v(net, v)
    lf, lb, li, layer_vars, _ = _components(net, problem, data, tape, include_v=True,
                                            dropout_rng=dropout_rng)
    pred = _additional_pred(net, data, tape, layer_vars, dropout_rng)
    le = data_term(kind, pred, data.additional[:, 2], dist_param)
    total = (lb + li + lf * float(state.lam[0]) + le * float(state.lam[1])
             + vsquare(lf) * (0.5 * float(state.mu[0]))
             + vsquare(le) * (0.5 * float(state.mu[1])))
    gv, dv = _as_float(lf), _as_float(le)
    bd = LossBreakdown(total=_as_float(total), gover_loss=gv,
                       bc_ls=_as_float(lb), ic_ls=_as_float(li),
                       data_ls=dv, penalty=gv * gv + dv * dv)
    return bd, total


def pinns_inverse_loss(net, v, problem, data, kind: str, dist_param: float,
                       lam_f: float = 1.0, lam_e: float = 1.0,
                       tape: Tape | None = None, dropout_rng=None):
    """Fixed-weight inverse objective L_B + L_I + lam_f L_F + lam_e L_E."""
    if tape is None:
        tape = Tape()
    if kind not in DATA_TERM_KINDS:
        raise ValueError(f"unknown data term kind {kind!r}")
    net = _with_v(net, v)
    lf, lb, li, layer_vars, _ = _components(net, problem, data, tape, include_v=True,
                                            dropout_rng=dropout_rng)
    pred = _additional_pred(net, data, tape, layer_vars, dropout_rng)
    le = data_term(kind, pred, data.additional[:, 2], dist_param)
    total = lb + li + lf * lam_f + le * lam_e
    bd = LossBreakdown(total=_as_float(total), gover_loss=_as_float(lf),
                       bc_ls=_as_float(lb), ic_ls=_as_float(li),
                       data_ls=_as_float(le), penalty=0.0)
    return bd, total


def _with_v(net, v):
    if v is None:
        raise ValueError("inverse losses require coefficient values v")
    if net.v is not v:
        net.v = np.asarray(v, dtype=np.float64)
    return net
