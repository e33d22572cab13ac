"""The two benchmark problems: residual operators, boundary/initial data, exact oracles.

``nl1d``    u_t = v1 (u_x)^2 + v2 u u_xx + u - u^2 on [0,1] x [0,4], true
            coefficients (2, 2); closed-form solution u = 1 + exp((x - t)/2)
            (equivalently 1 / (1/2 + tanh((t - x)/4)/2)).
``burgers`` u_t + v1 u u_x = v2 u_xx on [0,1] x [0,1] with u(x,0) = sin(pi x)
            and zero boundaries, true coefficients (1, nu); exact solution via
            the Cole-Hopf quotient of Fourier series whose coefficients are
            integrals of exp(-(2 pi nu)^-1 (1 - cos(pi x))).

Residual functions are written over generic numerics, so they accept jets of
tape Vars (training) and jets of plain floats/arrays (oracles) alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .autodiff import Jet2, vsquare

__all__ = [
    "ProblemSpec",
    "BurgersSeries",
    "SeriesSingularityError",
    "residual_nl1d",
    "residual_burgers",
    "exact_nl1d",
    "exact_nl1d_jet",
    "burgers_coefficients",
    "exact_burgers",
    "exact_burgers_jet",
    "get_problem",
    "PROBLEM_IDS",
]

PROBLEM_IDS = ("nl1d", "burgers")

DEFAULT_NU = 0.1
DEFAULT_SERIES_TERMS = 200
DEFAULT_QUAD_POINTS = 1024
BURGERS_T_EVAL_MIN = 1e-3
_DENOM_FLOOR = 1e-14


class SeriesSingularityError(ArithmeticError):
    """Series denominator collapsed; outside the oracle's valid region."""


@dataclass(frozen=True)
class ProblemSpec:
    pid: str
    domain: tuple[float, float, float, float]
    true_v: tuple[float, float]
    residual: Callable
    boundary_value: Callable
    initial_value: Callable
    exact: Callable
    exact_jet: Callable
    t_eval_min: float = 0.0
    options: dict = field(default_factory=dict)


# -- 1+1 dimensional nonlinear equation ---------------------------------------


def residual_nl1d(u: Jet2, v: Sequence) -> object:
    """u_t - v1 (u_x)^2 - v2 u u_xx - u + u^2."""
    return u.gt - v[0] * vsquare(u.gx) - v[1] * (u.v * u.hxx) - u.v + vsquare(u.v)


def exact_nl1d(x, t):
    """Closed-form solution, a traveling wave in (t - x)."""
    return 1.0 / (0.5 + 0.5 * np.tanh((np.asarray(t, dtype=np.float64) - x) / 4.0))


def exact_nl1d_jet(x, t) -> Jet2:
    """Analytic jet of the closed form: u = 1 + E with E = exp((x - t)/2)."""
    e = np.exp((np.asarray(x, dtype=np.float64) - t) / 2.0)
    return Jet2(1.0 + e, e / 2.0, -e / 2.0, e / 4.0, -e / 4.0, e / 4.0)


def _nl1d() -> ProblemSpec:
    return ProblemSpec(
        pid="nl1d",
        domain=(0.0, 1.0, 0.0, 4.0),
        true_v=(2.0, 2.0),
        residual=residual_nl1d,
        boundary_value=lambda x, t: exact_nl1d(x, t),
        initial_value=lambda x: exact_nl1d(x, 0.0),
        exact=exact_nl1d,
        exact_jet=exact_nl1d_jet,
    )


# -- viscous Burgers -----------------------------------------------------------


def residual_burgers(u: Jet2, v: Sequence) -> object:
    """u_t + v1 u u_x - v2 u_xx."""
    return u.gt + v[0] * (u.v * u.gx) - v[1] * u.hxx


@dataclass(frozen=True)
class BurgersSeries:
    """Truncated Fourier data for the Cole-Hopf solution."""

    nu: float
    a0: float
    an: np.ndarray  # coefficients for n = 1..N

    @property
    def n_terms(self) -> int:
        return self.an.size


def burgers_coefficients(nu: float, n_terms: int = DEFAULT_SERIES_TERMS,
                         quad_points: int = DEFAULT_QUAD_POINTS) -> BurgersSeries:
    """Fourier coefficients by composite Gauss-Legendre quadrature on [0, 1]."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if n_terms < 1:
        raise ValueError("need at least one series term")
    panel_nodes = 32
    n_panels = max(1, int(round(quad_points / panel_nodes)))
    xg, wg = leggauss(panel_nodes)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    c = 1.0 / (2.0 * np.pi * nu)
    f = np.exp(-c * (1.0 - np.cos(np.pi * nodes)))
    a0 = float(weights @ f)
    n = np.arange(1, n_terms + 1)
    cosines = np.cos(np.pi * np.outer(n, nodes))
    an = 2.0 * cosines @ (weights * f)
    return BurgersSeries(nu=float(nu), a0=a0, an=an)


def _series_parts(series: BurgersSeries, x, t):
    """Per-term building blocks shared by value and jet evaluation."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    n = np.arange(1, series.n_terms + 1)
    k = np.pi * n                      # spatial frequency
    kap = series.nu * k * k            # temporal decay rate
    decay = np.exp(-np.outer(t, kap)) * series.an   # (m, N) includes A_n
    s = np.sin(np.outer(x, k))
    cco = np.cos(np.outer(x, k))
    return x, t, n, k, kap, decay, s, cco


def exact_burgers(series: BurgersSeries, x, t):
    """Cole-Hopf quotient: 2 pi nu * sum(e n A_n sin) / (A0 + sum(e A_n cos))."""
    scalar_in = np.ndim(x) == 0 and np.ndim(t) == 0
    x, t, n, k, kap, decay, s, cco = _series_parts(series, x, t)
    num = np.sum(decay * n * s, axis=1)
    den = series.a0 + np.sum(decay * cco, axis=1)
    if np.any(np.abs(den) < _DENOM_FLOOR):
        raise SeriesSingularityError("series denominator below 1e-14")
    u = 2.0 * np.pi * series.nu * num / den
    return float(u[0]) if scalar_in else u


def exact_burgers_jet(series: BurgersSeries, x, t) -> Jet2:
    """Jet of the series by term-wise differentiation (no finite differences)."""
    scalar_in = np.ndim(x) == 0 and np.ndim(t) == 0
    x, t, n, k, kap, decay, s, cco = _series_parts(series, x, t)

    def tot(arr):
        return np.sum(arr, axis=1)

    num = tot(decay * n * s)
    num_x = tot(decay * n * k * cco)
    num_xx = -tot(decay * n * k * k * s)
    num_t = -tot(decay * kap * n * s)
    num_xt = -tot(decay * kap * n * k * cco)
    num_tt = tot(decay * kap * kap * n * s)
    den = series.a0 + tot(decay * cco)
    den_x = -tot(decay * k * s)
    den_xx = -tot(decay * k * k * cco)
    den_t = -tot(decay * kap * cco)
    den_xt = tot(decay * kap * k * s)
    den_tt = tot(decay * kap * kap * cco)
    if np.any(np.abs(den) < _DENOM_FLOOR):
        raise SeriesSingularityError("series denominator below 1e-14")

    r = num / den
    r_x = (num_x - r * den_x) / den
    r_t = (num_t - r * den_t) / den
    r_xx = (num_xx - 2.0 * r_x * den_x - r * den_xx) / den
    r_xt = (num_xt - r_x * den_t - r_t * den_x - r * den_xt) / den
    r_tt = (num_tt - 2.0 * r_t * den_t - r * den_tt) / den
    c = 2.0 * np.pi * series.nu
    fields = tuple(c * f for f in (r, r_x, r_t, r_xx, r_xt, r_tt))
    if scalar_in:
        fields = tuple(float(f[0]) for f in fields)
    return Jet2(*fields)


def _burgers(nu: float, n_terms: int, quad_points: int) -> ProblemSpec:
    series = burgers_coefficients(nu, n_terms, quad_points)
    return ProblemSpec(
        pid="burgers",
        domain=(0.0, 1.0, 0.0, 1.0),
        true_v=(1.0, nu),
        residual=residual_burgers,
        boundary_value=lambda x, t: np.zeros_like(np.asarray(x, dtype=np.float64)),
        initial_value=lambda x: np.sin(np.pi * np.asarray(x, dtype=np.float64)),
        exact=lambda x, t: exact_burgers(series, x, t),
        exact_jet=lambda x, t: exact_burgers_jet(series, x, t),
        t_eval_min=BURGERS_T_EVAL_MIN,
        options={"nu": nu, "series_terms": n_terms, "quad_points": quad_points,
                 "series": series},
    )


def get_problem(pid: str, nu: float = DEFAULT_NU,
                series_terms: int = DEFAULT_SERIES_TERMS,
                quad_points: int = DEFAULT_QUAD_POINTS,
                true_v: Sequence[float] | None = None) -> ProblemSpec:
    """Problem registry keyed by id; true coefficients are configuration."""
    if pid == "nl1d":
        spec = _nl1d()
    elif pid == "burgers":
        spec = _burgers(nu, series_terms, quad_points)
    else:
        raise KeyError(f"unknown problem id {pid!r}")
    if true_v is not None:
        spec = replace(spec, true_v=tuple(float(v) for v in true_v))
    return spec
