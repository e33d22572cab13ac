"""Collocation/boundary/initial point sets, measurement slices and noise injection.

All randomness flows through one named counter-based generator so any
implementation can reproduce the exact streams:

* generator: Philox 4x64-10, keyed with the two 64-bit words ``(seed, stream)``,
  counter starting at zero;
* uniforms on (0, 1): ``u = (word >> 11) * 2^-53 + 2^-54`` for each raw 64-bit
  output word (never exactly 0 or 1);
* standard normal: inverse CDF of ``u``; Laplace(0, 1): signed log inverse CDF;
  log-normal draws come from ``exp(sigma0 * normal)``.

Stream ids are fixed constants below; resampling per epoch offsets the stream
id, never the seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

__all__ = [
    "STREAM_INIT",
    "STREAM_INTERIOR",
    "STREAM_BOUNDARY",
    "STREAM_INITIAL",
    "STREAM_ADDITIONAL",
    "STREAM_NOISE",
    "STREAM_DROPOUT",
    "LOGNORMAL_SIGMA0",
    "NoiseSpec",
    "Dataset",
    "uniforms",
    "normals",
    "laplace_unit",
    "lognormal_unit_var",
    "sample_sets",
    "sample_additional",
    "add_noise",
    "dataset_to_csv",
]

STREAM_INIT = 0
STREAM_INTERIOR = 1
STREAM_BOUNDARY = 2
STREAM_INITIAL = 3
STREAM_ADDITIONAL = 4
STREAM_NOISE = 5
STREAM_DROPOUT = 6
# Resampled epochs shift the point streams by this stride.
STREAM_EPOCH_STRIDE = 16

# LogN(0, sigma0^2) has unit variance when exp(sigma0^2) equals the golden ratio.
LOGNORMAL_SIGMA0 = float(np.sqrt(np.log((1.0 + np.sqrt(5.0)) / 2.0)))

_MASK64 = (1 << 64) - 1


def _raw(seed: int, stream: int, n: int) -> np.ndarray:
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return Philox(key=key).random_raw(n)


def uniforms(seed: int, stream: int, n: int) -> np.ndarray:
    """n doubles uniform on the open interval (0, 1), deterministic per (seed, stream)."""
    return (_raw(seed, stream, n) >> np.uint64(11)) * 2.0 ** -53 + 2.0 ** -54


def normals(seed: int, stream: int, n: int) -> np.ndarray:
    return ndtri(uniforms(seed, stream, n))


def laplace_unit(seed: int, stream: int, n: int) -> np.ndarray:
    """Laplace(0, 1) draws (scale 1, variance 2) via the inverse CDF."""
    u = uniforms(seed, stream, n)
    return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))


def lognormal_unit_var(seed: int, stream: int, n: int) -> np.ndarray:
    """LogN(0, sigma0^2) draws with median 1 and variance 1."""
    return np.exp(LOGNORMAL_SIGMA0 * normals(seed, stream, n))


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str  # gaussian | laplace | lognormal
    level: float
    seed: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("noise level must be >= 0")


@dataclass
class Dataset:
    """Point sets for one run.

    interior: (n, 2) columns x, t.  boundary: (m, 3) columns x, t, g.
    initial: (k, 2) columns x, h.  additional: (j, 3) columns x, t, u_tilde.
    """

    interior: np.ndarray
    boundary: np.ndarray
    initial: np.ndarray
    additional: np.ndarray | None = None
    noise_meta: NoiseSpec | None = None


def _interior_grid(n: int, domain) -> np.ndarray:
    """Cell-midpoint tensor grid with at least n points, truncated to n."""
    x_lo, x_hi, t_lo, t_hi = domain
    nx = max(1, int(np.ceil(np.sqrt(n))))
    nt = max(1, int(np.ceil(n / nx)))
    xs = x_lo + (x_hi - x_lo) * (np.arange(nx) + 0.5) / nx
    ts = t_lo + (t_hi - t_lo) * (np.arange(nt) + 0.5) / nt
    xg, tg = np.meshgrid(xs, ts, indexing="ij")
    return np.column_stack([xg.ravel()[:n], tg.ravel()[:n]])


def sample_sets(problem, n_interior: int, n_boundary: int, n_initial: int,
                seed: int, stream_offset: int = 0,
                strategy: str = "random") -> Dataset:
    """Draw the training point sets for one problem.

    Interior points are i.i.d. uniform strictly inside the domain (or a
    midpoint tensor grid under ``strategy="grid"``, for diagnostics); boundary
    points split evenly between x_lo and x_hi with uniform t; initial points
    are uniform in x at t = t_lo.  Target values come from the problem's g/h.
    """
    if min(n_interior, n_boundary, n_initial) < 0:
        raise ValueError("point counts must be >= 0")
    if strategy not in ("random", "grid"):
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    x_lo, x_hi, t_lo, t_hi = problem.domain
    if not n_interior:
        interior = np.zeros((0, 2))
    elif strategy == "grid":
        interior = _interior_grid(n_interior, problem.domain)
    else:
        u = uniforms(seed, STREAM_INTERIOR + stream_offset, 2 * n_interior)
        interior = np.column_stack([
            x_lo + (x_hi - x_lo) * u[:n_interior],
            t_lo + (t_hi - t_lo) * u[n_interior:],
        ])

    n_left = (n_boundary + 1) // 2
    tb = t_lo + (t_hi - t_lo) * uniforms(seed, STREAM_BOUNDARY + stream_offset, n_boundary)
    xb = np.concatenate([np.full(n_left, x_lo), np.full(n_boundary - n_left, x_hi)])
    boundary = (np.column_stack([xb, tb, problem.boundary_value(xb, tb)])
                if n_boundary else np.zeros((0, 3)))

    xi = x_lo + (x_hi - x_lo) * uniforms(seed, STREAM_INITIAL + stream_offset, n_initial)
    initial = (np.column_stack([xi, problem.initial_value(xi)])
               if n_initial else np.zeros((0, 2)))
    return Dataset(interior=interior, boundary=boundary, initial=initial)


def sample_additional(problem, t_slices: Sequence[float], x_num: int, seed: int) -> np.ndarray:
    """Measurement points on horizontal time slices with exact solution values.

    Returns (len(t_slices) * x_num, 3) columns x, t, u.  At t = t_lo the values
    are the initial condition itself.
    """
    x_lo, x_hi, t_lo, t_hi = problem.domain
    rows = []
    for j, tj in enumerate(t_slices):
        tj = float(tj)
        if not (t_lo <= tj <= t_hi):
            raise ValueError(f"slice time {tj} outside [{t_lo}, {t_hi}]")
        x = x_lo + (x_hi - x_lo) * uniforms(seed, STREAM_ADDITIONAL + j, x_num)
        if tj == t_lo:
            vals = problem.initial_value(x)
        else:
            vals = problem.exact(x, np.full(x_num, tj))
        rows.append(np.column_stack([x, np.full(x_num, tj), vals]))
    if not rows:
        return np.zeros((0, 3))
    return np.vstack(rows)


def add_noise(values: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Perturb measurements: u~ = u + s*xi with s = level * rms(u).

    xi is the unit-parameter form of the chosen distribution; the log-normal
    draw is shifted by its median (1) so the level controls spread, not offset.
    """
    values = np.asarray(values, dtype=np.float64)
    if spec.level == 0.0:
        return values.copy()
    n = values.size
    s = spec.level * float(np.sqrt(np.mean(np.square(values)))) if n else 0.0
    if spec.distribution == "gaussian":
        xi = normals(spec.seed, STREAM_NOISE, n)
    elif spec.distribution == "laplace":
        xi = laplace_unit(spec.seed, STREAM_NOISE, n)
    elif spec.distribution == "lognormal":
        xi = lognormal_unit_var(spec.seed, STREAM_NOISE, n) - 1.0
    else:
        raise ValueError(f"unknown noise distribution {spec.distribution!r}")
    return values + s * xi.reshape(values.shape)


def dataset_to_csv(ds: Dataset, path) -> None:
    """Write all points as rows (role, x, t, target) for inspection."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["role", "x", "t", "target"])
        for x, t in ds.interior:
            wr.writerow(["interior", repr(float(x)), repr(float(t)), ""])
        for x, t, g in ds.boundary:
            wr.writerow(["boundary", repr(float(x)), repr(float(t)), repr(float(g))])
        for x, h in ds.initial:
            wr.writerow(["initial", repr(float(x)), repr(0.0), repr(float(h))])
        if ds.additional is not None:
            for x, t, u in ds.additional:
                wr.writerow(["additional", repr(float(x)), repr(float(t)), repr(float(u))])
