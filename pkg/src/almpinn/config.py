"""Run configuration: YAML files, flag overrides and per-problem defaults.

Config files are nested YAML; sections mirror the library modules
(``sampling``, ``network``, ``optim``, ``loss``, ``alm``, ``train``,
``inverse``, ``noise``, ``problem_options``).  Command-line flags override
file keys, and the merged effective configuration is echoed into ``run.json``
so every result row is reproducible from its own output directory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import yaml

from .optim import DEFAULT_LR_BOUNDARIES, DEFAULT_LR_VALUES

__all__ = ["RunConfig", "ConfigError", "load_config_file", "merge_mappings",
           "build_run_config", "normalize_data_term", "DATA_TERM_ALIASES"]

DATA_TERM_ALIASES = {
    "l2": "gaussian", "gaussian": "gaussian", "gauss": "gaussian",
    "l1": "laplace", "laplace": "laplace",
    "logn": "lognormal", "lognormal": "lognormal", "log": "lognormal",
}

# Paper-scale sample counts and iteration budgets per problem.
PROBLEM_DEFAULTS = {
    "nl1d": {"n_interior": 1000, "n_boundary": 1000, "n_initial": 1000,
             "epochs": 200, "batches": 100},
    "burgers": {"n_interior": 500, "n_boundary": 500, "n_initial": 1000,
                "epochs": 300, "batches": 100},
}


class ConfigError(ValueError):
    """Configuration file or flag set is not usable."""


def normalize_data_term(kind: str) -> str:
    try:
        return DATA_TERM_ALIASES[str(kind).lower()]
    except KeyError:
        raise ConfigError(f"unknown data term {kind!r}") from None


@dataclass
class RunConfig:
    problem: str
    method: str = "alm"            # alm | pinns
    mode: str = "forward"          # forward | inverse
    seed: int = 0
    out_dir: str | None = None
    # budget
    epochs: int = 0
    batches: int = 100
    # sampling
    n_interior: int = 0
    n_boundary: int = 0
    n_initial: int = 0
    resample_each_epoch: bool = False
    sampling_strategy: str = "random"
    # network
    hidden_layers: int = 8
    hidden_width: int = 40
    extra_hidden: int = 0
    dropout: float = 0.0
    # optimizer
    lr_boundaries: tuple[int, ...] = DEFAULT_LR_BOUNDARIES
    lr_values: tuple[float, ...] = DEFAULT_LR_VALUES
    theta_lr_scale: float = 1.0
    poi_weight: float = 1.0
    v_bounds: tuple[float, float] | None = None
    # loss
    data_term: str = "gaussian"
    sigma: float | None = None     # defaults to the kind's norm-form value
    gamma: float = 1.0
    pinns_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    pinns_inverse_weights: tuple[float, float] = (1.0, 1.0)
    # augmented Lagrangian
    lam0: tuple[float, float] = (1.0, 1.0)
    mu0: tuple[float, float] = (1.0, 1.0)
    mu_max: float = 1e4
    mu_growth: float | None = None
    penalty_tol: float = 1e-4
    grad_tol: float = 1e-8
    # inverse
    pretrained: str | None = None
    v_init: object = "midpoint"    # midpoint | true | number
    t_slices: tuple[float, ...] | None = None
    t_num: int = 2
    x_num: int = 50
    noise_distribution: str | None = None
    noise_level: float = 0.0
    # problem options
    nu: float = 0.1
    series_terms: int = 200
    quad_points: int = 1024
    true_v: tuple[float, float] | None = None
    # bookkeeping
    record_every: int = 100
    divergence_threshold: float = 1e10
    eval_nx: int = 100
    eval_nt: int = 100

    def layer_sizes(self) -> list[int]:
        return [2] + [self.hidden_width] * self.hidden_layers + [1]

    def data_sigma(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return math.sqrt(0.5) if self.data_term == "gaussian" else 1.0

    def dist_param(self) -> float:
        return self.gamma if self.data_term == "laplace" else self.data_sigma()

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEM_DEFAULTS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.method not in ("alm", "pinns"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.mode not in ("forward", "inverse"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.epochs < 0 or self.batches < 1:
            raise ConfigError("epochs must be >= 0 and batches >= 1")
        if self.mode == "inverse":
            if self.v_bounds is None:
                raise ConfigError("inverse runs require explicit v bounds (optim.v_bounds)")
            if self.pretrained is None:
                raise ConfigError("inverse runs require a pretrained checkpoint")
            if self.noise_distribution is None:
                raise ConfigError("inverse runs require a noise distribution")
        self.data_term = normalize_data_term(self.data_term)
        return self

    def to_mapping(self) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, tuple):
                out[key] = list(val)
        return out


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def merge_mappings(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins on leaves."""
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_mappings(out[key], val)
        elif val is not None:
            out[key] = val
    return out


def _get(mapping: dict, section: str, key: str, default):
    sec = mapping.get(section) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    return sec.get(key, default)


def build_run_config(mapping: dict) -> RunConfig:
    """Materialize a RunConfig from a nested mapping, applying problem defaults."""
    problem = mapping.get("problem")
    if problem not in PROBLEM_DEFAULTS:
        raise ConfigError(f"unknown problem {problem!r}")
    pd = PROBLEM_DEFAULTS[problem]
    g = lambda sec, key, dflt: _get(mapping, sec, key, dflt)  # noqa: E731
    try:
        cfg = RunConfig(
            problem=problem,
            method=mapping.get("method", "alm"),
            mode=mapping.get("mode", "forward"),
            seed=int(mapping.get("seed", 0)),
            out_dir=mapping.get("out_dir"),
            epochs=int(g("train", "epochs", pd["epochs"])),
            batches=int(g("train", "batches", pd["batches"])),
            n_interior=int(g("sampling", "n_interior", pd["n_interior"])),
            n_boundary=int(g("sampling", "n_boundary", pd["n_boundary"])),
            n_initial=int(g("sampling", "n_initial", pd["n_initial"])),
            resample_each_epoch=bool(g("sampling", "resample_each_epoch", False)),
            sampling_strategy=g("sampling", "strategy", "random"),
            hidden_layers=int(g("network", "hidden_layers", 8)),
            hidden_width=int(g("network", "hidden_width", 40)),
            extra_hidden=int(g("network", "extra_hidden", 0)),
            dropout=float(g("network", "dropout", 0.0)),
            lr_boundaries=tuple(int(b) for b in g("optim", "lr_boundaries",
                                                  list(DEFAULT_LR_BOUNDARIES))),
            lr_values=tuple(float(v) for v in g("optim", "lr_values",
                                                list(DEFAULT_LR_VALUES))),
            theta_lr_scale=float(g("optim", "theta_lr_scale", 1.0)),
            poi_weight=float(g("optim", "poi_weight", 1.0)),
            v_bounds=(tuple(float(b) for b in g("optim", "v_bounds", ()))
                      or None),
            data_term=g("loss", "data_term", "gaussian"),
            sigma=(None if g("loss", "sigma", None) is None
                   else float(g("loss", "sigma", None))),
            gamma=float(g("loss", "gamma", 1.0)),
            pinns_weights=tuple(float(w) for w in g("loss", "pinns_weights",
                                                    (1.0, 1.0, 1.0))),
            pinns_inverse_weights=tuple(float(w) for w in g(
                "loss", "pinns_inverse_weights", (1.0, 1.0))),
            lam0=tuple(float(x) for x in g("alm", "lam0", (1.0, 1.0))),
            mu0=_mu_pair(g("alm", "mu0", (1.0, 1.0))),
            mu_max=float(g("alm", "mu_max", 1e4)),
            mu_growth=(None if g("alm", "mu_growth", None) is None
                       else float(g("alm", "mu_growth", None))),
            penalty_tol=float(g("alm", "penalty_tol", 1e-4)),
            grad_tol=float(g("alm", "grad_tol", 1e-8)),
            pretrained=g("inverse", "pretrained", None),
            v_init=g("inverse", "v_init", "midpoint"),
            t_slices=(tuple(float(t) for t in g("inverse", "t_slices", ()))
                      or None),
            t_num=int(g("inverse", "t_num", 2)),
            x_num=int(g("inverse", "x_num", 50)),
            noise_distribution=g("noise", "distribution", None),
            noise_level=float(g("noise", "level", 0.0)),
            nu=float(g("problem_options", "nu", 0.1)),
            series_terms=int(g("problem_options", "series_terms", 200)),
            quad_points=int(g("problem_options", "quad_points", 1024)),
            true_v=(tuple(float(v) for v in g("problem_options", "true_v", ()))
                    or None),
            record_every=int(g("train", "record_every", 100)),
            divergence_threshold=float(g("train", "divergence_threshold", 1e10)),
            eval_nx=int(g("train", "eval_nx", 100)),
            eval_nt=int(g("train", "eval_nt", 100)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return cfg.validate()


def _mu_pair(value) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    pair = tuple(float(v) for v in value)
    if len(pair) == 1:
        return (pair[0], pair[0])
    return pair
