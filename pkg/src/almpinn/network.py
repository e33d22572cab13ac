"""Tanh multilayer perceptron u(x, t; theta) with input scaling and checkpoints.

The network owns a single flat float64 parameter vector; per-layer weight and
bias views alias into it so the optimizer can update everything in one step.
An affine input scaling maps the problem domain onto [-1, 1]^2 and is fixed
(not trainable).  Checkpoints are a self-describing text format with
shortest-round-trip decimal floats, so save/load is bit-exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .autodiff import Jet2, Tape, Var, jet_component, jet_linear, jet_tanh, matmul
from .sampling import STREAM_INIT, uniforms

__all__ = [
    "Network",
    "CheckpointError",
    "CheckpointFormatError",
    "CheckpointVersionError",
    "CheckpointDimensionError",
    "init_network",
    "extend_network",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT_VERSION",
]

CHECKPOINT_FORMAT_VERSION = 1
CHECKPOINT_MAGIC = "almpinn checkpoint"


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    """File is not a readable checkpoint."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported."""


class CheckpointDimensionError(CheckpointError):
    """Architecture in the file disagrees with the expected one."""


def domain_scaling(domain: Sequence[float]) -> np.ndarray:
    """Affine constants (ax, bx, at, bt) mapping the domain onto [-1, 1]^2."""
    x_lo, x_hi, t_lo, t_hi = (float(d) for d in domain)
    if not (x_hi > x_lo and t_hi > t_lo):
        raise ValueError("degenerate domain")
    ax = 2.0 / (x_hi - x_lo)
    bx = -(x_hi + x_lo) / (x_hi - x_lo)
    at = 2.0 / (t_hi - t_lo)
    bt = -(t_hi + t_lo) / (t_hi - t_lo)
    return np.array([ax, bx, at, bt])


@dataclass
class Network:
    """MLP state: layer sizes, flat parameters, input scaling, optional PDE coefficients.

    ``linear_tail`` counts trailing pre-output layers with identity activation;
    they exist only when a pretrained model was extended (see ``extend_network``).
    """

    layer_sizes: list[int]
    theta: np.ndarray
    scale: np.ndarray
    problem: str = ""
    linear_tail: int = 0
    v: np.ndarray | None = None
    dropout_rate: float = 0.0
    iteration: int = 0
    history_tail: list[float] = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        return [(self.layer_sizes[i], self.layer_sizes[i + 1]) for i in range(self.n_layers)]

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())

    def is_tanh_layer(self, layer: int) -> bool:
        return layer < self.n_layers - 1 - self.linear_tail

    def layer_views(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(weight, bias) views into the flat parameter vector, layer by layer."""
        views = []
        off = 0
        for fi, fo in self.layer_shapes():
            w = self.theta[off:off + fi * fo].reshape(fi, fo)
            off += fi * fo
            b = self.theta[off:off + fo]
            off += fo
            views.append((w, b))
        return views

    def copy(self) -> "Network":
        return replace(self, theta=self.theta.copy(),
                       scale=self.scale.copy(),
                       v=None if self.v is None else self.v.copy(),
                       history_tail=list(self.history_tail))

    # -- evaluation ----------------------------------------------------------

    def _scaled(self, x, t) -> tuple[np.ndarray, np.ndarray]:
        ax, bx, at, bt = self.scale
        return ax * np.asarray(x, dtype=np.float64) + bx, at * np.asarray(t, dtype=np.float64) + bt

    def predict(self, x, t) -> np.ndarray:
        """Plain numpy forward pass (values only), for evaluation and metrics."""
        xs, ts = self._scaled(np.atleast_1d(x), np.atleast_1d(t))
        a = np.column_stack([xs, ts])
        for layer, (w, b) in enumerate(self.layer_views()):
            a = a @ w + b
            if self.is_tanh_layer(layer):
                a = np.tanh(a)
        out = a[:, 0]
        return out if np.ndim(x) else out[0]

    def register_params(self, tape: Tape, include_v: bool = False):
        """Register all trainable leaves on a tape in canonical flat order."""
        layer_vars = [(tape.param(w), tape.param(b)) for w, b in self.layer_views()]
        v_var = None
        if include_v:
            if self.v is None:
                raise ValueError("network has no inversion coefficients to register")
            v_var = tape.param(self.v)
        return layer_vars, v_var

    def _dropout_masks(self, n: int, rng) -> list[np.ndarray | None]:
        masks: list[np.ndarray | None] = []
        for layer in range(self.n_layers):
            if rng is not None and self.dropout_rate > 0.0 and self.is_tanh_layer(layer):
                keep = 1.0 - self.dropout_rate
                width = self.layer_sizes[layer + 1]
                m = (rng.random((n, width)) < keep) / keep
                masks.append(m)
            else:
                masks.append(None)
        return masks

    def forward_values(self, x, t, tape: Tape, layer_vars=None, dropout_rng=None) -> Var:
        """Tape forward pass returning u at each point, shape (n,)."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        xs, ts = self._scaled(x, t)
        if layer_vars is None:
            layer_vars, _ = self.register_params(tape)
        a = tape.const(np.column_stack([xs, ts]))
        masks = self._dropout_masks(x.size, dropout_rng)
        for layer, (w, b) in enumerate(layer_vars):
            a = matmul(a, w) + b
            if self.is_tanh_layer(layer):
                a = a.tanh()
                if masks[layer] is not None:
                    a = a * masks[layer]
        return a.reshape((x.size,))

    def forward_jet(self, x, t, tape: Tape, layer_vars=None, dropout_rng=None) -> Jet2:
        """Tape forward pass carrying u and its input derivatives through all layers.

        Accepts scalars or 1-d arrays; returns a Jet2 of Vars shaped like the
        input ((n,) per field, or scalars for scalar input).
        """
        scalar_in = np.ndim(x) == 0 and np.ndim(t) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        n = x.size
        ax, _, at, _ = self.scale
        xs, ts = self._scaled(x, t)
        # Jet stack (6, n, 2): value row [x^, t^]; gx row [ax, 0]; gt row [0, at];
        # second-order rows vanish because the scaling is affine.
        stack = np.zeros((6, n, 2))
        stack[0, :, 0] = xs
        stack[0, :, 1] = ts
        stack[1, :, 0] = ax
        stack[2, :, 1] = at
        if layer_vars is None:
            layer_vars, _ = self.register_params(tape)
        a = tape.const(stack)
        masks = self._dropout_masks(n, dropout_rng)
        for layer, (w, b) in enumerate(layer_vars):
            a = jet_linear(a, w, b)
            if self.is_tanh_layer(layer):
                a = jet_tanh(a)
                if masks[layer] is not None:
                    a = a * masks[layer]
        shape = () if scalar_in else (n,)
        comps = [jet_component(a, k).reshape(shape) for k in range(6)]
        return Jet2(*comps)


def init_network(layer_sizes: Sequence[int], seed: int, domain: Sequence[float],
                 problem: str = "", dropout_rate: float = 0.0) -> Network:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.

    Deterministic for a fixed seed: weights are drawn layer by layer, row-major,
    from the init stream of the named counter-based generator.
    """
    layer_sizes = [int(s) for s in layer_sizes]
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if layer_sizes[0] != 2 or layer_sizes[-1] != 1:
        raise ValueError("expected 2 inputs (x, t) and 1 output")
    net = Network(layer_sizes=layer_sizes,
                  theta=np.zeros(0),
                  scale=domain_scaling(domain),
                  problem=problem,
                  dropout_rate=dropout_rate)
    n_weights = sum(fi * fo for fi, fo in net.layer_shapes())
    u = uniforms(seed, STREAM_INIT, n_weights)
    theta = np.zeros(net.n_params)
    net.theta = theta
    off_u = 0
    off = 0
    for fi, fo in net.layer_shapes():
        bound = np.sqrt(6.0 / (fi + fo))
        theta[off:off + fi * fo] = (2.0 * u[off_u:off_u + fi * fo] - 1.0) * bound
        off_u += fi * fo
        off += fi * fo + fo  # biases stay zero
    return net


def extend_network(net: Network, extra_layers: int) -> Network:
    """Append identity-initialized layers between the last hidden layer and the output.

    tanh cannot realize an exact identity, so appended layers carry identity
    activation; forward values are unchanged until training moves them.
    """
    if extra_layers < 0:
        raise ValueError("extra_layers must be >= 0")
    if extra_layers == 0:
        return net
    width = net.layer_sizes[-2]
    sizes = net.layer_sizes[:-1] + [width] * extra_layers + [net.layer_sizes[-1]]
    out = replace(net, layer_sizes=sizes, linear_tail=net.linear_tail + extra_layers,
                  theta=np.zeros(0), v=None if net.v is None else net.v.copy(),
                  scale=net.scale.copy(), history_tail=list(net.history_tail))
    theta = np.zeros(out.n_params)
    out.theta = theta
    old = dict(enumerate(net.layer_views()))
    views = out.layer_views()
    for layer, (w, b) in enumerate(views):
        if layer < net.n_layers - 1:
            w[:], b[:] = old[layer]
        elif layer < out.n_layers - 1:
            w[:] = np.eye(width)
        else:
            w[:], b[:] = old[net.n_layers - 1]
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def save_checkpoint(net: Network, path) -> None:
    """Write the network to a text checkpoint; load() round-trips bit-exactly."""
    buf = io.StringIO()
    buf.write(f"{CHECKPOINT_MAGIC}\n")
    buf.write(f"format: {CHECKPOINT_FORMAT_VERSION}\n")
    buf.write(f"problem: {net.problem}\n")
    buf.write("layer_sizes: " + " ".join(str(s) for s in net.layer_sizes) + "\n")
    buf.write(f"linear_tail: {net.linear_tail}\n")
    buf.write("scale: " + " ".join(_fmt(s) for s in net.scale) + "\n")
    buf.write(f"iteration: {net.iteration}\n")
    if net.v is not None:
        buf.write("v: " + " ".join(_fmt(s) for s in net.v) + "\n")
    if net.history_tail:
        buf.write("history: " + " ".join(_fmt(s) for s in net.history_tail) + "\n")
    buf.write(f"params: {net.theta.size}\n")
    for x in net.theta:
        buf.write(_fmt(x) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> Network:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises CheckpointFormatError for corrupt files, CheckpointVersionError for
    unknown format versions and CheckpointDimensionError when the parameter
    payload disagrees with the declared layer sizes.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not an almpinn checkpoint")
    header: dict[str, str] = {}
    i = 1
    try:
        while i < len(lines):
            line = lines[i]
            key, _, value = line.partition(":")
            if not _:
                raise CheckpointFormatError(f"{path}: malformed header line {i + 1}")
            header[key.strip()] = value.strip()
            i += 1
            if key.strip() == "params":
                break
        version = int(header["format"])
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: incomplete header") from exc
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version} not supported")
    try:
        layer_sizes = [int(s) for s in header["layer_sizes"].split()]
        linear_tail = int(header.get("linear_tail", "0"))
        scale = np.array([float(s) for s in header["scale"].split()])
        iteration = int(header.get("iteration", "0"))
        n_params = int(header["params"])
        v = None
        if "v" in header:
            v = np.array([float(s) for s in header["v"].split()])
        history = [float(s) for s in header.get("history", "").split()]
        theta = np.array([float(s) for s in lines[i:i + n_params]])
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: unparsable field") from exc
    if theta.size != n_params:
        raise CheckpointFormatError(f"{path}: truncated parameter payload")
    net = Network(layer_sizes=layer_sizes, theta=theta, scale=scale,
                  problem=header.get("problem", ""), linear_tail=linear_tail,
                  v=v, iteration=iteration, history_tail=history)
    if net.n_params != n_params:
        raise CheckpointDimensionError(
            f"{path}: {n_params} parameters do not match layer sizes {layer_sizes}")
    return net


def check_architecture(net: Network, layer_sizes: Sequence[int]) -> None:
    """Raise CheckpointDimensionError when a loaded net does not match the config."""
    if list(net.layer_sizes) != [int(s) for s in layer_sizes]:
        raise CheckpointDimensionError(
            f"checkpoint layer sizes {net.layer_sizes} != configured {list(layer_sizes)}")
