"""Small dense neural networks with exact reverse-mode gradients.

Everything is float64 numpy. A network maps an input of fixed arity to a
single scalar; hidden layers share one activation and the output layer is
linear. Forward and backward passes accept batches (B, arity) so callers
can push many edge evaluations through one matrix product.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _tanh(z):
    return np.tanh(z)


def _dtanh_from_out(a):
    return 1.0 - a * a


def _relu(z):
    return np.maximum(z, 0.0)


def _drelu_from_out(a):
    return np.where(a > 0.0, 1.0, 0.0)


def _identity(z):
    return z


def _didentity_from_out(a):
    return np.ones_like(a)


# activation and its derivative expressed through the activation output,
# so the backward pass reuses the forward results instead of recomputing
ACTIVATIONS = {
    "tanh": (_tanh, _dtanh_from_out),
    "relu": (_relu, _drelu_from_out),
    "linear": (_identity, _didentity_from_out),
}


@dataclass(frozen=True)
class MlpSpec:
    """Network shape: input arity, hidden widths, hidden activation."""

    arity: int
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("arity must be >= 1")
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.arity, *self.hidden, 1]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]


@dataclass
class MlpParams:
    """Per-layer weight matrices (n_out, n_in) and bias vectors (n_out,)."""

    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays, weights and biases alternating by layer."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_params(spec: MlpSpec, rng_seed: int | np.random.SeedSequence) -> MlpParams:
    """Variance-scaled uniform weights, zero biases, deterministic per seed.

    Weights are drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in)], so their
    variance is 1/(3 * fan_in).
    """
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for n_out, n_in in spec.layer_sizes:
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpParams(spec, weights, biases)


def zero_params(spec: MlpSpec) -> MlpParams:
    weights = [np.zeros((n_out, n_in)) for n_out, n_in in spec.layer_sizes]
    biases = [np.zeros(n_out) for n_out, _ in spec.layer_sizes]
    return MlpParams(spec, weights, biases)


def _as_batch(inputs: np.ndarray, arity: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != arity:
            raise ValueError(f"input length {x.shape[0]} does not match arity {arity}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != arity:
        raise ValueError(f"input shape {x.shape} does not match arity {arity}")
    return x, False


def mlp_forward(params: MlpParams, inputs: np.ndarray):
    """Network output: scalar for a single input vector, (B,) for a batch."""
    x, single = _as_batch(inputs, params.spec.arity)
    act, _ = ACTIVATIONS[params.spec.activation]
    a = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if i == last else act(z)
    out = a[:, 0]
    return float(out[0]) if single else out


def forward_cached(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    """Forward pass on a (B, arity) batch keeping every layer's activations.

    The last entry holds the raw (B, 1) outputs; feed the list to
    backward_from_cache to avoid recomputing the forward pass.
    """
    act, _ = ACTIVATIONS[params.spec.activation]
    a = x
    activations = [a]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if i == last else act(z)
        activations.append(a)
    return activations


def backward_from_cache(
    params: MlpParams, activations: list[np.ndarray], up: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Backward pass reusing cached activations; up is the (B,) upstream."""
    _, dact_out = ACTIVATIONS[params.spec.activation]
    grad_w = [np.empty_like(w) for w in params.weights]
    grad_b = [np.empty_like(b) for b in params.biases]
    delta = up[:, None]  # d(objective)/d(z_last), output layer is linear
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ activations[i]
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i]
        if i > 0:
            delta = delta * dact_out(activations[i])
    return MlpParams(params.spec, grad_w, grad_b), delta


def mlp_gradient(params: MlpParams, inputs: np.ndarray, upstream) -> tuple[MlpParams, np.ndarray]:
    """Exact gradients of sum(upstream * output) w.r.t. parameters and inputs.

    upstream is a scalar for a single input or a (B,) vector for a batch;
    parameter gradients are summed over the batch, the returned input
    gradient matches the input shape.
    """
    x, single = _as_batch(inputs, params.spec.arity)
    up = np.asarray(upstream, dtype=float).reshape(-1)
    if up.shape[0] != x.shape[0]:
        if up.size == 1:
            up = np.full(x.shape[0], float(up[0]))
        else:
            raise ValueError("upstream length does not match batch size")
    activations = forward_cached(params, x)
    grads, delta = backward_from_cache(params, activations, up)
    input_grad = delta[0] if single else delta
    return grads, input_grad


@dataclass
class AdamState:
    """Adaptive moment estimation state over a list of parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def _ensure(self, arrays: Sequence[np.ndarray]) -> None:
        if not self.m:
            self.m = [np.zeros_like(a) for a in arrays]
            self.v = [np.zeros_like(a) for a in arrays]


def optimizer_step(
    state: AdamState, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]
) -> Sequence[np.ndarray]:
    """One in-place adaptive update of every parameter array. Returns arrays."""
    state._ensure(arrays)
    if len(arrays) != len(state.m) or len(arrays) != len(grads):
        raise ValueError("parameter/gradient/state array counts differ")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        a -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return arrays


def flatten_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate parameter arrays into one vector (view copies)."""
    if not arrays:
        return np.zeros(0)
    return np.concatenate([a.ravel() for a in arrays])


def save_params_text(params: MlpParams) -> str:
    """Serialize to the weight text format (17 significant digits)."""
    buf = io.StringIO()
    hidden = ",".join(str(w) for w in params.spec.hidden) or "-"
    buf.write(f"spec arity={params.spec.arity} hidden={hidden} activation={params.spec.activation}\n")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        buf.write(f"W{i} {w.shape[0]} {w.shape[1]}\n")
        for row in w:
            buf.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        buf.write(f"b{i} {b.shape[0]}\n")
        buf.write(" ".join(f"{v:.17g}" for v in b) + "\n")
    return buf.getvalue()


def load_params_text(text: str) -> MlpParams:
    """Parse the weight text format back into MlpParams."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("spec "):
        raise ValueError("missing mlp spec header")
    fields = dict(part.split("=", 1) for part in lines[0].split()[1:])
    hidden = () if fields["hidden"] == "-" else tuple(int(w) for w in fields["hidden"].split(","))
    spec = MlpSpec(arity=int(fields["arity"]), hidden=hidden, activation=fields["activation"])
    weights, biases = [], []
    pos = 1
    for n_out, n_in in spec.layer_sizes:
        tag, rows, cols = lines[pos].split()
        if not tag.startswith("W") or (int(rows), int(cols)) != (n_out, n_in):
            raise ValueError(f"unexpected weight block {lines[pos]!r}")
        pos += 1
        w = np.asarray([[float(v) for v in lines[pos + r].split()] for r in range(n_out)])
        pos += n_out
        tag, length = lines[pos].split()
        if not tag.startswith("b") or int(length) != n_out:
            raise ValueError(f"unexpected bias block {lines[pos]!r}")
        pos += 1
        b = np.asarray([float(v) for v in lines[pos].split()])
        pos += 1
        weights.append(w)
        biases.append(b)
    return MlpParams(spec, weights, biases)
