"""Minimal dense-network substrate: affine layers, analytic backprop, Adam,
and a finite-difference gradient checker.

Everything runs on float64 numpy arrays. A "tensor" here is a plain
``np.ndarray``; parameters are kept in flat ``{"block-name": array}`` dicts so
the optimizer and the gradient checker can walk them uniformly. Inputs may be
single vectors ``(in,)`` or batches ``(n, in)``; outputs match the input rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid", "softmax")


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; outputs are strictly positive and sum to 1."""
    z = np.atleast_2d(z)
    shifted = np.maximum(z - z.max(axis=1, keepdims=True), -700.0)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "softmax":
        return softmax(z)
    raise ValueError(f"unknown activation {name!r}")


def _activation_backward(name: str, z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Map dL/d(activation(z)) to dL/dz. Shapes are (n, out)."""
    if name == "identity":
        return upstream
    if name == "relu":
        return upstream * (z > 0.0)
    if name == "tanh":
        t = np.tanh(z)
        return upstream * (1.0 - t * t)
    if name == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-z))
        return upstream * s * (1.0 - s)
    if name == "softmax":
        y = softmax(z)
        # Jacobian-vector product of softmax, row by row.
        dot = (upstream * y).sum(axis=1, keepdims=True)
        return y * (upstream - dot)
    raise ValueError(f"unknown activation {name!r}")


def glorot_uniform(out_dim: int, in_dim: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


@dataclass
class DenseLayer:
    """Affine map plus pointwise (or softmax) nonlinearity.

    weights has shape (out, in); bias has shape (out,).
    """

    name: str
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError(f"layer {self.name!r}: weights must be 2-D, bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise DimensionError(
                f"layer {self.name!r}: weights rows {self.weights.shape[0]} "
                f"!= bias length {self.bias.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"layer {self.name!r}: unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def create(
        cls,
        name: str,
        in_dim: int,
        out_dim: int,
        activation: str,
        rng: np.random.Generator,
    ) -> "DenseLayer":
        return cls(name, glorot_uniform(out_dim, in_dim, rng), np.zeros(out_dim), activation)

    def _check_input(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.in_dim:
            raise DimensionError(
                f"layer {self.name!r}: expected input of width {self.in_dim}, "
                f"got shape {x.shape}"
            )
        return batch, single

    def forward(self, x: np.ndarray) -> np.ndarray:
        batch, single = self._check_input(x)
        z = batch @ self.weights.T + self.bias
        out = _apply_activation(self.activation, z)
        if not np.isfinite(out).all():
            raise NumericError(f"layer {self.name!r}: non-finite output")
        return out[0] if single else out

    def backward(
        self, x: np.ndarray, upstream: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (d_weights, d_bias, d_input) for the given upstream dL/dout."""
        batch, single = self._check_input(x)
        up = np.asarray(upstream, dtype=np.float64)
        up2 = up[None, :] if up.ndim == 1 else up
        if up2.shape != (batch.shape[0], self.out_dim):
            raise DimensionError(
                f"layer {self.name!r}: upstream gradient shape {up.shape} does not "
                f"match output shape ({batch.shape[0]}, {self.out_dim})"
            )
        z = batch @ self.weights.T + self.bias
        dz = _activation_backward(self.activation, z, up2)
        d_weights = dz.T @ batch
        d_bias = dz.sum(axis=0)
        d_input = dz @ self.weights
        return d_weights, d_bias, (d_input[0] if single else d_input)


@dataclass
class Mlp:
    """A plain stack of DenseLayers with dict-of-arrays parameter access."""

    layers: list[DenseLayer]

    def __post_init__(self) -> None:
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"layer {nxt.name!r} expects width {nxt.in_dim} but "
                    f"{prev.name!r} produces {prev.out_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(
        self, x: np.ndarray, upstream: np.ndarray
    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Backprop upstream dL/dout through all layers.

        Returns ({"<layer>.weights": dW, "<layer>.bias": db, ...}, dL/dx).
        """
        inputs = [x]
        for layer in self.layers:
            inputs.append(layer.forward(inputs[-1]))
        grads: dict[str, np.ndarray] = {}
        grad = upstream
        for layer, layer_in in zip(reversed(self.layers), reversed(inputs[:-1])):
            d_w, d_b, grad = layer.backward(layer_in, grad)
            grads[f"{layer.name}.weights"] = d_w
            grads[f"{layer.name}.bias"] = d_b
        return grads, grad

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out[f"{layer.name}.weights"] = layer.weights
            out[f"{layer.name}.bias"] = layer.bias
        return out

    @classmethod
    def create(
        cls,
        name: str,
        dims: list[int],
        hidden_activation: str,
        out_activation: str,
        rng: np.random.Generator,
    ) -> "Mlp":
        layers = []
        for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            act = out_activation if i == len(dims) - 2 else hidden_activation
            layers.append(DenseLayer.create(f"{name}.{i}", d_in, d_out, act, rng))
        return cls(layers)


@dataclass
class Adam:
    """Adaptive-moment optimizer over named parameter blocks (updates in place)."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    _m: dict[str, np.ndarray] = field(default_factory=dict)
    _v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise DimensionError(
                    f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}"
                )
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient in parameter block {name!r}")
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


class SquaredErrorLoss:
    """0.5 * sum((y - target)^2), with its gradient."""

    def __init__(self, target: np.ndarray) -> None:
        self.target = np.asarray(target, dtype=np.float64)

    def value(self, y: np.ndarray) -> float:
        return float(0.5 * np.sum((y - self.target) ** 2))

    def grad(self, y: np.ndarray) -> np.ndarray:
        return y - self.target


def finite_difference_grads(
    value_fn,
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function of the given parameters.

    Perturbs every entry of every block in place, so ``value_fn`` must read the
    same arrays. This is the independent numeric oracle the analytic gradients
    are checked against.
    """
    numeric: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        g_flat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = value_fn()
            flat[i] = orig - h
            minus = value_fn()
            flat[i] = orig
            g_flat[i] = (plus - minus) / (2.0 * h)
        numeric[name] = g
    return numeric


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(1, |a|, |n|).

    The floor of 1 keeps near-zero gradients (dead relu units, converged
    parameters) from inflating the ratio with finite-difference noise.
    """
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


@dataclass
class GradCheckReport:
    passed: bool
    tolerance: float
    max_relative_error: float
    worst_block: str
    per_block: dict[str, float]

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: max relative error {self.max_relative_error:.3e} "
            f"(block {self.worst_block!r}, tolerance {self.tolerance:.1e})"
        )


def compare_grads(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    tolerance: float,
) -> GradCheckReport:
    per_block = {name: relative_error(analytic[name], numeric[name]) for name in analytic}
    worst = max(per_block, key=per_block.get)
    worst_err = per_block[worst]
    return GradCheckReport(worst_err < tolerance, tolerance, worst_err, worst, per_block)


def layer_to_dict(layer: DenseLayer) -> dict:
    """JSON-friendly form: named flat parameter arrays plus explicit shape."""
    return {
        "name": layer.name,
        "activation": layer.activation,
        "shape": list(layer.weights.shape),
        "weights": layer.weights.reshape(-1).tolist(),
        "bias": layer.bias.tolist(),
    }


def layer_from_dict(d: dict) -> DenseLayer:
    shape = tuple(d["shape"])
    return DenseLayer(
        d["name"],
        np.array(d["weights"], dtype=np.float64).reshape(shape),
        np.array(d["bias"], dtype=np.float64),
        d["activation"],
    )


def mlp_to_dict(mlp: Mlp) -> dict:
    return {"layers": [layer_to_dict(layer) for layer in mlp.layers]}


def mlp_from_dict(d: dict) -> Mlp:
    return Mlp([layer_from_dict(layer) for layer in d["layers"]])


def grad_check(
    network: Mlp,
    loss,
    x: np.ndarray,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    corrupt_block: str | None = None,
) -> GradCheckReport:
    """Check every analytic parameter gradient of ``loss(network(x))``.

    ``corrupt_block`` is a test hook: it offsets that block's analytic
    gradient by +0.1 so fault-detection paths can be exercised.
    """
    y = network.forward(x)
    analytic, _ = network.backward(x, loss.grad(y))
    if corrupt_block is not None:
        analytic[corrupt_block] = analytic[corrupt_block] + 0.1
    numeric = finite_difference_grads(lambda: loss.value(network.forward(x)), network.params(), h)
    return compare_grads(analytic, numeric, tolerance)
