"""From-scratch feedforward network engine.

Dense and 2D convolution layers with manual backpropagation, the uniform
final-layer / Xavier initialization scheme, SGD updates with optional L2
decay on the dense weights, analytic Lipschitz bounds, and a checkpoint
format with bit-exact round trips.

Shape conventions. The primary input is either a square grid (batch shape
(B, H, W)) or a flat vector (B, n). An optional auxiliary vector (B, m) is
concatenated exactly once, after the convolution/flatten stage and before
the first dense layer. All arithmetic is float64. Every forward returns a
cache that the matching backward consumes; caches are invalidated whenever
parameters change.

Gradient semantics: backward computes d(sum_b upstream_b . output_b)/dtheta
for every parameter, plus the per-sample gradients with respect to the
auxiliary input and the primary input.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeMismatchError, StaleCacheError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")

# Maximal slopes used by the Lipschitz bound.
_ACT_LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "linear": 1.0, "sigmoid": 0.25}


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "linear":
        return z
    raise ConfigurationError(f"unknown activation {name!r}")


def _act_backward(name: str, z: np.ndarray, out: np.ndarray, dout: np.ndarray) -> np.ndarray:
    if name == "relu":
        return dout * (z > 0.0)
    if name == "tanh":
        return dout * (1.0 - out * out)
    if name == "sigmoid":
        return dout * out * (1.0 - out)
    if name == "linear":
        return dout
    raise ConfigurationError(f"unknown activation {name!r}")


class DenseLayer:
    """Affine map y = act(W x + b). W has shape (out, in)."""

    kind = "dense"
    decay = True  # L2 weight decay targets dense weights (the post-conv stage)

    def __init__(self, W, b, activation):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeMismatchError("dense layer W must be (out, in) with b of length out")
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.activation = activation

    def out_width(self):
        return self.W.shape[0]


class Conv2DLayer:
    """Valid (no padding), stride-1 convolution. W has shape (oc, ic, kh, kw)."""

    kind = "conv2d"
    decay = False

    def __init__(self, W, b, activation, input_shape):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.ndim != 4 or self.b.shape != (self.W.shape[0],):
            raise ShapeMismatchError("conv layer W must be (oc, ic, kh, kw) with b of length oc")
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.activation = activation
        self.input_shape = tuple(input_shape)  # (ic, H, W), needed for unrolled norms
        ic, h, w = self.input_shape
        _, wic, kh, kw = self.W.shape
        if wic != ic or kh > h or kw > w:
            raise ShapeMismatchError("conv kernel does not fit its declared input shape")

    def out_shape(self):
        oc, _, kh, kw = self.W.shape
        _, h, w = self.input_shape
        return (oc, h - kh + 1, w - kw + 1)


class FlattenLayer:
    kind = "flatten"

    def __init__(self, input_shape):
        self.input_shape = tuple(input_shape)


class ConcatAuxLayer:
    """Appends the auxiliary input vector to the running feature vector."""

    kind = "concat"

    def __init__(self, feature_width, aux_width):
        self.feature_width = int(feature_width)
        self.aux_width = int(aux_width)


@dataclass
class NetworkSpec:
    """Architecture description consumed by init_network.

    Exactly one of grid_shape / vec_width describes the primary input.
    conv entries are (filters, kernel_size) pairs applied in order before
    the dense stack; they require a grid input. final_init selects the
    final dense layer's initialization ("uniform" for the +-3e-4 output
    layer, "xavier" when the stack ends in a hidden-style layer, e.g. a
    shared feature trunk). trunk_only drops the dense stack entirely and
    exposes the flattened convolution features as the output.
    """

    grid_shape: tuple[int, int] | None = None
    vec_width: int | None = None
    aux_width: int = 0
    conv: tuple[tuple[int, int], ...] = ()
    hidden: tuple[int, ...] = (200, 200)
    hidden_activation: str = "relu"
    out_dim: int = 1
    out_activation: str = "linear"
    final_init: str = "uniform"
    trunk_only: bool = False

    def validate(self):
        if (self.grid_shape is None) == (self.vec_width is None):
            raise ConfigurationError("specify exactly one of grid_shape or vec_width")
        if self.conv and self.grid_shape is None:
            raise ConfigurationError("conv layers require a grid input")
        if self.aux_width < 0 or self.out_dim < 1:
            raise ConfigurationError("aux_width must be >= 0 and out_dim >= 1")
        if self.final_init not in ("uniform", "xavier"):
            raise ConfigurationError(f"unknown final_init {self.final_init!r}")
        if self.trunk_only and (not self.conv or self.aux_width):
            raise ConfigurationError("trunk_only requires conv layers and no auxiliary input")


class Network:
    """An ordered layer stack plus the input contract it was built for."""

    def __init__(self, spec: NetworkSpec, layers):
        spec.validate()
        self.spec = spec
        self.layers = list(layers)
        self.version = 0

    @property
    def aux_width(self):
        return self.spec.aux_width

    @property
    def out_dim(self):
        return self.spec.out_dim

    def parameters(self):
        """Flat list of parameter arrays, in layer order (W then b)."""
        out = []
        for layer in self.layers:
            if layer.kind in ("dense", "conv2d"):
                out.append(layer.W)
                out.append(layer.b)
        return out


def _xavier_uniform(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


FINAL_LAYER_INIT_BOUND = 3e-4


def init_network(spec: NetworkSpec, rng) -> Network:
    """Build a network with Xavier-uniform hidden layers, zero hidden biases,
    and the final dense layer (weights and bias) uniform in +-3e-4."""
    spec.validate()
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    layers = []

    if spec.grid_shape is not None:
        h, w = spec.grid_shape
        shape = (1, h, w)
        for filters, ksz in spec.conv:
            fan_in = shape[0] * ksz * ksz
            fan_out = filters * ksz * ksz
            W = _xavier_uniform(rng, fan_in, fan_out, (filters, shape[0], ksz, ksz))
            layers.append(Conv2DLayer(W, np.zeros(filters), spec.hidden_activation, shape))
            shape = layers[-1].out_shape()
        if spec.conv:
            layers.append(FlattenLayer(shape))
        width = int(np.prod(shape)) if spec.conv else h * w
    else:
        width = spec.vec_width

    if spec.trunk_only:
        spec.out_dim = width
        return Network(spec, layers)

    if spec.aux_width > 0:
        layers.append(ConcatAuxLayer(width, spec.aux_width))
        width += spec.aux_width

    dense_widths = list(spec.hidden) + [spec.out_dim]
    for i, out_w in enumerate(dense_widths):
        final = i == len(dense_widths) - 1
        if final and spec.final_init == "uniform":
            W = rng.uniform(-FINAL_LAYER_INIT_BOUND, FINAL_LAYER_INIT_BOUND, size=(out_w, width))
            b = rng.uniform(-FINAL_LAYER_INIT_BOUND, FINAL_LAYER_INIT_BOUND, size=out_w)
        else:
            W = _xavier_uniform(rng, width, out_w, (out_w, width))
            b = np.zeros(out_w)
        layers.append(DenseLayer(W, b, spec.out_activation if final else spec.hidden_activation))
        width = out_w

    return Network(spec, layers)


# ---------------------------------------------------------------------------
# forward / backward


class _Cache:
    __slots__ = ("net_id", "version", "records", "single", "x_entry_shape", "aux_given")

    def __init__(self, net, single, x_entry_shape, aux_given):
        self.net_id = id(net)
        self.version = net.version
        self.records = []
        self.single = single
        self.x_entry_shape = x_entry_shape
        self.aux_given = aux_given


def _im2col(x, kh, kw):
    b, c, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    win = np.lib.stride_tricks.as_strided(
        x, shape=(b, c, ho, wo, kh, kw), strides=(s0, s1, s2, s3, s2, s3)
    )
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, ho * wo, c * kh * kw)


def _col2im(dcols, x_shape, kh, kw):
    b, c, h, w = x_shape
    ho, wo = h - kh + 1, w - kw + 1
    dx = np.zeros(x_shape)
    d6 = dcols.reshape(b, ho, wo, c, kh, kw)
    for di in range(kh):
        for dj in range(kw):
            dx[:, :, di : di + ho, dj : dj + wo] += d6[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return dx


def forward(net: Network, grid_input, aux_input=None):
    """Run the network. Returns (output, cache).

    Accepts a single sample (grid (H, W), vector (n,)) or a batch with one
    leading dimension; the output is (out_dim,) or (B, out_dim) accordingly.
    """
    spec = net.spec
    x = np.asarray(grid_input, dtype=np.float64)

    if spec.grid_shape is not None:
        if x.shape == spec.grid_shape:
            single = True
            x = x[None]
        elif x.ndim == 3 and x.shape[1:] == spec.grid_shape:
            single = False
        else:
            raise ShapeMismatchError(f"expected grid input {spec.grid_shape}, got {x.shape}")
        batch = x.shape[0]
        x = x.reshape(batch, 1, *spec.grid_shape) if spec.conv else x.reshape(batch, -1)
    else:
        if x.shape == (spec.vec_width,):
            single = True
            x = x[None]
        elif x.ndim == 2 and x.shape[1] == spec.vec_width:
            single = False
        else:
            raise ShapeMismatchError(f"expected vector input width {spec.vec_width}, got {x.shape}")
        batch = x.shape[0]

    if spec.aux_width > 0:
        if aux_input is None:
            raise ShapeMismatchError("network requires an auxiliary input")
        aux = np.asarray(aux_input, dtype=np.float64)
        if single and aux.shape == (spec.aux_width,):
            aux = aux[None]
        if aux.shape != (batch, spec.aux_width):
            raise ShapeMismatchError(
                f"expected auxiliary input ({batch}, {spec.aux_width}), got {aux.shape}"
            )
    elif aux_input is not None:
        raise ShapeMismatchError("network does not take an auxiliary input")
    else:
        aux = None

    cache = _Cache(net, single, x.shape, aux is not None)

    for layer in net.layers:
        if layer.kind == "dense":
            z = x @ layer.W.T + layer.b
            out = _act_forward(layer.activation, z)
            cache.records.append((x, z, out))
            x = out
        elif layer.kind == "conv2d":
            oc, _, kh, kw = layer.W.shape
            cols = _im2col(x, kh, kw)
            z = cols @ layer.W.reshape(oc, -1).T + layer.b  # (B, P, oc)
            out = _act_forward(layer.activation, z)
            cache.records.append((x.shape, cols, z, out))
            _, ho, wo = layer.out_shape()
            x = out.transpose(0, 2, 1).reshape(batch, oc, ho, wo)
        elif layer.kind == "flatten":
            cache.records.append((x.shape,))
            x = x.reshape(batch, -1)
        elif layer.kind == "concat":
            cache.records.append((x.shape[1],))
            x = np.concatenate([x, aux], axis=1)
        else:
            raise ConfigurationError(f"unknown layer kind {layer.kind!r}")

    return (x[0] if single else x), cache


@dataclass
class GradientSet:
    """Parameter gradients mirroring the network, plus input gradients.

    layers[i] is None for parameterless layers, else (dW, db) summed over the
    batch. aux_input_grad and main_input_grad are per-sample.
    """

    layers: list = field(default_factory=list)
    aux_input_grad: np.ndarray | None = None
    main_input_grad: np.ndarray | None = None


def backward(net: Network, cache, upstream) -> GradientSet:
    """Backpropagate upstream (matching the forward's output shape) through
    the cached forward pass."""
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("cache does not match the network's current parameters")

    d = np.asarray(upstream, dtype=np.float64)
    if cache.single:
        if d.shape != (net.out_dim,):
            raise ShapeMismatchError(f"expected upstream shape ({net.out_dim},), got {d.shape}")
        d = d[None]
    elif d.shape != (cache.x_entry_shape[0], net.out_dim):
        raise ShapeMismatchError(
            f"expected upstream shape ({cache.x_entry_shape[0]}, {net.out_dim}), got {d.shape}"
        )

    grads = GradientSet(layers=[None] * len(net.layers))
    for idx in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[idx]
        rec = cache.records[idx]
        if layer.kind == "dense":
            x_in, z, out = rec
            dz = _act_backward(layer.activation, z, out, d)
            grads.layers[idx] = (dz.T @ x_in, dz.sum(axis=0))
            d = dz @ layer.W
        elif layer.kind == "conv2d":
            x_shape, cols, z, out = rec
            oc, _, kh, kw = layer.W.shape
            batch = x_shape[0]
            dmat = d.reshape(batch, oc, -1).transpose(0, 2, 1)  # (B, P, oc)
            dz = _act_backward(layer.activation, z, out, dmat)
            dW = np.einsum("bpo,bpi->oi", dz, cols).reshape(layer.W.shape)
            grads.layers[idx] = (dW, dz.sum(axis=(0, 1)))
            d = _col2im(dz @ layer.W.reshape(oc, -1), x_shape, kh, kw)
        elif layer.kind == "flatten":
            d = d.reshape(rec[0])
        elif layer.kind == "concat":
            width = rec[0]
            grads.aux_input_grad = d[:, width:].copy()
            d = d[:, :width]

    grads.main_input_grad = d[0] if cache.single else d
    if grads.aux_input_grad is not None and cache.single:
        grads.aux_input_grad = grads.aux_input_grad[0]
    return grads


def apply_update(net: Network, grads: GradientSet, lr: float, l2_decay: float = 0.0) -> None:
    """SGD step theta -= lr * (grad + l2_decay * theta), decay on dense
    weight matrices only. lr == 0 is a bit-exact no-op."""
    if lr == 0.0:
        return
    for layer, g in zip(net.layers, grads.layers):
        if g is None:
            continue
        dW, db = g
        if l2_decay != 0.0 and layer.decay:
            layer.W -= lr * (dW + l2_decay * layer.W)
        else:
            layer.W -= lr * dW
        layer.b -= lr * db
    net.version += 1


def clone_network(net: Network) -> Network:
    """Deep copy with its own parameter arrays (version reset)."""
    layers = []
    for layer in net.layers:
        if layer.kind == "dense":
            layers.append(DenseLayer(layer.W.copy(), layer.b.copy(), layer.activation))
        elif layer.kind == "conv2d":
            layers.append(
                Conv2DLayer(layer.W.copy(), layer.b.copy(), layer.activation, layer.input_shape)
            )
        elif layer.kind == "flatten":
            layers.append(FlattenLayer(layer.input_shape))
        elif layer.kind == "concat":
            layers.append(ConcatAuxLayer(layer.feature_width, layer.aux_width))
    return Network(net.spec, layers)


# ---------------------------------------------------------------------------
# Lipschitz bound


def _dense_norm(W, p):
    if p == 2:
        return float(np.linalg.norm(W, 2))
    if p == np.inf:
        return float(np.max(np.sum(np.abs(W), axis=1)))
    if p == 1:
        return float(np.max(np.sum(np.abs(W), axis=0)))
    raise ConfigurationError(f"unsupported norm order {p!r}")


def _conv_unrolled_matrix(layer: Conv2DLayer) -> np.ndarray:
    """The conv layer's linear map as an explicit matrix (bias excluded),
    built by pushing the input basis through the convolution."""
    ic, h, w = layer.input_shape
    n_in = ic * h * w
    basis = np.eye(n_in).reshape(n_in, ic, h, w)
    oc, _, kh, kw = layer.W.shape
    cols = _im2col(basis, kh, kw)
    out = cols @ layer.W.reshape(oc, -1).T  # (n_in, P, oc)
    return out.transpose(0, 2, 1).reshape(n_in, -1).T  # (oc*P, n_in)


def _conv_norm(layer: Conv2DLayer, p):
    W = layer.W
    if p == 2:
        return float(np.linalg.norm(_conv_unrolled_matrix(layer), 2))
    if p == np.inf:
        # interior output rows see the whole kernel once per input channel
        return float(np.max(np.sum(np.abs(W), axis=(1, 2, 3))))
    if p == 1:
        return float(np.max(np.sum(np.abs(W), axis=(0, 2, 3))))
    raise ConfigurationError(f"unsupported norm order {p!r}")


def lipschitz_bound(net: Network, p=2) -> float:
    """Upper bound on the network's input-output slope in the induced p-norm.

    Product over layers of (activation slope x induced weight norm). With an
    auxiliary junction, the bound is taken with respect to the concatenation
    of the primary and auxiliary inputs: the prefix acting on the primary
    part contributes max(prefix product, 1) at the junction.
    """
    bound = 1.0
    for layer in net.layers:
        if layer.kind == "dense":
            bound *= _ACT_LIPSCHITZ[layer.activation] * _dense_norm(layer.W, p)
        elif layer.kind == "conv2d":
            bound *= _ACT_LIPSCHITZ[layer.activation] * _conv_norm(layer, p)
        elif layer.kind == "concat":
            bound = max(bound, 1.0)
    return bound


def entropy_bounds(eps, L, d, log_n, log_n_half, c1, c2):
    """Closed-form metric-entropy bounds for the location-regular policy
    class and its per-location counterpart.

    Returns (c1 * (L/eps)^d + log_n, c2 * (L/eps)^d * log_n_half).
    """
    if eps <= 0 or L <= 0:
        raise ValueError("eps and L must be positive")
    ratio = (L / eps) ** d
    return c1 * ratio + log_n, c2 * ratio * log_n_half


# ---------------------------------------------------------------------------
# checkpoints

_CHECKPOINT_FORMAT = "pdectrl-net-v1"


def _layer_header(layer) -> dict:
    h = {"kind": layer.kind}
    if layer.kind == "dense":
        h["activation"] = layer.activation
    elif layer.kind == "conv2d":
        h["activation"] = layer.activation
        h["input_shape"] = list(layer.input_shape)
    elif layer.kind == "flatten":
        h["input_shape"] = list(layer.input_shape)
    elif layer.kind == "concat":
        h["feature_width"] = layer.feature_width
        h["aux_width"] = layer.aux_width
    return h


def save_network(net: Network, path) -> None:
    """Checkpoint: JSON header (format tag, input spec, per-layer
    descriptors) followed by the parameter arrays; round trips bit-exactly."""
    spec = net.spec
    header = {
        "format": _CHECKPOINT_FORMAT,
        "spec": {
            "grid_shape": list(spec.grid_shape) if spec.grid_shape else None,
            "vec_width": spec.vec_width,
            "aux_width": spec.aux_width,
            "conv": [list(c) for c in spec.conv],
            "hidden": list(spec.hidden),
            "hidden_activation": spec.hidden_activation,
            "out_dim": spec.out_dim,
            "out_activation": spec.out_activation,
            "final_init": spec.final_init,
            "trunk_only": spec.trunk_only,
        },
        "layers": [_layer_header(layer) for layer in net.layers],
    }
    arrays = {}
    for i, layer in enumerate(net.layers):
        if layer.kind in ("dense", "conv2d"):
            arrays[f"W{i}"] = layer.W
            arrays[f"b{i}"] = layer.b
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_network(path) -> Network:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != _CHECKPOINT_FORMAT:
            raise ConfigurationError(f"unrecognized checkpoint format {header.get('format')!r}")
        s = header["spec"]
        spec = NetworkSpec(
            grid_shape=tuple(s["grid_shape"]) if s["grid_shape"] else None,
            vec_width=s["vec_width"],
            aux_width=s["aux_width"],
            conv=tuple(tuple(c) for c in s["conv"]),
            hidden=tuple(s["hidden"]),
            hidden_activation=s["hidden_activation"],
            out_dim=s["out_dim"],
            out_activation=s["out_activation"],
            final_init=s.get("final_init", "uniform"),
            trunk_only=s.get("trunk_only", False),
        )
        layers = []
        for i, lh in enumerate(header["layers"]):
            if lh["kind"] == "dense":
                layers.append(DenseLayer(data[f"W{i}"], data[f"b{i}"], lh["activation"]))
            elif lh["kind"] == "conv2d":
                layers.append(
                    Conv2DLayer(data[f"W{i}"], data[f"b{i}"], lh["activation"], lh["input_shape"])
                )
            elif lh["kind"] == "flatten":
                layers.append(FlattenLayer(lh["input_shape"]))
            elif lh["kind"] == "concat":
                layers.append(ConcatAuxLayer(lh["feature_width"], lh["aux_width"]))
            else:
                raise ConfigurationError(f"unknown layer kind {lh['kind']!r} in checkpoint")
    return Network(spec, layers)
