"""A small layered network with hand-written forward and backward passes.

Used as the learned decoder f(u) -> x for the black-box attack.  Supported
layers are dense, 2-D convolution (stride 1, zero "same" padding,
cross-correlation orientation), relu, tanh and reshape.  Activations are
float64 arrays; images travel as (batch, channels, height, width) and a
reshape(h, w, c) descriptor maps a flat vector onto that layout in
channel-major order.

Convolutions are evaluated in the Fourier domain: zero padding to at least
H + k // 2 makes the circular product equal to the linear correlation on the
output window, and the channel mixing at each frequency becomes one batched
matrix product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import DivergenceError, FormatError, ShapeError
from .linalg import SeedSpec, as_seed

MAGIC = b"STCADEC1"


class Layer:
    kind = ""
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    @property
    def args(self) -> tuple:
        return ()

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def init_params(self, rng, relu_next: bool):
        pass

    def descriptor(self) -> str:
        if not self.args:
            return self.kind
        return f"{self.kind}({','.join(str(a) for a in self.args)})"

    def __repr__(self):
        return self.descriptor()


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int):
        super().__init__()
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.params = {"weight": np.zeros((self.n_in, self.n_out)), "bias": np.zeros(self.n_out)}

    @property
    def args(self):
        return (self.n_in, self.n_out)

    def out_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ShapeError(f"dense({self.n_in},{self.n_out}) cannot take input of shape {in_shape}")
        return (self.n_out,)

    def init_params(self, rng, relu_next):
        var = (2.0 if relu_next else 1.0) / self.n_in
        self.params["weight"] = rng.normal(0.0, np.sqrt(var), size=(self.n_in, self.n_out))
        self.params["bias"] = np.zeros(self.n_out)

    def forward(self, x):
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, g):
        self.grads["weight"] = self._x.T @ g
        self.grads["bias"] = g.sum(axis=0)
        return g @ self.params["weight"].T


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, kernel: int):
        super().__init__()
        if kernel < 1 or kernel % 2 == 0:
            raise ValueError(f"same-padding convolution needs an odd kernel, got {kernel}")
        self.c_in, self.c_out, self.k = int(c_in), int(c_out), int(kernel)
        self.params = {"weight": np.zeros((self.c_out, self.c_in, self.k, self.k)),
                       "bias": np.zeros(self.c_out)}

    @property
    def args(self):
        return (self.c_in, self.c_out, self.k)

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.c_in:
            raise ShapeError(f"conv2d({self.c_in},{self.c_out},{self.k}) cannot take input of shape {in_shape}")
        return (self.c_out, in_shape[1], in_shape[2])

    def init_params(self, rng, relu_next):
        fan_in = self.c_in * self.k * self.k
        var = (2.0 if relu_next else 1.0) / fan_in
        self.params["weight"] = rng.normal(0.0, np.sqrt(var), size=(self.c_out, self.c_in, self.k, self.k))
        self.params["bias"] = np.zeros(self.c_out)

    def _fft_shape(self, H, W):
        p = self.k // 2
        return (scipy.fft.next_fast_len(H + p, real=True), scipy.fft.next_fast_len(W + p, real=True))

    def _spectra(self, s, dtype):
        """Kernel spectra shaped (freq, c_in, c_out) for correlation and (freq, c_out, c_in) for convolution."""
        w = self.params["weight"].astype(dtype, copy=False)
        flipped = scipy.fft.rfft2(w[:, :, ::-1, ::-1], s=s)
        plain = scipy.fft.rfft2(w, s=s)
        return (flipped.reshape(self.c_out, self.c_in, -1).transpose(2, 1, 0),
                plain.reshape(self.c_out, self.c_in, -1).transpose(2, 0, 1))

    def forward(self, x):
        N, C, H, W = x.shape
        p = self.k // 2
        s = self._fft_shape(H, W)
        xf = scipy.fft.rfft2(_pad_to(x, s))
        fshape = xf.shape[2:]
        xf = xf.reshape(N, C, -1).transpose(2, 0, 1)  # (F, N, C)
        kcorr, self._kconv = self._spectra(s, x.dtype)
        yf = np.matmul(xf, kcorr)  # (F, N, C_out)
        y = scipy.fft.irfft2(yf.transpose(1, 2, 0).reshape(N, self.c_out, *fshape), s=s)
        self._xf = xf
        self._in = (N, H, W)
        return y[:, :, p:p + H, p:p + W] + self.params["bias"].astype(x.dtype)[None, :, None, None]

    def backward(self, g):
        N, H, W = self._in
        p = self.k // 2
        s = self._fft_shape(H, W)
        gf = scipy.fft.rfft2(_pad_to(g, s))
        fshape = gf.shape[2:]
        gf = gf.reshape(N, self.c_out, -1).transpose(2, 0, 1)  # (F, N, C_out)
        dxf = np.matmul(gf, self._kconv)  # (F, N, C_in)
        dx = scipy.fft.irfft2(dxf.transpose(1, 2, 0).reshape(N, self.c_in, *fshape), s=s)
        # kernel gradient = circular cross-correlation of input with output gradient
        corr = np.matmul(gf.conj().transpose(0, 2, 1), self._xf)  # (F, C_out, C_in)
        full = scipy.fft.irfft2(corr.transpose(1, 2, 0).reshape(self.c_out, self.c_in, *fshape), s=s)
        lags = np.arange(-p, p + 1) % s[0], np.arange(-p, p + 1) % s[1]
        self.grads["weight"] = full[:, :, lags[0][:, None], lags[1][None, :]]
        self.grads["bias"] = g.sum(axis=(0, 2, 3))
        return dx[:, :, p:p + H, p:p + W]


def _pad_to(x, s):
    # explicit zero padding is noticeably faster than letting rfft2 pad
    out = np.zeros(x.shape[:2] + tuple(s), dtype=x.dtype)
    out[:, :, :x.shape[2], :x.shape[3]] = x
    return out


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        # subgradient at 0 is 0
        return g * self._mask


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, g):
        return g * (1.0 - self._y**2)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, h: int, w: int, c: int = 1):
        super().__init__()
        self.h, self.w, self.c = int(h), int(w), int(c)

    @property
    def args(self):
        return (self.h, self.w, self.c)

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != self.h * self.w * self.c:
            raise ShapeError(f"reshape({self.h},{self.w},{self.c}) cannot take input of shape {in_shape}")
        return (self.c, self.h, self.w)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], self.c, self.h, self.w)

    def backward(self, g):
        return g.reshape(self._shape)


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv2D, ReLU, Tanh, Reshape)}
_KIND_CODES = {"dense": 1, "conv2d": 2, "relu": 3, "tanh": 4, "reshape": 5}


def parse_layer(desc: str) -> Layer:
    """Build a layer from text such as ``conv2d(1,32,7)`` or ``tanh``."""
    desc = desc.strip().replace(" ", "")
    name, _, rest = desc.partition("(")
    if name not in LAYER_TYPES:
        raise ValueError(f"unknown layer type {name!r}")
    args = [int(a) for a in rest.rstrip(")").split(",") if a] if rest else []
    return LAYER_TYPES[name](*args)


@dataclass
class DecoderModel:
    layers: list
    output_scale: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        self.layers = [parse_layer(l) if isinstance(l, str) else l for l in self.layers]
        self.shapes = self._chain()

    def _chain(self):
        first = self.layers[0]
        if not isinstance(first, Dense):
            raise ShapeError("the first layer must be dense (it defines the code length m)")
        shapes = [(first.n_in,)]
        for layer in self.layers:
            shapes.append(layer.out_shape(shapes[-1]))
        return shapes

    @property
    def input_dim(self) -> int:
        return self.shapes[0][0]

    @property
    def output_dim(self) -> int:
        return int(np.prod(self.shapes[-1]))

    @property
    def final_activation(self) -> str:
        return self.layers[-1].kind

    def descriptors(self) -> list[str]:
        return [l.descriptor() for l in self.layers]

    def parameters(self):
        """(layer index, name, array) in declaration order."""
        for i, layer in enumerate(self.layers):
            for name in ("weight", "bias"):
                if name in layer.params:
                    yield i, name, layer.params[name]

    def n_parameters(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    def initialize(self, seed) -> DecoderModel:
        rng = as_seed(seed, "decoder-init").generator()
        for i, layer in enumerate(self.layers):
            nxt = self.layers[i + 1].kind if i + 1 < len(self.layers) else ""
            layer.init_params(rng, relu_next=(nxt == "relu"))
        return self

    def forward_raw(self, u, dtype=np.float64):
        """Network output before output scaling, for a batch (N, m)."""
        x = np.atleast_2d(np.asarray(u, dtype=dtype))
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"model expects codes of length {self.input_dim}, got {x.shape[1]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        """Backpropagate d(loss)/d(raw output); fills each layer's ``grads``."""
        g = grad_out.reshape(grad_out.shape[0], *self.shapes[-1])
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def __call__(self, u):
        return forward(self, u)

    def copy(self) -> DecoderModel:
        other = DecoderModel(self.descriptors(), self.output_scale, self.name)
        for (_, _, src), (i, name, _) in zip(self.parameters(), list(other.parameters())):
            other.layers[i].params[name] = src.copy()
        return other


def forward(model: DecoderModel, u) -> np.ndarray:
    """Decode one code (returns length-n vector) or a batch of codes (returns (N, n))."""
    u = np.asarray(u, dtype=float)
    out = model.forward_raw(u) * model.output_scale
    return out[0] if u.ndim == 1 else out


def synthetic_net(m: int, side: int = 23, output_scale: float = 3.0) -> DecoderModel:
    """Decoder for the i.i.d. Gaussian experiments (output n = side**2)."""
    n = side * side
    return DecoderModel([
        f"dense({m},{n})", "tanh", f"reshape({side},{side},1)",
        "conv2d(1,32,7)", "relu", "conv2d(32,16,5)", "tanh",
        "conv2d(16,8,3)", "relu", "conv2d(8,1,3)", "tanh",
    ], output_scale=output_scale, name="synthetic_net")


def mnist_net(m: int, side: int = 28) -> DecoderModel:
    """Decoder for MNIST images scaled to [0, 1]."""
    n = side * side
    return DecoderModel([
        f"dense({m},{n})", "relu", f"reshape({side},{side},1)",
        "conv2d(1,32,5)", "relu", "conv2d(32,16,5)", "relu", "conv2d(16,1,5)", "relu",
    ], output_scale=1.0, name="mnist_net")


ARCHITECTURES = {"synthetic_net": synthetic_net, "mnist_net": mnist_net}


# --- training -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2
    batch_size: int = 64
    learning_rate: float = 3e-4
    momentum: float = 0.9  # 0 gives plain SGD
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0, "train"))
    # The dense input layer sees one gradient entry per weight while every conv
    # weight is shared across all pixels, so its gradients are far smaller.
    # A per-layer step multiplier keeps plain momentum SGD balanced.
    dense_lr_scale: float = 100.0
    zero_init_output: bool = True  # start the last parametric layer at zero (ignored for relu outputs)
    precision: str = "float32"  # arithmetic used during training; parameters are stored as float64

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("need epochs >= 0, batch_size >= 1 and learning_rate > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.dense_lr_scale <= 0:
            raise ValueError("dense_lr_scale must be positive")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")


def training_targets(model: DecoderModel, X) -> np.ndarray:
    """Targets in the network's raw output space."""
    T = np.asarray(X, dtype=float) / model.output_scale
    if model.final_activation == "tanh":
        T = np.clip(T, -1.0, 1.0)
    return T


def batch_loss_and_grad(model: DecoderModel, U, T) -> float:
    """Mean over the batch of the squared error norm; fills parameter gradients."""
    out = model.forward_raw(U, dtype=U.dtype)
    diff = out - T
    model.backward(diff * (2.0 / len(U)))
    return float(np.sum(diff * diff, dtype=np.float64) / len(U))


def _set_precision(model: DecoderModel, dtype):
    for i, name, p in list(model.parameters()):
        model.layers[i].params[name] = p.astype(dtype)


def train_decoder(U, X, model: DecoderModel, cfg: TrainConfig, init: bool = True):
    """Mini-batch SGD (with optional momentum) on mean ||f(u_j) - x_j||^2.

    ``model`` is trained in place and returned together with the list of
    epoch-average losses (in the network's raw output space).
    """
    U = np.asarray(U, dtype=float)
    X = np.asarray(X, dtype=float)
    if U.ndim != 2 or X.ndim != 2 or len(U) != len(X) or len(U) == 0:
        raise ShapeError(f"need matching non-empty batches, got codes {U.shape} and signals {X.shape}")
    if U.shape[1] != model.input_dim or X.shape[1] != model.output_dim:
        raise ShapeError(f"model maps {model.input_dim} -> {model.output_dim}, data is {U.shape[1]} -> {X.shape[1]}")
    if init:
        model.initialize(cfg.seed)
        # a zero layer in front of a final relu would pass no gradient, so skip it there
        if cfg.zero_init_output and model.final_activation != "relu":
            for p in model.layers[_last_parametric(model)].params.values():
                p[...] = 0.0
    if cfg.epochs == 0:
        return model, []
    dtype = np.dtype(cfg.precision)
    U = U.astype(dtype)
    T = training_targets(model, X).astype(dtype)
    _set_precision(model, dtype)
    params = list(model.parameters())
    rates = [cfg.learning_rate * (cfg.dense_lr_scale if model.layers[i].kind == "dense" else 1.0)
             for i, _, _ in params]
    velocity = [np.zeros_like(p) for _, _, p in params]
    rng = cfg.seed.child("shuffle").generator()
    losses = []
    try:
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            for epoch in range(cfg.epochs):
                order = rng.permutation(len(U))
                total = 0.0
                for start in range(0, len(U), cfg.batch_size):
                    idx = order[start:start + cfg.batch_size]
                    loss = batch_loss_and_grad(model, U[idx], T[idx])
                    if not np.isfinite(loss):
                        raise DivergenceError(f"non-finite loss in epoch {epoch}; lower the learning rate")
                    total += loss * len(idx)
                    for (i, name, p), v, lr in zip(params, velocity, rates):
                        v *= cfg.momentum
                        v += model.layers[i].grads[name]
                        p -= lr * v
                losses.append(total / len(U))
    finally:
        _set_precision(model, np.float64)
    return model, losses


def _last_parametric(model: DecoderModel) -> int:
    return max(i for i, layer in enumerate(model.layers) if layer.params)


def mse(model: DecoderModel, U, X) -> float:
    return float(np.mean((forward(model, np.atleast_2d(U)) - np.atleast_2d(X)) ** 2))


# --- serialization --------------------------------------------------------------

def save_model(model: DecoderModel, path):
    """Write the STCADEC1 binary format (little-endian)."""
    chunks = [MAGIC, struct.pack("<dI", model.output_scale, len(model.layers))]
    for layer in model.layers:
        chunks.append(struct.pack("<BB", _KIND_CODES[layer.kind], len(layer.args)))
        chunks.append(struct.pack(f"<{len(layer.args)}I", *layer.args))
    for _, _, p in model.parameters():
        chunks.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_model(path) -> DecoderModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise FormatError(f"{path}: not a decoder file (bad magic at offset 0)")
    codes = {v: k for k, v in _KIND_CODES.items()}
    layers = []
    off = 8
    try:
        scale, count = struct.unpack_from("<dI", data, off)
        off = 20
        for _ in range(count):
            code, nargs = struct.unpack_from("<BB", data, off)
            if code not in codes:
                raise FormatError(f"{path}: unknown layer kind {code} at offset {off}")
            off += 2
            args = struct.unpack_from(f"<{nargs}I", data, off)
            off += 4 * nargs
            layers.append(LAYER_TYPES[codes[code]](*args))
    except (struct.error, TypeError) as exc:
        raise FormatError(f"{path}: damaged layer table near offset {off} ({exc})") from None
    if not layers:
        raise FormatError(f"{path}: model has no layers")
    model = DecoderModel(layers, output_scale=scale)
    for i, name, p in list(model.parameters()):
        size = p.size * 8
        if off + size > len(data):
            raise FormatError(f"{path}: truncated parameter block at offset {off}")
        model.layers[i].params[name] = np.frombuffer(data, dtype="<f8", count=p.size, offset=off).reshape(p.shape).copy()
        off += size
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes at offset {off}")
    return model
