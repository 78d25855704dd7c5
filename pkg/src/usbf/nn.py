"""Small numpy neural-network engine for patch-to-patch regression.

The default model maps a focused small-aperture patch ``[n_in, T]`` to an
emulated large-aperture patch ``[2 n_in - 1, T]``: three dense layers, then
three 3x3 convolutions over the (channel, time) plane. Hidden layers use
LeakyReLU; the last layer is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidArgument, UnsupportedVersion
from .io import decode_records, encode_records

LEAKY_SLOPE = 0.3


@dataclass(frozen=True)
class PatchShape:
    n_channels_in: int
    n_time: int

    @property
    def n_channels_out(self):
        return 2 * self.n_channels_in - 1


class Dense:
    kind = "dense"

    def __init__(self, weight, bias):
        self.weight = weight
        self.bias = bias
        self._x = None

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, keep=False):
        if keep:
            self._x = x
        return x @ self.weight + self.bias

    def backward(self, grad):
        gw = self._x.T @ grad
        gb = grad.sum(axis=0)
        return grad @ self.weight.T, [gw, gb]


class LeakyReLU:
    kind = "leaky_relu"
    params = []

    def __init__(self, slope=LEAKY_SLOPE):
        self.slope = slope
        self._factor = None

    def _slopes(self, x):
        # 1 where x > 0, slope elsewhere; arithmetic is faster than masked selects
        f = (x > 0).astype(x.dtype)
        f *= x.dtype.type(1.0 - self.slope)
        f += x.dtype.type(self.slope)
        return f

    def forward(self, x, keep=False):
        f = self._slopes(x)
        if keep:
            self._factor = f
        return x * f

    def backward(self, grad):
        return grad * self._factor, []


class Reshape:
    kind = "reshape"
    params = []

    def __init__(self, shape):
        self.shape = tuple(shape)
        self._in = None

    def forward(self, x, keep=False):
        if keep:
            self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._in), []


class Conv2D:
    """3x3 'same' convolution over channels-last ``(batch, H, W, channels)``.

    The zero-padded input is flattened to rows of channels; each kernel tap is
    then a constant row offset, so the convolution is nine contiguous matmuls.
    """

    kind = "conv2d"

    def __init__(self, kernel, bias):
        self.kernel = kernel  # (3, 3, c_in, c_out)
        self.bias = bias
        self._flat = None
        self._shape = None

    @property
    def params(self):
        return [self.kernel, self.bias]

    @staticmethod
    def _offsets(w):
        m = w + 3
        return m, [m + (dy - 1) * (w + 2) + (dx - 1) for dy in range(3) for dx in range(3)]

    def forward(self, x, keep=False):
        b, h, w, c = x.shape
        n = b * (h + 2) * (w + 2)
        m, offs = self._offsets(w)
        flat = np.zeros((n + 2 * m, c), dtype=x.dtype)
        flat[m:m + n].reshape(b, h + 2, w + 2, c)[:, 1:-1, 1:-1] = x
        if c < 4:
            out = np.concatenate([flat[o:o + n] for o in offs], axis=1) @ self.kernel.reshape(
                9 * c, -1)
        else:
            taps = self.kernel.reshape(9, c, -1)
            out = np.zeros((n, taps.shape[-1]), dtype=x.dtype)
            for t, o in enumerate(offs):
                out += flat[o:o + n] @ taps[t]
        if keep:
            self._flat = flat
            self._shape = x.shape
        out = out.reshape(b, h + 2, w + 2, -1)[:, 1:-1, 1:-1]
        return out + self.bias

    def backward(self, grad):
        b, h, w, c = self._shape
        n = b * (h + 2) * (w + 2)
        m, offs = self._offsets(w)
        c_out = grad.shape[-1]
        g = np.zeros((n, c_out), dtype=grad.dtype)
        g.reshape(b, h + 2, w + 2, c_out)[:, 1:-1, 1:-1] = grad
        taps = self.kernel.reshape(9, c, c_out)
        gk = np.stack([self._flat[o:o + n].T @ g for o in offs]).reshape(self.kernel.shape)
        gb = grad.reshape(-1, c_out).sum(axis=0)
        if c_out < 4:
            # transposed convolution as a single matmul over shifted copies of g
            gp = np.zeros((n + 4 * m, c_out), dtype=grad.dtype)
            gp[2 * m:2 * m + n] = g
            shifted = np.concatenate([gp[2 * m - o:4 * m - o + n] for o in offs], axis=1)
            dflat = shifted @ taps.transpose(0, 2, 1).reshape(9 * c_out, c)
        else:
            dflat = np.zeros_like(self._flat)
            for t, o in enumerate(offs):
                dflat[o:o + n] += g @ taps[t].T
        dx = dflat[m:m + n].reshape(b, h + 2, w + 2, c)[:, 1:-1, 1:-1]
        return dx, [gk, gb]


@dataclass
class Network:
    """Ordered layers with fixed input and output patch shapes."""

    layers: list
    in_shape: tuple
    out_shape: tuple

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def dtype(self):
        ps = self.params
        return ps[0].dtype if ps else np.dtype(np.float64)


def glorot_limit(fan_in, fan_out):
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_network(shape: PatchShape, seed, dense_widths=(512, 512), conv_channels=(16, 16),
                 slope=LEAKY_SLOPE, dtype=np.float32) -> Network:
    """Glorot-uniform weights, zero biases; deterministic for a given seed."""
    if shape.n_channels_in < 1 or shape.n_time < 1:
        raise InvalidArgument(f"invalid patch shape {shape}")
    rng = np.random.default_rng(seed)
    n_in = shape.n_channels_in * shape.n_time
    n_out_ch = shape.n_channels_out
    n_out = n_out_ch * shape.n_time

    def dense(a, b):
        lim = glorot_limit(a, b)
        return Dense(rng.uniform(-lim, lim, (a, b)).astype(dtype), np.zeros(b, dtype))

    def conv(c_in, c_out):
        lim = glorot_limit(9 * c_in, 9 * c_out)
        k = rng.uniform(-lim, lim, (3, 3, c_in, c_out)).astype(dtype)
        return Conv2D(k, np.zeros(c_out, dtype))

    widths = [n_in, *dense_widths, n_out]
    layers = []
    for a, b in zip(widths[:-1], widths[1:]):
        layers += [dense(a, b), LeakyReLU(slope)]
    layers.append(Reshape((n_out_ch, shape.n_time, 1)))
    chans = [1, *conv_channels, 1]
    for i, (a, b) in enumerate(zip(chans[:-1], chans[1:])):
        layers.append(conv(a, b))
        if i < len(chans) - 2:
            layers.append(LeakyReLU(slope))
    layers.append(Reshape((n_out_ch, shape.n_time)))
    return Network(layers, (shape.n_channels_in, shape.n_time), (n_out_ch, shape.n_time))


def _as_batch(net, x):
    x = np.asarray(x)
    single = x.shape == tuple(net.in_shape)
    if single:
        x = x[None]
    if x.shape[1:] != tuple(net.in_shape):
        raise InvalidArgument(f"patch shape {x.shape[1:]} does not match network "
                              f"input {tuple(net.in_shape)}")
    return x.reshape(len(x), -1).astype(net.dtype, copy=False), single


def _run(net, x, keep):
    for layer in net.layers:
        x = layer.forward(x, keep)
    return x


def forward(net: Network, patch) -> np.ndarray:
    """Apply the network to one patch ``[n_in, T]`` or a batch ``[B, n_in, T]``."""
    x, single = _as_batch(net, patch)
    y = _run(net, x, keep=False).reshape((len(x),) + tuple(net.out_shape))
    return y[0] if single else y


def forward_column(net: Network, patch, column: int) -> np.ndarray:
    """Output column ``column`` of :func:`forward`, shaped ``[B, n_out]``.

    For the dense-then-convolution layout only the dense units within the
    convolutions' receptive field of that column are evaluated.
    """
    x, _ = _as_batch(net, patch)
    n_ch, n_t = net.out_shape
    if not 0 <= column < n_t:
        raise InvalidArgument(f"column {column} outside [0, {n_t})")
    split = _conv_stage(net)
    if split is None:
        return forward(net, x.reshape((-1,) + tuple(net.in_shape)))[:, :, column]
    n_conv = sum(1 for layer in net.layers[split:] if isinstance(layer, Conv2D))
    cols = np.arange(column - n_conv, column + n_conv + 1)
    inside = (cols >= 0) & (cols < n_t)
    for layer in net.layers[:split - 3]:
        x = layer.forward(x)
    last, act = net.layers[split - 3], net.layers[split - 2]
    units = (np.arange(n_ch)[:, None] * n_t + cols[inside][None, :]).ravel()
    h = np.zeros((len(x), n_ch, len(cols), 1), dtype=x.dtype)
    h[:, :, inside, 0] = act.forward(x @ last.weight[:, units] + last.bias[units]).reshape(
        len(x), n_ch, -1)
    for layer in net.layers[split:-1]:
        h = layer.forward(h)
        if isinstance(layer, Conv2D):
            h = h[:, :, 1:-1]
            cols = cols[1:-1]
            h[:, :, (cols < 0) | (cols >= n_t)] = 0
    return h.reshape(len(x), n_ch)


def _conv_stage(net):
    """Index of the first convolution if the layout is dense..., reshape, conv..., reshape."""
    kinds = [layer.kind for layer in net.layers]
    if "conv2d" not in kinds:
        return None
    split = kinds.index("conv2d")
    head, tail = kinds[:split], kinds[split:]
    if (len(head) < 3 or head[-1] != "reshape" or head[-3] != "dense"
            or head[-2] != "leaky_relu" or tail[-1] != "reshape"
            or set(tail[:-1]) - {"conv2d", "leaky_relu"} or "reshape" in head[:-1]
            or net.layers[split - 1].shape[-1] != 1):
        return None
    return split


def loss_and_grads(net: Network, batch_in, batch_target):
    """Mean squared error over all entries and its parameter gradients."""
    x, _ = _as_batch(net, batch_in)
    y = np.asarray(batch_target).astype(net.dtype, copy=False)
    if y.shape != (len(x),) + tuple(net.out_shape):
        raise InvalidArgument(f"target batch shape {y.shape} does not match network output "
                              f"{(len(x),) + tuple(net.out_shape)}")
    diff = _run(net, x, keep=True).reshape(y.shape) - y
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    g = (diff * diff.dtype.type(2.0 / diff.size)).reshape(len(x), -1)
    grads = []
    for layer in reversed(net.layers):
        g, pg = layer.backward(g)
        grads[:0] = pg
    return loss, grads


@dataclass
class TrainState:
    """Adam moments, step count and learning-rate schedule state."""

    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    decay: float = 1e-8
    best_val: float = math.inf
    wait: int = 0

    @classmethod
    def for_params(cls, params, lr=1e-3, decay=1e-8):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   lr=lr, decay=decay)

    @property
    def effective_lr(self):
        return self.lr / (1.0 + self.decay * self.step)


def adam_step(params, grads, state: TrainState, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidArgument("parameter, gradient and moment lists differ in length")
    lr = state.effective_lr
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise InvalidArgument(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    decay: float = 1e-8
    patience: int = 5
    factor: float = 0.5
    val_fraction: float = 0.1
    seed: int = 0


@dataclass
class History:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.epoch, self.train_loss, self.val_loss, self.lr))

    @property
    def plateau_fired(self):
        return any(b < a for a, b in zip(self.lr, self.lr[1:]))


def split_indices(n, val_fraction, seed):
    """Seeded train/validation split; with no validation share the training set validates."""
    perm = np.random.default_rng([seed, 1]).permutation(n)
    n_val = int(round(val_fraction * n))
    if val_fraction > 0 and n > 1:
        n_val = min(max(1, n_val), n - 1)
    return perm[n_val:], perm[:n_val]


def evaluate(net, inputs, targets, batch_size=256):
    total = 0.0
    for i in range(0, len(inputs), batch_size):
        pred = forward(net, inputs[i:i + batch_size])
        d = (pred - targets[i:i + batch_size]).astype(np.float64)
        total += float(np.sum(d * d))
    return total / max(targets.size, 1)


def train(net: Network, inputs, targets, cfg: TrainConfig = TrainConfig(), log=None):
    """Mini-batch Adam training with plateau halving of the learning rate.

    Returns ``(net, history, state)``. The network is updated in place.
    """
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if len(inputs) == 0:
        raise InvalidArgument("empty dataset")
    if len(inputs) != len(targets):
        raise InvalidArgument("inputs and targets differ in length")
    train_idx, val_idx = split_indices(len(inputs), cfg.val_fraction, cfg.seed)
    if len(val_idx) == 0:
        val_idx = train_idx
    x_val, y_val = inputs[val_idx], targets[val_idx]
    params = net.params
    state = TrainState.for_params(params, cfg.lr, cfg.decay)
    rng = np.random.default_rng([cfg.seed, 2])
    hist = History()
    for epoch in range(1, cfg.epochs + 1):
        lr_epoch = state.lr
        order = train_idx[rng.permutation(len(train_idx))]
        batch_losses = []
        for i in range(0, len(order), cfg.batch_size):
            sel = np.sort(order[i:i + cfg.batch_size])
            loss, grads = loss_and_grads(net, inputs[sel], targets[sel])
            adam_step(params, grads, state)
            batch_losses.append(loss * len(sel))
        train_loss = sum(batch_losses) / len(order)
        val_loss = evaluate(net, x_val, y_val)
        hist.epoch.append(epoch)
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        hist.lr.append(lr_epoch)
        if val_loss < state.best_val:
            state.best_val = val_loss
            state.wait = 0
        else:
            state.wait += 1
            if state.wait >= cfg.patience:
                state.lr *= cfg.factor
                state.wait = 0
        if log is not None:
            log(f"epoch {epoch:3d}  train {train_loss:.4e}  val {val_loss:.4e}  lr {lr_epoch:.3g}")
    return net, hist, state


# weights file ----------------------------------------------------------------

WEIGHTS_REVISION = 1
_KIND_CODES = {"dense": 1, "leaky_relu": 2, "reshape": 3, "conv2d": 4}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def encode_weights(net: Network) -> bytes:
    records = [np.array([WEIGHTS_REVISION, len(net.layers), *net.in_shape, *net.out_shape],
                        dtype=np.float32)]
    for layer in net.layers:
        code = _KIND_CODES[layer.kind]
        if layer.kind == "leaky_relu":
            records.append(np.array([code, layer.slope], np.float32))
        elif layer.kind == "reshape":
            records.append(np.array([code, len(layer.shape), *layer.shape], np.float32))
        else:
            records.append(np.array([code], np.float32))
            records.extend(layer.params)
    return encode_records(records)


def decode_weights(buf: bytes) -> Network:
    records, pos = decode_records(buf)
    if pos != len(buf):
        raise FormatError("trailing bytes after weights", pos)
    if not records:
        raise FormatError("weights file has no header record", 0)
    head = records[0]
    if len(head) < 6:
        raise FormatError("weights header too short", 0)
    if int(head[0]) != WEIGHTS_REVISION:
        raise UnsupportedVersion(f"unsupported weights revision {int(head[0])}", 0)
    n_layers = int(head[1])
    in_shape = (int(head[2]), int(head[3]))
    out_shape = (int(head[4]), int(head[5]))
    layers = []
    it = iter(records[1:])
    try:
        for _ in range(n_layers):
            desc = next(it)
            kind = _CODE_KINDS.get(int(desc[0])) if desc.ndim == 1 and desc.size else None
            if kind == "leaky_relu":
                layers.append(LeakyReLU(float(desc[1])))
            elif kind == "reshape":
                layers.append(Reshape(int(v) for v in desc[2:2 + int(desc[1])]))
            elif kind == "dense":
                layers.append(Dense(next(it), next(it)))
            elif kind == "conv2d":
                layers.append(Conv2D(next(it), next(it)))
            else:
                raise FormatError(f"unknown layer code {desc[0]}")
    except StopIteration:
        raise FormatError("weights file ends before all layers are defined") from None
    except IndexError:
        raise FormatError("layer descriptor too short") from None
    if next(it, None) is not None:
        raise FormatError("extra records after the last layer")
    net = Network(layers, in_shape, out_shape)
    try:
        y = forward(net, np.zeros(in_shape, np.float32))
    except (ValueError, IndexError) as exc:
        raise FormatError(f"layers do not compose: {exc}") from None
    if y.shape != out_shape:
        raise FormatError(f"network output {y.shape} differs from declared {out_shape}")
    return net


def save_weights(net: Network, path):
    with open(path, "wb") as fh:
        fh.write(encode_weights(net))


def load_weights(path) -> Network:
    with open(path, "rb") as fh:
        return decode_weights(fh.read())
