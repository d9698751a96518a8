"""Sigmoid CNN 28x28-6c5-2s-12c5-2s-10o: data, training, quantization, I/O.

Conv and dense layers use the logistic activation, pooling is a plain 2x2
mean. Training is mini-batch gradient descent on the squared error against
one-hot targets, 0.5 * sum((y - t)^2) / batch.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
FILE_HEADER = "MTJSNN-WEIGHTS v1"
SHAPE_CHAIN = ((1, 28, 28), (6, 24, 24), (6, 12, 12), (12, 8, 8), (12, 4, 4), (10,))


class MNISTFormatError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Conv:
    weights: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)


@dataclass
class Pool:
    size: tuple = (2, 2)


@dataclass
class Dense:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class NetworkModel:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        check_shapes(self)

    @property
    def convs(self):
        return [l for l in self.layers if isinstance(l, Conv)]

    @property
    def dense(self):
        return self.layers[-1]

    def copy(self):
        out = []
        for l in self.layers:
            if isinstance(l, Pool):
                out.append(Pool(tuple(l.size)))
            else:
                out.append(type(l)(l.weights.copy(), l.bias.copy()))
        return NetworkModel(out)

    def parameters(self):
        """Flat list of the weight and bias arrays, in layer order."""
        ps = []
        for l in self.layers:
            if not isinstance(l, Pool):
                ps += [l.weights, l.bias]
        return ps


def check_shapes(model):
    """Raise ModelFormatError unless the layer chain is 28x28x1 -> ... -> 10."""
    kinds = [type(l).__name__ for l in model.layers]
    if kinds != ["Conv", "Pool", "Conv", "Pool", "Dense"]:
        raise ModelFormatError(f"unexpected layer sequence {kinds}")
    c1, p1, c2, p2, d = model.layers
    if c1.weights.shape != (6, 1, 5, 5) or c1.bias.shape != (6,):
        raise ModelFormatError(f"conv1 shape {c1.weights.shape}")
    if c2.weights.shape != (12, 6, 5, 5) or c2.bias.shape != (12,):
        raise ModelFormatError(f"conv2 shape {c2.weights.shape}")
    if tuple(p1.size) != (2, 2) or tuple(p2.size) != (2, 2):
        raise ModelFormatError("pooling must be 2x2")
    if d.weights.shape != (10, 192) or d.bias.shape != (10,):
        raise ModelFormatError(f"dense shape {d.weights.shape}")


def init_model(seed=0):
    """Random model, weights uniform in +-0.5/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)

    def u(shape, fan_in):
        a = 0.5 / math.sqrt(fan_in)
        return rng.uniform(-a, a, size=shape)

    return NetworkModel([
        Conv(u((6, 1, 5, 5), 25), np.zeros(6)),
        Pool(),
        Conv(u((12, 6, 5, 5), 150), np.zeros(12)),
        Pool(),
        Dense(u((10, 192), 192), np.zeros(10)),
    ])


def zero_model():
    return NetworkModel([
        Conv(np.zeros((6, 1, 5, 5)), np.zeros(6)),
        Pool(),
        Conv(np.zeros((12, 6, 5, 5)), np.zeros(12)),
        Pool(),
        Dense(np.zeros((10, 192)), np.zeros(10)),
    ])


# ---------------------------------------------------------------- data


@dataclass
class Dataset:
    images: np.ndarray  # (n, 28, 28) float in [0, 1]
    labels: np.ndarray  # (n,) int

    def __len__(self):
        return len(self.labels)

    def subset(self, n, start=0):
        return Dataset(self.images[start:start + n], self.labels[start:start + n])


def _read_idx(path, magic, ndim):
    with open(path, "rb") as fh:
        raw = fh.read()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise MNISTFormatError(f"{path}: truncated header")
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise MNISTFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = [int.from_bytes(raw[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise MNISTFormatError(
            f"{path}: truncated payload ({len(raw) - header} of {size} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_mnist(images_path, labels_path):
    """Read an IDX image/label file pair; pixels are scaled by 1/255."""
    images = _read_idx(images_path, IMAGE_MAGIC, 3)
    labels = _read_idx(labels_path, LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise MNISTFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    if images.shape[1:] != (28, 28):
        raise MNISTFormatError(f"images are {images.shape[1:]}, expected 28x28")
    if labels.size and labels.max() > 9:
        raise MNISTFormatError(f"label {labels.max()} outside 0-9")
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64))


# ---------------------------------------------------------------- forward / backward


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _im2col(x, k):
    # (N, C, H, W) -> (N*Ho*Wo, C*k*k)
    n, c, h, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # N C Ho Wo k k
    ho, wo = h - k + 1, w - k + 1
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k), ho, wo


def conv_forward(x, weights, bias):
    """Valid cross-correlation; returns pre-activations (N, O, Ho, Wo) and columns."""
    n = x.shape[0]
    o, _, k, _ = weights.shape
    cols, ho, wo = _im2col(x, k)
    z = cols @ weights.reshape(o, -1).T + bias
    return z.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def pool_forward(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def forward(model, images, keep=False):
    """Class outputs (N, 10) for images (N, 28, 28) or a single (28, 28) image.

    With ``keep=True`` also returns the activations needed by :func:`backward`.
    """
    single = images.ndim == 2
    x = images.reshape(-1, 1, 28, 28)
    c1, _, c2, _, d = model.layers
    z1, cols1 = conv_forward(x, c1.weights, c1.bias)
    a1 = sigmoid(z1)
    p1 = pool_forward(a1)
    z2, cols2 = conv_forward(p1, c2.weights, c2.bias)
    a2 = sigmoid(z2)
    p2 = pool_forward(a2)
    flat = p2.reshape(p2.shape[0], -1)
    y = sigmoid(flat @ d.weights.T + d.bias)
    if keep:
        return y, dict(cols1=cols1, a1=a1, p1=p1, cols2=cols2, a2=a2, flat=flat)
    return y[0] if single else y


def loss(y, targets):
    return 0.5 * np.sum((y - targets) ** 2) / y.shape[0]


def one_hot(labels):
    t = np.zeros((len(labels), 10))
    t[np.arange(len(labels)), labels] = 1.0
    return t


def _col2im(dcols, shape, k):
    n, c, h, w = shape
    ho, wo = h - k + 1, w - k + 1
    d = dcols.reshape(n, ho, wo, c, k, k)
    dx = np.zeros(shape)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + ho, j:j + wo] += d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx


def backward(model, images, targets):
    """Loss and gradients (same order as ``model.parameters()``)."""
    c1, _, c2, _, d = model.layers
    y, s = forward(model, images, keep=True)
    n = y.shape[0]
    dz3 = (y - targets) * y * (1 - y) / n
    g_dw = dz3.T @ s["flat"]
    g_db = dz3.sum(0)
    dp2 = (dz3 @ d.weights).reshape(n, 12, 4, 4)
    da2 = np.repeat(np.repeat(dp2, 2, axis=2), 2, axis=3) / 4.0
    dz2 = da2 * s["a2"] * (1 - s["a2"])
    dz2f = dz2.transpose(0, 2, 3, 1).reshape(-1, 12)
    g_w2 = (dz2f.T @ s["cols2"]).reshape(c2.weights.shape)
    g_b2 = dz2f.sum(0)
    dp1 = _col2im(dz2f @ c2.weights.reshape(12, -1), s["p1"].shape, 5)
    da1 = np.repeat(np.repeat(dp1, 2, axis=2), 2, axis=3) / 4.0
    dz1 = da1 * s["a1"] * (1 - s["a1"])
    dz1f = dz1.transpose(0, 2, 3, 1).reshape(-1, 6)
    g_w1 = (dz1f.T @ s["cols1"]).reshape(c1.weights.shape)
    g_b1 = dz1f.sum(0)
    return loss(y, targets), [g_w1, g_b1, g_w2, g_b2, g_dw, g_db]


def predict(model, images, batch=1000):
    out = []
    for i in range(0, len(images), batch):
        out.append(np.argmax(forward(model, images[i:i + batch]), axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def accuracy(model, data):
    return float(np.mean(predict(model, data.images) == data.labels))


# ---------------------------------------------------------------- training


def train(model, data, lr=1.0, batch=50, epochs=20, seed=0, log=None):
    """Mini-batch gradient descent in place; returns ``(model, epoch_losses)``.

    Shuffling is driven by ``seed`` alone, so two runs from the same initial
    model are bit-identical.
    """
    if lr <= 0 or batch <= 0 or epochs <= 0:
        raise ValueError("lr, batch and epochs must be positive")
    rng = np.random.default_rng(seed)
    targets = one_hot(data.labels)
    params = model.parameters()
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total = 0.0
        n_batches = 0
        for i in range(0, len(order), batch):
            idx = order[i:i + batch]
            L, grads = backward(model, data.images[idx], targets[idx])
            if not np.isfinite(L):
                raise TrainingDiverged(
                    f"loss became {L} in epoch {epoch}; reduce the learning rate")
            for p, g in zip(params, grads):
                p -= lr * g
            total += L
            n_batches += 1
        trace.append(total / n_batches)
        if log is not None:
            log(epoch, trace[-1])
    return model, trace


# ---------------------------------------------------------------- quantization


def codebook(w_max=3.0, bits=4, g_ratio=10.0):
    """Non-zero weight magnitudes realizable by one synapse."""
    return np.linspace(w_max / g_ratio, w_max, 2**bits)


def quantize_weights(w, w_max=3.0, bits=4, g_ratio=10.0):
    levels = codebook(w_max, bits, g_ratio)
    mag = np.minimum(np.abs(w), w_max)
    q = levels[np.abs(mag[..., None] - levels).argmin(axis=-1)]
    q[mag < w_max / (2.0 * g_ratio)] = 0.0
    return np.sign(w) * q


def clip_and_quantize(model, w_max=3.0, bits=4, g_ratio=10.0):
    """Clip all parameters to +-w_max and snap weights to the codebook.

    Biases are clipped only; they become programmable bias currents rather
    than crossbar conductances.
    """
    out = model.copy()
    for l in out.layers:
        if isinstance(l, Pool):
            continue
        l.weights[...] = quantize_weights(l.weights, w_max, bits, g_ratio)
        np.clip(l.bias, -w_max, w_max, out=l.bias)
    return out, codebook(w_max, bits, g_ratio)


# ---------------------------------------------------------------- persistence


def _fmt(values):
    return " ".join(f"{v:.9g}" for v in np.ravel(values))


def save_model(model, path):
    lines = [FILE_HEADER]
    for l in model.layers:
        if isinstance(l, Conv):
            o, i, kh, kw = l.weights.shape
            lines.append(f"conv {o} {i} {kh} {kw}")
            lines += [_fmt(k) for k in l.weights.reshape(o * i, kh * kw)]
            lines.append(f"bias {o}")
            lines.append(_fmt(l.bias))
        elif isinstance(l, Pool):
            lines.append(f"pool {l.size[0]} {l.size[1]}")
        else:
            o, i = l.weights.shape
            lines.append(f"dense {o} {i}")
            lines += [_fmt(r) for r in l.weights]
            lines.append(f"bias {o}")
            lines.append(_fmt(l.bias))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    with open(path) as fh:
        first = fh.readline().strip()
        if first != FILE_HEADER:
            raise ModelFormatError(f"unsupported header {first!r}")
        tokens = fh.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise ModelFormatError("unexpected end of file")
        chunk = tokens[pos:pos + n]
        pos += n
        return chunk

    def numbers(n):
        try:
            arr = np.array([float(t) for t in take(n)])
        except ValueError as exc:
            raise ModelFormatError(str(exc)) from None
        if not np.all(np.isfinite(arr)):
            raise ModelFormatError("non-finite value in model file")
        return arr

    def bias(o):
        tag = take(2)
        if tag[0] != "bias" or int(tag[1]) != o:
            raise ModelFormatError(f"expected 'bias {o}', got {' '.join(tag)!r}")
        return numbers(o)

    layers = []
    while pos < len(tokens):
        kind = take(1)[0]
        try:
            if kind == "conv":
                o, i, kh, kw = map(int, take(4))
                w = numbers(o * i * kh * kw).reshape(o, i, kh, kw)
                layers.append(Conv(w, bias(o)))
            elif kind == "pool":
                layers.append(Pool(tuple(map(int, take(2)))))
            elif kind == "dense":
                o, i = map(int, take(2))
                w = numbers(o * i).reshape(o, i)
                layers.append(Dense(w, bias(o)))
            else:
                raise ModelFormatError(f"unknown layer kind {kind!r}")
        except ValueError as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(str(exc)) from None
    return NetworkModel(layers)
