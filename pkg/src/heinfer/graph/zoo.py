"""Reference networks with seeded random weights, and a synthetic digit source."""

from __future__ import annotations

import numpy as np

from .model import Node, PlainModel, build_model


def _init(rng, shape, fan_in, gain=1.0):
    return (rng.standard_normal(shape) * gain / np.sqrt(fan_in)).astype(np.float32)


def _conv_net(name, act, bias, seed, size, filters, hidden, classes, padding=(0, 1)):
    rng = np.random.default_rng(seed)
    conv_out = filters * ((size + sum(padding) - 5) // 2 + 1) ** 2
    weights = {"conv.w": _init(rng, (filters, 1, 5, 5), 25)}
    if bias:
        weights["conv.b"] = _init(rng, (filters,), 25, 0.5)
    weights["fc1.w"] = _init(rng, (conv_out, hidden), conv_out)
    if bias:
        weights["fc1.b"] = _init(rng, (hidden,), hidden, 0.5)
    weights["fc2.w"] = _init(rng, (hidden, classes), hidden)
    if bias:
        weights["fc2.b"] = _init(rng, (classes,), classes, 0.5)
    b = (lambda ref: ref) if bias else (lambda ref: None)
    act_op = "Square" if act == "square" else "Relu"
    nodes = [
        Node("x", "Input", attrs={"shape": [1, size, size]}),
        Node(
            "conv",
            "Convolution",
            ("x",),
            {"stride": [2, 2], "window": [5, 5], "filters": filters, "padding": list(padding)},
            "conv.w",
            b("conv.b"),
        ),
        Node("act1", act_op, ("conv",)),
        Node("flat", "Reshape", ("act1",), {"shape": [conv_out]}),
        Node("fc1", "Dot", ("flat",), {}, "fc1.w", b("fc1.b")),
        Node("act2", act_op, ("fc1",)),
        Node("fc2", "Dot", ("act2",), {}, "fc2.w", b("fc2.b")),
        Node("y", "Output", ("fc2",)),
    ]
    return build_model(nodes, weights, name)


def cryptonets(seed: int = 0) -> PlainModel:
    """Conv 5x5/2 (5 filters, 845 outputs) + x^2, FC 845->100 + x^2, FC 100->10."""
    return _conv_net("cryptonets", "square", False, seed, 28, 5, 100, 10)


def cryptonets_relu(seed: int = 0, packing: str = "real") -> PlainModel:
    """The same shape with biases and ReLU activations."""
    m = _conv_net("cryptonets-relu", "relu", True, seed, 28, 5, 100, 10)
    m.packing = packing
    return m


def cryptonets_mini(seed: int = 0, act: str = "square") -> PlainModel:
    """CryptoNets-shaped but small: 8x8 input, 45 conv outputs, FC 45->8->4."""
    return _conv_net(f"cryptonets-mini-{act}", act, act != "square", seed, 8, 5, 8, 4)


def relu_mlp(seed: int = 0, sizes=(6, 5, 3)) -> PlainModel:
    """FC + ReLU + FC, multiply-free between refreshes beyond plain products."""
    rng = np.random.default_rng(seed)
    a, h, o = sizes
    weights = {
        "w1": _init(rng, (a, h), a),
        "b1": _init(rng, (h,), h, 0.5),
        "w2": _init(rng, (h, o), h),
        "b2": _init(rng, (o,), o, 0.5),
    }
    nodes = [
        Node("x", "Input", attrs={"shape": [a]}),
        Node("fc1", "Dot", ("x",), {}, "w1", "b1"),
        Node("relu", "Relu", ("fc1",)),
        Node("fc2", "Dot", ("relu",), {}, "w2", "b2"),
        Node("y", "Output", ("fc2",)),
    ]
    return build_model(nodes, weights, "relu-mlp")


def identity_model(shape=(4,)) -> PlainModel:
    nodes = [Node("x", "Input", attrs={"shape": list(shape)}), Node("y", "Output", ("x",))]
    return build_model(nodes, {}, "identity")


def constant_chain(depth: int, value: float = 1.0) -> PlainModel:
    """``depth`` constant multiplies, then Constant -> Multiply -> Add -> Output."""
    weights = {"one": np.float32([value]), "c": np.float32([value]), "b": np.float32([0.5])}
    nodes = [Node("x", "Input", attrs={"shape": [1]}), Node("k", "Constant", weight_ref="one")]
    prev = "x"
    for i in range(depth):
        nodes.append(Node(f"m{i}", "Multiply", (prev, "k")))
        prev = f"m{i}"
    nodes += [
        Node("constant", "Constant", weight_ref="c"),
        Node("multiply", "Multiply", (prev, "constant")),
        Node("bias", "Constant", weight_ref="b"),
        Node("add", "Add", ("multiply", "bias")),
        Node("y", "Output", ("add",)),
    ]
    return build_model(nodes, weights, "constant-chain")


# ---------------------------------------------------------------- synthetic digits

_SEGMENTS = {
    # (y0, x0, y1, x1) in a 20x12 box, seven-segment layout
    "a": (0, 0, 0, 11),
    "b": (0, 11, 9, 11),
    "c": (10, 11, 19, 11),
    "d": (19, 0, 19, 11),
    "e": (10, 0, 19, 0),
    "f": (0, 0, 9, 0),
    "g": (9, 0, 9, 11),
}
_DIGITS = ["abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg"]


def synthetic_digits(count: int, seed: int = 0, size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """MNIST-like (count, 1, size, size) images in [0, 1] and their labels."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=count)
    out = np.zeros((count, 1, size, size), dtype=np.float32)
    scale = size / 28.0
    for i, d in enumerate(labels):
        img = np.zeros((size, size), dtype=np.float32)
        oy = 4 * scale + rng.integers(-2, 3) * scale
        ox = 8 * scale + rng.integers(-2, 3) * scale
        for seg in _DIGITS[d]:
            y0, x0, y1, x1 = _SEGMENTS[seg]
            for t in np.linspace(0.0, 1.0, 24):
                y = int(round(oy + (y0 + (y1 - y0) * t) * scale))
                x = int(round(ox + (x0 + (x1 - x0) * t) * scale))
                img[max(y - 1, 0) : y + 1, max(x - 1, 0) : x + 1] = 1.0
        img += rng.normal(0.0, 0.05, img.shape).astype(np.float32)
        out[i, 0] = np.clip(img, 0.0, 1.0)
    return out, labels
