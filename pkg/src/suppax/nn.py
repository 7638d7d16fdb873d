"""MLP construction with supplementary-axis injection, init, optimizers.

The three comparison models share one builder:

  * kind "A": bare MLP  in -> H -> out;
  * kind "B": A plus one extra coordinate at the injection site carrying
    an externally computed feature value (no incoming weights);
  * kind "C": A plus one extra *free* node at the same site: a standard
    learned ReLU unit fed by the same inputs as the layer it joins, so B
    and C have equal feature-map width there.

The default site concatenates after the first hidden layer; ``site="input"``
instead widens the raw input (x1, x2, feature).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, add_bias, concat, matmul, relu, sigmoid

__all__ = [
    "LayerSpec",
    "InjectionSpec",
    "Network",
    "build_model",
    "init_params",
    "SGD",
    "Adam",
    "training_error",
    "save_checkpoint",
    "load_checkpoint",
]

ACTIVATIONS = ("relu", "identity", "softmax-at-loss", "sigmoid-at-loss")


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dims must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class InjectionSpec:
    """Where and what to concatenate into the running activation.

    site:   "input" or "hidden" (after hidden layer ``layer``, 1-based).
    source: "feature" (externally supplied values, width >= 1) or "free"
            (learned ReLU units with the same inputs as the joined layer).
    """

    site: str = "hidden"
    layer: int = 1
    width: int = 1
    source: str = "feature"
    feature: str | None = None

    def __post_init__(self):
        if self.site not in ("input", "hidden"):
            raise ValueError(f"unknown injection site {self.site!r}")
        if self.source not in ("feature", "free"):
            raise ValueError(f"unknown injection source {self.source!r}")
        if self.source == "feature" and self.width < 1:
            raise ValueError("feature injection needs width >= 1")
        if self.width < 0:
            raise ValueError("injection width must be non-negative")
        if self.source == "feature" and self.feature is None:
            raise ValueError("feature injection needs a feature name")
        if self.source == "free" and self.feature is not None:
            raise ValueError("free injection takes no feature name")


class Network:
    """An MLP with parameter tensors and an optional injection.

    Free injection after a hidden layer is realized structurally: that
    layer is built ``width`` units wider, which is exactly "a learned
    ReLU unit fed by the same inputs as the layer it joins". Free
    injection at the input keeps a separate little unit whose output is
    appended to the raw input.
    """

    def __init__(self, layers: list[LayerSpec], injection: InjectionSpec | None = None):
        if not layers:
            raise ValueError("network needs at least one layer")
        self.injection = injection
        self.layers = layers
        self.free_w: Tensor | None = None
        self.free_b: Tensor | None = None

        inj_extra = 0
        inj_at_input = 0
        if injection is not None:
            if injection.site == "hidden":
                if not (1 <= injection.layer < len(layers)):
                    raise ValueError("hidden injection layer out of range")
                inj_extra = injection.width
            else:
                inj_at_input = injection.width

        # chained dims must agree once the injected width is accounted for
        expected = layers[0].in_dim
        for i, spec in enumerate(layers):
            if spec.in_dim != expected:
                raise ValueError(
                    f"layer {i} expects {spec.in_dim} inputs, previous stage"
                    f" provides {expected}"
                )
            expected = spec.out_dim
            if injection is not None and injection.site == "hidden" and injection.layer == i + 1:
                if injection.source == "feature":
                    expected += inj_extra
                # free units are folded into this layer's out_dim already

        self.weights = [Tensor(np.zeros((s.in_dim, s.out_dim)), requires_grad=True) for s in layers]
        self.biases = [Tensor(np.zeros(s.out_dim), requires_grad=True) for s in layers]
        if injection is not None and injection.site == "input" and injection.source == "free":
            base_in = layers[0].in_dim - inj_at_input
            self.free_w = Tensor(np.zeros((base_in, injection.width)), requires_grad=True)
            self.free_b = Tensor(np.zeros(injection.width), requires_grad=True)

    @property
    def in_dim(self) -> int:
        base = self.layers[0].in_dim
        if self.injection is not None and self.injection.site == "input":
            base -= self.injection.width
        return base

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        if self.free_w is not None:
            params.append(self.free_w)
            params.append(self.free_b)
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def _check_supplementary(self, batch_rows: int, supplementary) -> None:
        inj = self.injection
        needs = inj is not None and inj.source == "feature"
        if needs and supplementary is None:
            raise ValueError("network requires a supplementary tensor")
        if not needs and supplementary is not None:
            raise ValueError("network takes no supplementary tensor")
        if needs:
            sdata = supplementary.data if isinstance(supplementary, Tensor) else np.asarray(supplementary)
            if sdata.shape != (batch_rows, inj.width):
                raise ValueError(
                    f"supplementary must be ({batch_rows}, {inj.width}), got {sdata.shape}"
                )

    def forward(self, batch: Tensor, supplementary: Tensor | None = None) -> Tensor:
        """Logits for a (b, in_dim) batch, building the autograd graph."""
        self._check_supplementary(batch.data.shape[0], supplementary)
        inj = self.injection
        h = batch
        if inj is not None and inj.site == "input":
            if inj.source == "feature":
                h = concat(h, supplementary)
            else:
                unit = relu(add_bias(matmul(h, self.free_w), self.free_b))
                h = concat(h, unit)
        for i, spec in enumerate(self.layers):
            h = add_bias(matmul(h, self.weights[i]), self.biases[i])
            if spec.activation == "relu":
                h = relu(h)
            elif spec.activation == "sigmoid-at-loss" and i == len(self.layers) - 1:
                pass  # logits; the loss applies the sigmoid
            if inj is not None and inj.site == "hidden" and inj.layer == i + 1:
                if inj.source == "feature":
                    h = concat(h, supplementary)
        return h

    def forward_values(self, batch: np.ndarray, supplementary: np.ndarray | None = None) -> np.ndarray:
        """Graph-free forward; arithmetic matches ``forward`` bit for bit."""
        self._check_supplementary(np.asarray(batch).shape[0], supplementary)
        inj = self.injection
        h = np.asarray(batch, dtype=np.float64)
        if inj is not None and inj.site == "input":
            if inj.source == "feature":
                h = np.concatenate([h, np.asarray(supplementary, dtype=np.float64)], axis=1)
            else:
                unit = np.maximum(h @ self.free_w.data + self.free_b.data, 0.0)
                h = np.concatenate([h, unit], axis=1)
        for i, spec in enumerate(self.layers):
            h = h @ self.weights[i].data + self.biases[i].data
            if spec.activation == "relu":
                h = np.maximum(h, 0.0)
            if inj is not None and inj.site == "hidden" and inj.layer == i + 1:
                if inj.source == "feature":
                    h = np.concatenate([h, np.asarray(supplementary, dtype=np.float64)], axis=1)
        return h

    def hidden_patterns(self, batch: np.ndarray) -> np.ndarray:
        """ReLU on/off bits for every hidden unit, per sample (b, n_bits).

        Only defined for injection-free nets or free-widened ones (no
        supplementary input needed).
        """
        inj = self.injection
        h = np.asarray(batch, dtype=np.float64)
        bits = []
        if inj is not None and inj.source == "feature":
            raise ValueError("activation patterns need a supplementary-free net")
        if inj is not None and inj.site == "input" and inj.source == "free":
            pre = h @ self.free_w.data + self.free_b.data
            bits.append(pre > 0.0)
            h = np.concatenate([h, np.maximum(pre, 0.0)], axis=1)
        for i, spec in enumerate(self.layers):
            pre = h @ self.weights[i].data + self.biases[i].data
            if spec.activation == "relu":
                bits.append(pre > 0.0)
                h = np.maximum(pre, 0.0)
            else:
                h = pre
        if not bits:
            return np.zeros((h.shape[0], 0), dtype=bool)
        return np.concatenate(bits, axis=1)


def build_model(
    kind: str,
    base_hidden: int = 3,
    feature: str | None = None,
    site: str = "hidden",
    layer: int = 1,
    in_dim: int = 2,
    out_dim: int = 2,
    width: int = 1,
) -> Network:
    """Construct comparison model A, B, or C (see module docstring)."""
    if kind not in ("A", "B", "C"):
        raise ValueError(f"unknown model kind {kind!r}")
    if kind == "B" and feature is None:
        raise ValueError("model B requires a feature name")
    if kind != "B" and feature is not None:
        raise ValueError(f"model {kind} takes no feature name")

    if kind == "A":
        layers = [
            LayerSpec(in_dim, base_hidden, "relu"),
            LayerSpec(base_hidden, out_dim, "softmax-at-loss"),
        ]
        return Network(layers)

    if kind == "B":
        inj = InjectionSpec(site=site, layer=layer, width=width, source="feature", feature=feature)
        if site == "input":
            layers = [
                LayerSpec(in_dim + width, base_hidden, "relu"),
                LayerSpec(base_hidden, out_dim, "softmax-at-loss"),
            ]
        else:
            layers = [
                LayerSpec(in_dim, base_hidden, "relu"),
                LayerSpec(base_hidden + width, out_dim, "softmax-at-loss"),
            ]
        return Network(layers, inj)

    # kind C: free node(s) at the same site
    inj = InjectionSpec(site=site, layer=layer, width=width, source="free")
    if site == "input":
        layers = [
            LayerSpec(in_dim + width, base_hidden, "relu"),
            LayerSpec(base_hidden, out_dim, "softmax-at-loss"),
        ]
    else:
        layers = [
            LayerSpec(in_dim, base_hidden + width, "relu"),
            LayerSpec(base_hidden + width, out_dim, "softmax-at-loss"),
        ]
    return Network(layers, inj)


def init_params(net: Network, seed: int, scheme: str = "uniform-he") -> None:
    """He-scaled weight init (variance 2/fan_in), zero biases.

    Each parameter slot gets its own child stream of ``seed``, so two
    networks sharing a layer shape at the same slot draw identical
    values for the same seed.
    """
    if scheme not in ("uniform-he", "normal-he"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    n_slots = len(net.weights) + (1 if net.free_w is not None else 0)
    children = np.random.SeedSequence(seed).spawn(n_slots)

    def draw(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
        if scheme == "uniform-he":
            limit = np.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, shape)
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)

    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        rng = np.random.Generator(np.random.PCG64(children[i]))
        w.data = draw(rng, w.data.shape[0], w.data.shape)
        b.data = np.zeros_like(b.data)
        w.zero_grad()
        b.zero_grad()
    if net.free_w is not None:
        rng = np.random.Generator(np.random.PCG64(children[-1]))
        net.free_w.data = draw(rng, net.free_w.data.shape[0], net.free_w.data.shape)
        net.free_b.data = np.zeros_like(net.free_b.data)
        net.free_w.zero_grad()
        net.free_b.zero_grad()


class SGD:
    def __init__(self, lr: float):
        self.lr = lr
        self.steps = 0

    def step(self, params: list[Tensor]) -> None:
        for p in params:
            if p.grad is None:
                raise ValueError("parameter has no gradient; run backward first")
            p.data -= self.lr * p.grad
        self.steps += 1


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: list[Tensor]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p.data) for p in params]
            self._v = [np.zeros_like(p.data) for p in params]
        if len(params) != len(self._m):
            raise ValueError("parameter list changed under the optimizer")
        self.steps += 1
        t = self.steps
        for p, m, v in zip(params, self._m, self._v):
            if p.grad is None:
                raise ValueError("parameter has no gradient; run backward first")
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1**t)
            vhat = v / (1.0 - self.beta2**t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def training_error(net: Network, inputs: np.ndarray, labels: np.ndarray,
                   supplementary: np.ndarray | None = None) -> float:
    """Fraction of samples with argmax logit != label (ties -> lower index)."""
    logits = net.forward_values(inputs, supplementary)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred != np.asarray(labels)))


_MAGIC = b"SPAX"
_VERSION = 1
_ACT_CODE = {a: i for i, a in enumerate(ACTIVATIONS)}
_SITE_CODE = {"input": 1, "hidden": 2}
_SOURCE_CODE = {"feature": 1, "free": 2}


def save_checkpoint(net: Network, path) -> None:
    """Flat little-endian binary: versioned header then float64 params."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<i", _VERSION))
        f.write(struct.pack("<i", len(net.layers)))
        for spec in net.layers:
            f.write(struct.pack("<iii", spec.in_dim, spec.out_dim, _ACT_CODE[spec.activation]))
        inj = net.injection
        if inj is None:
            f.write(struct.pack("<iiii", 0, 0, 0, 0))
            f.write(struct.pack("<i", 0))
        else:
            f.write(struct.pack(
                "<iiii", _SITE_CODE[inj.site], inj.layer, inj.width, _SOURCE_CODE[inj.source]
            ))
            name = (inj.feature or "").encode("utf-8")
            f.write(struct.pack("<i", len(name)))
            f.write(name)
        for w, b in zip(net.weights, net.biases):
            f.write(w.data.astype("<f8").tobytes())
            f.write(b.data.astype("<f8").tobytes())
        if net.free_w is not None:
            f.write(net.free_w.data.astype("<f8").tobytes())
            f.write(net.free_b.data.astype("<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise ValueError("not a network checkpoint (bad magic)")
    off = 4

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise ValueError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (version,) = take("<i")
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n_layers,) = take("<i")
    layers = []
    acts = {v: k for k, v in _ACT_CODE.items()}
    for _ in range(n_layers):
        ind, outd, act = take("<iii")
        layers.append(LayerSpec(ind, outd, acts[act]))
    site_c, layer, width, source_c = take("<iiii")
    (name_len,) = take("<i")
    name = blob[off:off + name_len].decode("utf-8") if name_len else None
    off += name_len
    injection = None
    if site_c:
        sites = {v: k for k, v in _SITE_CODE.items()}
        sources = {v: k for k, v in _SOURCE_CODE.items()}
        injection = InjectionSpec(site=sites[site_c], layer=layer, width=width,
                                  source=sources[source_c], feature=name)
    net = Network(layers, injection)

    def take_floats(shape):
        nonlocal off
        n = int(np.prod(shape))
        size = 8 * n
        if off + size > len(blob):
            raise ValueError("truncated checkpoint")
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += size
        return arr

    for w, b in zip(net.weights, net.biases):
        w.data = take_floats(w.data.shape)
        b.data = take_floats(b.data.shape)
    if net.free_w is not None:
        net.free_w.data = take_floats(net.free_w.data.shape)
        net.free_b.data = take_floats(net.free_b.data.shape)
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    return net
