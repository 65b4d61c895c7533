"""Causal TCN for second-by-second VO2 regression.

Layout: residual blocks of dilated causal convolutions (conv -> layer norm ->
ReLU -> dropout per layer), dilations 1, 2, 4, ... grouped into successive
pairs with the first three grouped together when the depth is odd. The first
block gets a 1x1 convolution on its skip path when the input width differs
from the filter count. The features at the last time step feed a single dense
unit with linear output.

Parameters are stored and serialized in this order, per block: for every conv
layer ``kernel (k, C_in, f)``, ``bias (f,)``, ``ln_gamma (f,)``, ``ln_beta (f,)``;
then, if present, ``skip_kernel (1, n, f)`` and ``skip_bias (f,)``. The head
follows last: ``head_weight (f, 1)``, ``head_bias (1,)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .rng import RngStream

LAYER_NORM_EPS = 1e-5

GRID_FILTERS = (2, 4, 8, 16, 24)
GRID_KERNELS = tuple(range(1, 9))
GRID_DILATIONS = tuple(range(1, 6))


def receptive_field(kernel_size: int, dilation_depth: int) -> int:
    """Number of input steps, present included, that reach one output."""
    if kernel_size < 1 or dilation_depth < 1:
        raise ConfigError("kernel size and dilation depth must be positive")
    return 1 + (kernel_size - 1) * (2 ** dilation_depth - 1)


def block_dilations(dilation_depth: int) -> list[list[int]]:
    """Split dilations ``1..2**(N-1)`` into residual blocks.

    >>> block_dilations(5)
    [[1, 2, 4], [8, 16]]
    """
    if dilation_depth < 1:
        raise ConfigError("dilation depth must be positive")
    dilations = [2 ** i for i in range(dilation_depth)]
    if dilation_depth == 1:
        return [dilations]
    head = 3 if dilation_depth % 2 else 2
    blocks = [dilations[:head]]
    blocks += [dilations[i:i + 2] for i in range(head, dilation_depth, 2)]
    return blocks


@dataclass(frozen=True)
class TcnConfig:
    num_filters: int
    kernel_size: int
    dilation_depth: int
    input_features: int = 5
    dropout_rate: float = 0.2

    def __post_init__(self):
        for name in ("num_filters", "kernel_size", "dilation_depth", "input_features"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.kernel_size, self.dilation_depth)

    def to_dict(self) -> dict:
        return asdict(self)


def full_grid(input_features: int = 5, dropout_rate: float = 0.2) -> list[TcnConfig]:
    """All 200 filter/kernel/depth combinations of the full search."""
    return [TcnConfig(f, k, n, input_features, dropout_rate)
            for f in GRID_FILTERS for k in GRID_KERNELS for n in GRID_DILATIONS]


def param_count(config: TcnConfig) -> int:
    f, k, n = config.num_filters, config.kernel_size, config.input_features
    total = 0
    c_in = n
    for block in block_dilations(config.dilation_depth):
        for _ in block:
            total += c_in * k * f + f + 2 * f
            c_in = f
    if n != f:
        total += n * f + f
    return total + f + 1


@dataclass
class ConvLayer:
    dilation: int
    kernel: ad.Tensor
    bias: ad.Tensor
    gamma: ad.Tensor
    beta: ad.Tensor

    def parameters(self):
        return [self.kernel, self.bias, self.gamma, self.beta]


@dataclass
class ResidualBlock:
    layers: list[ConvLayer]
    skip_kernel: ad.Tensor | None = None
    skip_bias: ad.Tensor | None = None

    def parameters(self):
        params = [p for layer in self.layers for p in layer.parameters()]
        if self.skip_kernel is not None:
            params += [self.skip_kernel, self.skip_bias]
        return params


@dataclass
class _BlockPlan:
    in_pos: np.ndarray
    conv_index: list[np.ndarray]
    skip_index: np.ndarray
    out_pos: np.ndarray


@dataclass
class TcnModel:
    config: TcnConfig
    blocks: list[ResidualBlock]
    head_weight: ad.Tensor
    head_bias: ad.Tensor
    _plans: dict = field(default_factory=dict, repr=False)

    @property
    def receptive_field(self) -> int:
        return self.config.receptive_field

    def parameters(self) -> list[ad.Tensor]:
        params = [p for block in self.blocks for p in block.parameters()]
        return params + [self.head_weight, self.head_bias]

    def named_parameters(self) -> list[tuple[str, ad.Tensor]]:
        return [(p.name, p) for p in self.parameters()]

    def get_weights(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def set_weights(self, weights) -> None:
        params = self.parameters()
        if len(weights) != len(params):
            raise ShapeError("weight list does not match the model")
        for p, w in zip(params, weights):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != p.shape:
                raise ShapeError(f"{p.name}: expected {p.shape}, got {w.shape}")
            p.data = w.copy()

    def _plan(self, length: int, outputs: str) -> tuple[np.ndarray, list[_BlockPlan]]:
        """Work out which time rows every layer must produce.

        With ``outputs='last'`` only the dependency cone of the final step is
        evaluated; the rows skipped can never influence it.
        """
        key = (length, outputs)
        if key in self._plans:
            return self._plans[key]
        k = self.config.kernel_size
        need = np.array([length - 1]) if outputs == "last" else np.arange(length)
        plans = []
        for block in reversed(self.blocks):
            out_pos = need
            chain = [out_pos]
            for layer in reversed(block.layers):
                shifts = (k - 1 - np.arange(k)) * layer.dilation
                src = (chain[0][:, None] - shifts[None, :]).ravel()
                chain.insert(0, np.unique(src[src >= 0]))
            in_pos = np.union1d(chain[0], out_pos)
            chain[0] = in_pos
            index = [ad.conv_index(chain[i], chain[i + 1], k, layer.dilation)
                     for i, layer in enumerate(block.layers)]
            skip_index = np.searchsorted(in_pos, out_pos)
            plans.insert(0, _BlockPlan(in_pos, index, skip_index, out_pos))
            need = in_pos
        result = (need, plans)
        self._plans[key] = result
        return result

    def forward(self, x, training: bool = False, rng: RngStream | None = None,
                outputs: str = "last") -> ad.Tensor:
        """Run the network on ``x`` of shape ``(B, T, n)``.

        Returns shape ``(B,)`` for ``outputs='last'`` (one prediction per
        window, at its final step) or ``(B, T)`` for ``outputs='all'``.
        """
        if outputs not in ("last", "all"):
            raise ValueError("outputs must be 'last' or 'all'")
        xt = x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=np.float64))
        if xt.data.ndim != 3:
            raise ShapeError(f"forward expects (batch, time, features), got {xt.shape}")
        batch, length, n = xt.shape
        if length < 1:
            raise ShapeError("window must have at least one row")
        if n != self.config.input_features:
            raise ShapeError(f"model expects {self.config.input_features} features, got {n}")
        if training and self.config.dropout_rate > 0 and rng is None:
            raise ValueError("training mode needs an rng for dropout")

        in_pos, plans = self._plan(length, outputs)
        h = xt if len(in_pos) == length else ad.take_time(xt, in_pos)
        rate = self.config.dropout_rate
        for block, plan in zip(self.blocks, plans):
            block_in = h
            for layer, index in zip(block.layers, plan.conv_index):
                h = ad.causal_conv1d(h, layer.kernel, layer.bias, layer.dilation, index=index)
                h = ad.layer_norm(h, layer.gamma, layer.beta, LAYER_NORM_EPS)
                h = ad.relu(h)
                h = ad.dropout(h, rate, rng, training)
            skip = block_in if len(plan.skip_index) == len(plan.in_pos) \
                else ad.take_time(block_in, plan.skip_index)
            if block.skip_kernel is not None:
                skip = ad.causal_conv1d(skip, block.skip_kernel, block.skip_bias, 1)
            h = ad.add(h, skip)

        if outputs == "last":
            h = ad.take_time(h, -1)
        out = ad.dense(h, self.head_weight, self.head_bias)
        return _drop_last_axis(out)

    def predict_sequence(self, series) -> np.ndarray:
        """Inference outputs at every row of a ``(T, n)`` series."""
        series = np.asarray(series, dtype=np.float64)
        return self.forward(series[None], outputs="all").data[0]


def _drop_last_axis(t: ad.Tensor) -> ad.Tensor:
    shape = t.shape

    def grads(g):
        return (g.reshape(shape),)

    return ad.Tensor(t.data.reshape(shape[:-1]), _parents=(t,), _backward=grads)


def _glorot(rng: RngStream, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_model(config: TcnConfig, rng: RngStream | None = None) -> TcnModel:
    if not isinstance(config, TcnConfig):
        raise ConfigError("build_model needs a TcnConfig")
    rng = rng or RngStream(0)
    f, k, n = config.num_filters, config.kernel_size, config.input_features
    blocks = []
    c_in = n
    for b, dilations in enumerate(block_dilations(config.dilation_depth)):
        layers = []
        for i, d in enumerate(dilations):
            tag = f"block{b}.conv{i}"
            layers.append(ConvLayer(
                dilation=d,
                kernel=ad.parameter(_glorot(rng, (k, c_in, f), k * c_in, k * f), f"{tag}.kernel"),
                bias=ad.parameter(np.zeros(f), f"{tag}.bias"),
                gamma=ad.parameter(np.ones(f), f"{tag}.ln_gamma"),
                beta=ad.parameter(np.zeros(f), f"{tag}.ln_beta"),
            ))
            c_in = f
        block = ResidualBlock(layers)
        if b == 0 and n != f:
            block.skip_kernel = ad.parameter(_glorot(rng, (1, n, f), n, f), f"block{b}.skip_kernel")
            block.skip_bias = ad.parameter(np.zeros(f), f"block{b}.skip_bias")
        blocks.append(block)
    head_w = ad.parameter(_glorot(rng, (f, 1), f, 1), "head_weight")
    head_b = ad.parameter(np.zeros(1), "head_bias")
    return TcnModel(config, blocks, head_w, head_b)


def count_parameters(model: TcnModel) -> int:
    return sum(p.size for p in model.parameters())


def predict(model: TcnModel, window) -> float:
    """Inference-mode prediction at the last row of a ``(T, n)`` window.

    Windows shorter than the receptive field behave as if preceded by zeros.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] < 1:
        raise ShapeError("window must be a (T, n) array with T >= 1")
    return float(model.forward(window[None], training=False).data[0])
