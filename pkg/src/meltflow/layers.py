"""LSTM, Transformer-encoder and TCN regressors on the autodiff core.

All models share the same contract: input is a (batch, window, features)
tensor (a bare (window, features) input is promoted to batch 1), output
is a (batch, 1) prediction. ``predict`` runs in inference mode and
returns a flat numpy array. Weights use seeded Glorot-uniform
initialisation; biases start at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, ParameterError

LAYERNORM_EPS = 1e-5


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _ensure_batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return x.reshape((1,) + x.shape), True
    if x.ndim == 3:
        return x, False
    raise DimensionError(f"expected (window, features) or (batch, window, features), got {x.shape}")


@dataclass
class Dense:
    w: Tensor
    b: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, n_in: int, n_out: int) -> "Dense":
        return cls(w=_param(glorot_uniform(rng, (n_in, n_out), n_in, n_out)), b=_param(np.zeros(n_out)))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.matmul(x, self.w) + self.b

    def named(self, prefix: str):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


@dataclass
class LayerNorm:
    gamma: Tensor
    beta: Tensor

    @classmethod
    def create(cls, width: int) -> "LayerNorm":
        return cls(gamma=_param(np.ones(width)), beta=_param(np.zeros(width)))

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return (centered / ad.sqrt(var + LAYERNORM_EPS)) * self.gamma + self.beta

    def named(self, prefix: str):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta", self.beta)]


class _Regressor:
    """Shared plumbing: parameter registry, prediction, serialization."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        raise NotImplementedError

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def predict(self, x: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            out = self.forward(Tensor(np.asarray(x, dtype=np.float64)), training=False)
        return out.data.reshape(-1)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            if name not in arrays:
                raise ParameterError(f"missing parameter {name!r} in serialized arrays")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DimensionError(f"parameter {name!r}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmLayer:
    """One recurrent layer: gate weights act on the concatenation [h_prev, x_t]."""

    w_f: Tensor
    w_i: Tensor
    w_c: Tensor
    w_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    @classmethod
    def create(cls, rng: np.random.Generator, n_in: int, hidden: int) -> "LstmLayer":
        def w():
            return _param(glorot_uniform(rng, (hidden + n_in, hidden), hidden + n_in, hidden))

        def b():
            return _param(np.zeros(hidden))

        return cls(w_f=w(), w_i=w(), w_c=w(), w_o=w(), b_f=b(), b_i=b(), b_c=b(), b_o=b())

    def named(self, prefix: str):
        return [
            (f"{prefix}.{n}", getattr(self, n))
            for n in ("w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o")
        ]


def lstm_cell(layer: LstmLayer, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step.

    f = sigmoid(w_f.[h, x] + b_f), i = sigmoid(w_i.[h, x] + b_i),
    c_hat = tanh(w_c.[h, x] + b_c), o = sigmoid(w_o.[h, x] + b_o),
    c_t = f*c_prev + i*c_hat, h_t = o*tanh(c_t).
    """
    z = ad.concat([h_prev, x_t], axis=1)
    f = ad.sigmoid(ad.matmul(z, layer.w_f) + layer.b_f)
    i = ad.sigmoid(ad.matmul(z, layer.w_i) + layer.b_i)
    c_hat = ad.tanh(ad.matmul(z, layer.w_c) + layer.b_c)
    o = ad.sigmoid(ad.matmul(z, layer.w_o) + layer.b_o)
    c_t = f * c_prev + i * c_hat
    h_t = o * ad.tanh(c_t)
    return h_t, c_t


class LstmRegressor(_Regressor):
    """Stacked LSTM with a single linear unit on the final hidden state."""

    def __init__(
        self,
        n_features: int,
        hidden_size: int = 64,
        n_layers: int = 1,
        dropout: float = 0.0,
        seed: int = 0,
    ):
        if n_features < 1 or hidden_size < 1 or n_layers < 1:
            raise ParameterError("n_features, hidden_size and n_layers must be positive")
        if not 0.0 <= dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {dropout}")
        self.n_features = n_features
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.dropout = dropout
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = [
            LstmLayer.create(rng, n_features if k == 0 else hidden_size, hidden_size)
            for k in range(n_layers)
        ]
        self.head = Dense.create(rng, hidden_size, 1)
        self._drop_rng = np.random.default_rng(rng.integers(2**63))

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        x, _ = _ensure_batched(x)
        if x.shape[2] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {x.shape[2]}")
        batch, window = x.shape[0], x.shape[1]
        seq = x
        h = None
        for k, layer in enumerate(self.layers):
            h = Tensor(np.zeros((batch, self.hidden_size)))
            c = Tensor(np.zeros((batch, self.hidden_size)))
            steps = []
            for t in range(window):
                h, c = lstm_cell(layer, seq[:, t, :], h, c)
                steps.append(h.reshape(batch, 1, self.hidden_size))
            if k < self.n_layers - 1:
                seq = ad.dropout(ad.concat(steps, axis=1), self.dropout, self._drop_rng, training)
        final = ad.dropout(h, self.dropout, self._drop_rng, training)
        return self.head(final)

    def named_parameters(self):
        named = []
        for k, layer in enumerate(self.layers):
            named.extend(layer.named(f"layer{k}"))
        named.extend(self.head.named("head"))
        return named

    def config(self) -> dict:
        return {
            "n_features": self.n_features,
            "hidden_size": self.hidden_size,
            "n_layers": self.n_layers,
            "dropout": self.dropout,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Transformer encoder
# ---------------------------------------------------------------------------


def positional_encoding(window: int, d_model: int, base: float = 10000.0) -> np.ndarray:
    """Sinusoidal position table: sin on even columns, cos on odd columns.

    Column pair 2i uses angular frequency 1 / base^(2i/d_model).
    """
    if d_model % 2 != 0:
        raise ParameterError(f"d_model must be even for sin/cos pairing, got {d_model}")
    if window < 1 or d_model < 2:
        raise ParameterError("window and d_model must be positive")
    pos = np.arange(window, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)
    angles = pos / np.power(base, i2 / d_model)
    pe = np.zeros((window, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


@dataclass
class AttentionParams:
    """Projections for one multi-head attention block.

    Queries, keys and values are projected from the model width to
    n_heads * head_size; w_o maps the concatenated heads back to the
    model width, so any (heads, head size) pair is valid.
    """

    w_q: Dense
    w_k: Dense
    w_v: Dense
    w_o: Dense
    n_heads: int
    head_size: int

    @classmethod
    def create(cls, rng, width: int, n_heads: int, head_size: int | None) -> "AttentionParams":
        if n_heads < 1:
            raise ParameterError(f"n_heads must be positive, got {n_heads}")
        if head_size is None:
            if width % n_heads != 0:
                raise ParameterError(
                    f"model width {width} is not divisible into {n_heads} heads; "
                    "pass head_size explicitly"
                )
            head_size = width // n_heads
        if head_size < 1:
            raise ParameterError(f"head_size must be positive, got {head_size}")
        inner = n_heads * head_size
        return cls(
            w_q=Dense.create(rng, width, inner),
            w_k=Dense.create(rng, width, inner),
            w_v=Dense.create(rng, width, inner),
            w_o=Dense.create(rng, inner, width),
            n_heads=n_heads,
            head_size=head_size,
        )

    def named(self, prefix: str):
        out = []
        for tag, dense in (("q", self.w_q), ("k", self.w_k), ("v", self.w_v), ("o", self.w_o)):
            out.extend(dense.named(f"{prefix}.w_{tag}"))
        return out


def multi_head_attention(
    x: Tensor, attn: AttentionParams, return_probs: bool = False
) -> Tensor | tuple[Tensor, Tensor]:
    """Scaled dot-product attention over the window axis, per head.

    Scores are softmax(Q K^T / sqrt(head_size)); the per-head outputs are
    concatenated and mapped back to the model width by w_o.
    """
    x3, squeeze = _ensure_batched(x)
    batch, window = x3.shape[0], x3.shape[1]
    heads, size = attn.n_heads, attn.head_size

    def split(t: Tensor) -> Tensor:
        return t.reshape(batch, window, heads, size).swapaxes(1, 2)

    q = split(attn.w_q(x3))
    k = split(attn.w_k(x3))
    v = split(attn.w_v(x3))
    scores = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(size))
    probs = ad.softmax_rows(scores)
    ctx = ad.matmul(probs, v).swapaxes(1, 2).reshape(batch, window, heads * size)
    out = attn.w_o(ctx)
    if squeeze:
        out = out.reshape(window, -1)
    return (out, probs) if return_probs else out


@dataclass
class EncoderBlock:
    attn: AttentionParams
    norm_attn: LayerNorm
    ff_in: Dense
    ff_out: Dense
    norm_ff: LayerNorm

    @classmethod
    def create(cls, rng, width, n_heads, head_size, ff_dim) -> "EncoderBlock":
        return cls(
            attn=AttentionParams.create(rng, width, n_heads, head_size),
            norm_attn=LayerNorm.create(width),
            ff_in=Dense.create(rng, width, ff_dim),
            ff_out=Dense.create(rng, ff_dim, width),
            norm_ff=LayerNorm.create(width),
        )

    def named(self, prefix: str):
        return (
            self.attn.named(f"{prefix}.attn")
            + self.norm_attn.named(f"{prefix}.norm_attn")
            + self.ff_in.named(f"{prefix}.ff_in")
            + self.ff_out.named(f"{prefix}.ff_out")
            + self.norm_ff.named(f"{prefix}.norm_ff")
        )


class TransformerRegressor(_Regressor):
    """Encoder-only transformer for scalar regression.

    Input projection to a fixed even model width, additive sinusoidal
    position encoding, N blocks of attention and feed-forward sublayers
    with post-residual layer normalisation, then an MLP head with
    dropout on the last-timestep representation.
    """

    def __init__(
        self,
        n_features: int,
        n_blocks: int = 2,
        n_heads: int = 2,
        head_size: int | None = None,
        ff_dim: int = 16,
        width: int = 16,
        mlp_units: tuple[int, ...] = (32,),
        dropout: float = 0.1,
        mlp_dropout: float = 0.1,
        pe_base: float = 10000.0,
        seed: int = 0,
    ):
        if n_features < 1 or n_blocks < 1 or ff_dim < 1 or width < 1:
            raise ParameterError("n_features, n_blocks, ff_dim and width must be positive")
        if width % 2 != 0:
            raise ParameterError(f"model width must be even for position encoding, got {width}")
        for rate in (dropout, mlp_dropout):
            if not 0.0 <= rate < 1.0:
                raise ParameterError(f"dropout rates must lie in [0, 1), got {rate}")
        self.n_features = n_features
        self.n_blocks = n_blocks
        self.width = width
        self.ff_dim = ff_dim
        self.mlp_units = tuple(int(u) for u in mlp_units)
        self.dropout = dropout
        self.mlp_dropout = mlp_dropout
        self.pe_base = float(pe_base)
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.embed = Dense.create(rng, n_features, width)
        self.blocks = [
            EncoderBlock.create(rng, width, n_heads, head_size, ff_dim) for _ in range(n_blocks)
        ]
        self.mlp = []
        n_in = width
        for units in self.mlp_units:
            if units < 1:
                raise ParameterError(f"mlp units must be positive, got {units}")
            self.mlp.append(Dense.create(rng, n_in, units))
            n_in = units
        self.head = Dense.create(rng, n_in, 1)
        self._drop_rng = np.random.default_rng(rng.integers(2**63))
        self._pe_cache: dict[int, np.ndarray] = {}

    @property
    def n_heads(self) -> int:
        return self.blocks[0].attn.n_heads

    @property
    def head_size(self) -> int:
        return self.blocks[0].attn.head_size

    def _pe(self, window: int) -> np.ndarray:
        if window not in self._pe_cache:
            self._pe_cache[window] = positional_encoding(window, self.width, self.pe_base)
        return self._pe_cache[window]

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        x, _ = _ensure_batched(x)
        if x.shape[2] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {x.shape[2]}")
        window = x.shape[1]
        h = self.embed(x) + Tensor(self._pe(window))
        for block in self.blocks:
            a = multi_head_attention(h, block.attn)
            a = ad.dropout(a, self.dropout, self._drop_rng, training)
            h = block.norm_attn(h + a)
            f = ad.relu(block.ff_in(h))
            f = ad.dropout(f, self.dropout, self._drop_rng, training)
            f = block.ff_out(f)
            h = block.norm_ff(h + f)
        last = h[:, window - 1, :]
        for dense in self.mlp:
            last = ad.relu(dense(last))
            last = ad.dropout(last, self.mlp_dropout, self._drop_rng, training)
        return self.head(last)

    def named_parameters(self):
        named = self.embed.named("embed")
        for k, block in enumerate(self.blocks):
            named.extend(block.named(f"block{k}"))
        for k, dense in enumerate(self.mlp):
            named.extend(dense.named(f"mlp{k}"))
        named.extend(self.head.named("head"))
        return named

    def config(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_blocks": self.n_blocks,
            "n_heads": self.n_heads,
            "head_size": self.head_size,
            "ff_dim": self.ff_dim,
            "width": self.width,
            "mlp_units": list(self.mlp_units),
            "dropout": self.dropout,
            "mlp_dropout": self.mlp_dropout,
            "pe_base": self.pe_base,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# TCN
# ---------------------------------------------------------------------------


@dataclass
class TcnBlock:
    """Two dilated causal convolutions plus the residual projection."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    proj: Tensor | None

    @classmethod
    def create(cls, rng, c_in: int, filters: int, kernel: int) -> "TcnBlock":
        def conv_w(ci):
            return _param(glorot_uniform(rng, (kernel, ci, filters), kernel * ci, kernel * filters))

        proj = None
        if c_in != filters:
            proj = _param(glorot_uniform(rng, (c_in, filters), c_in, filters))
        return cls(w1=conv_w(c_in), b1=_param(np.zeros(filters)), w2=conv_w(filters), b2=_param(np.zeros(filters)), proj=proj)

    def named(self, prefix: str):
        out = [
            (f"{prefix}.w1", self.w1),
            (f"{prefix}.b1", self.b1),
            (f"{prefix}.w2", self.w2),
            (f"{prefix}.b2", self.b2),
        ]
        if self.proj is not None:
            out.append((f"{prefix}.proj", self.proj))
        return out


def tcn_residual_block(
    x: Tensor,
    block: TcnBlock,
    level: int,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """conv-relu-dropout twice at dilation 2^level, plus the residual input."""
    if level < 0:
        raise ParameterError(f"level must be >= 0, got {level}")
    dilation = 2**level
    h = ad.relu(ad.conv1d_causal(x, block.w1, dilation) + block.b1)
    if training and dropout > 0.0:
        h = ad.dropout(h, dropout, rng, training)
    h = ad.relu(ad.conv1d_causal(h, block.w2, dilation) + block.b2)
    if training and dropout > 0.0:
        h = ad.dropout(h, dropout, rng, training)
    res = x if block.proj is None else ad.matmul(x, block.proj)
    return h + res


class TcnRegressor(_Regressor):
    """Stacked residual TCN blocks with doubling dilation and a linear head.

    The receptive field over L blocks of kernel k is
    1 + 2*(k-1)*(2^L - 1) timesteps.
    """

    def __init__(
        self,
        n_features: int,
        n_blocks: int = 1,
        n_filters: int = 32,
        kernel_size: int = 3,
        dropout: float = 0.0,
        seed: int = 0,
    ):
        if n_features < 1 or n_blocks < 1 or n_filters < 1 or kernel_size < 1:
            raise ParameterError("n_features, n_blocks, n_filters and kernel_size must be positive")
        if not 0.0 <= dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {dropout}")
        self.n_features = n_features
        self.n_blocks = n_blocks
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.dropout = dropout
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.blocks = [
            TcnBlock.create(rng, n_features if k == 0 else n_filters, n_filters, kernel_size)
            for k in range(n_blocks)
        ]
        self.head = Dense.create(rng, n_filters, 1)
        self._drop_rng = np.random.default_rng(rng.integers(2**63))

    @property
    def receptive_field(self) -> int:
        return 1 + 2 * (self.kernel_size - 1) * (2**self.n_blocks - 1)

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        x, _ = _ensure_batched(x)
        if x.shape[2] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {x.shape[2]}")
        h = x
        for level, block in enumerate(self.blocks):
            h = tcn_residual_block(
                h, block, level, dropout=self.dropout, rng=self._drop_rng, training=training
            )
        last = h[:, x.shape[1] - 1, :]
        return self.head(last)

    def named_parameters(self):
        named = []
        for k, block in enumerate(self.blocks):
            named.extend(block.named(f"block{k}"))
        named.extend(self.head.named("head"))
        return named

    def config(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_blocks": self.n_blocks,
            "n_filters": self.n_filters,
            "kernel_size": self.kernel_size,
            "dropout": self.dropout,
            "seed": self.seed,
        }
