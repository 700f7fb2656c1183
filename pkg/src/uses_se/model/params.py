"""Parameter layout and initialization of the USES network."""

from __future__ import annotations

from collections import OrderedDict
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from uses_se.config import UsesConfig
from uses_se.exceptions import ConfigError
from uses_se.numerics.layers import AttentionParams, init_uniform
from uses_se.numerics.tensor import DTYPES, Tensor

MEMORY_STD = 0.02
FFN_EXPANSION = 4
KERNEL = 3


@dataclass
class UsesModel:
    """Configuration plus named parameter tensors, in a fixed creation order."""

    cfg: UsesConfig
    params: OrderedDict[str, Tensor] = field(default_factory=OrderedDict)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.params.items()

    @property
    def dtype(self) -> np.dtype[Any]:
        return next(iter(self.params.values())).dtype

    def attention(self, prefix: str) -> AttentionParams:
        p = self.params
        return AttentionParams(
            wq=p[f"{prefix}.wq"], bq=p[f"{prefix}.bq"],
            wk=p[f"{prefix}.wk"], bk=p[f"{prefix}.bk"],
            wv=p[f"{prefix}.wv"], bv=p[f"{prefix}.bv"],
            wo=p[f"{prefix}.wo"], bo=p[f"{prefix}.bo"],
        )

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()


def block_has_tac(cfg: UsesConfig, index: int) -> bool:
    return index < cfg.K_s


def parameter_shapes(cfg: UsesConfig) -> list[tuple[str, tuple[int, ...], int | None]]:
    """Return (name, shape, fan_in) for every parameter; fan_in None marks zeros/ones/special."""
    D, N, H, S, G = cfg.D, cfg.N, cfg.H, cfg.num_outputs, cfg.G
    k = KERNEL
    shapes: list[tuple[str, tuple[int, ...], int | None]] = [
        ("encoder.conv.weight", (D, 2, k, k), 2 * k * k),
        ("encoder.conv.bias", (D,), None),
        ("encoder.norm.gain", (D,), None),
        ("encoder.norm.bias", (D,), None),
        ("encoder.bottleneck.weight", (N, D, 1, 1), D),
        ("encoder.bottleneck.bias", (N,), None),
    ]
    hidden = FFN_EXPANSION * N
    for b in range(cfg.K):
        if block_has_tac(cfg, b):
            tac = f"blocks.{b}.tac"
            shapes += [
                (f"{tac}.w1", (H, N), N),
                (f"{tac}.b1", (H,), None),
                (f"{tac}.slope1", (1,), None),
                (f"{tac}.w2", (N, 2 * H), 2 * H),
                (f"{tac}.b2", (N,), None),
                (f"{tac}.slope2", (1,), None),
            ]
        for path in ("freq", "time"):
            layer = f"blocks.{b}.{path}"
            shapes += [
                (f"{layer}.norm1.gain", (N,), None),
                (f"{layer}.norm1.bias", (N,), None),
            ]
            for proj in ("q", "k", "v", "o"):
                shapes += [
                    (f"{layer}.attn.w{proj}", (N, N), N),
                    (f"{layer}.attn.b{proj}", (N,), None),
                ]
            shapes += [
                (f"{layer}.norm2.gain", (N,), None),
                (f"{layer}.norm2.bias", (N,), None),
                (f"{layer}.ffn.w1", (hidden, N), N),
                (f"{layer}.ffn.b1", (hidden,), None),
                (f"{layer}.ffn.w2", (N, hidden), hidden),
                (f"{layer}.ffn.b2", (N,), None),
            ]
    shapes += [
        ("decoder.slope", (1,), None),
        ("decoder.pointwise.weight", (D, N, 1, 1), N),
        ("decoder.pointwise.bias", (D,), None),
        # transposed conv kernels are (in, out, kh, kw)
        ("decoder.trconv.weight", (D, 2 * S, k, k), D * k * k),
        ("decoder.trconv.bias", (2 * S,), None),
    ]
    if G > 0:
        shapes += [("mem1", (1, N, 1, G), None), ("mem2", (1, N, 1, G), None)]
    return shapes


def init_params(cfg: UsesConfig, seed: int = 0, dtype: str = "f64") -> UsesModel:
    """Deterministically initialize a model from ``seed``.

    Weights are fan-in scaled uniform, biases zero, layer-norm gains one,
    PReLU slopes 0.25 and memory tokens N(0, 0.02).
    """
    if dtype not in DTYPES:
        raise ConfigError(f"unknown dtype '{dtype}' (choose f32 or f64)")
    np_dtype = DTYPES[dtype]
    rng = np.random.default_rng(seed)
    params: OrderedDict[str, Tensor] = OrderedDict()
    for name, shape, fan_in in parameter_shapes(cfg):
        if fan_in is not None:
            t = init_uniform(rng, shape, fan_in, np_dtype)
        elif name.endswith(".gain"):
            t = Tensor(np.ones(shape), requires_grad=True, dtype=np_dtype)
        elif "slope" in name:
            t = Tensor(np.full(shape, 0.25), requires_grad=True, dtype=np_dtype)
        elif name.startswith("mem"):
            t = Tensor(rng.normal(0.0, MEMORY_STD, size=shape), requires_grad=True, dtype=np_dtype)
        else:
            t = Tensor(np.zeros(shape), requires_grad=True, dtype=np_dtype)
        t.name = name
        params[name] = t
    return UsesModel(cfg, params)


def param_count(model: UsesModel | UsesConfig) -> int:
    """Exact number of scalar parameters; depends only on the configuration."""
    cfg = model.cfg if isinstance(model, UsesModel) else model
    return sum(int(np.prod(shape)) for _, shape, _ in parameter_shapes(cfg))
