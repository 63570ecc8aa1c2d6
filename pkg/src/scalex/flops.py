"""Transformer FLOPs and parameter accounting.

Multiply-accumulates count as 2 FLOPs and the backward pass costs twice the
forward pass. Relative positional encodings, layer norms and biases are
ignored.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

from scalex.data_model import ModelShape
from scalex.errors import NumericalError, ValidationError

INCLUDE_EMBEDDINGS = "include_embeddings"
EXCLUDE_EMBEDDINGS = "exclude_embeddings"


@dataclass(frozen=True)
class AttentionFlops:
    kqv: float
    key_query: float
    softmax: float
    softmax_query: float
    final_linear: float

    @property
    def total(self) -> float:
        return self.kqv + self.key_query + self.softmax + self.softmax_query + self.final_linear


@dataclass(frozen=True)
class FlopsBreakdown:
    """Forward-pass FLOPs for one sequence of ``seq_len`` tokens."""

    embeddings: float
    attention_per_layer: AttentionFlops
    dense_per_layer: float
    logits: float
    n_layers: int
    forward_total: float
    train_total: float

    def rows(self) -> list[tuple[str, float]]:
        att = self.attention_per_layer
        return [
            ("embeddings", self.embeddings),
            ("attention.kqv", att.kqv),
            ("attention.key_query", att.key_query),
            ("attention.softmax", att.softmax),
            ("attention.softmax_query", att.softmax_query),
            ("attention.final_linear", att.final_linear),
            ("dense", self.dense_per_layer),
            ("logits", self.logits),
            ("forward_total", self.forward_total),
            ("train_total", self.train_total),
        ]


def forward_flops(shape: ModelShape) -> FlopsBreakdown:
    """Itemized forward-pass FLOPs of ``shape`` for one sequence.

    Every term is a product of integers, so the result is exact as long as it
    stays below 2**53; beyond that it is correctly rounded float64.
    """
    s = float(shape.seq_len)
    d = float(shape.d_model)
    v = float(shape.vocab_size)
    width = float(shape.attn_width)

    embeddings = 2 * s * v * d
    attention = AttentionFlops(
        kqv=2 * 3 * s * d * width,
        key_query=2 * s * s * width,
        softmax=3 * shape.n_heads * s * s,
        softmax_query=2 * s * s * width,
        final_linear=2 * s * width * d,
    )
    dense = 2 * s * (d * shape.ffw_size + d * shape.ffw_size)
    logits = 2 * s * d * v
    forward = embeddings + shape.n_layers * (attention.total + dense) + logits
    if not math.isfinite(forward):
        raise NumericalError(f"FLOPs overflow for {shape}")
    return FlopsBreakdown(
        embeddings=embeddings,
        attention_per_layer=attention,
        dense_per_layer=dense,
        logits=logits,
        n_layers=shape.n_layers,
        forward_total=forward,
        train_total=3 * forward,
    )


def train_flops(shape: ModelShape, n_tokens: float) -> float:
    """Training FLOPs for ``n_tokens`` tokens; partial sequences are prorated."""
    if not n_tokens > 0:
        raise ValidationError(f"n_tokens must be positive, got {n_tokens!r}", "n_tokens")
    return forward_flops(shape).train_total * (n_tokens / shape.seq_len)


def flops_per_token(shape: ModelShape) -> float:
    return forward_flops(shape).train_total / shape.seq_len


def approx_flops(n_params: float, n_tokens: float) -> float:
    """The ``6 N D`` approximation."""
    return 6.0 * n_params * n_tokens


def count_params(shape: ModelShape, embedding_policy: str = "tied") -> int:
    """Parameter count including embeddings.

    Counts the embedding matrix (twice if ``untied``), the four attention
    projections and the two feed-forward matrices per layer. Layer norms,
    biases and positional encodings are not counted.
    """
    if embedding_policy not in ("tied", "untied"):
        raise ValueError(f"embedding_policy must be 'tied' or 'untied', got {embedding_policy!r}")
    emb = shape.vocab_size * shape.d_model
    if embedding_policy == "untied":
        emb *= 2
    per_layer = 4 * shape.d_model * shape.attn_width + 2 * shape.d_model * shape.ffw_size
    return emb + shape.n_layers * per_layer


def flop_ratio(shape: ModelShape, n_params: float, policy: str = EXCLUDE_EMBEDDINGS) -> float:
    """Per-sequence training FLOPs of ``shape`` divided by ``6 N seq_len``.

    With ``exclude_embeddings`` the embedding and logits terms are dropped from
    the numerator.
    """
    if not n_params > 0:
        raise ValidationError(f"n_params must be positive, got {n_params!r}", "n_params")
    br = forward_flops(shape)
    if policy == INCLUDE_EMBEDDINGS:
        forward = br.forward_total
    elif policy == EXCLUDE_EMBEDDINGS:
        forward = br.n_layers * (br.attention_per_layer.total + br.dense_per_layer)
    else:
        raise ValueError(f"unknown policy {policy!r}")
    return 3 * forward / approx_flops(n_params, shape.seq_len)


# ------------------------------------------------------------ bundled data


def _read_resource(name: str) -> list[dict[str, str]]:
    text = resources.files("scalex.resources").joinpath(name).read_text(encoding="utf-8")
    return list(csv.DictReader(text.splitlines()))


def _shape_from_row(row: dict[str, str], vocab_size: int, seq_len: int) -> ModelShape:
    return ModelShape(
        n_layers=int(row["n_layers"]),
        d_model=int(row["d_model"]),
        ffw_size=int(row["ffw_size"]),
        key_size=int(row["key_size"]),
        n_heads=int(row["n_heads"]),
        vocab_size=vocab_size,
        seq_len=seq_len,
    )


def bundled_models(vocab_size: int = 32000, seq_len: int = 2048) -> list[tuple[float, ModelShape]]:
    """All model configurations listed with their published sizes.

    Returns ``(n_params, shape)`` pairs. Sequence length and vocabulary size
    are not listed with the configurations and default to 2048 and 32000.
    """
    return [
        (float(r["params_million"]) * 1e6, _shape_from_row(r, vocab_size, seq_len))
        for r in _read_resource("models.csv")
    ]


def reference_flop_ratios(vocab_size: int = 32000, seq_len: int = 2048) -> list[tuple[float, ModelShape, float]]:
    """Published FLOP ratio rows as ``(n_params, shape, ratio)``."""
    return [
        (
            float(r["params_million"]) * 1e6,
            _shape_from_row(r, vocab_size, seq_len),
            float(r["published_ratio"]),
        )
        for r in _read_resource("flop_ratios.csv")
    ]
