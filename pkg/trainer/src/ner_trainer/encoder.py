"""Token-classification models behind a registry of encoder identifiers.

Only identifiers in the registry can be built; anything else (for example
a model-hub name that would need a download) raises EncoderUnavailable so
callers fail loudly instead of fetching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import torch
from torch import nn


class EncoderUnavailable(ValueError):
    """Raised when the requested encoder identifier cannot be built."""


PAD_ID = 0
UNK_ID = 1
_RESERVED = ("<pad>", "<unk>")


def build_vocab(tokens: Iterable[str]) -> dict[str, int]:
    """First-seen token order, after the reserved padding/unknown slots."""
    vocab = {name: i for i, name in enumerate(_RESERVED)}
    for token in tokens:
        if token not in vocab:
            vocab[token] = len(vocab)
    return vocab


def encode_tokens(tokens: Iterable[str], vocab: dict[str, int]) -> list[int]:
    return [vocab.get(token, UNK_ID) for token in tokens]


@dataclass(frozen=True)
class EncoderSpec:
    d_model: int
    n_heads: int
    n_layers: int
    d_feedforward: int
    max_len: int
    dropout: float


_REGISTRY: dict[str, EncoderSpec] = {
    # Small enough to train from scratch on a CPU in seconds.
    "tiny-de": EncoderSpec(64, 2, 2, 128, 512, 0.1),
}


def available_encoders() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


class TokenTagger(nn.Module):
    """Embeddings, a small transformer encoder, and a per-token head."""

    def __init__(self, vocab_size: int, n_tags: int, spec: EncoderSpec):
        super().__init__()
        if vocab_size < len(_RESERVED) or n_tags < 1:
            raise ValueError("vocab_size and n_tags must cover the task")
        self.spec = spec
        self.embed = nn.Embedding(vocab_size, spec.d_model, padding_idx=PAD_ID)
        self.position = nn.Embedding(spec.max_len, spec.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=spec.d_model,
            nhead=spec.n_heads,
            dim_feedforward=spec.d_feedforward,
            dropout=spec.dropout,
            batch_first=True,
        )
        # The nested-tensor fast path is a moving prototype; the plain path
        # keeps outputs stable across batch compositions.
        self.encoder = nn.TransformerEncoder(layer, spec.n_layers, enable_nested_tensor=False)
        self.head = nn.Linear(spec.d_model, n_tags)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        # ids: [batch, seq]; pad_mask: True at padding positions.
        positions = torch.arange(ids.shape[1], device=ids.device)
        hidden = self.embed(ids) + self.position(positions)[None, :, :]
        hidden = self.encoder(hidden, src_key_padding_mask=pad_mask)
        return self.head(hidden)


def build_model(name: str, vocab_size: int, n_tags: int) -> TokenTagger:
    spec = _REGISTRY.get(name)
    if spec is None:
        raise EncoderUnavailable(
            f"encoder unavailable: {name!r}; registered: {', '.join(available_encoders())}"
        )
    return TokenTagger(vocab_size, n_tags, spec)
