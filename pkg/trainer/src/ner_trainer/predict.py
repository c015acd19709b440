"""Batch inference: read a corpus, emit predicted spans in the same schema."""

from __future__ import annotations

import json
import os

import torch

from .data import DataError, Sentence, Span, read_sentences, write_sentences
from .encoder import PAD_ID, TokenTagger, build_model, encode_tokens
from .labeling import tags_to_spans
from .tokenization import token_offsets, token_texts

WEIGHTS_FILE = "weights.pt"
CONFIG_FILE = "config.json"


def load_model(model_dir) -> tuple[TokenTagger, dict[str, int], tuple[str, ...]]:
    """Rebuild the trained model from its directory."""
    config_path = os.path.join(model_dir, CONFIG_FILE)
    try:
        with open(config_path, encoding="utf-8") as f:
            config = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{config_path}: unreadable model config: {exc}") from exc
    vocab: dict[str, int] = config["vocab"]
    tagset: tuple[str, ...] = tuple(config["tagset"])
    model = build_model(config["encoder"], len(vocab), len(tagset))
    state = torch.load(os.path.join(model_dir, WEIGHTS_FILE), map_location="cpu")
    model.load_state_dict(state)
    model.eval()
    return model, vocab, tagset


def predict_spans(
    model: TokenTagger,
    vocab: dict[str, int],
    tagset: tuple[str, ...],
    texts: list[str],
    batch_size: int = 8,
) -> list[list[Span]]:
    """Predict spans for each text, in order; batching never reorders."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    offsets = [token_offsets(text) for text in texts]
    for text, offs in zip(texts, offsets):
        if len(offs) > model.spec.max_len:
            raise DataError(
                f"sentence has {len(offs)} tokens, encoder capacity is {model.spec.max_len}"
            )
    results: list[list[Span]] = [[] for _ in texts]
    # Empty texts produce no tokens and therefore no spans; everything else
    # is batched in input order with per-batch padding.
    indexed = [(i, encode_tokens(token_texts(texts[i], offs), vocab)) for i, offs in enumerate(offsets) if offs]
    model.eval()
    with torch.no_grad():
        for chunk_start in range(0, len(indexed), batch_size):
            chunk = indexed[chunk_start : chunk_start + batch_size]
            width = max(len(ids) for _, ids in chunk)
            batch = torch.full((len(chunk), width), PAD_ID, dtype=torch.long)
            pad_mask = torch.ones((len(chunk), width), dtype=torch.bool)
            for row, (_, ids) in enumerate(chunk):
                batch[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
                pad_mask[row, : len(ids)] = False
            logits = model(batch, pad_mask)
            tag_ids = logits.argmax(dim=-1)
            for row, (i, ids) in enumerate(chunk):
                tags = [tagset[t] for t in tag_ids[row, : len(ids)].tolist()]
                results[i] = tags_to_spans(offsets[i], tags)
    return results


def predict(model_dir, input_path, output_path, batch_size: int = 8) -> int:
    """Annotate a corpus file with the model's spans; returns sentence count."""
    model, vocab, tagset = load_model(model_dir)
    sentences = read_sentences(input_path)
    spans = predict_spans(model, vocab, tagset, [s.text for s in sentences], batch_size)
    write_sentences(
        output_path,
        [Sentence(s.id, s.text, tuple(sp)) for s, sp in zip(sentences, spans)],
    )
    return len(sentences)
