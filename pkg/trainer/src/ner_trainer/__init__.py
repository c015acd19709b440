"""Toy-scale token-classification trainer over JSON-lines NER corpora."""

from .data import (
    DataError,
    Sentence,
    Span,
    read_labels,
    read_sentences,
    validate_spans,
    write_sentences,
)
from .encoder import (
    EncoderUnavailable,
    TokenTagger,
    available_encoders,
    build_model,
    build_vocab,
    encode_tokens,
)
from .labeling import OUTSIDE, spans_to_tags, tags_to_spans
from .predict import load_model, predict, predict_spans
from .tokenization import token_offsets, token_texts
from .train import EpochStats, TrainConfig, TrainResult, char_f1, train

__version__ = "0.1.0"
