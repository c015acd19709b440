"""Word-level tokens with character offsets."""

from __future__ import annotations

import re

# Alphanumeric runs or single punctuation marks; whitespace never appears
# inside a token, so offsets map cleanly back to the surface text.
_TOKEN = re.compile(r"\w+|[^\w\s]")


def token_offsets(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _TOKEN.finditer(text)]


def token_texts(text: str, offsets) -> list[str]:
    return [text[start:end] for start, end in offsets]
