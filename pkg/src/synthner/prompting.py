"""Few-shot prompt assembly from pre-annotated example sentences.

The prompt is the markup encoding of every example, one per line, followed by
a bare ``<s>`` on its own line that invites the model to continue with a new
sentence. No natural-language task instruction is used.

Two bundled example sets ship with the package: ``prompt_examples_de.txt``,
twelve German medical sentences reproduced verbatim (their ninth line carries
a nested open tag where a close tag was clearly intended, kept as-is so the
historical prompt is reproducible byte-for-byte), and a corrected variant
``prompt_examples_de_corrected.txt`` with that tag fixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .corpus import AnnotatedSentence
from .markup import SENTENCE_CLOSE, SENTENCE_OPEN, encode_sentence

__all__ = [
    "Prompt",
    "build_prompt",
    "build_prompt_from_markup",
    "load_bundled_examples",
    "BUNDLED_EXAMPLES",
    "BUNDLED_EXAMPLES_CORRECTED",
]

BUNDLED_EXAMPLES = "prompt_examples_de.txt"
BUNDLED_EXAMPLES_CORRECTED = "prompt_examples_de_corrected.txt"


@dataclass(frozen=True)
class Prompt:
    text: str
    example_count: int

    def __post_init__(self) -> None:
        if self.example_count > 0 and not self.text.endswith("\n" + SENTENCE_OPEN):
            raise ValueError("prompt must end with a newline followed by <s>")
        closes = self.text.count(SENTENCE_CLOSE)
        if closes != self.example_count:
            raise ValueError(
                f"prompt has {closes} {SENTENCE_CLOSE!r} occurrences for "
                f"{self.example_count} examples"
            )


def build_prompt(examples: Sequence[AnnotatedSentence]) -> Prompt:
    """Encode examples, join with single newlines, append the trailing ``<s>``.

    There is no newline after the trailing ``<s>``: generation continues on
    the same line.
    """
    if not examples:
        raise ValueError("prompt needs at least one example sentence")
    lines = [encode_sentence(s) for s in examples]
    return Prompt(text="\n".join(lines) + "\n" + SENTENCE_OPEN, example_count=len(lines))


def build_prompt_from_markup(lines: Sequence[str]) -> Prompt:
    """Assemble a prompt from already-encoded markup lines, verbatim.

    This is the byte-exact path for bundled fixture files, which may contain
    lines that no valid sentence could encode to.
    """
    lines = [l for l in lines if l.strip()]
    if not lines:
        raise ValueError("prompt needs at least one example line")
    return Prompt(text="\n".join(lines) + "\n" + SENTENCE_OPEN, example_count=len(lines))


def load_bundled_examples(name: str = BUNDLED_EXAMPLES) -> list[str]:
    """Markup lines of a bundled example set."""
    text = resources.files("synthner.fixtures").joinpath(name).read_text("utf-8")
    return [l for l in text.splitlines() if l.strip()]
