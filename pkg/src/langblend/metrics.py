"""Edit-distance error rates.

CER and WER divide Levenshtein distance by the reference length, so values
above 1.0 are possible when the hypothesis is much longer than the
reference. Transcripts in this package are token-index sequences; for metric
purposes each index maps to one Unicode character (offset 0x100) and fixed
groups of those characters form "words".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidArgumentError

_CHAR_BASE = 0x100


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[len(b)]


def cer(reference: str, hypothesis: str) -> float:
    """Character error rate; reference must be non-empty."""
    if len(reference) == 0:
        raise InvalidArgumentError("cer: empty reference")
    return edit_distance(reference, hypothesis) / len(reference)


def wer(reference: str, hypothesis: str) -> float:
    """Word error rate over whitespace-separated words; reference must have words."""
    ref_words = reference.split()
    if not ref_words:
        raise InvalidArgumentError("wer: reference has no words")
    return edit_distance(ref_words, hypothesis.split()) / len(ref_words)


def tokens_to_text(tokens: Sequence[int], word_group: int = 3) -> str:
    """Render token indices as text: one char per token, spaces every
    `word_group` chars so word-level metrics are defined."""
    if word_group < 1:
        raise InvalidArgumentError("word_group must be >= 1")
    chars = [chr(_CHAR_BASE + int(t)) for t in tokens]
    words = ["".join(chars[i : i + word_group]) for i in range(0, len(chars), word_group)]
    return " ".join(words)


@dataclass(frozen=True)
class MetricsResult:
    """Corpus-level rates: summed distances over summed reference lengths."""

    cer: float
    wer: float
    num_utterances: int


def corpus_metrics(
    references: Sequence[Sequence[int]],
    hypotheses: Sequence[Sequence[int]],
    word_group: int = 3,
) -> MetricsResult:
    if len(references) != len(hypotheses):
        raise InvalidArgumentError("corpus_metrics: length mismatch")
    if not references:
        raise InvalidArgumentError("corpus_metrics: empty corpus")
    char_edits = char_len = word_edits = word_len = 0
    for ref, hyp in zip(references, hypotheses):
        ref_text = tokens_to_text(ref, word_group)
        hyp_text = tokens_to_text(hyp, word_group)
        ref_chars = ref_text.replace(" ", "")
        hyp_chars = hyp_text.replace(" ", "")
        char_edits += edit_distance(ref_chars, hyp_chars)
        char_len += len(ref_chars)
        ref_words = ref_text.split()
        word_edits += edit_distance(ref_words, hyp_text.split())
        word_len += len(ref_words)
    return MetricsResult(
        cer=char_edits / char_len, wer=word_edits / word_len, num_utterances=len(references)
    )
