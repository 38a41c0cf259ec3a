"""Random context-phrase sampling from batch transcripts, and target augmentation.

During training, each batch gets a phrase list drawn from its own reference
transcripts: a reference is kept with probability `p_keep`, and from each kept
reference k ~ U{1..n_phrases} word n-grams are drawn with n ~ U{1..n_order}
(n re-drawn per phrase, clamped to the reference length). Matched phrases in a
reference are then marked with a `</bias>` token in the training target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .vocab import BIAS_END, SPACE, graphemize, normalize


@dataclass
class SamplerConfig:
    p_keep: float = 0.5
    n_phrases: int = 1
    n_order: int = 4

    def __post_init__(self):
        if not 0.0 <= self.p_keep <= 1.0:
            raise ValueError(f"p_keep must be in [0, 1], got {self.p_keep}")
        if self.n_phrases < 1 or self.n_order < 1:
            raise ValueError("n_phrases and n_order must be >= 1")


def draw_phrases(
    references: Sequence[str], cfg: SamplerConfig, rng: np.random.Generator
) -> list[str]:
    """Raw draw, duplicates included; one rng stream drives the whole batch."""
    phrases: list[str] = []
    for ref in references:
        if rng.random() >= cfg.p_keep:
            continue
        words = normalize(ref).split()
        if not words:
            continue
        k = int(rng.integers(1, cfg.n_phrases + 1))
        for _ in range(k):
            n = min(int(rng.integers(1, cfg.n_order + 1)), len(words))
            start = int(rng.integers(0, len(words) - n + 1))
            phrases.append(" ".join(words[start : start + n]))
    return phrases


def sample_bias_list(
    references: Sequence[str], cfg: SamplerConfig, rng: np.random.Generator
) -> list[str]:
    """Deduplicated phrase list for one batch (order of first appearance)."""
    return list(dict.fromkeys(draw_phrases(references, cfg, rng)))


def annotate_reference(reference: str, phrases: Sequence[str]) -> list[tuple[int, int]]:
    """Word spans of phrase matches: leftmost scan, longest match, no overlap."""
    words = normalize(reference).split()
    split_phrases = [p.split() for p in phrases if p]
    spans: list[tuple[int, int]] = []
    i = 0
    while i < len(words):
        best = 0
        for pw in split_phrases:
            n = len(pw)
            if n > best and words[i : i + n] == pw:
                best = n
        if best:
            spans.append((i, i + best))
            i += best
        else:
            i += 1
    return spans


def insert_bias_tokens(reference: str, phrases: Sequence[str]) -> list[str]:
    """Grapheme target with a `</bias>` token right after each matched span."""
    words = normalize(reference).split()
    ends = {e for _, e in annotate_reference(reference, phrases)}
    tokens: list[str] = []
    for i, word in enumerate(words):
        if i > 0:
            tokens.append(SPACE)
        tokens.extend(graphemize(word))
        if i + 1 in ends:
            tokens.append(BIAS_END)
    return tokens
