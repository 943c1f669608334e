"""Deterministic out-of-vocabulary vector synthesis.

A missing word gets a vector built from its character n-grams: each
n-gram seeds the pinned pseudorandom generator, the per-gram vectors
are summed in sorted-gram order (so the result is bit-identical across
runs and platforms), and the sum is normalized. On stores that carry an
n-gram index, that base vector is then interpolated 30/70 with the
normalized mean of the vectors of the most string-similar stored keys.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import Tier, normalize
from .errors import EmptyWord, NoCandidates, TierUnsupported, ZeroVector
from .prng import hash32, prvg

if TYPE_CHECKING:
    from .reader import StoreReader

# Sentinel padding characters; control codes cannot collide with stored
# keys, which never contain whitespace or C0 controls in practice.
BOW = "\x01"
EOW = "\x02"

_RUN = re.compile(r"(.)\1{2,}", re.DOTALL)


@dataclass(frozen=True)
class OovContext:
    """Parameters of the OOV pipeline; defaults match the store format."""

    ngram_min: int = 3
    ngram_max: int = 6
    bow_char: str = BOW
    eow_char: str = EOW
    alpha: float = 0.3   # weight of the pseudorandom base vector
    beta: float = 0.7    # weight of the string-match mean
    match_k: int = 3
    pool_cap: int = 1000

    def __post_init__(self):
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise ValueError("require 1 <= ngram_min <= ngram_max")
        if self.alpha < 0 or self.beta < 0 or abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError("alpha and beta must be nonnegative and sum to 1")
        if self.match_k < 1:
            raise ValueError("match_k must be >= 1")


def shrink_repeats(word: str) -> str:
    """Collapse every run of 3+ identical characters to exactly 2."""
    return _RUN.sub(r"\1\1", word)


def char_ngrams(word: str, nmin: int = 3, nmax: int = 6,
                bow: str = BOW, eow: str = EOW) -> set[str]:
    """Unique substrings of lengths nmin..nmax of the padded word."""
    word = word.strip()
    if not word:
        raise EmptyWord("cannot enumerate n-grams of an empty word")
    padded = bow + word + eow
    grams = set()
    for n in range(nmin, nmax + 1):
        if n > len(padded):
            break
        for i in range(len(padded) - n + 1):
            grams.add(padded[i:i + n])
    return grams


def oov_base_vector(word: str, d: int, ctx: OovContext = OovContext()) -> np.ndarray:
    """Unit float32 vector fully determined by the word's n-gram set.

    Per-gram vectors are added in sorted-gram order; if the sum is
    degenerate (norm below the zero threshold) the word itself seeds a
    fallback vector.
    """
    word = word.strip()
    if not word:
        raise EmptyWord("cannot synthesize a vector for an empty word")
    grams = sorted(char_ngrams(word, ctx.ngram_min, ctx.ngram_max,
                               ctx.bow_char, ctx.eow_char))
    acc = np.zeros(d, dtype=np.float64)
    for gram in grams:
        acc += prvg(hash32(gram), d)
    try:
        return normalize(acc)
    except ZeroVector:
        return normalize(prvg(hash32(word), d))


def _gram_weights(word: str, ctx: OovContext) -> dict[str, float]:
    """Per-gram weights: 1.0 when the gram's first occurrence begins in
    the first half of the padded string, 0.4 otherwise (stem-heavy)."""
    padded = ctx.bow_char + word + ctx.eow_char
    length = len(padded)
    weights: dict[str, float] = {}
    # Sorted insertion pins dict order, so downstream float accumulation
    # cannot vary with per-process hash randomization.
    for gram in sorted(char_ngrams(word, ctx.ngram_min, ctx.ngram_max,
                                   ctx.bow_char, ctx.eow_char)):
        first = padded.find(gram)
        weights[gram] = 1.0 if 2 * first < length else 0.4
    return weights


def _weighted_jaccard(wa: dict[str, float], wb: dict[str, float]) -> float:
    num = 0.0
    den = 0.0
    for gram, w in wa.items():
        other = wb.get(gram)
        if other is None:
            den += w
        else:
            num += min(w, other)
            den += max(w, other)
    for gram, w in wb.items():
        if gram not in wa:
            den += w
    return num / den if den else 0.0


def similarity_score(key: str, word: str, ctx: OovContext = OovContext()) -> float:
    """String-similarity score between a stored key and a query word.

    score = WJ * (0.7 + 0.3 * min(L)/max(L)) + B, where WJ is the
    weighted Jaccard over padded n-gram sets of the repeat-shrunk
    strings, L the post-shrink lengths, and B a first/last-character
    bonus of 0.05 each that applies only to short query words (<= 7
    characters post-shrink).
    """
    ks = shrink_repeats(key.strip())
    ws = shrink_repeats(word.strip())
    if not ks or not ws:
        raise EmptyWord("similarity_score needs non-empty strings")
    wj = _weighted_jaccard(_gram_weights(ks, ctx), _gram_weights(ws, ctx))
    shorter, longer = sorted((len(ks), len(ws)))
    score = wj * (0.7 + 0.3 * shorter / longer)
    if len(ws) <= 7:
        if ks[0] == ws[0]:
            score += 0.05
        if ks[-1] == ws[-1]:
            score += 0.05
    return score


def string_similarity_candidates(reader: "StoreReader", word: str,
                                 ctx: OovContext = OovContext(),
                                 pool_cap: int | None = None) -> list[tuple[int, float]]:
    """Stored keys ranked by string similarity to `word`.

    Candidates are keys sharing at least one padded n-gram with the
    repeat-shrunk word, pooled up to `pool_cap` by shared-gram count,
    then scored and sorted descending (ties by key ascending).
    """
    if reader.metadata.tier < Tier.MEDIUM:
        raise TierUnsupported("string matching needs the n-gram index (MEDIUM or HEAVY store)")
    word = word.strip()
    if not word:
        raise EmptyWord("cannot match an empty word")
    cap = ctx.pool_cap if pool_cap is None else pool_cap
    shrunk = shrink_repeats(word)
    shared: dict[int, int] = {}
    for gram in char_ngrams(shrunk, ctx.ngram_min, ctx.ngram_max,
                            ctx.bow_char, ctx.eow_char):
        for ordinal in reader.ngram_postings(gram):
            shared[ordinal] = shared.get(ordinal, 0) + 1
    if not shared:
        return []
    pool = sorted(shared.items(), key=lambda item: (-item[1], item[0]))[:cap]
    scored = []
    for ordinal, _ in pool:
        key = reader.key_at(ordinal)
        scored.append((ordinal, similarity_score(key, word, ctx), key))
    scored.sort(key=lambda item: (-item[1], item[2]))
    return [(ordinal, score) for ordinal, score, _ in scored]


def match_mean(reader: "StoreReader", word: str, k: int | None = None,
               ctx: OovContext = OovContext()) -> np.ndarray:
    """Normalized mean vector of the top-k most string-similar keys."""
    top_k = ctx.match_k if k is None else k
    candidates = string_similarity_candidates(reader, word, ctx)
    if not candidates:
        raise NoCandidates(f"no stored key shares an n-gram with {word!r}")
    acc = np.zeros(reader.metadata.dimension, dtype=np.float64)
    chosen = candidates[:top_k]
    for ordinal, _ in chosen:
        acc += reader.read_vector(ordinal)
    try:
        return normalize(acc / len(chosen))
    except ZeroVector:
        # Candidate vectors cancelled out; treat as no usable matches.
        raise NoCandidates(f"string matches for {word!r} have a zero mean vector") from None


def oov_vector(reader: "StoreReader", word: str,
               ctx: OovContext = OovContext()) -> np.ndarray:
    """Synthesized unit vector for a word absent from the store.

    LIGHT stores (no n-gram index) and words with no string matches get
    the pseudorandom base vector; otherwise the base is interpolated
    alpha/beta with the match mean and re-normalized.
    """
    word = word.strip()
    if not word:
        raise EmptyWord("cannot synthesize a vector for an empty word")
    base = oov_base_vector(word, reader.metadata.dimension, ctx)
    if reader.metadata.tier < Tier.MEDIUM:
        return base
    try:
        matched = match_mean(reader, word, ctx.match_k, ctx)
    except NoCandidates:
        return base
    combined = ctx.alpha * base.astype(np.float64) + ctx.beta * matched.astype(np.float64)
    try:
        return normalize(combined)
    except ZeroVector:
        return base
