"""N-gram statistics, BLEU, self-BLEU, and threshold deduplication.

Unsmoothed BLEU with clipped (modified) n-gram precision and a brevity
penalty against the closest reference length. The only concession to short
texts: the n-gram order is capped at the candidate length, so a two-token
question is scored as BLEU-2 instead of collapsing to zero under BLEU-4.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass

DEFAULT_MAX_N = 4
DEFAULT_DEDUP_THRESHOLD = 0.8


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip punctuation off token edges."""
    tokens = []
    for chunk in text.lower().split():
        token = _strip_edge_punctuation(chunk)
        if token:
            tokens.append(token)
    return tokens


def _strip_edge_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class NgramProfile:
    n: int
    counts: dict[tuple[str, ...], int]

    @classmethod
    def build(cls, tokens: list[str], n: int) -> "NgramProfile":
        if n < 1:
            raise ValueError("n must be >= 1")
        return cls(n=n, counts=dict(ngram_counts(tokens, n)))


@dataclass(frozen=True)
class BleuScore:
    value: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    candidate_len: int
    effective_ref_len: int
    degenerate: bool = False


def modified_precision(
    candidate: list[str], references: list[list[str]], n: int
) -> tuple[float, int, int]:
    """Clipped n-gram precision: (ratio, clipped count, total candidate n-grams).

    total == 0 flags a candidate shorter than n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not references:
        raise ValueError("references must be nonempty")
    counts = ngram_counts(candidate, n)
    total = sum(counts.values())
    if total == 0:
        return 0.0, 0, 0
    max_ref_counts: Counter = Counter()
    for reference in references:
        for ngram, count in ngram_counts(reference, n).items():
            if count > max_ref_counts[ngram]:
                max_ref_counts[ngram] = count
    clipped = sum(min(count, max_ref_counts[ngram]) for ngram, count in counts.items())
    return clipped / total, clipped, total


def bleu(
    candidate: list[str],
    references: list[list[str]],
    max_n: int = DEFAULT_MAX_N,
    weights: list[float] | None = None,
) -> BleuScore:
    """BLEU of a candidate against references.

    The order is capped at the candidate length; the first `effective` weights
    are renormalized to sum to 1 (uniform in, uniform out). Any zero precision
    zeroes the score. An empty candidate scores 0 with the degenerate flag set.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if not references:
        raise ValueError("references must be nonempty")
    if weights is None:
        weights = [1.0 / max_n] * max_n
    if len(weights) != max_n:
        raise ValueError("weights length must equal max_n")

    c = len(candidate)
    if c == 0:
        return BleuScore(
            value=0.0,
            precisions=(),
            brevity_penalty=0.0,
            candidate_len=0,
            effective_ref_len=_closest_ref_len(references, 0),
            degenerate=True,
        )

    effective_n = min(max_n, c)
    used_weights = weights[:effective_n]
    weight_sum = sum(used_weights)
    if weight_sum <= 0:
        raise ValueError("weights over the effective order must have positive sum")
    used_weights = [w / weight_sum for w in used_weights]

    precisions = []
    for n in range(1, effective_n + 1):
        p_n, _, _ = modified_precision(candidate, references, n)
        precisions.append(p_n)

    r = _closest_ref_len(references, c)
    brevity_penalty = 1.0 if c > r else math.exp(1.0 - r / c)

    if any(p == 0.0 for p in precisions):
        value = 0.0
    else:
        value = brevity_penalty * math.exp(
            math.fsum(w * math.log(p) for w, p in zip(used_weights, precisions))
        )
    return BleuScore(
        value=value,
        precisions=tuple(precisions),
        brevity_penalty=brevity_penalty,
        candidate_len=c,
        effective_ref_len=r,
    )


def _closest_ref_len(references: list[list[str]], candidate_len: int) -> int:
    # Closest reference length; ties broken toward the shorter (harsher) one.
    return min((len(ref) for ref in references), key=lambda rl: (abs(rl - candidate_len), rl))


def self_bleu_scores(items: list[list[str]], max_n: int = DEFAULT_MAX_N) -> list[float]:
    """Per-item BLEU against all other items as references; order preserved."""
    if len(items) < 2:
        return [0.0] * len(items)
    scores = []
    for i, candidate in enumerate(items):
        references = items[:i] + items[i + 1 :]
        scores.append(bleu(candidate, references, max_n).value)
    return scores


@dataclass(frozen=True)
class DedupResult:
    kept: tuple[str, ...]
    dropped: tuple[tuple[str, str, float], ...]  # (id, duplicate_of_id, score)


class _Profile:
    """Tokens with cached per-order n-gram counts, for repeated pairwise BLEU."""

    __slots__ = ("item_id", "tokens", "counts")

    def __init__(self, item_id: str, tokens: list[str], max_n: int):
        self.item_id = item_id
        self.tokens = tokens
        self.counts = [ngram_counts(tokens, n) for n in range(1, max_n + 1)]


def pairwise_bleu(candidate: _Profile, reference: _Profile, max_n: int) -> float:
    """BLEU of candidate against one reference; equals bleu(cand, [ref]).value."""
    c = len(candidate.tokens)
    if c == 0:
        return 0.0
    effective_n = min(max_n, c)
    log_sum = []
    weight = 1.0 / effective_n
    for index in range(effective_n):
        cand_counts = candidate.counts[index]
        ref_counts = reference.counts[index]
        total = sum(cand_counts.values())
        if total == 0:
            return 0.0
        clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        if clipped == 0:
            return 0.0
        log_sum.append(weight * math.log(clipped / total))
    r = len(reference.tokens)
    penalty = 1.0 if c > r else math.exp(1.0 - r / c)
    return penalty * math.exp(math.fsum(log_sum))


def dedup(
    items: list[tuple[str, str]],
    threshold: float = DEFAULT_DEDUP_THRESHOLD,
    max_n: int = DEFAULT_MAX_N,
    prior: list[tuple[str, str]] | None = None,
) -> DedupResult:
    """Greedy in input order: drop an item whose pairwise BLEU against an
    already-kept item (or a `prior` reference) reaches the threshold; record
    the best-scoring reference seen up to the decision.

    Comparing against kept items only (never against dropped ones) makes the
    operation idempotent and order-stable.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    kept: list[str] = []
    dropped: list[tuple[str, str, float]] = []
    references: list[_Profile] = [
        _Profile(ref_id, tokenize(text), max_n) for ref_id, text in (prior or [])
    ]
    for item_id, text in items:
        candidate = _Profile(item_id, tokenize(text), max_n)
        best_id, best_score = None, 0.0
        for reference in references:
            score = pairwise_bleu(candidate, reference, max_n)
            if score > best_score:
                best_id, best_score = reference.item_id, score
                if best_score >= threshold:
                    break
        if best_id is not None and best_score >= threshold:
            dropped.append((item_id, best_id, best_score))
        else:
            kept.append(item_id)
            references.append(candidate)
    return DedupResult(kept=tuple(kept), dropped=tuple(dropped))
