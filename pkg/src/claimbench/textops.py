"""Deterministic text primitives: tokenization, edit distance, casing, n-gram overlap.

Everything here is pure and dependency-free so the rest of the pipeline can
treat these as fixed points: same input, same output, on every platform.
"""

import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Tuple

# Maximal runs of Unicode letters/digits. \w minus the underscore.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

_SENTENCE_END = ".!?"


class TokenOrigin(str, Enum):
    WORD = "word"
    CHARACTER = "character"


@dataclass(frozen=True)
class TokenSequence:
    """A tokenized text plus the tokenization it came from.

    Carrying the origin lets distance functions refuse to compare
    word tokens against character tokens by accident.
    """

    tokens: Tuple[str, ...]
    origin: TokenOrigin

    @classmethod
    def words(cls, text: str) -> "TokenSequence":
        return tokenize_words(text)

    @classmethod
    def characters(cls, text: str) -> "TokenSequence":
        return cls(tuple(text), TokenOrigin.CHARACTER)

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize_words(text: str) -> TokenSequence:
    """Lowercase and split into maximal runs of Unicode letters/digits.

    Punctuation and symbols act as separators and are dropped:
    "Covid-19 is DEADLY!" -> ("covid", "19", "is", "deadly").
    """
    return TokenSequence(tuple(_WORD_RE.findall(text.lower())), TokenOrigin.WORD)


def levenshtein(a: TokenSequence, b: TokenSequence) -> int:
    """Unit-cost edit distance between two token sequences of the same origin."""
    if a.origin != b.origin:
        raise ValueError(
            f"cannot compare token sequences of different origins: "
            f"{a.origin.value} vs {b.origin.value}"
        )
    xs, ys = a.tokens, b.tokens
    if len(xs) < len(ys):
        xs, ys = ys, xs
    # Two-row DP over the shorter sequence.
    previous = list(range(len(ys) + 1))
    for i, x in enumerate(xs, start=1):
        current = [i] + [0] * len(ys)
        for j, y in enumerate(ys, start=1):
            cost = 0 if x == y else 1
            current[j] = min(
                previous[j] + 1,        # deletion
                current[j - 1] + 1,     # insertion
                previous[j - 1] + cost  # substitution
            )
        previous = current
    return previous[-1]


def normalized_levenshtein(a: TokenSequence, b: TokenSequence) -> float:
    """Edit distance divided by the longer sequence length; 0.0 when both empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return levenshtein(a, b) / longest


def uppercase(text: str) -> str:
    return text.upper()


def build_case_lexicon(texts: Iterable[str]) -> Dict[str, str]:
    """Map each lowercased word to its dominant surface casing in the corpus.

    Ties break toward the plain lowercase form, then lexicographically,
    so the lexicon is deterministic regardless of input order.
    """
    surfaces: Dict[str, Counter] = {}
    for text in texts:
        for token in _WORD_RE.findall(text):
            surfaces.setdefault(token.lower(), Counter())[token] += 1
    lexicon = {}
    for lower, counts in surfaces.items():
        best = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0] != lower, kv[0]))[0][0]
        lexicon[lower] = best
    return lexicon


def truecase(text: str, lexicon: Dict[str, str]) -> str:
    """Recase each word token to its dominant corpus casing.

    Tokens absent from the lexicon are lowercased, except sentence-initial
    ones which are capitalized. Non-token characters pass through untouched.
    """
    pieces: List[str] = []
    cursor = 0
    sentence_start = True
    for match in _WORD_RE.finditer(text):
        gap = text[cursor:match.start()]
        pieces.append(gap)
        if any(ch in _SENTENCE_END for ch in gap):
            sentence_start = True
        key = match.group().lower()
        if key in lexicon:
            pieces.append(lexicon[key])
        elif sentence_start:
            pieces.append(key.capitalize())
        else:
            pieces.append(key)
        sentence_start = False
        cursor = match.end()
    tail = text[cursor:]
    pieces.append(tail)
    return "".join(pieces)


def _ngrams(tokens: Tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i:i + n] for i in range(len(tokens) - n + 1))


def _lcs_length(xs: Tuple[str, ...], ys: Tuple[str, ...]) -> int:
    if not xs or not ys:
        return 0
    previous = [0] * (len(ys) + 1)
    for x in xs:
        current = [0] * (len(ys) + 1)
        for j, y in enumerate(ys, start=1):
            if x == y:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def rouge_f1(a: str, b: str, variant: str) -> float:
    """ROUGE F1 overlap between two texts; variant is one of r1, r2, rl.

    Tokens are case-sensitive runs of letters/digits, so a fully
    re-cased rewrite scores 0.0 unigram overlap against its original.
    Symmetric in (a, b); returns 0.0 when either side has no n-grams.
    """
    kind = variant.lower()
    if kind not in ("r1", "r2", "rl"):
        raise ValueError(f"unknown rouge variant {variant!r}; expected r1, r2, or rl")
    tokens_a = tuple(_WORD_RE.findall(a))
    tokens_b = tuple(_WORD_RE.findall(b))
    if kind == "rl":
        lcs = _lcs_length(tokens_a, tokens_b)
        total = len(tokens_a) + len(tokens_b)
        if lcs == 0 or total == 0:
            return 0.0
        return 2.0 * lcs / total
    order = 1 if kind == "r1" else 2
    grams_a = _ngrams(tokens_a, order)
    grams_b = _ngrams(tokens_b, order)
    count_a = sum(grams_a.values())
    count_b = sum(grams_b.values())
    if count_a == 0 or count_b == 0:
        return 0.0
    overlap = sum((grams_a & grams_b).values())
    if overlap == 0:
        return 0.0
    precision = overlap / count_b
    recall = overlap / count_a
    return 2.0 * precision * recall / (precision + recall)
