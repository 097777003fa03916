"""Tokenization, term frequencies, and PMI term tables for place corpora.

PMI uses document (post) counts throughout and log base 2. The exact
expression is log2((n_xy * n_docs) / (n_x * n_y)): integer products
first, one float division, one log. Keeping the shape fixed makes
scores reproducible bit-for-bit against independent recounts.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

from .errors import DegenerateInputError, NoCooccurrence
from .ingest import GeoPost, PlaceQuery

__all__ = [
    "TokenKind",
    "TokenMode",
    "Token",
    "Scope",
    "TermRow",
    "TermTable",
    "tokenize",
    "top_terms",
    "pmi",
    "term_table",
    "load_stopwords",
    "term_table_csv",
    "term_table_json",
]


class TokenKind(Enum):
    WORD = "Word"
    HASHTAG = "Hashtag"
    MENTION = "Mention"
    CHAR_BIGRAM = "CharBigram"


class TokenMode(Enum):
    LATIN = "Latin"
    CJK_BIGRAM = "CjkBigram"


class Scope(Enum):
    FULL = "Full"
    IN_CIRCLE = "InCircle"
    OUT_CIRCLE = "OutCircle"


@dataclass(frozen=True)
class Token:
    surface: str  # already case-folded
    kind: TokenKind


class TermRow(NamedTuple):
    term: str
    pmi: float
    frequency: int


@dataclass(frozen=True)
class TermTable:
    """Rows sorted by PMI desc, then frequency desc, then term."""

    scope: Scope
    rows: tuple[TermRow, ...]
    k: int


_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_LATIN_TOKEN_RE = re.compile(r"[#@]?\w+")

# CJK Unified Ideographs, Extension A, and the compatibility block:
# enough for Chinese microblog text (the bigram fallback's target).
_CJK_RANGES = (
    ("一", "鿿"),
    ("㐀", "䶿"),
    ("豈", "﫿"),
)


def _is_cjk(ch: str) -> bool:
    return any(lo <= ch <= hi for lo, hi in _CJK_RANGES)


def _latin_tokens(text: str) -> list[Token]:
    tokens = []
    for surface in _LATIN_TOKEN_RE.findall(text):
        if surface.startswith("#") and len(surface) > 1:
            kind = TokenKind.HASHTAG
        elif surface.startswith("@") and len(surface) > 1:
            kind = TokenKind.MENTION
        else:
            kind = TokenKind.WORD
        tokens.append(Token(surface, kind))
    return tokens


def _cjk_run_tokens(run: str) -> list[Token]:
    if len(run) == 1:
        # A lone ideograph can't form a bigram; keep it as-is.
        return [Token(run, TokenKind.CHAR_BIGRAM)]
    return [Token(run[i:i + 2], TokenKind.CHAR_BIGRAM)
            for i in range(len(run) - 1)]


def tokenize(text: str, mode: TokenMode = TokenMode.LATIN) -> list[Token]:
    """Split text into tokens.

    Latin mode: case-fold, strip URLs, then word characters with an
    optional leading '#' or '@' (which marks hashtags and mentions).
    CjkBigram mode: contiguous ideograph runs become overlapping
    character bigrams; everything between runs follows the Latin rules,
    so space-segmented Chinese input keeps its segment boundaries.
    """
    cleaned = _URL_RE.sub(" ", text).casefold()
    if mode is TokenMode.LATIN:
        return _latin_tokens(cleaned)
    tokens: list[Token] = []
    buffer: list[str] = []  # pending non-CJK characters
    run: list[str] = []     # pending CJK characters
    for ch in cleaned:
        if _is_cjk(ch):
            if buffer:
                tokens.extend(_latin_tokens("".join(buffer)))
                buffer.clear()
            run.append(ch)
        else:
            if run:
                tokens.extend(_cjk_run_tokens("".join(run)))
                run.clear()
            buffer.append(ch)
    if buffer:
        tokens.extend(_latin_tokens("".join(buffer)))
    if run:
        tokens.extend(_cjk_run_tokens("".join(run)))
    return tokens


def top_terms(
    docs: Sequence[Sequence[Token]],
    stopwords: Iterable[str],
    k: int,
) -> list[tuple[str, int]]:
    """Top-k terms by document frequency; ties broken lexicographically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    blocked = {w.casefold() for w in stopwords}
    counts: Counter[str] = Counter()
    for doc in docs:
        for surface in {tok.surface for tok in doc}:
            if surface not in blocked:
                counts[surface] += 1
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def pmi(n_docs: int, n_x: int, n_y: int, n_xy: int) -> float:
    """log2((n_xy/N) / ((n_x/N) * (n_y/N))) over document counts.

    Raises :class:`NoCooccurrence` when n_xy = 0 so callers can drop the
    term instead of propagating -inf.
    """
    if n_docs < 1:
        raise ValueError("n_docs must be >= 1")
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be >= 1")
    if n_xy < 0 or n_xy > min(n_x, n_y):
        raise ValueError(f"n_xy={n_xy} outside [0, min(n_x, n_y)]")
    if n_xy == 0:
        raise NoCooccurrence(f"no co-occurrence (n_x={n_x}, n_y={n_y})")
    return math.log2((n_xy * n_docs) / (n_x * n_y))


def term_table(
    corpus: Sequence[GeoPost],
    query: PlaceQuery,
    stopwords: Iterable[str],
    k: int,
    scope: Scope,
    mode: TokenMode = TokenMode.LATIN,
) -> TermTable:
    """Rank this corpus's top terms by their PMI with the place name.

    x is "post mentions the place" (substring match, same rule as
    keyword querying); y is "post contains the term" (tokenized).
    The place name and alias tokens are excluded from candidates, and
    terms that never co-occur with the place are dropped.
    """
    if not corpus:
        raise DegenerateInputError("term_table requires a non-empty corpus")
    docs_tokens = [tokenize(post.text, mode) for post in corpus]
    token_sets = [{tok.surface for tok in doc} for doc in docs_tokens]
    match_terms = query.match_terms()
    x_flags = [any(t in post.text.casefold() for t in match_terms)
               for post in corpus]
    n_docs = len(corpus)
    n_x = sum(x_flags)

    excluded = set(stopwords)
    for phrase in (query.canonical_name, *query.aliases):
        excluded.update(tok.surface for tok in tokenize(phrase, mode))

    candidates = top_terms(docs_tokens, excluded, k)
    rows: list[TermRow] = []
    if n_x > 0:
        for term, frequency in candidates:
            n_xy = sum(1 for has_x, toks in zip(x_flags, token_sets)
                       if has_x and term in toks)
            try:
                score = pmi(n_docs, n_x, frequency, n_xy)
            except NoCooccurrence:
                continue
            rows.append(TermRow(term, score, frequency))
    rows.sort(key=lambda r: (-r.pmi, -r.frequency, r.term))
    return TermTable(scope, tuple(rows), k)


def load_stopwords(path) -> set[str]:
    """One term per line, UTF-8; blank lines and '#' comments skipped."""
    words: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            term = line.strip()
            if term and not term.startswith("#"):
                words.add(term.casefold())
    return words


def term_table_csv(table: TermTable) -> str:
    lines = ["term,pmi,frequency"]
    for row in table.rows:
        lines.append(f"{row.term},{row.pmi!r},{row.frequency}")
    return "\n".join(lines) + "\n"


def term_table_json(table: TermTable) -> str:
    return json.dumps(
        [{"term": r.term, "pmi": r.pmi, "frequency": r.frequency}
         for r in table.rows],
        ensure_ascii=False,
    )
