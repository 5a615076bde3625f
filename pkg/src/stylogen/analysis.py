"""Secondary assessments: word preference/avoidance between text sets,
sliding-window sentiment flux, and the char-model "wordness" measure."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document

# Punctuation attached to generated tokens is stripped at the edges before
# any lexicon or vocabulary lookup.
_EDGES = "".join(chr(c) for c in range(0x21, 0x7F) if not chr(c).isalnum())


def strip_edges(token: str) -> str:
    return token.strip(_EDGES)


@dataclass
class PreferenceRow:
    word: str
    count_a: int
    count_b: int
    score: float
    in_seed: bool


@dataclass
class PreferenceReport:
    """Per-word smoothed log2 usage ratio between two document sets, sorted
    by descending score (positive = preferred in A, negative = avoided)."""

    rows: list[PreferenceRow]
    total_a: int
    total_b: int
    alpha: float

    def preferred(self, k: int = 20) -> list[PreferenceRow]:
        return self.rows[:k]

    def avoided(self, k: int = 20) -> list[PreferenceRow]:
        return self.rows[-k:][::-1]

    def to_csv(self, path) -> None:
        lines = ["word,count_a,count_b,score,in_seed"]
        for r in self.rows:
            lines.append(f"{r.word},{r.count_a},{r.count_b},{r.score:.6f},{int(r.in_seed)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _word_counts(docs: list[Document]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for doc in docs:
        for tok in doc.tokens:
            w = strip_edges(tok)
            if w:
                counts[w] = counts.get(w, 0) + 1
    return counts


def preference(
    docs_a: list[Document],
    docs_b: list[Document],
    seed_docs: list[Document] | None = None,
    alpha: float = 0.5,
) -> PreferenceReport:
    """score(w) = log2 of the ratio of smoothed relative frequencies of w in
    set A vs set B; each word is flagged if it occurs in the seed texts."""
    if not docs_a or not docs_b:
        raise ValueError("empty document set")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    ca = _word_counts(docs_a)
    cb = _word_counts(docs_b)
    union = sorted(set(ca) | set(cb))
    u = len(union)
    if u == 0:
        raise ValueError("empty document set")
    na = sum(ca.values())
    nb = sum(cb.values())
    seed_words = set()
    for doc in seed_docs or []:
        seed_words.update(strip_edges(t) for t in doc.tokens)
    rows = []
    for w in union:
        pa = (ca.get(w, 0) + alpha) / (na + alpha * u)
        pb = (cb.get(w, 0) + alpha) / (nb + alpha * u)
        rows.append(PreferenceRow(w, ca.get(w, 0), cb.get(w, 0),
                                  float(np.log2(pa / pb)), w in seed_words))
    rows.sort(key=lambda r: (-r.score, r.word))
    return PreferenceReport(rows, na, nb, alpha)


@dataclass
class SentimentTrace:
    scores: list[float]
    window: int
    stride: int
    flux: float

    def to_json(self) -> dict:
        return {"scores": self.scores, "window": self.window,
                "stride": self.stride, "flux": self.flux}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")


def sentiment_trace(tokens: list[str], lexicon: dict[str, float],
                    window: int = 50, stride: int = 25) -> SentimentTrace:
    """Mean lexicon value per sliding window (missing words score 0); flux is
    the mean absolute change between consecutive windows."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if not 1 <= stride <= window:
        raise ValueError("stride must be in [1, window]")
    if len(tokens) < window:
        raise ValueError("document shorter than window")
    vals = np.array([lexicon.get(strip_edges(t), 0.0) for t in tokens])
    starts = range(0, len(tokens) - window + 1, stride)
    scores = [float(vals[s:s + window].mean()) for s in starts]
    flux = float(np.abs(np.diff(scores)).mean()) if len(scores) > 1 else 0.0
    return SentimentTrace(scores, window, stride, flux)


def wordness(text: str, word_vocab) -> float:
    """Fraction of whitespace-delimited chunks that are vocabulary words
    after stripping edge punctuation. Text with no chunks scores 0."""
    chunks = text.split()
    if not chunks:
        return 0.0
    hits = sum(1 for c in chunks if strip_edges(c) in word_vocab)
    return hits / len(chunks)


def load_lexicon(path) -> dict[str, float]:
    """Read a ``word<TAB>value`` sentiment lexicon."""
    lex: dict[str, float] = {}
    for line in Path(path).read_text(encoding="utf-8").split("\n"):
        if not line.strip():
            continue
        word, _, value = line.rpartition("\t")
        lex[word] = float(value)
    return lex
