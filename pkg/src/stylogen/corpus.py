"""Corpus ingestion: normalization, tokenization, vocabularies and training windows.

A corpus is a directory of UTF-8 ``.txt`` files, one document per file, with
the file stem as document id. Tokenization is deliberately minimal: words are
whitespace-delimited with punctuation left attached, characters are Unicode
scalars. No further linguistic processing is applied.
"""

from __future__ import annotations

import re
import unicodedata
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

OOV = "<unk>"


@dataclass
class Document:
    """One text with its id (file stem), raw content and token stream."""

    id: str
    raw: str
    tokens: list[str]
    mode: str = "word"


def normalize(raw: str) -> str:
    """Lowercase, drop non-whitespace control characters, collapse whitespace
    runs to single spaces and strip the ends."""
    kept = [ch for ch in raw if ch.isspace() or unicodedata.category(ch)[0] != "C"]
    return " ".join("".join(kept).lower().split())


def tokenize_words(text: str, split_punct: bool = False) -> list[str]:
    """Split normalized text on spaces. Punctuation stays attached to its word
    unless ``split_punct`` peels leading/trailing punctuation into own tokens."""
    tokens = text.split()
    if not split_punct:
        return tokens
    out = []
    for tok in tokens:
        core = tok.strip(_EDGE_PUNCT)
        if not core:
            out.append(tok)
            continue
        start = tok.index(core)
        if start:
            out.append(tok[:start])
        out.append(core)
        if start + len(core) < len(tok):
            out.append(tok[start + len(core):])
    return out


_EDGE_PUNCT = "".join(
    chr(c) for c in range(0x21, 0x7F) if not chr(c).isalnum() and chr(c) != "'"
)


def tokenize_chars(text: str) -> list[str]:
    """One token per Unicode scalar, spaces and punctuation included."""
    return list(text)


def tokenize(text: str, mode: str, split_punct: bool = False) -> list[str]:
    if mode == "word":
        return tokenize_words(text, split_punct=split_punct)
    if mode == "char":
        return tokenize_chars(text)
    raise ValueError(f"unknown tokenization mode {mode!r}")


class Vocabulary:
    """Bidirectional token<->id map with counts. Id 0 is the reserved OOV
    sentinel; remaining ids are dense, ordered by descending count then
    lexicographically."""

    def __init__(self, tokens: list[str], counts: list[int], mode: str):
        if not tokens or tokens[0] != OOV:
            raise ValueError(f"id 0 must be the {OOV} sentinel")
        if len(tokens) != len(counts):
            raise ValueError("tokens and counts length mismatch")
        if mode not in ("word", "char"):
            raise ValueError(f"unknown vocabulary mode {mode!r}")
        self.tokens = list(tokens)
        self.counts = [int(c) for c in counts]
        self.mode = mode
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._index.get(token, 0)

    def encode(self, tokens: list[str]) -> np.ndarray:
        """Token list -> int32 id array; unknown tokens map to the OOV id 0."""
        index = self._index
        return np.fromiter((index.get(t, 0) for t in tokens), dtype=np.int32, count=len(tokens))

    def decode(self, ids) -> list[str]:
        return [self.tokens[int(i)] for i in ids]

    def join(self, tokens: list[str]) -> str:
        """Detokenize: words are joined by single spaces, characters butt up."""
        return (" " if self.mode == "word" else "").join(tokens)

    def save(self, path) -> None:
        """Write one ``token<TAB>count`` line per id; line 0 is the sentinel."""
        lines = [f"{tok}\t{cnt}" for tok, cnt in zip(self.tokens, self.counts)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, mode: str = "word") -> "Vocabulary":
        tokens, counts = [], []
        for line in Path(path).read_text(encoding="utf-8").split("\n"):
            if not line:
                continue
            tok, _, cnt = line.rpartition("\t")
            tokens.append(tok)
            counts.append(int(cnt))
        return cls(tokens, counts, mode)

    def to_json(self) -> dict:
        return {"mode": self.mode, "entries": [[t, c] for t, c in zip(self.tokens, self.counts)]}

    @classmethod
    def from_json(cls, blob: dict) -> "Vocabulary":
        tokens = [e[0] for e in blob["entries"]]
        counts = [e[1] for e in blob["entries"]]
        return cls(tokens, counts, blob["mode"])


def build_vocabulary(docs: list[Document], mode: str = "word", min_count: int = 1) -> Vocabulary:
    """Count tokens over all documents and keep those with count >= min_count,
    ordered by descending count then token. Dropped occurrences (and any literal
    sentinel strings in the corpus) are folded into the OOV count."""
    counter = Counter()
    for doc in docs:
        counter.update(doc.tokens)
    if not counter:
        raise ValueError("empty corpus")
    oov_count = counter.pop(OOV, 0)
    kept = sorted(
        ((tok, cnt) for tok, cnt in counter.items() if cnt >= min_count),
        key=lambda kv: (-kv[1], kv[0]),
    )
    oov_count += sum(cnt for tok, cnt in counter.items() if cnt < min_count)
    tokens = [OOV] + [tok for tok, _ in kept]
    counts = [oov_count] + [cnt for _, cnt in kept]
    return Vocabulary(tokens, counts, mode)


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def shuffle_augment(
    doc: Document, copies: int, unit: str = "sentence", rng_seed: int = 0
) -> list[Document]:
    """Return ``copies`` permuted variants of a document.

    ``sentence`` units are maximal spans of the normalized text ending in
    ``.``, ``!`` or ``?`` (a trailing unterminated span counts as a unit);
    ``line`` units are the non-empty lines of the raw text. Each copy is a
    permutation of the units, so the token multiset is preserved.
    """
    if copies < 0:
        raise ValueError("copies must be >= 0")
    if unit == "sentence":
        units = [u for u in _SENTENCE_SPLIT.split(normalize(doc.raw)) if u]
    elif unit == "line":
        units = [ln.strip() for ln in doc.raw.split("\n") if ln.strip()]
    else:
        raise ValueError(f"unknown shuffle unit {unit!r}")
    if len(units) <= 1:
        warnings.warn(f"document {doc.id!r} has a single {unit} unit; copies are identical")
    rng = np.random.default_rng(rng_seed)
    out = []
    for i in range(copies):
        perm = rng.permutation(len(units))
        text = " ".join(units[j] for j in perm)
        norm = normalize(text)
        out.append(Document(f"{doc.id}~s{i}", text, tokenize(norm, doc.mode), doc.mode))
    return out


@dataclass
class Windows:
    """Training windows: each row of ``contexts`` is n token ids, ``targets``
    holds the id that followed."""

    contexts: np.ndarray  # [N, n] int32
    targets: np.ndarray  # [N] int32
    n: int

    def __len__(self) -> int:
        return len(self.targets)

    def __getitem__(self, i):
        return self.contexts[i], self.targets[i]


def windowize(docs: list[Document], vocab: Vocabulary, n: int) -> Windows:
    """Slide an (n context, 1 target) window with stride 1 over every encoded
    document. Documents shorter than n+1 tokens are skipped with a warning."""
    if n < 1:
        raise ValueError("window length must be >= 1")
    contexts, targets = [], []
    for doc in docs:
        ids = vocab.encode(doc.tokens)
        if len(ids) <= n:
            warnings.warn(f"document {doc.id!r} has {len(ids)} tokens <= n={n}; skipped")
            continue
        view = np.lib.stride_tricks.sliding_window_view(ids, n + 1)
        contexts.append(view[:, :n].copy())
        targets.append(view[:, n].copy())
    if not contexts:
        raise ValueError("no training windows")
    return Windows(np.concatenate(contexts), np.concatenate(targets), n)


def load_document(path, mode: str = "word", split_punct: bool = False) -> Document:
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    return Document(path.stem, raw, tokenize(normalize(raw), mode, split_punct), mode)


def load_corpus(directory, mode: str = "word", split_punct: bool = False) -> list[Document]:
    """Load every ``.txt`` file in a directory as one document, sorted by id."""
    paths = sorted(Path(directory).glob("*.txt"))
    if not paths:
        raise ValueError(f"no .txt files in {directory}")
    docs = [load_document(p, mode, split_punct) for p in paths]
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate document ids")
    return docs
