"""Text generation: diversity (temperature) sampling over a seeded sliding
window.

Any next-token model works here: it needs a ``vocab``, a ``window`` length
and ``next_distribution(ids) -> probability vector``. After each sampled
token the oldest window token is dropped and the new one appended, keeping
the context length fixed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import OOV, Document, normalize, tokenize


@dataclass
class GenerationConfig:
    diversity: float = 1.0
    length: int = 1000
    seed_source: str = "self"  # self | external | explicit
    rng_seed: int = 0
    seed_text: str | None = None  # for external seeding
    seed_tokens: list[str] | None = None  # for explicit seeding

    def validate(self) -> None:
        if self.diversity <= 0:
            raise ValueError("diversity must be > 0")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.seed_source not in ("self", "external", "explicit"):
            raise ValueError(f"unknown seed source {self.seed_source!r}")


@dataclass
class GenerationRecord:
    config: dict
    checkpoint_id: str
    seed_tokens: list[str]
    token_ids: list[int]
    text: str
    oov_substitutions: int

    def to_json(self) -> dict:
        return asdict(self)


def apply_diversity(p, d: float) -> np.ndarray:
    """Reshape a distribution as q_i = p_i^(1/d) / sum_j p_j^(1/d).

    Computed in log space; d = 1 returns p unchanged (renormalized), d -> 0
    approaches one-hot at the argmax, large d flattens toward uniform.
    """
    if d <= 0:
        raise ValueError("diversity must be > 0")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be 1-d and non-empty")
    if np.any(p < 0):
        raise ValueError("negative probabilities")
    total = p.sum()
    if total <= 0:
        raise ValueError("all-zero probability vector")
    if abs(total - 1.0) > 1e-4:
        raise ValueError(f"input does not sum to 1 (got {total})")
    if d == 1.0:
        return p / total
    with np.errstate(divide="ignore"):
        logq = np.log(p) / d
    logq -= logq.max()
    q = np.exp(logq)
    return q / q.sum()


def sample(q, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a distribution."""
    cdf = np.cumsum(np.asarray(q, dtype=np.float64))
    r = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, r, side="right"), len(cdf) - 1))


def select_seed(tokens: list[str], n: int, rng: np.random.Generator) -> list[str]:
    """Uniformly random contiguous n-token span of a token list."""
    if len(tokens) < n:
        raise ValueError("seed too short")
    start = int(rng.integers(0, len(tokens) - n + 1))
    return tokens[start:start + n]


def seed_from_corpus(docs: list[Document], n: int, rng: np.random.Generator) -> list[str]:
    """Uniformly random n-token span over all spans of all documents."""
    eligible = [d for d in docs if len(d.tokens) >= n]
    if not eligible:
        raise ValueError("seed too short")
    spans = np.array([len(d.tokens) - n + 1 for d in eligible])
    pick = int(rng.integers(0, spans.sum()))
    for doc, count in zip(eligible, spans):
        if pick < count:
            return doc.tokens[pick:pick + n]
        pick -= count
    raise AssertionError("unreachable")


def generate(model, config: GenerationConfig, corpus: list[Document] | None = None) -> GenerationRecord:
    """Run the seeded sliding-window generation loop.

    The seed resolves to exactly ``model.window`` tokens; out-of-vocabulary
    seed tokens map to the OOV id and are counted in the record rather than
    raising, since external seed texts are expected to contain unseen words.
    """
    config.validate()
    vocab = model.vocab
    n = model.window
    rng = np.random.default_rng(config.rng_seed)

    if config.seed_source == "self":
        if not corpus:
            raise ValueError("self-seeding requires a corpus")
        seed_tokens = seed_from_corpus(corpus, n, rng)
    elif config.seed_source == "external":
        if not config.seed_text:
            raise ValueError("external seeding requires seed_text")
        tokens = tokenize(normalize(config.seed_text), vocab.mode)
        seed_tokens = select_seed(tokens, n, rng)
    else:
        seed_tokens = list(config.seed_tokens or [])
        if len(seed_tokens) < n:
            raise ValueError("seed too short")
        if len(seed_tokens) > n:
            raise ValueError(f"explicit seed must have exactly {n} tokens")

    ids = vocab.encode(seed_tokens)
    oov_subs = int(sum(1 for tok, i in zip(seed_tokens, ids) if i == 0 and tok != OOV))
    window = [int(i) for i in ids]
    emitted: list[int] = []
    for _ in range(config.length):
        p = model.next_distribution(window)
        q = apply_diversity(p, config.diversity)
        t = sample(q, rng)
        emitted.append(t)
        window = window[1:] + [t]
    text = vocab.join(vocab.decode(emitted))
    cfg = {
        "diversity": config.diversity,
        "length": config.length,
        "seed_source": config.seed_source,
        "rng_seed": config.rng_seed,
    }
    return GenerationRecord(
        config=cfg,
        checkpoint_id=getattr(model, "checkpoint_id", ""),
        seed_tokens=list(seed_tokens),
        token_ids=emitted,
        text=text,
        oov_substitutions=oov_subs,
    )


def append_record(record: GenerationRecord, path) -> None:
    """Append one generation as a JSON line."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def read_records(path) -> list[GenerationRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(GenerationRecord(**json.loads(line)))
    return out
