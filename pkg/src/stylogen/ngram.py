"""Count-based next-token model with add-k smoothing.

Doubles as the brute-force oracle for the neural models and as an
always-available baseline generator. No backoff or interpolation.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np

from .corpus import Vocabulary, Windows

FORMAT = "stylogen-ngram-v1"


class NgramModel:
    """Tabulated (context tuple -> next-token counts) with add-k smoothing.

    ``order`` is the context length used; order 0 is a unigram model. The
    ``window`` attribute carries the seed window length the model was fitted
    from, so generation treats it like any other next-token model.
    """

    def __init__(self, order: int, k: float, vocab: Vocabulary, window: int):
        if order < 0:
            raise ValueError("order must be >= 0")
        if k <= 0:
            raise ValueError("smoothing constant k must be > 0")
        self.order = order
        self.k = float(k)
        self.vocab = vocab
        self.window = window
        self.counts: dict[tuple[int, ...], Counter] = defaultdict(Counter)
        self.totals: dict[tuple[int, ...], int] = defaultdict(int)
        self.checkpoint_id = f"ngram-order{order}"

    def next_distribution(self, context) -> np.ndarray:
        """P(w | last ``order`` ids of context) = (count + k) / (total + kV)."""
        context = list(int(i) for i in context)
        if len(context) < self.order:
            raise ValueError(f"context length {len(context)} < model order {self.order}")
        key = tuple(context[len(context) - self.order:])
        v = self.vocab.size
        p = np.full(v, self.k, dtype=np.float64)
        total = self.totals.get(key, 0)
        if total:
            for tok, cnt in self.counts[key].items():
                p[tok] += cnt
        p /= total + self.k * v
        return p

    def save(self, path) -> None:
        blob = {
            "format": FORMAT,
            "order": self.order,
            "k": self.k,
            "window": self.window,
            "vocab": self.vocab.to_json(),
            "counts": {
                "-".join(str(i) for i in key): {str(t): c for t, c in sorted(cnt.items())}
                for key, cnt in sorted(self.counts.items())
            },
        }
        Path(path).write_text(json.dumps(blob, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NgramModel":
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
        if blob.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} file")
        model = cls(blob["order"], blob["k"], Vocabulary.from_json(blob["vocab"]), blob["window"])
        for key, cnt in blob["counts"].items():
            ctx = tuple(int(i) for i in key.split("-")) if key else ()
            model.counts[ctx] = Counter({int(t): c for t, c in cnt.items()})
            model.totals[ctx] = sum(model.counts[ctx].values())
        return model


def fit(windows: Windows, vocab: Vocabulary, order: int = 2, k: float = 0.5) -> NgramModel:
    """Tabulate (last ``order`` context tokens -> target) counts exactly."""
    if len(windows) == 0:
        raise ValueError("no training windows")
    if order > windows.n:
        raise ValueError(f"order {order} exceeds window length {windows.n}")
    model = NgramModel(order, k, vocab, windows.n)
    ctx = windows.contexts[:, windows.n - order:] if order else None
    for i in range(len(windows)):
        key = tuple(int(x) for x in ctx[i]) if order else ()
        model.counts[key][int(windows.targets[i])] += 1
        model.totals[key] += 1
    return model
