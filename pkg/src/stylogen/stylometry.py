"""Stylometric distance machinery: most-frequent-word relative frequencies,
z-scored Delta distances, agglomerative clustering and dendrogram export.

Burrows' Delta between two documents is the mean absolute difference of
their per-word z-scores, where each word's mean and (sample) standard
deviation are taken across the document set. Clustering is plain
agglomerative merging with Lance-Williams distance updates and deterministic
tie-breaking, so results are reproducible.
"""

from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LINKAGES = ("ward", "complete", "average", "single")


@dataclass
class FeatureMatrix:
    doc_ids: list[str]
    mfw: list[str]
    values: np.ndarray  # [docs, words] relative frequencies


@dataclass
class DistanceMatrix:
    doc_ids: list[str]
    d: np.ndarray  # [docs, docs] symmetric, zero diagonal


@dataclass
class Dendrogram:
    """Binary merge tree. Leaves are 0..n-1 in doc_ids order; merge k creates
    node n+k. Each merge is (left node, right node, height, subtree size)."""

    doc_ids: list[str]
    merges: list[tuple[int, int, float, int]]

    @property
    def n_leaves(self) -> int:
        return len(self.doc_ids)

    def leaf_sets(self) -> dict[int, frozenset[int]]:
        sets = {i: frozenset([i]) for i in range(self.n_leaves)}
        for k, (a, b, _, _) in enumerate(self.merges):
            sets[self.n_leaves + k] = sets[a] | sets[b]
        return sets

    def heights(self) -> dict[int, float]:
        h = {i: 0.0 for i in range(self.n_leaves)}
        for k, (_, _, height, _) in enumerate(self.merges):
            h[self.n_leaves + k] = height
        return h


def feature_matrix(docs: list[tuple[str, list[str]]], m: int = 100) -> FeatureMatrix:
    """Relative frequencies of the top-m words by summed raw count.

    ``docs`` is a list of (id, word tokens). Ties in the frequency ranking
    break lexicographically; m larger than the distinct word count is
    clamped with a warning.
    """
    if len(docs) < 2:
        raise ValueError("need at least two documents")
    if m < 2:
        raise ValueError("need at least two feature words")
    counters, totals = [], []
    combined = Counter()
    for doc_id, tokens in docs:
        if not tokens:
            raise ValueError(f"document {doc_id!r} is empty")
        c = Counter(tokens)
        counters.append(c)
        totals.append(len(tokens))
        combined.update(c)
    if m > len(combined):
        warnings.warn(f"only {len(combined)} distinct words; clamping mfw from {m}")
        m = len(combined)
    ranked = sorted(combined.items(), key=lambda kv: (-kv[1], kv[0]))[:m]
    mfw = [w for w, _ in ranked]
    values = np.empty((len(docs), m), dtype=np.float64)
    for i, (c, total) in enumerate(zip(counters, totals)):
        values[i] = [c.get(w, 0) / total for w in mfw]
    return FeatureMatrix([d for d, _ in docs], mfw, values)


def zscores(fm: FeatureMatrix):
    """Z-score each word column across documents (sample std, N-1). Words
    with zero variance are dropped with a warning; returns (z, kept words)."""
    mu = fm.values.mean(axis=0)
    sigma = fm.values.std(axis=0, ddof=1)
    keep = sigma > 0
    dropped = int((~keep).sum())
    if not keep.any():
        raise ValueError("all words zero-variance")
    if dropped:
        warnings.warn(f"dropped {dropped} zero-variance words")
    z = (fm.values[:, keep] - mu[keep]) / sigma[keep]
    return z, [w for w, k in zip(fm.mfw, keep) if k]


def burrows_delta(fm: FeatureMatrix) -> DistanceMatrix:
    """Classic Delta: mean absolute z-score difference over retained words."""
    z, _ = zscores(fm)
    diff = np.abs(z[:, None, :] - z[None, :, :]).mean(axis=2)
    np.fill_diagonal(diff, 0.0)
    return DistanceMatrix(list(fm.doc_ids), diff)


def cosine_delta(fm: FeatureMatrix) -> DistanceMatrix:
    """1 - cosine similarity of the z-score vectors."""
    z, _ = zscores(fm)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero z-score vector")
    sim = (z @ z.T) / np.outer(norms, norms)
    d = 1.0 - np.clip(sim, -1.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(list(fm.doc_ids), d)


def _lance_williams(linkage, d_ik, d_jk, d_ij, ni, nj, nk):
    if linkage == "single":
        return min(d_ik, d_jk)
    if linkage == "complete":
        return max(d_ik, d_jk)
    if linkage == "average":
        return (ni * d_ik + nj * d_jk) / (ni + nj)
    # ward, in distance form (recurrence over squared distances)
    tot = ni + nj + nk
    sq = ((ni + nk) * d_ik ** 2 + (nj + nk) * d_jk ** 2 - nk * d_ij ** 2) / tot
    return np.sqrt(max(sq, 0.0))


def agglomerate(dm: DistanceMatrix, linkage: str = "ward") -> Dendrogram:
    """Agglomerative clustering with Lance-Williams updates.

    Merge candidates tie-break on the smallest (then second-smallest)
    original leaf index of the pair, making merge order deterministic.
    Children in each recorded merge are ordered by smallest leaf index.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    d = np.asarray(dm.d, dtype=np.float64)
    n = len(dm.doc_ids)
    if d.shape != (n, n):
        raise ValueError("distance matrix shape mismatch")
    if not np.allclose(d, d.T, atol=1e-12) or not np.allclose(np.diag(d), 0.0):
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix must be finite")
    if n < 2:
        raise ValueError("need at least two documents")
    d = d.copy()
    alive = list(range(n))
    size = {i: 1 for i in range(n)}
    minleaf = {i: i for i in range(n)}
    node = {i: i for i in range(n)}
    merges: list[tuple[int, int, float, int]] = []
    for step in range(n - 1):
        best = None
        for ai in range(len(alive)):
            for aj in range(ai + 1, len(alive)):
                i, j = alive[ai], alive[aj]
                key = (d[i, j],) + tuple(sorted((minleaf[i], minleaf[j])))
                if best is None or key < best[0]:
                    best = (key, i, j)
        _, i, j = best
        height = d[i, j]
        left, right = (i, j) if minleaf[i] <= minleaf[j] else (j, i)
        merges.append((node[left], node[right], float(height), size[i] + size[j]))
        for k in alive:
            if k in (i, j):
                continue
            d_new = _lance_williams(linkage, d[i, k], d[j, k], d[i, j], size[i], size[j], size[k])
            d[i, k] = d[k, i] = d_new
        size[i] = size[i] + size[j]
        minleaf[i] = min(minleaf[i], minleaf[j])
        node[i] = n + step
        alive.remove(j)
    return Dendrogram(list(dm.doc_ids), merges)


def cophenetic(dg: Dendrogram) -> DistanceMatrix:
    """Pairwise merge heights: d(i, j) is the height where i and j first join."""
    n = dg.n_leaves
    d = np.zeros((n, n), dtype=np.float64)
    sets = {i: [i] for i in range(n)}
    for k, (a, b, height, _) in enumerate(dg.merges):
        for i in sets[a]:
            for j in sets[b]:
                d[i, j] = d[j, i] = height
        sets[n + k] = sets[a] + sets[b]
    return DistanceMatrix(list(dg.doc_ids), d)


# -- export ------------------------------------------------------------------


_LABEL_UNSAFE = re.compile(r"[\s,;:()\[\]']")


def _label(doc_id: str) -> str:
    return _LABEL_UNSAFE.sub("_", doc_id)


def export_dendrogram(dg: Dendrogram, fmt: str = "newick") -> bytes:
    if fmt == "newick":
        return _to_newick(dg).encode("utf-8")
    if fmt == "svg":
        return _to_svg(dg).encode("utf-8")
    if fmt == "text":
        return _to_text(dg).encode("utf-8")
    raise ValueError(f"unknown dendrogram format {fmt!r}")


def _to_newick(dg: Dendrogram) -> str:
    heights = dg.heights()
    children = {dg.n_leaves + k: (a, b) for k, (a, b, _, _) in enumerate(dg.merges)}

    def render(node: int, parent_h: float) -> str:
        bl = parent_h - heights[node]
        if node < dg.n_leaves:
            return f"{_label(dg.doc_ids[node])}:{bl:.10g}"
        a, b = children[node]
        inner = f"({render(a, heights[node])},{render(b, heights[node])})"
        return f"{inner}:{bl:.10g}"

    root = dg.n_leaves + len(dg.merges) - 1
    a, b = children[root]
    h = heights[root]
    return f"({render(a, h)},{render(b, h)});\n"


def _leaf_order(dg: Dendrogram) -> list[int]:
    children = {dg.n_leaves + k: (a, b) for k, (a, b, _, _) in enumerate(dg.merges)}

    def walk(node: int) -> list[int]:
        if node < dg.n_leaves:
            return [node]
        a, b = children[node]
        return walk(a) + walk(b)

    return walk(dg.n_leaves + len(dg.merges) - 1)


def _to_text(dg: Dendrogram) -> str:
    children = {dg.n_leaves + k: (a, b) for k, (a, b, _, _) in enumerate(dg.merges)}
    heights = dg.heights()
    lines: list[str] = []

    def walk(node: int, prefix: str, tail: bool) -> None:
        limb = "`-- " if tail else "|-- "
        if node < dg.n_leaves:
            lines.append(f"{prefix}{limb}{dg.doc_ids[node]}")
            return
        lines.append(f"{prefix}{limb}[{heights[node]:.4f}]")
        a, b = children[node]
        ext = "    " if tail else "|   "
        walk(a, prefix + ext, False)
        walk(b, prefix + ext, True)

    root = dg.n_leaves + len(dg.merges) - 1
    lines.append(f"[{heights[root]:.4f}]")
    a, b = children[root]
    walk(a, "", False)
    walk(b, "", True)
    return "\n".join(lines) + "\n"


def _to_svg(dg: Dendrogram, width=640, row_h=22, label_w=180, margin=24) -> str:
    """Horizontal dendrogram: leaves at the left, merges extend rightward to
    their height on the labelled distance axis."""
    heights = dg.heights()
    max_h = max(heights.values()) or 1.0
    order = _leaf_order(dg)
    y = {leaf: margin + row * row_h for row, leaf in enumerate(order)}
    plot_w = width - label_w - 2 * margin

    def x(h: float) -> float:
        return label_w + margin + plot_w * (h / max_h)

    children = {dg.n_leaves + k: (a, b) for k, (a, b, _, _) in enumerate(dg.merges)}
    parts = []
    for k, (a, b, h, _) in enumerate(dg.merges):
        ya, yb = y[a], y[b]
        xa, xb, xm = x(heights[a]), x(heights[b]), x(h)
        parts.append(f'<path d="M {xa:.1f} {ya:.1f} H {xm:.1f} V {yb:.1f} H {xb:.1f}" '
                     f'fill="none" stroke="black"/>')
        y[dg.n_leaves + k] = (ya + yb) / 2.0
    for leaf in order:
        parts.append(f'<text x="{label_w - 6}" y="{y[leaf] + 4:.1f}" text-anchor="end" '
                     f'font-size="12" font-family="sans-serif">{_label(dg.doc_ids[leaf])}</text>')
    axis_y = margin + len(order) * row_h + 10
    parts.append(f'<line x1="{x(0):.1f}" y1="{axis_y}" x2="{x(max_h):.1f}" y2="{axis_y}" '
                 f'stroke="black"/>')
    for i in range(6):
        h = max_h * i / 5
        parts.append(f'<line x1="{x(h):.1f}" y1="{axis_y}" x2="{x(h):.1f}" y2="{axis_y + 5}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{x(h):.1f}" y="{axis_y + 18}" text-anchor="middle" '
                     f'font-size="11" font-family="sans-serif">{h:.2f}</text>')
    parts.append(f'<text x="{x(max_h / 2):.1f}" y="{axis_y + 34}" text-anchor="middle" '
                 f'font-size="11" font-family="sans-serif">distance</text>')
    total_h = axis_y + 44
    body = "\n".join(parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
            f'viewBox="0 0 {width} {total_h}">\n{body}\n</svg>\n')


def parse_newick(text: str) -> Dendrogram:
    """Parse a dendrogram-style newick string (ultrametric, binary) back into
    a merge list; the inverse of the newick exporter up to float formatting."""
    s = text.strip().rstrip(";").strip()
    pos = 0

    def parse_node():
        nonlocal pos
        if s[pos] == "(":
            pos += 1
            left = parse_node()
            assert s[pos] == ","
            pos += 1
            right = parse_node()
            assert s[pos] == ")"
            pos += 1
            label = None
        else:
            start = pos
            while pos < len(s) and s[pos] not in ":,()":
                pos += 1
            label = s[start:pos]
            left = right = None
        bl = 0.0
        if pos < len(s) and s[pos] == ":":
            pos += 1
            start = pos
            while pos < len(s) and s[pos] not in ",()":
                pos += 1
            bl = float(s[start:pos])
        return {"label": label, "children": (left, right), "bl": bl}

    tree = parse_node()

    doc_ids: list[str] = []
    merges: list[tuple[int, int, float, int]] = []

    def depth(node) -> float:
        if node["label"] is not None:
            return 0.0
        a, b = node["children"]
        return max(depth(a) + a["bl"], depth(b) + b["bl"])

    def count_leaves(node) -> int:
        if node["label"] is not None:
            return 1
        a, b = node["children"]
        return count_leaves(a) + count_leaves(b)

    n_leaves = count_leaves(tree)

    def build(node):
        if node["label"] is not None:
            doc_ids.append(node["label"])
            return len(doc_ids) - 1, 1
        a, b = node["children"]
        ia, na = build(a)
        ib, nb = build(b)
        merges.append((ia, ib, depth(node), na + nb))
        return n_leaves + len(merges) - 1, na + nb

    build(tree)
    merges.sort(key=lambda m: m[2])
    return Dendrogram(doc_ids, merges)


# -- CSV ---------------------------------------------------------------------


def feature_matrix_to_csv(fm: FeatureMatrix, path) -> None:
    lines = ["id," + ",".join(fm.mfw)]
    for doc_id, row in zip(fm.doc_ids, fm.values):
        lines.append(doc_id + "," + ",".join(f"{v:.10g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def distance_matrix_to_csv(dm: DistanceMatrix, path) -> None:
    lines = ["id," + ",".join(dm.doc_ids)]
    for doc_id, row in zip(dm.doc_ids, dm.d):
        lines.append(doc_id + "," + ",".join(f"{v:.10g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def distance_matrix_from_csv(path) -> DistanceMatrix:
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    ids = lines[0].split(",")[1:]
    d = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[1:]])
    return DistanceMatrix(ids, d)
