"""Experiment orchestration: train, generate over a (seed source x diversity)
grid, and run the stylometric cluster analysis with summary statistics.

Every run writes a manifest listing each produced file with its condition
labels and a 64-bit hash of the resolved configuration; reruns with the same
config and seeds reproduce the generated texts byte for byte.
"""

from __future__ import annotations

import copy
import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import ngram as ngram_mod
from .analysis import wordness
from .corpus import Document, build_vocabulary, load_corpus, normalize, tokenize, windowize
from .generate import GenerationConfig, append_record, generate
from .nn import (
    Hyperparams,
    conv_spec,
    load_checkpoint,
    recurrent_spec,
    restore_network,
    save_checkpoint,
    train,
)
from .stylometry import (
    agglomerate,
    burrows_delta,
    cophenetic,
    cosine_delta,
    distance_matrix_to_csv,
    export_dendrogram,
    feature_matrix,
    feature_matrix_to_csv,
    zscores,
)

DEFAULT_CONFIG: dict = {
    "corpus_dir": None,
    "external_dir": None,
    "composed_dir": None,
    "output_dir": "stylogen-out",
    "checkpoint": None,  # reuse an existing checkpoint instead of training
    "model": {
        "family": "conv",  # conv | recurrent | ngram
        "window": 30,
        "emb_dim": 32,
        "filters": 32,
        "kernel": 3,
        "dilations": [1, 2],
        "pool": 2,
        "dense_units": 64,
        "dropout": 0.2,
        "units": 64,
        "cell": "gru",
        "order": 2,
        "k": 0.5,
        "min_count": 1,
    },
    "train": {
        "epochs": 3,
        "batch_size": 64,
        "lr": 1e-3,
        "test_fraction": 0.1,
        "checkpoint_every": 1,
        "rng_seed": 7,
        "max_windows": None,
    },
    "generation": {
        "seed_sources": ["self", "external"],
        "diversities": [0.5, 1.0, 1.5, 2.0],
        "replicates": 3,
        "length": 1000,
        "rng_seed": 42,
    },
    "stylometry": {"mfw": 100, "distance": "delta", "linkage": "ward", "min_tokens": 200},
    "workers": 1,
}


def resolve_config(user: dict) -> dict:
    """Overlay a user config onto the defaults (one level of nesting)."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    for key, value in user.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    if not cfg["corpus_dir"]:
        raise ValueError("config requires corpus_dir")
    return cfg


def config_hash(cfg: dict) -> str:
    """64-bit stable hash of the canonical config serialization."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _cell_seed(base: int, source_idx: int, d_idx: int, replicate: int) -> int:
    return (base * 1_000_003 + source_idx * 10_007 + d_idx * 101 + replicate) % (2**31)


def _subsample_windows(windows, cap, rng_seed):
    if cap is None or len(windows) <= cap:
        return windows
    idx = np.sort(np.random.default_rng([rng_seed, 9]).choice(len(windows), cap, replace=False))
    windows.contexts = windows.contexts[idx]
    windows.targets = windows.targets[idx]
    return windows


def train_model(cfg: dict, docs: list[Document], out_dir: Path):
    """Train (or fit) the configured model family; returns (model, files)."""
    model_cfg = cfg["model"]
    vocab = build_vocabulary(docs, "word", model_cfg["min_count"])
    windows = windowize(docs, vocab, model_cfg["window"])
    windows = _subsample_windows(windows, cfg["train"]["max_windows"], cfg["train"]["rng_seed"])
    files = []
    vocab_file = out_dir / "vocab.tsv"
    vocab.save(vocab_file)
    files.append(vocab_file)
    family = model_cfg["family"]
    if family == "ngram":
        model = ngram_mod.fit(windows, vocab, model_cfg["order"], model_cfg["k"])
        path = out_dir / "ngram.json"
        model.save(path)
        files.append(path)
        return model, files
    if family == "conv":
        spec = conv_spec(
            vocab.size,
            window=model_cfg["window"],
            emb_dim=model_cfg["emb_dim"],
            filters=model_cfg["filters"],
            kernel=model_cfg["kernel"],
            dilations=tuple(model_cfg["dilations"]),
            pool=model_cfg["pool"],
            dense_units=model_cfg["dense_units"],
            dropout=model_cfg["dropout"],
        )
    elif family == "recurrent":
        spec = recurrent_spec(
            vocab.size,
            window=model_cfg["window"],
            emb_dim=model_cfg["emb_dim"],
            units=model_cfg["units"],
            cell=model_cfg["cell"],
        )
    else:
        raise ValueError(f"unknown model family {family!r}")
    hp = Hyperparams(
        epochs=cfg["train"]["epochs"],
        batch_size=cfg["train"]["batch_size"],
        lr=cfg["train"]["lr"],
        test_fraction=cfg["train"]["test_fraction"],
        checkpoint_every=cfg["train"]["checkpoint_every"],
        rng_seed=cfg["train"]["rng_seed"],
    )
    checkpoints = train(spec, windows, vocab, hp)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for ckpt in checkpoints:
        path = ckpt_dir / f"{ckpt.checkpoint_id}.ckpt"
        save_checkpoint(ckpt, path)
        files.append(path)
    return restore_network(checkpoints[-1]), files


def load_model(path):
    """Sniff a model file: binary checkpoint or n-gram JSON."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"SGCK":
        return restore_network(load_checkpoint(path))
    return ngram_mod.NgramModel.load(path)


def run_grid(cfg: dict, progress=None) -> dict:
    """Run the full generation grid and write the output manifest.

    Per-cell failures are recorded in the manifest and do not abort the
    other cells; partial results stay on disk.
    """
    cfg = resolve_config(cfg)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "gen").mkdir(exist_ok=True)
    docs = load_corpus(cfg["corpus_dir"], "word")
    files: list[Path] = []
    if cfg["checkpoint"]:
        model = load_model(cfg["checkpoint"])
    else:
        model, files_new = train_model(cfg, docs, out_dir)
        files.extend(files_new)

    external_text = None
    if cfg["external_dir"]:
        external_docs = load_corpus(cfg["external_dir"], "word")
        external_text = "\n".join(d.raw for d in external_docs)

    gen_cfg = cfg["generation"]
    cells = []
    for si, source in enumerate(gen_cfg["seed_sources"]):
        if source == "external" and external_text is None:
            raise ValueError("external seeding requested but no external_dir configured")
        for di, d in enumerate(gen_cfg["diversities"]):
            for rep in range(gen_cfg["replicates"]):
                cells.append((si, source, di, float(d), rep))

    def run_cell(cell):
        si, source, di, d, rep = cell
        config = GenerationConfig(
            diversity=d,
            length=gen_cfg["length"],
            seed_source=source,
            rng_seed=_cell_seed(gen_cfg["rng_seed"], si, di, rep),
            seed_text=external_text if source == "external" else None,
        )
        return generate(model, config, corpus=docs)

    generations = []
    failures = []
    (out_dir / "generations.jsonl").unlink(missing_ok=True)
    workers = max(1, int(cfg["workers"]))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [(cell, pool.submit(run_cell, cell)) for cell in cells]
        for (si, source, di, d, rep), fut in futures:
            label = f"{source}_D{d:g}_r{rep}"
            try:
                record = fut.result()
            except Exception as exc:  # record and continue
                failures.append({"condition": label, "error": str(exc)})
                continue
            text_file = out_dir / "gen" / f"{label}.txt"
            text_file.write_text(record.text + "\n", encoding="utf-8")
            files.append(text_file)
            append_record(record, out_dir / "generations.jsonl")
            generations.append(
                {
                    "file": str(text_file.relative_to(out_dir)),
                    "seed_source": source,
                    "diversity": d,
                    "replicate": rep,
                    "rng_seed": record.config["rng_seed"],
                    "checkpoint": record.checkpoint_id,
                    "oov_substitutions": record.oov_substitutions,
                }
            )
            if progress:
                progress(label)
    if generations:
        files.append(out_dir / "generations.jsonl")

    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "created": datetime.now(timezone.utc).isoformat(),
        "generations": generations,
        "failures": failures,
        "files": sorted(str(p.relative_to(out_dir)) for p in files) + ["manifest.json"],
    }
    write_manifest(manifest, out_dir)
    return manifest


def write_manifest(manifest: dict, out_dir: Path) -> None:
    (Path(out_dir) / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def load_manifest(out_dir) -> dict:
    return json.loads((Path(out_dir) / "manifest.json").read_text(encoding="utf-8"))


# -- cluster report ----------------------------------------------------------


def _condition_of(entry: dict) -> str:
    return f"{entry['seed_source']}_D{entry['diversity']:g}"


def cluster_report(out_dir) -> dict:
    """Stylometry over the generated texts plus the composed comparison texts.

    Produces feature/distance CSVs, the dendrogram in newick/svg/text form
    and a summary with (a) within- vs between-condition distances per
    diversity, (b) mean distance from each self-seeded condition centroid to
    the self-seeded baseline (lowest D), and (c) cophenetic separation of the
    composed texts from all generated texts.
    """
    out_dir = Path(out_dir)
    manifest = load_manifest(out_dir)
    cfg = manifest["config"]
    sty = cfg["stylometry"]
    min_tokens = sty["min_tokens"]

    docs: list[tuple[str, list[str]]] = []
    condition: dict[str, str] = {}
    for entry in manifest["generations"]:
        text = (out_dir / entry["file"]).read_text(encoding="utf-8")
        tokens = tokenize(normalize(text), "word")
        doc_id = Path(entry["file"]).stem
        if len(tokens) < min_tokens:
            warnings.warn(f"{doc_id} has {len(tokens)} tokens < {min_tokens}; excluded")
            continue
        docs.append((doc_id, tokens))
        condition[doc_id] = _condition_of(entry)

    composed_ids = []
    if cfg["composed_dir"]:
        for doc in load_corpus(cfg["composed_dir"], "word"):
            doc_id = f"composed_{doc.id}"
            if len(doc.tokens) < min_tokens:
                warnings.warn(f"{doc_id} has {len(doc.tokens)} tokens < {min_tokens}; excluded")
                continue
            docs.append((doc_id, doc.tokens))
            composed_ids.append(doc_id)

    if len(docs) < 2:
        raise ValueError("need at least two texts for the cluster report")

    fm = feature_matrix(docs, sty["mfw"])
    distance = burrows_delta if sty["distance"] == "delta" else cosine_delta
    dm = distance(fm)
    dg = agglomerate(dm, sty["linkage"])

    report_dir = out_dir / "report"
    report_dir.mkdir(exist_ok=True)
    feature_matrix_to_csv(fm, report_dir / "features.csv")
    distance_matrix_to_csv(dm, report_dir / "distances.csv")
    for fmt, name in (("newick", "tree.nwk"), ("svg", "tree.svg"), ("text", "tree.txt")):
        (report_dir / name).write_bytes(export_dendrogram(dg, fmt))

    summary = _summarize(fm, dm, dg, condition, composed_ids, cfg)
    (report_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8"
    )

    new_files = sorted(
        str(p.relative_to(out_dir))
        for p in [report_dir / n for n in ("features.csv", "distances.csv", "tree.nwk",
                                           "tree.svg", "tree.txt", "summary.json")]
    )
    manifest["files"] = sorted(set(manifest["files"]) | set(new_files))
    manifest["report"] = summary
    write_manifest(manifest, out_dir)
    return summary


def _pair_mean(dm, ids_a, ids_b):
    """Mean distance over cross pairs (or distinct pairs when the sets match)."""
    index = {doc_id: i for i, doc_id in enumerate(dm.doc_ids)}
    same = set(ids_a) == set(ids_b)
    vals = []
    for a in ids_a:
        for b in ids_b:
            if same and a >= b:
                continue
            vals.append(dm.d[index[a], index[b]])
    return float(np.mean(vals)) if vals else float("nan")


def _summarize(fm, dm, dg, condition, composed_ids, cfg) -> dict:
    groups: dict[str, list[str]] = {}
    for doc_id, cond in condition.items():
        groups.setdefault(cond, []).append(doc_id)
    diversities = sorted({float(c.split("_D")[1]) for c in groups})
    sources = sorted({c.split("_D")[0] for c in groups})

    summary: dict = {
        "conditions": {c: sorted(ids) for c, ids in sorted(groups.items())},
        "within_condition_mean": {},
        "between_source_by_diversity": {},
        "within_source_by_diversity": {},
        "seeding_separation_by_diversity": {},
    }
    for cond, ids in groups.items():
        if len(ids) > 1:
            summary["within_condition_mean"][cond] = _pair_mean(dm, ids, ids)

    if "self" in sources and "external" in sources:
        flags = {}
        for d in diversities:
            self_ids = groups.get(f"self_D{d:g}", [])
            ext_ids = groups.get(f"external_D{d:g}", [])
            if not self_ids or not ext_ids:
                continue
            between = _pair_mean(dm, self_ids, ext_ids)
            within_vals = [
                _pair_mean(dm, ids, ids) for ids in (self_ids, ext_ids) if len(ids) > 1
            ]
            within = float(np.mean(within_vals)) if within_vals else float("nan")
            summary["between_source_by_diversity"][f"{d:g}"] = between
            summary["within_source_by_diversity"][f"{d:g}"] = within
            flags[f"{d:g}"] = bool(between > within)
        summary["seeding_separation_by_diversity"] = flags
        summary["seeding_separation"] = bool(flags) and all(flags.values())

    # (b) distance from each self-seeded condition centroid to the baseline
    # (lowest-D self-seeded) condition, in z-space.
    self_ds = [d for d in diversities if f"self_D{d:g}" in groups]
    if len(self_ds) >= 2:
        z, _ = zscores(fm)
        index = {doc_id: i for i, doc_id in enumerate(fm.doc_ids)}
        base_ids = groups[f"self_D{self_ds[0]:g}"]
        drift = {}
        for d in self_ds:
            ids = groups[f"self_D{d:g}"]
            centroid = z[[index[i] for i in ids]].mean(axis=0)
            dists = [np.abs(centroid - z[index[b]]).mean() for b in base_ids]
            drift[f"{d:g}"] = float(np.mean(dists))
        values = [drift[f"{d:g}"] for d in self_ds]
        summary["self_centroid_to_baseline"] = drift
        summary["diversity_drift_strictly_increasing"] = bool(
            all(b > a for a, b in zip(values, values[1:]))
        )

    if composed_ids:
        coph = cophenetic(dg)
        generated = [doc_id for doc_id in condition]
        sets = dg.leaf_sets()
        leaf_index = {doc_id: i for i, doc_id in enumerate(dg.doc_ids)}
        composed_set = frozenset(leaf_index[c] for c in composed_ids)
        summary["composed_complete_subtree"] = bool(
            len(composed_ids) == 1 or any(s == composed_set for s in sets.values())
        )
        if generated:
            min_cross = min(
                coph.d[leaf_index[c], leaf_index[g]] for c in composed_ids for g in generated
            )
            max_within = max(
                (coph.d[leaf_index[a], leaf_index[b]] for a in generated for b in generated),
                default=0.0,
            )
            summary["composed_min_cophenetic_to_generated"] = float(min_cross)
            summary["generated_max_cophenetic"] = float(max_within)
            summary["composed_separated"] = bool(min_cross > max_within)
    return summary


# -- character-model learning curve -------------------------------------------


def learning_curve_report(checkpoints, word_vocab, seed_text: str,
                          length: int = 400, diversity: float = 1e-6,
                          rng_seed: int = 0) -> list[dict]:
    """Per-checkpoint test loss, wordness of a fixed-seed generation and the
    output's top-5 character frequencies (argmax-style sampling by default)."""
    if len(checkpoints) < 2:
        raise ValueError("need at least two checkpoints")
    rows = []
    for ckpt in checkpoints:
        net = restore_network(ckpt)
        n = net.window
        seed = tokenize_chars_prefix(seed_text, n)
        config = GenerationConfig(
            diversity=diversity, length=length, seed_source="explicit",
            seed_tokens=seed, rng_seed=rng_seed,
        )
        record = generate(net, config)
        counts = {}
        for ch in record.text:
            counts[ch] = counts.get(ch, 0) + 1
        top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:5]
        total = max(1, len(record.text))
        rows.append(
            {
                "checkpoint": ckpt.checkpoint_id,
                "epoch": ckpt.meta.get("epoch"),
                "test_loss": ckpt.meta.get("test_loss"),
                "wordness": wordness(record.text, word_vocab),
                "top_chars": "|".join(
                    f"{'<sp>' if ch == ' ' else ch}:{cnt / total:.3f}" for ch, cnt in top
                ),
            }
        )
    return rows


def tokenize_chars_prefix(seed_text: str, n: int) -> list[str]:
    chars = tokenize(normalize(seed_text), "char")
    if len(chars) < n:
        raise ValueError("seed too short")
    return chars[:n]


def learning_curve_to_csv(rows: list[dict], path) -> None:
    lines = ["checkpoint,epoch,test_loss,wordness,top_chars"]
    for r in rows:
        lines.append(
            f"{r['checkpoint']},{r['epoch']},{r['test_loss']:.6f},{r['wordness']:.4f},{r['top_chars']}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
