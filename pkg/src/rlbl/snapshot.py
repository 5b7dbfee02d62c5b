"""Versioned binary snapshot container for models and their corpus binding.

Layout (little-endian):

    bytes 0..5   magic  b"RLBL" + version byte + b"\\n"
    bytes 6..13  uint64 header length H
    next H bytes UTF-8 JSON header: {"kind", "meta", "arrays": [
                     {"name", "shape", "dtype"}, ...]}
    then the raw C-order bytes of each array, in header order.

The writer emits no timestamps or other volatile state, so identical
inputs produce byte-identical files. Model kinds: "rlbl", "ta-rlbl",
"pop", "markov". A corpus may be embedded so that prediction can rebuild
user histories from the snapshot alone.
"""

import json

import numpy as np

from rlbl.baselines import MarkovModel, PopModel
from rlbl.data import BuildReport, Corpus, UserSequence
from rlbl.model import RlblParams
from rlbl.time_aware import TaRlblParams, TimeBinGrid

MAGIC = b"RLBL\x01\n"


class SnapshotError(ValueError):
    """Raised for unreadable or incompatible snapshot files."""


def _model_payload(params):
    if isinstance(params, RlblParams):
        return "rlbl", {}, [
            ("user_vecs", params.user_vecs),
            ("item_vecs", params.item_vecs),
            ("W", params.W),
            ("C", params.C),
            ("M", params.M),
            ("u0", params.u0),
        ]
    if isinstance(params, TaRlblParams):
        return "ta-rlbl", {"bin_width": params.grid.bin_width, "n": params.n}, [
            ("user_vecs", params.user_vecs),
            ("item_vecs", params.item_vecs),
            ("W", params.W),
            ("boundary_mats", params.grid.boundary_mats),
            ("M", params.M),
            ("u0", params.u0),
        ]
    if isinstance(params, PopModel):
        return "pop", {}, [("item_counts", params.item_counts)]
    if isinstance(params, MarkovModel):
        return "markov", {}, [
            ("transitions", params.transitions),
            ("fallback", params.fallback),
            ("row_observed", params.row_observed.astype(np.int8)),
        ]
    raise SnapshotError(f"cannot snapshot object of type {type(params).__name__}")


def _corpus_payload(corpus):
    offsets = np.zeros(corpus.n_users + 1, dtype=np.int64)
    for u in range(corpus.n_users):
        offsets[u + 1] = offsets[u] + len(corpus.sequences[u])
    items = np.concatenate([s.items for s in corpus.sequences])
    behaviors = np.concatenate([s.behaviors for s in corpus.sequences])
    timestamps = np.concatenate([s.timestamps for s in corpus.sequences])
    meta = {
        "n_users": corpus.n_users,
        "n_items": corpus.n_items,
        "n_behaviors": corpus.n_behaviors,
        "user_ids": [str(x) for x in corpus.user_ids],
        "item_ids": [str(x) for x in corpus.item_ids],
    }
    arrays = [
        ("corpus_offsets", offsets),
        ("corpus_items", items),
        ("corpus_behaviors", behaviors),
        ("corpus_timestamps", timestamps),
        ("corpus_train_end", corpus.train_end),
        ("corpus_valid_end", corpus.valid_end),
    ]
    return meta, arrays


def save_snapshot(path, params, corpus=None):
    """Write a model (and optionally its corpus) to a snapshot file."""
    kind, meta, arrays = _model_payload(params)
    meta = dict(meta)
    if corpus is not None:
        corpus_meta, corpus_arrays = _corpus_payload(corpus)
        meta["corpus"] = corpus_meta
        arrays = arrays + corpus_arrays
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [
            {"name": name, "shape": list(a.shape), "dtype": str(np.asarray(a).dtype)}
            for name, a in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())


def _rebuild_model(kind, meta, arrs):
    if kind == "rlbl":
        return RlblParams(arrs["user_vecs"], arrs["item_vecs"], arrs["W"],
                          arrs["C"], arrs["M"], arrs["u0"])
    if kind == "ta-rlbl":
        grid = TimeBinGrid(bin_width=float(meta["bin_width"]),
                           boundary_mats=arrs["boundary_mats"])
        return TaRlblParams(arrs["user_vecs"], arrs["item_vecs"], arrs["W"],
                            grid, arrs["M"], arrs["u0"], n=int(meta["n"]))
    if kind == "pop":
        m = PopModel()
        m.item_counts = arrs["item_counts"]
        return m
    if kind == "markov":
        m = MarkovModel()
        m.transitions = arrs["transitions"]
        m.fallback = arrs["fallback"]
        m.row_observed = arrs["row_observed"].astype(bool)
        return m
    raise SnapshotError(f"unknown model kind {kind!r}")


def _rebuild_corpus(meta, arrs):
    offsets = arrs["corpus_offsets"]
    sequences = []
    for u in range(meta["n_users"]):
        lo, hi = offsets[u], offsets[u + 1]
        sequences.append(UserSequence(
            u,
            arrs["corpus_items"][lo:hi].copy(),
            arrs["corpus_behaviors"][lo:hi].copy(),
            arrs["corpus_timestamps"][lo:hi].copy(),
        ))
    return Corpus(
        sequences=sequences,
        n_users=meta["n_users"],
        n_items=meta["n_items"],
        n_behaviors=meta["n_behaviors"],
        train_end=arrs["corpus_train_end"],
        valid_end=arrs["corpus_valid_end"],
        user_ids=list(meta["user_ids"]),
        item_ids=list(meta["item_ids"]),
        report=BuildReport(),
    )


def load_snapshot(path):
    """Read a snapshot; returns (kind, model, corpus-or-None)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise SnapshotError(f"cannot read {path}: {exc}") from exc
    if blob[: len(MAGIC)] != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    off = len(MAGIC)
    hlen = int.from_bytes(blob[off:off + 8], "little")
    off += 8
    try:
        header = json.loads(blob[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"{path}: corrupt header: {exc}") from exc
    off += hlen

    arrs = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if off + nbytes > len(blob):
            raise SnapshotError(f"{path}: truncated array {spec['name']}")
        arrs[spec["name"]] = np.frombuffer(
            blob[off:off + nbytes], dtype=dtype
        ).reshape(shape).copy()
        off += nbytes

    kind = header["kind"]
    meta = header["meta"]
    model = _rebuild_model(kind, meta, arrs)
    corpus = _rebuild_corpus(meta["corpus"], arrs) if "corpus" in meta else None
    return kind, model, corpus
