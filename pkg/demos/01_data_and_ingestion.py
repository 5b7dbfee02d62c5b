"""Walk through the data path: raw events -> parsed -> split corpus.

Generates a small synthetic event log, writes it in the generic delimited
format, parses it back, and builds an indexed corpus with per-user
chronological train/valid/test cuts.
"""

import tempfile
from pathlib import Path

from rlbl.data import build_corpus
from rlbl.ingestion import SynthSpec, generate_synthetic, parse_generic, write_generic

spec = SynthSpec(
    n_users=8,
    n_items=25,
    n_behaviors=3,
    seq_len_range=(15, 25),
    markov_strength=0.7,
    rng_seed=11,
)
events = generate_synthetic(spec)
print(f"generated {len(events)} events")
print("first three:")
for ev in events[:3]:
    print("  ", ev)

# round-trip through the on-disk format
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "events.tsv"
    write_generic(events, path)
    print(f"\nwrote {path.stat().st_size} bytes; first line:")
    print("  ", path.read_text().split("\n")[0])
    reparsed = parse_generic(path)
    assert reparsed == events, "round-trip must be exact"
    print("parse(write(events)) == events")

corpus = build_corpus(events)
print(f"\ncorpus: {corpus.n_users} users, {corpus.n_items} items, "
      f"{corpus.n_behaviors} behaviors")
for u in range(3):
    seq = corpus.sequences[u]
    t, v = int(corpus.train_end[u]), int(corpus.valid_end[u])
    print(f"  user {corpus.user_ids[u]}: {len(seq)} events -> "
          f"train[0:{t}] valid[{t}:{v}] test[{v}:{len(seq)}]")

# raw ids survive densification
seq = corpus.sequences[0]
print("\nuser 0 history (raw item ids):",
      [corpus.item_ids[i] for i in seq.items[:6]], "...")
