"""Ablation grid at desk scale: drop a block, retrain, compare.

Runs the module group of the sweep (six configurations) with a short
shared protocol on two synthetic tiles and prints the resulting table.
Numbers at this scale order differently than a full training run would;
the point is the harness: identical protocol, one changed component per
row, reproducible at a fixed seed.
"""

import os
import tempfile

from panrestore.ablation import format_group_table, run_ablation
from panrestore.data import DatasetSpec, generate_toy_corpus, ingest
from panrestore.model import ModelConfig
from panrestore.train import TrainConfig

work = tempfile.mkdtemp(prefix="restore_ablate_")
corpus = os.path.join(work, "corpus")
generate_toy_corpus(corpus, count=2, tile=64, seed=0)
samples = ingest(DatasetSpec(root=corpus, split="all", tile=32, task="joint_x2"))

base = ModelConfig(task="joint_x2", depth=4, growth=8, state_size=8, seed=10)
tc = TrainConfig(lr=1e-3, epochs=30, max_iters=60, step_every=50, seed=10)
results = run_ablation(samples, base, tc, groups=("modules",), out_dir=work)

for r in results:
    print(f"{r['label']:<22s} l1 {r['initial_l1']:7.3f} -> {r['final_l1']:7.4f}")
print()
print(format_group_table(results, "modules"))
print()
print("csv and markdown under:", work)
