"""How much of the target side the restricted vocabulary covers, and what it
saves at decode time on a 20k-word vocabulary."""

import time

from coregen.data import coverage_corpus, large_vocab_corpus
from coregen.decoding import greedy_decode
from coregen.model import CoReModel
from coregen.training import TrainConfig, build_resources
from coregen.vocab import coverage_ratio, coverage_report

# 30% of each target is copied, 30% rewrites source words, the rest is filler
train_pairs = coverage_corpus(300, copy_rate=0.3, align_rate=0.3, seed=0)
test_pairs = coverage_corpus(60, copy_rate=0.3, align_rate=0.3, seed=1)
res = build_resources(train_pairs, TrainConfig(frequent_size=50, source_min_count=1))
rows = [
    ("X", coverage_ratio(test_pairs, "X")),
    ("X+A(X)", coverage_ratio(test_pairs, "X+A(X)", res.table)),
    ("X+A(X)+U", coverage_ratio(test_pairs, "X+A(X)+U", res.table, res.frequent)),
    ("top-500", coverage_ratio(test_pairs, "top-N", v=res.target, n=500)),
]
print(coverage_report(rows), end="")

# decode speed: restricted softmax vs the whole vocabulary
corpus = large_vocab_corpus()
cfg = TrainConfig(embedding_dim=64, hidden_dim=128, source_min_count=1)
res = build_resources(corpus, cfg)
model = CoReModel(res.model_config(cfg), seed=0)
print(f"\n|V| = {len(res.target)}, |V_G| for the first source = {len(res.restricted(corpus[0][0]))}")

for restrict in (True, False):
    start, steps = time.perf_counter(), 0
    for src, _ in corpus[:20]:
        steps += len(greedy_decode(model, res, src, max_len=10, restrict=restrict).tokens)
    rate = steps / (time.perf_counter() - start)
    print(f"restrict={restrict!s:<5}  {rate:7.0f} steps/s")
