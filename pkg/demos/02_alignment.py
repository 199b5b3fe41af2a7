"""Word alignment with EM, and what it contributes to the generator vocabulary."""

from coregen.alignment import dumps_table, expand, prune_top_k, train_alignment
from coregen.data import mixed_corpus

# the classic two-sentence case: 'a' must mean 'x'
toy = [(["a"], ["x"]), (["a", "b"], ["x", "y"])]
for iters in (1, 2, 5, 20):
    t = train_alignment(toy, iters)
    print(f"{iters:>2} iterations  t(x|a)={t.prob('a', 'x'):.4f}  t(y|b)={t.prob('b', 'y'):.4f}")

# log-likelihood never goes down
print("log-likelihood", [round(v, 3) for v in train_alignment(toy, 6).log_likelihoods])

# a bigger corpus where odd target positions rewrite the source word as r_<word>
corpus = mixed_corpus(200, seed=0)
table = prune_top_k(train_alignment(corpus, 5), k=3)
print(table.entries["w3"])

# A(X): every word the pruned table links to the source
source = corpus[0][0]
print("source", source)
print("A(X)  ", sorted(expand(table, source)))

# the plain-text format used on disk
print("".join(dumps_table(table).splitlines(True)[:4]), end="")
