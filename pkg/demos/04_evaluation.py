"""ROUGE, trigram perplexity and the LEAD baseline on a synthetic corpus."""

from coregen.data import coverage_corpus
from coregen.evaluation import (
    format_report, lead_baseline, metric_report, perplexity, rouge_n, train_lm,
)

# the textbook ROUGE-2 case: only "a b" is shared, f = 2 * 1 / (3 + 3)
print(rouge_n("a b c d".split(), "a b x d".split(), n=2))

pairs = coverage_corpus(300, copy_rate=0.4, align_rate=0.3, seed=0)
sources = [s for s, _ in pairs]
references = [t for _, t in pairs]

# the LM is trained on reference targets, so references score best
lm = train_lm(references)
print("PPL references      ", round(perplexity(lm, references), 2))
print("PPL reversed        ", round(perplexity(lm, [r[::-1] for r in references]), 2))

# LEAD takes the first 20 source words: always 100% copied, rarely a good summary
lead = [lead_baseline(s, 20) for s in sources]
print("\nLEAD report")
print(format_report(metric_report(lead, references, sources, lm)), end="")
