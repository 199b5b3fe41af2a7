"""Copy-and-restricted-generation sequence-to-sequence paraphraser."""

from .alignment import AlignmentTable, expand, prune_top_k, train_alignment
from .decoding import Hypothesis, beam_decode, greedy_decode
from .evaluation import NgramLM, lead_baseline, perplexity, quality_stats, rouge_n, train_lm
from .model import CoReModel, ModelConfig, combine, copy_distribution
from .training import Resources, TrainConfig, build_resources, lambda_supervision, train
from .vocab import Vocabulary, build_vocab, coverage_ratio, frequent_table, restricted_vocab

__version__ = "0.1.0"
