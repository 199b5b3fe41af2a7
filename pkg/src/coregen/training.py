"""Dual objective, RmsProp, and the teacher-forced training loop."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ndmath as nd
from .alignment import (
    DEFAULT_ITERATIONS, AlignmentTable, Pair, dumps_table, loads_table, prune_top_k,
    train_alignment,
)
from .checkpoint import content_hash, save_checkpoint
from .model import CoReModel, ModelConfig, ModelParams, prepare_sources
from .ndmath import Graph, Tensor
from .vocab import (
    BOS_ID, EOS, PAD_ID, UNK, RestrictedVocab, Vocabulary, build_vocab, frequent_table,
    restricted_vocab,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    embedding_dim: int = 256
    hidden_dim: int = 512
    learning_rate: float = 0.05
    batch_size: int = 32
    k_alignments: int = 10
    frequent_size: int = 2000
    epochs: int = 10
    clip_norm: float = 5.0
    rms_decay: float = 0.95
    rms_eps: float = 1e-6
    seed: int = 1234
    align_iterations: int = DEFAULT_ITERATIONS
    diagonal_tension: float = 0.0
    source_min_count: int = 2

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("learning_rate", "diagonal_tension", "seed"):
                if value < 0:
                    raise ValueError(f"{f.name} must be non-negative")
            elif value <= 0:
                raise ValueError(f"{f.name} must be positive")
        if not 0 < self.rms_decay < 1:
            raise ValueError("rms_decay must lie in (0, 1)")


@dataclass
class Resources:
    """Everything derived from the training split that the network needs."""

    source: Vocabulary
    target: Vocabulary
    frequent: Vocabulary
    table: AlignmentTable
    _vg_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def restricted(self, source_tokens: Sequence[str]) -> RestrictedVocab:
        key = tuple(source_tokens)
        vg = self._vg_cache.get(key)
        if vg is None:
            vg = restricted_vocab(key, self.table, self.frequent, self.target)
            self._vg_cache[key] = vg
        return vg

    def model_config(self, cfg: TrainConfig) -> ModelConfig:
        return ModelConfig(len(self.source), len(self.target), cfg.embedding_dim, cfg.hidden_dim)


def build_resources(corpus: Sequence[Pair], cfg: TrainConfig, table: AlignmentTable | None = None) -> Resources:
    if table is None:
        table = train_alignment(corpus, cfg.align_iterations, cfg.diagonal_tension or None)
    if table.k is None or table.k > cfg.k_alignments:
        table = prune_top_k(table, cfg.k_alignments)
    # train on exactly what gets written to disk (probabilities at 6 decimals)
    table = loads_table(dumps_table(table))
    return Resources(
        source=build_vocab(corpus, "source", cfg.source_min_count),
        target=build_vocab(corpus, "target", 1),
        frequent=frequent_table(corpus, cfg.frequent_size),
        table=table,
    )


# ------------------------------------------------------------------ batches

def lambda_supervision(source_tokens: Sequence[str], target_tokens: Sequence[str]) -> list[int]:
    """1 where the target token occurs anywhere in the source, else 0."""
    present = set(source_tokens)
    return [int(t in present) for t in target_tokens]


@dataclass
class Batch:
    src_ids: np.ndarray        # [B, n]
    src_mask: np.ndarray       # [B, n]
    src_tokens: list[list[str]]
    dec_inputs: np.ndarray     # [B, T] previous-token ids (BOS first)
    step_mask: np.ndarray      # [B, T]
    copy_match: np.ndarray     # [B, T, n] 1 where source token == (effective) target
    union_ids: np.ndarray      # [K] union of the sources' restricted vocabularies
    vg_mask: np.ndarray        # [B, K]
    gen_pos: np.ndarray        # [B, T] index into union_ids (0 when unused)
    gen_ok: np.ndarray         # [B, T] 1 when the target is generable
    lam_star: np.ndarray       # [B, T]

    def __len__(self):
        return self.src_ids.shape[0]


def make_batch(pairs: Sequence[Pair], res: Resources) -> Batch:
    """Tensorize pairs for teacher forcing.

    Both sides get EOS appended. A target outside the union of copyable and
    generable words is scored as UNK.
    """
    v = res.target
    src_ids, src_mask, src_tokens = prepare_sources([s for s, _ in pairs], res.source)
    targets = [list(t) + [EOS] for _, t in pairs]
    B, n = src_ids.shape
    T = max(len(t) for t in targets)
    vgs = [res.restricted(s) for s, _ in pairs]
    union = np.unique(np.concatenate([vg.ids for vg in vgs]))
    vg_mask = np.stack([np.isin(union, vg.ids) for vg in vgs])

    dec_inputs = np.full((B, T), PAD_ID, dtype=np.int64)
    step_mask = np.zeros((B, T))
    copy_match = np.zeros((B, T, n))
    gen_pos = np.zeros((B, T), dtype=np.int64)
    gen_ok = np.zeros((B, T))
    lam_star = np.zeros((B, T))
    for b, (src, tgt) in enumerate(zip(src_tokens, targets)):
        vg = vgs[b]
        generable = {v.tokens[i] for i in vg.ids}
        support = set(src) | generable
        dec_inputs[b, : len(tgt)] = [BOS_ID] + v.ids(tgt[:-1])
        step_mask[b, : len(tgt)] = 1.0
        lam_star[b, : len(tgt)] = lambda_supervision(src, tgt)
        for t, y in enumerate(tgt):
            y_eff = y if y in support else UNK
            copy_match[b, t, : len(src)] = [tok == y_eff for tok in src]
            if y_eff in generable:
                gen_pos[b, t] = np.searchsorted(union, v.index[y_eff])
                gen_ok[b, t] = 1.0
    return Batch(src_ids, src_mask, src_tokens, dec_inputs, step_mask, copy_match,
                 union, vg_mask, gen_pos, gen_ok, lam_star)


# -------------------------------------------------------------------- loss

@dataclass
class LossOutput:
    eps1: Tensor
    eps2: Tensor
    total: Tensor
    per_pair: np.ndarray       # [B] unaveraged eps1 + eps2 per pair
    lambdas: np.ndarray        # [B, T] predicted copy probabilities
    clamped: int               # unpadded steps whose target probability hit the log clamp


def step_loss(p_target: Tensor, lam: Tensor, lam_star, mask) -> tuple[Tensor, Tensor]:
    """Per-pair losses for one decoder step: ``(-ln p(y*), binary CE of lam)``,
    both zeroed where ``mask`` is 0."""
    lam_star = np.asarray(lam_star, dtype=np.float64)
    nll = nd.log(p_target) * (-1.0)
    bce = (nd.log(lam) * lam_star + nd.log(1.0 - lam) * (1.0 - lam_star)) * (-1.0)
    return nll * mask, bce * mask


def batch_loss(model: CoReModel, batch: Batch) -> LossOutput:
    """Teacher-forced eps1 (combined-distribution CE) and eps2 (mode CE),
    summed over steps and averaged over the batch."""
    B, T = batch.dec_inputs.shape
    enc = model.encode(batch.src_ids, batch.src_mask, batch.src_tokens)
    s = model.init_state(enc)
    rows = model.output_rows(batch.union_ids)
    nll_steps, bce_steps, lams = [], [], []
    clamped = 0
    for t in range(T):
        alpha, context = model.attend(s, enc)
        s = model.decode_step(batch.dec_inputs[:, t], s, context)
        p_gen_all = model.generate_distribution(batch.dec_inputs[:, t], s, context,
                                                batch.union_ids, batch.vg_mask, rows=rows)
        lam = model.predict_mode(s)
        p_copy = nd.sum(alpha * batch.copy_match[:, t, :], axis=1)
        p_gen = nd.take_last(p_gen_all, batch.gen_pos[:, t]) * batch.gen_ok[:, t]
        p = lam * p_copy + (1.0 - lam) * p_gen
        live = batch.step_mask[:, t]
        clamped += int(((p.data < nd.LOG_CLAMP) & (live > 0)).sum())
        nll, bce = step_loss(p, lam, batch.lam_star[:, t], live)
        nll_steps.append(nll)
        bce_steps.append(bce)
        lams.append(lam.data)
    nll_pair = nd.sum(nd.stack(nll_steps, axis=1), axis=1)
    bce_pair = nd.sum(nd.stack(bce_steps, axis=1), axis=1)
    eps1 = nd.sum(nll_pair) * (1.0 / B)
    eps2 = nd.sum(bce_pair) * (1.0 / B)
    if clamped:
        log.debug("%d target probabilities clamped at %g", clamped, nd.LOG_CLAMP)
    return LossOutput(eps1, eps2, eps1 + eps2, nll_pair.data + bce_pair.data,
                      np.stack(lams, axis=1), clamped)


# --------------------------------------------------------------- optimizer

class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


RmsState = dict[str, np.ndarray]


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(math.fsum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def rmsprop_update(params: ModelParams, grads: dict[str, np.ndarray], state: RmsState,
                   cfg: TrainConfig) -> tuple[ModelParams, RmsState]:
    """In-place RmsProp step after global-norm clipping.

    ``state <- rho * state + (1 - rho) * g^2``;
    ``param <- param - lr * g / sqrt(state + eps)``.
    """
    for name in sorted(grads):
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if grads[name].shape != params[name].shape:
            raise ValueError(f"gradient shape {grads[name].shape} != parameter shape "
                             f"{params[name].shape} for {name!r}")
        if not np.isfinite(grads[name]).all():
            raise NonFiniteGradient(name)
    grads = dict(grads)
    clip_global_norm(grads, cfg.clip_norm)
    rho = cfg.rms_decay
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        ms = state.get(name)
        if ms is None:
            ms = np.zeros_like(p.data)
        ms = rho * ms + (1.0 - rho) * g * g
        state[name] = ms
        p.data -= cfg.learning_rate * g / np.sqrt(ms + cfg.rms_eps)
    return params, state


# -------------------------------------------------------------------- loop

@dataclass
class EpochStats:
    epoch: int
    eps1: float
    eps2: float
    val_eps: float | None

    def tsv(self) -> str:
        val = "nan" if self.val_eps is None else f"{self.val_eps:.6f}"
        return f"{self.epoch}\t{self.eps1:.6f}\t{self.eps2:.6f}\t{val}"


@dataclass
class TrainResult:
    model: CoReModel
    resources: Resources
    history: list[EpochStats]
    best_epoch: int | None = None


def bucketed_batches(corpus: Sequence[Pair], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffle, stable-sort by source length, cut into batches, shuffle the batches."""
    order = rng.permutation(len(corpus))
    order = sorted(order.tolist(), key=lambda i: len(corpus[i][0]))
    batches = [order[i: i + batch_size] for i in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def evaluate_loss(model: CoReModel, corpus: Sequence[Pair], res: Resources, batch_size: int) -> float:
    """Mean per-pair eps over ``corpus`` (no gradients)."""
    total = 0.0
    for i in range(0, len(corpus), batch_size):
        out = batch_loss(model, make_batch(corpus[i: i + batch_size], res))
        total += float(out.per_pair.sum())
    return total / len(corpus)


def train_epoch(model: CoReModel, corpus: Sequence[Pair], res: Resources, cfg: TrainConfig,
                state: RmsState, rng: np.random.Generator) -> tuple[float, float]:
    """One pass; returns the per-pair means of eps1 and eps2 over the epoch."""
    e1 = e2 = 0.0
    for idx in bucketed_batches(corpus, cfg.batch_size, rng):
        batch = make_batch([corpus[i] for i in idx], res)
        with Graph() as g:
            out = batch_loss(model, batch)
        grads = nd.backward(g, out.total)
        rmsprop_update(model.params, grads, state, cfg)
        e1 += out.eps1.item() * len(idx)
        e2 += out.eps2.item() * len(idx)
    return e1 / len(corpus), e2 / len(corpus)


def train(
    cfg: TrainConfig,
    corpus: Sequence[Pair],
    resources: Resources | None = None,
    valid: Sequence[Pair] | None = None,
    out_dir=None,
    model: CoReModel | None = None,
) -> TrainResult:
    """Teacher-forced training with per-epoch checkpoints and a TSV log.

    With ``out_dir`` set, writes ``epoch{N}.ckpt`` each epoch, ``best.ckpt``
    for the lowest validation loss (or the last epoch without validation),
    and ``train.log``.
    """
    res = resources or build_resources(corpus, cfg)
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = CoReModel(res.model_config(cfg), seed=int(rng.integers(2**31)))
    for p in model.params.values():
        p.requires_grad = True
    if valid is not None and len(valid) == 0:
        warnings.warn("validation corpus is empty; validation skipped", stacklevel=2)
        valid = None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "train.log").write_text("epoch\teps1\teps2\tval_eps\n", encoding="utf-8")

    state: RmsState = {}
    history: list[EpochStats] = []
    best: tuple[float, int] | None = None
    for epoch in range(1, cfg.epochs + 1):
        e1, e2 = train_epoch(model, corpus, res, cfg, state, rng)
        val = evaluate_loss(model, valid, res, cfg.batch_size) if valid else None
        stats = EpochStats(epoch, e1, e2, val)
        history.append(stats)
        log.info("epoch %d eps1=%.4f eps2=%.4f val=%s", epoch, e1, e2, val)
        score = val if val is not None else -epoch
        if best is None or score < best[0]:
            best = (score, epoch)
        if out is not None:
            with open(out / "train.log", "a", encoding="utf-8") as fh:
                fh.write(stats.tsv() + "\n")
            ckpt = out / f"epoch{epoch}.ckpt"
            save_checkpoint(ckpt, model.params, checkpoint_config(cfg, res))
            if best[1] == epoch:
                (out / "best.ckpt").write_bytes(ckpt.read_bytes())
    return TrainResult(model, res, history, best[1] if best else None)


def resource_hashes(res: Resources) -> dict[str, str]:
    return {
        "source_vocab_hash": content_hash(res.source.dumps()),
        "target_vocab_hash": content_hash(res.target.dumps()),
        "frequent_hash": content_hash(res.frequent.dumps()),
        "table_hash": content_hash(dumps_table(res.table)),
    }


def checkpoint_config(cfg: TrainConfig, res: Resources) -> dict[str, str]:
    """Config snapshot stored in checkpoints: hyperparameters, vocabulary
    sizes and content hashes of the resources the weights belong to."""
    conf = {k: str(v) for k, v in asdict(cfg).items()}
    conf["src_vocab_size"] = str(len(res.source))
    conf["tgt_vocab_size"] = str(len(res.target))
    conf.update(resource_hashes(res))
    return conf
