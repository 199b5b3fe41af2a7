"""The copy/rewrite encoder-decoder.

A bidirectional GRU encodes the source; a GRU decoder with additive
attention produces, at every step, three heads: a copy distribution read
directly off the attention weights, a generator softmax over the source's
restricted vocabulary, and a sigmoid gate ``lam`` mixing them::

    p(w) = lam * p_copy(w) + (1 - lam) * p_gen(w)

All methods are batched (leading axis ``B``) and operate on
:class:`~coregen.ndmath.Tensor`, so the same code drives training (under a
``Graph``) and decoding (no graph, plain numpy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ndmath as nd
from .ndmath import Tensor
from .vocab import EOS, PAD_ID, RestrictedVocab, Vocabulary

INIT_SCALE = 0.08

ModelParams = dict[str, Tensor]


@dataclass
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    embedding_dim: int = 256
    hidden_dim: int = 512
    attention_dim: int | None = None
    readout_dim: int | None = None

    def __post_init__(self):
        if self.attention_dim is None:
            self.attention_dim = self.hidden_dim
        if self.readout_dim is None:
            self.readout_dim = self.hidden_dim

    def shapes(self) -> dict[str, tuple[int, ...]]:
        E, H = self.embedding_dim, self.hidden_dim
        A, R = self.attention_dim, self.readout_dim
        shapes = {
            "src_emb": (self.src_vocab_size, E),
            "tgt_emb": (self.tgt_vocab_size, E),
        }
        for d in ("enc_fwd", "enc_bwd"):
            shapes |= {f"{d}_W": (E, 3 * H), f"{d}_U_zr": (H, 2 * H),
                       f"{d}_U_h": (H, H), f"{d}_b": (3 * H,)}
        shapes |= {
            "init_W": (H, H), "init_b": (H,),
            "att_W": (H, A), "att_U": (2 * H, A), "att_v": (A,),
            "dec_W": (E + 2 * H, 3 * H), "dec_U_zr": (H, 2 * H),
            "dec_U_h": (H, H), "dec_b": (3 * H,),
            "readout_W": (E + H + 2 * H, R), "readout_b": (R,),
            "out_W": (self.tgt_vocab_size, R),
            "mode_w": (H,),
        }
        return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator, scale: float = INIT_SCALE) -> ModelParams:
    """Uniform(-scale, scale) matrices, zero biases; ``mode_w`` is drawn like a matrix row."""
    params = {}
    for name, shape in cfg.shapes().items():
        if name.endswith("_b"):
            data = np.zeros(shape)
        else:
            data = rng.uniform(-scale, scale, size=shape)
        params[name] = Tensor(data, name=name)
    return params


@dataclass
class EncodedSource:
    states: Tensor            # [B, n, 2H]
    keys: Tensor              # [B, n, A]; states @ att_U, cached for attention
    backward_first: Tensor    # [B, H]; backward GRU state at position 1
    mask: np.ndarray          # [B, n] bool
    tokens: list[list[str]] = field(default_factory=list)


@dataclass
class StepOutput:
    alpha: np.ndarray                 # [n] attention / copy weights over positions
    context: np.ndarray               # [2H]
    state: np.ndarray                 # [H]
    p_copy: dict[str, float]          # over distinct source surface tokens
    p_gen: np.ndarray                 # over vg.ids
    lam: float
    combined: dict[str, float]


def gru_step(x_proj: Tensor, h: Tensor, U_zr: Tensor, U_h: Tensor) -> Tensor:
    """One GRU update; ``x_proj`` is the input already mapped to ``[B, 3H]``
    (update, reset, candidate blocks) with bias added."""
    H = h.shape[-1]
    zr = nd.sigmoid(x_proj[:, : 2 * H] + h @ U_zr)
    z, r = zr[:, :H], zr[:, H:]
    cand = nd.tanh(x_proj[:, 2 * H:] + (r * h) @ U_h)
    return h + z * (cand - h)


def prepare_sources(sources: Sequence[Sequence[str]], src_vocab: Vocabulary):
    """Append EOS, map to ids (rare words -> UNK) and right-pad.

    Returns ``(ids [B, n], mask [B, n], tokens)`` where ``tokens`` keeps the
    surface strings so that out-of-vocabulary words stay copyable.
    """
    tokens = [list(s) + [EOS] for s in sources]
    n = max(len(t) for t in tokens)
    ids = np.full((len(tokens), n), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(tokens), n), dtype=bool)
    for b, toks in enumerate(tokens):
        ids[b, : len(toks)] = src_vocab.ids(toks)
        mask[b, : len(toks)] = True
    return ids, mask, tokens


class CoReModel:
    def __init__(self, cfg: ModelConfig, params: ModelParams | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, np.random.default_rng(seed))
        shapes = cfg.shapes()
        for name, shape in shapes.items():
            if name not in self.params:
                raise KeyError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    # -------------------------------------------------------------- encoder

    def _run_direction(self, x_proj: Tensor, mask: np.ndarray, prefix: str, reverse: bool):
        B, n = mask.shape
        H = self.cfg.hidden_dim
        U_zr, U_h = self.params[f"{prefix}_U_zr"], self.params[f"{prefix}_U_h"]
        h = Tensor(np.zeros((B, H)))
        outs: list[Tensor] = [None] * n
        order = range(n - 1, -1, -1) if reverse else range(n)
        for tau in order:
            m = mask[:, tau, None].astype(np.float64)
            h_new = gru_step(x_proj[:, tau, :], h, U_zr, U_h)
            h = h_new * m + h * (1.0 - m)
            outs[tau] = h * m
        return outs

    def encode(self, source_ids, mask, tokens: list[list[str]] | None = None) -> EncodedSource:
        ids = np.asarray(source_ids, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        if ids.ndim == 1:
            ids, mask = ids[None, :], mask[None, :]
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.src_vocab_size):
            raise IndexError("source id out of range for the source vocabulary")
        if not mask[:, 0].all():
            raise ValueError("every source needs a non-empty unpadded prefix")
        p = self.params
        emb = nd.take_rows(p["src_emb"], ids)
        fwd = self._run_direction(emb @ p["enc_fwd_W"] + p["enc_fwd_b"], mask, "enc_fwd", False)
        bwd = self._run_direction(emb @ p["enc_bwd_W"] + p["enc_bwd_b"], mask, "enc_bwd", True)
        states = nd.concat([nd.stack(fwd, axis=1), nd.stack(bwd, axis=1)], axis=-1)
        keys = states @ p["att_U"]
        return EncodedSource(states, keys, bwd[0], mask, tokens or [])

    def init_state(self, enc: EncodedSource) -> Tensor:
        return nd.tanh(enc.backward_first @ self.params["init_W"] + self.params["init_b"])

    # -------------------------------------------------------------- decoder

    def attend(self, s_prev: Tensor, enc: EncodedSource) -> tuple[Tensor, Tensor]:
        p = self.params
        B, n, A = enc.keys.shape
        query = nd.reshape(s_prev @ p["att_W"], (B, 1, A))
        hidden = nd.tanh(enc.keys + query)
        scores = nd.reshape(hidden @ nd.reshape(p["att_v"], (A, 1)), (B, n))
        alpha = nd.softmax_masked(scores, enc.mask)
        context = nd.sum(nd.reshape(alpha, (B, n, 1)) * enc.states, axis=1)
        return alpha, context

    def decode_step(self, y_prev_ids, s_prev: Tensor, context: Tensor) -> Tensor:
        p = self.params
        emb = nd.take_rows(p["tgt_emb"], np.asarray(y_prev_ids, dtype=np.int64))
        x = nd.concat([emb, context], axis=-1)
        return gru_step(x @ p["dec_W"] + p["dec_b"], s_prev, p["dec_U_zr"], p["dec_U_h"])

    def readout(self, y_prev_ids, s_t: Tensor, context: Tensor) -> Tensor:
        p = self.params
        emb = nd.take_rows(p["tgt_emb"], np.asarray(y_prev_ids, dtype=np.int64))
        return nd.concat([emb, s_t, context], axis=-1) @ p["readout_W"] + p["readout_b"]

    def output_rows(self, ids) -> Tensor:
        """Output weight rows for the given target ids (the only rows the
        generator touches)."""
        return nd.take_rows(self.params["out_W"], ids)

    def generate_distribution(self, y_prev_ids, s_t: Tensor, context: Tensor,
                              vg_ids, vg_mask=None, rows: Tensor | None = None) -> Tensor:
        """Softmax over ``vg_ids`` only; ``vg_mask`` ([B, K]) further restricts
        each row when several sources share one id union."""
        psi = self.readout(y_prev_ids, s_t, context)
        if rows is None:
            rows = self.output_rows(vg_ids)
        logits = psi @ nd.transpose(rows)
        if vg_mask is None:
            vg_mask = np.ones(logits.shape, dtype=bool)
        return nd.softmax_masked(logits, vg_mask)

    def predict_mode(self, s_t: Tensor) -> Tensor:
        H = self.cfg.hidden_dim
        logit = s_t @ nd.reshape(self.params["mode_w"], (H, 1))
        return nd.sigmoid(nd.reshape(logit, (s_t.shape[0],)))

    # ------------------------------------------------------- single source

    def step(self, enc: EncodedSource, y_prev_id: int, s_prev: Tensor, vg: RestrictedVocab,
             v: Vocabulary, rows: Tensor | None = None) -> StepOutput:
        """Full decoder step for a single encoded source (B = 1)."""
        alpha, context = self.attend(s_prev, enc)
        s_t = self.decode_step([y_prev_id], s_prev, context)
        p_gen = self.generate_distribution([y_prev_id], s_t, context, vg.ids, rows=rows)
        lam = float(self.predict_mode(s_t).data[0])
        n = int(enc.mask[0].sum())
        a = alpha.data[0, :n]
        p_copy = copy_distribution(a, enc.tokens[0][:n])
        return StepOutput(
            alpha=a, context=context.data[0], state=s_t.data[0],
            p_copy=p_copy, p_gen=p_gen.data[0], lam=lam,
            combined=combine(lam, p_copy, p_gen.data[0], vg, v),
        )


def copy_distribution(alpha, source_tokens: Sequence[str]) -> dict[str, float]:
    """Attention mass per surface token, accumulated over repeated tokens."""
    out: dict[str, float] = {}
    for a, tok in zip(alpha, source_tokens):
        out[tok] = out.get(tok, 0.0) + float(a)
    return out


def combine_parts(lam: float, p_copy: dict[str, float], p_gen, vg: RestrictedVocab,
                  v: Vocabulary) -> dict[str, tuple[float, float]]:
    """``token -> (lam * p_copy, (1 - lam) * p_gen)`` over the union support.

    Source words and generator words meet by surface string, so a word that
    is both copyable and generable gets both terms.
    """
    parts = {tok: (lam * pc, 0.0) for tok, pc in p_copy.items()}
    for i, pg in zip(vg.ids, p_gen):
        tok = v.tokens[i]
        c, _ = parts.get(tok, (0.0, 0.0))
        parts[tok] = (c, (1.0 - lam) * float(pg))
    return parts


def combine(lam: float, p_copy: dict[str, float], p_gen, vg: RestrictedVocab,
            v: Vocabulary) -> dict[str, float]:
    return {tok: c + g for tok, (c, g) in combine_parts(lam, p_copy, p_gen, vg, v).items()}
