"""Shared encoder-decoder transformer over token-id batches.

One parameter set serves all four translation modes (s->s, s->t, t->s, t->t):
direction is carried entirely by (a) a 2-row language embedding added to every
position and (b) the decoder's first input token, which is the target-language
tag instead of a plain bos. Token embedding and output projection are tied.
Pre-norm residual blocks with GELU feed-forwards; padding is masked out of
attention and losses everywhere.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .data import BOS, EOS, LANG_SRC, LANG_TGT, MASK, PAD, UNK, DataError, TokenBatch
from .params import ParamSet

BANNED_IN_GENERATION = (PAD, BOS, UNK, MASK, LANG_SRC, LANG_TGT)


@dataclass
class TransformerConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 48
    n_heads: int = 2
    d_ff: int = 128
    max_len: int = 16
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise DataError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.vocab_size <= 7:
            raise DataError("vocab_size must exceed the special tokens")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.max_len < 4:
            raise DataError("max_len must be >= 4")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerConfig":
        return cls(**d)


def init_params(cfg: TransformerConfig, seed: int) -> ParamSet:
    rng = np.random.default_rng([seed, 11])
    ps = ParamSet(rng_seed_used=seed)

    def normal(name, shape):
        ps.add(name, rng.normal(0.0, 0.02, size=shape).astype(np.float32))

    def zeros(name, shape):
        ps.add(name, np.zeros(shape, dtype=np.float32))

    def ones(name, shape):
        ps.add(name, np.ones(shape, dtype=np.float32))

    d, f = cfg.d_model, cfg.d_ff
    normal("tok_emb", (cfg.vocab_size, d))
    normal("pos_emb", (cfg.max_len, d))
    normal("lang_emb", (2, d))

    def attn(prefix):
        for w in ("wq", "wk", "wv", "wo"):
            normal(f"{prefix}.{w}", (d, d))

    def ffn(prefix):
        normal(f"{prefix}.w1", (d, f))
        zeros(f"{prefix}.b1", (f,))
        normal(f"{prefix}.w2", (f, d))
        zeros(f"{prefix}.b2", (d,))

    def ln(prefix):
        ones(f"{prefix}.g", (d,))
        zeros(f"{prefix}.b", (d,))

    for i in range(cfg.n_layers):
        ln(f"enc{i}.ln1")
        attn(f"enc{i}.attn")
        ln(f"enc{i}.ln2")
        ffn(f"enc{i}.ff")
    ln("enc_ln")
    for i in range(cfg.n_layers):
        ln(f"dec{i}.ln1")
        attn(f"dec{i}.self")
        ln(f"dec{i}.ln2")
        attn(f"dec{i}.cross")
        ln(f"dec{i}.ln3")
        ffn(f"dec{i}.ff")
    ln("dec_ln")
    return ps


def _lang_rows(lang: np.ndarray) -> np.ndarray:
    rows = np.asarray(lang) - LANG_SRC
    if rows.size and (rows.min() < 0 or rows.max() > 1):
        raise DataError(f"language tags must be {LANG_SRC} or {LANG_TGT}")
    return rows


class SharedEncDec:
    """Config + parameters; ``bind`` swaps parameters without copying config."""

    def __init__(self, cfg: TransformerConfig, params: ParamSet):
        self.cfg = cfg
        self.params = params

    @classmethod
    def init(cls, cfg: TransformerConfig, seed: int) -> "SharedEncDec":
        return cls(cfg, init_params(cfg, seed))

    def bind(self, params: ParamSet) -> "SharedEncDec":
        return SharedEncDec(self.cfg, params)

    # ---- building blocks

    def _embed(self, tokens: np.ndarray, lang: np.ndarray, rng) -> Tensor:
        cfg, p = self.cfg, self.params
        b, length = tokens.shape
        if length > cfg.max_len:
            raise DataError(f"sequence length {length} exceeds max_len {cfg.max_len}")
        tok = ad.scale(ad.embedding(p["tok_emb"], tokens), float(np.sqrt(cfg.d_model)))
        pos = ad.embedding(p["pos_emb"], np.arange(length))
        lng = ad.reshape(ad.embedding(p["lang_emb"], _lang_rows(lang)), (b, 1, cfg.d_model))
        return ad.dropout(ad.add(ad.add(tok, pos), lng), cfg.dropout, rng)

    def _attn(self, prefix: str, q_in: Tensor, kv_in: Tensor, mask: np.ndarray, rng) -> Tensor:
        cfg, p = self.cfg, self.params
        d, h = cfg.d_model, cfg.n_heads
        dh = d // h
        b, lq = q_in.shape[0], q_in.shape[1]
        lk = kv_in.shape[1]

        def heads(x, length):
            return ad.transpose(ad.reshape(x, (b, length, h, dh)), (0, 2, 1, 3))

        q = heads(ad.matmul(q_in, p[f"{prefix}.wq"]), lq)
        k = heads(ad.matmul(kv_in, p[f"{prefix}.wk"]), lk)
        v = heads(ad.matmul(kv_in, p[f"{prefix}.wv"]), lk)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        weights = ad.softmax(ad.masked_fill(scores, mask, -1e9))
        weights = ad.dropout(weights, cfg.dropout, rng)
        mixed = ad.transpose(ad.matmul(weights, v), (0, 2, 1, 3))
        return ad.matmul(ad.reshape(mixed, (b, lq, d)), p[f"{prefix}.wo"])

    def _ffn(self, prefix: str, x: Tensor) -> Tensor:
        p = self.params
        h = ad.gelu(ad.add(ad.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
        return ad.add(ad.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])

    def _ln(self, prefix: str, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    # ---- encoder / decoder

    def encode(self, batch: TokenBatch, rng=None) -> Tensor:
        """(B, L, d_model) states; padding masked out of self-attention."""
        cfg = self.cfg
        x = self._embed(batch.tokens, batch.lang, rng)
        key_pad = batch.pad_mask()[:, None, None, :]  # (B,1,1,L)
        for i in range(cfg.n_layers):
            normed = self._ln(f"enc{i}.ln1", x)
            a = self._attn(f"enc{i}.attn", normed, normed, key_pad, rng)
            x = ad.add(x, ad.dropout(a, cfg.dropout, rng))
            f = self._ffn(f"enc{i}.ff", self._ln(f"enc{i}.ln2", x))
            x = ad.add(x, ad.dropout(f, cfg.dropout, rng))
        return self._ln("enc_ln", x)

    def decode_teacher_forced(
        self,
        memory: Tensor,
        memory_pad: np.ndarray,
        dec_tokens: np.ndarray,
        dec_lengths: np.ndarray,
        lang: np.ndarray,
        rng=None,
    ) -> Tensor:
        """Logits (B, L, V); position j conditions on dec_tokens[:, : j + 1]."""
        cfg = self.cfg
        b, length = dec_tokens.shape
        x = self._embed(dec_tokens, lang, rng)
        causal = np.triu(np.ones((length, length), dtype=bool), k=1)[None, None]
        dec_pad = (np.arange(length)[None, :] >= dec_lengths[:, None])[:, None, None, :]
        self_mask = causal | dec_pad
        cross_mask = memory_pad[:, None, None, :]
        for i in range(cfg.n_layers):
            normed = self._ln(f"dec{i}.ln1", x)
            a = self._attn(f"dec{i}.self", normed, normed, self_mask, rng)
            x = ad.add(x, ad.dropout(a, cfg.dropout, rng))
            c = self._attn(f"dec{i}.cross", self._ln(f"dec{i}.ln2", x), memory, cross_mask, rng)
            x = ad.add(x, ad.dropout(c, cfg.dropout, rng))
            f = self._ffn(f"dec{i}.ff", self._ln(f"dec{i}.ln3", x))
            x = ad.add(x, ad.dropout(f, cfg.dropout, rng))
        h = self._ln("dec_ln", x)
        return ad.matmul(h, ad.transpose(self.params["tok_emb"], (1, 0)))

    def greedy_decode(self, src_batch: TokenBatch, tgt_lang: int, max_new: int | None = None) -> TokenBatch:
        """Deterministic argmax decoding, dropout-free and tape-detached.

        bos carries the target-language tag; eos is banned at the first step
        so output sentences are never empty; specials other than eos are never
        produced. Output rows are trimmed at their first eos.
        """
        cfg = self.cfg
        if max_new is None:
            max_new = cfg.max_len - 1
        max_new = min(max_new, cfg.max_len - 1)
        b = src_batch.n_rows
        with no_grad():
            memory = self.encode(src_batch, rng=None)
            mem_pad = src_batch.pad_mask()
            ys = np.full((b, 1), tgt_lang, dtype=np.int64)
            finished = np.zeros(b, dtype=bool)
            lang = np.full(b, tgt_lang, dtype=np.int64)
            for step in range(max_new):
                lengths = np.full(b, ys.shape[1], dtype=np.int64)
                logits = self.decode_teacher_forced(memory, mem_pad, ys, lengths, lang, rng=None)
                last = logits.data[:, -1, :].copy()
                last[:, list(BANNED_IN_GENERATION)] = -np.inf
                if step == 0:
                    last[:, EOS] = -np.inf
                nxt = last.argmax(axis=-1)
                nxt[finished] = EOS
                ys = np.concatenate([ys, nxt[:, None]], axis=1)
                finished |= nxt == EOS
                if finished.all():
                    break
        sentences = []
        for i in range(b):
            row = ys[i, 1:]
            stop = np.argmax(row == EOS) if (row == EOS).any() else len(row)
            sentences.append([int(t) for t in row[:stop]])
        return TokenBatch.from_sentences(sentences, tgt_lang, src_batch.domain)

    # ---- masked-LM pretraining objective

    def mlm_loss(self, batch: TokenBatch, mask_prob: float, rng: np.random.Generator) -> Tensor:
        """Encoder-only denoising: mask some tokens, predict the originals."""
        if not 0.0 < mask_prob < 1.0:
            raise DataError(f"mask_prob must be in (0, 1), got {mask_prob}")
        maskable = ~batch.pad_mask()
        if not maskable.any():
            raise DataError("mlm_loss: batch has zero maskable tokens")
        chosen = (rng.random(batch.tokens.shape) < mask_prob) & maskable
        if not chosen.any():
            flat = np.flatnonzero(maskable)
            chosen.reshape(-1)[flat[int(rng.integers(len(flat)))]] = True
        corrupted = np.where(chosen, MASK, batch.tokens)
        masked_batch = TokenBatch(corrupted, batch.lengths, batch.lang, batch.domain)
        states = self.encode(masked_batch, rng)
        logits = ad.matmul(states, ad.transpose(self.params["tok_emb"], (1, 0)))
        return ad.cross_entropy(logits, batch.tokens, chosen.astype(np.float32))


def teacher_io(batch: TokenBatch, lang_tag: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Decoder tensors for teacher forcing.

    Returns (dec_tokens, dec_lengths, targets, weights): dec rows are
    [lang_tag, y_1 .. y_n, pad...], targets are [y_1 .. y_n, eos, pad...] and
    weights select exactly the n+1 real predictions per row.
    """
    b, length = batch.tokens.shape
    dec = np.full((b, length + 1), PAD, dtype=np.int64)
    dec[:, 0] = lang_tag
    dec[:, 1:] = batch.tokens
    targets = np.full((b, length + 1), PAD, dtype=np.int64)
    targets[:, :length] = batch.tokens
    targets[np.arange(b), batch.lengths] = EOS
    weights = (np.arange(length + 1)[None, :] <= batch.lengths[:, None]).astype(np.float32)
    dec_lengths = batch.lengths + 1
    return dec, dec_lengths, targets, weights


def translation_loss(model: SharedEncDec, src_batch: TokenBatch, tgt_batch: TokenBatch,
                     tgt_lang: int, rng) -> Tensor:
    """Mean per-token NLL of tgt_batch given src_batch (teacher forcing)."""
    memory = model.encode(src_batch, rng)
    dec, dec_len, targets, weights = teacher_io(tgt_batch, tgt_lang)
    logits = model.decode_teacher_forced(memory, src_batch.pad_mask(), dec, dec_len,
                                         np.full(tgt_batch.n_rows, tgt_lang, dtype=np.int64), rng)
    return ad.cross_entropy(logits, targets, weights)
