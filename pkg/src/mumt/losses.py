"""Unsupervised translation objectives: denoising LM + online back-translation.

The LM term reconstructs clean sentences from noised ones within each
language. The BT term first greedy-decodes pseudo-sources for real target
sentences (and vice versa) with the current model — detached and dropout-free,
exactly as if the pseudo-sentences were constants — then trains the supervised
direction on those synthetic pairs. The step loss is their plain sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import LANG_SRC, LANG_TGT, DataError, TokenBatch, add_noise
from .model import SharedEncDec, translation_loss


@dataclass
class NoiseConfig:
    drop_prob: float = 0.1
    shuffle_window: int = 3

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise DataError(f"drop_prob must be in [0, 1), got {self.drop_prob}")
        if self.shuffle_window < 0:
            raise DataError(f"shuffle_window must be >= 0, got {self.shuffle_window}")


@dataclass
class LossBundle:
    lm: Tensor
    bt: Tensor
    total: Tensor
    token_counts: dict[str, int]


def _noised(batch: TokenBatch, noise: NoiseConfig, rng) -> TokenBatch:
    sents = [add_noise(s, noise.drop_prob, noise.shuffle_window, rng) for s in batch.sentences()]
    return TokenBatch.from_sentences(sents, batch.lang, batch.domain)


def lm_loss(model: SharedEncDec, src_batch: TokenBatch, tgt_batch: TokenBatch,
            noise: NoiseConfig, rng) -> Tensor:
    """Denoising reconstruction in both languages (sum of the two means)."""
    term_s = translation_loss(model, _noised(src_batch, noise, rng), src_batch, LANG_SRC, rng)
    term_t = translation_loss(model, _noised(tgt_batch, noise, rng), tgt_batch, LANG_TGT, rng)
    return ad.add(term_s, term_t)


def bt_pair_loss(model: SharedEncDec, pseudo_src: TokenBatch, pseudo_tgt: TokenBatch,
                 src_batch: TokenBatch, tgt_batch: TokenBatch, rng) -> Tensor:
    """Supervised loss on already-generated pseudo pairs (both directions)."""
    term_t = translation_loss(model, pseudo_src, tgt_batch, LANG_TGT, rng)
    term_s = translation_loss(model, pseudo_tgt, src_batch, LANG_SRC, rng)
    return ad.add(term_t, term_s)


def bt_loss(model: SharedEncDec, src_batch: TokenBatch, tgt_batch: TokenBatch, rng) -> Tensor:
    """Online back-translation; generation is greedy, detached, dropout-free."""
    pseudo_src = model.greedy_decode(tgt_batch, LANG_SRC)
    pseudo_tgt = model.greedy_decode(src_batch, LANG_TGT)
    return bt_pair_loss(model, pseudo_src, pseudo_tgt, src_batch, tgt_batch, rng)


def combined_loss(model: SharedEncDec, src_batch: TokenBatch, tgt_batch: TokenBatch,
                  noise: NoiseConfig, rng) -> LossBundle:
    """LM + BT on one domain's batches; backward on ``total`` trains both."""
    lm = lm_loss(model, src_batch, tgt_batch, noise, rng)
    bt = bt_loss(model, src_batch, tgt_batch, rng)
    total = ad.add(lm, bt)
    counts = {
        "lm_tokens": src_batch.n_tokens + tgt_batch.n_tokens,
        "bt_tokens": src_batch.n_tokens + tgt_batch.n_tokens,
        "rows": src_batch.n_rows + tgt_batch.n_rows,
    }
    return LossBundle(lm, bt, total, counts)
