"""Corpus BLEU on token ids, and greedy-decode evaluation of a model."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .data import LANG_SRC, LANG_TGT, TokenBatch

DIRECTIONS = ("s2t", "t2s")


def _ngrams(tokens: list[int], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[list[int]], references: list[list[int]], max_n: int = 4) -> float:
    """Geometric mean of modified n-gram precisions times brevity penalty, x100.

    One reference per hypothesis. Zero-match precisions for n >= 2 get
    add-one smoothing ((m+1)/(t+1)); a unigram shutout scores 0.
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("need at least one hypothesis/reference pair")
    for r in references:
        if len(r) == 0:
            raise ValueError("empty reference sentence")

    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hc = _ngrams(hyp, n)
            rc = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(0, len(hyp) - n + 1)

    if hyp_len == 0:
        return 0.0
    log_prec = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if t == 0:
            # hypotheses shorter than n everywhere: treat as a smoothed miss
            m, t = m + 1, t + 1
        elif m == 0:
            if n == 1:
                return 0.0
            m, t = m + 1, t + 1
        log_prec += math.log(m / t) / max_n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)


def evaluate_model(model, eval_pairs: list[tuple[list[int], list[int]]], direction: str,
                   batch_rows: int = 32) -> float:
    """Greedy-decode every source sentence and BLEU-score against references."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if direction == "s2t":
        sources = [s for s, _ in eval_pairs]
        references = [t for _, t in eval_pairs]
        src_lang, tgt_lang = LANG_SRC, LANG_TGT
    else:
        sources = [t for _, t in eval_pairs]
        references = [s for s, _ in eval_pairs]
        src_lang, tgt_lang = LANG_TGT, LANG_SRC
    hyps: list[list[int]] = []
    for lo in range(0, len(sources), batch_rows):
        batch = TokenBatch.from_sentences(sources[lo : lo + batch_rows], src_lang)
        hyps.extend(model.greedy_decode(batch, tgt_lang).sentences())
    return corpus_bleu(hyps, references)
