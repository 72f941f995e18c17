"""Domain meta-learning and baseline training loops for the shared enc-dec.

Two meta algorithms plus three baselines, all built on one abstraction: a
task family exposing ``loss(params, domain, mix, rng)``. The meta updates
are first order: the gradient evaluated at adapted parameters is applied
directly to the originals, never differentiating through the inner step.

Randomness is purpose-keyed. Every batch draw uses the stream
``(seed, step, domain, purpose)`` with a distinct purpose per role, so
degenerate configurations collapse onto each other bitwise: gumt with
mix 0 and the aggregate term off replays umt's exact batches, and umt
with alpha 0 on one domain replays a plain transfer step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .bleu import evaluate_model
from .data import (
    LANG_SRC,
    LANG_TGT,
    DataError,
    DomainCorpus,
    TokenBatch,
    child_rng,
    sample_in_domain,
)
from .losses import LossBundle, NoiseConfig, bt_pair_loss, combined_loss, lm_loss
from .model import SharedEncDec, TransformerConfig, init_params
from .optim import Adam, Sgd
from .params import ParamSet

# rng stream purposes: inner-adapt batches, meta-test/transfer batches,
# aggregate-term batches
INNER, META, AGG = 0, 1, 2

PRETRAIN_METHODS = ("transfer", "metaumt", "metagumt")


def stream(seed: int, step: int, domain: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, domain, purpose])


@dataclass
class MetaConfig:
    alpha: float = 0.05
    beta: float = 1e-4
    n_out_domains: int = 6
    meta_steps: int = 200
    inner_steps_per_domain: int = 1
    cross_domain_mix: float = 0.5
    use_cross_domain: bool = True
    use_aggregate: bool = True
    batch_rows: int = 8
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.cross_domain_mix <= 1.0:
            raise ValueError(f"cross_domain_mix must be in [0, 1], got {self.cross_domain_mix}")
        if self.inner_steps_per_domain < 1:
            raise ValueError("inner_steps_per_domain must be >= 1")
        if self.meta_steps < 0 or self.n_out_domains < 1 or self.batch_rows < 1:
            raise ValueError("meta_steps, n_out_domains, batch_rows must be sensible")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class FinetuneConfig:
    in_domain_budget_words: int = 5000
    max_epochs: int = 30
    patience: int = 5
    eval_every: int = 1
    lr: float = 3e-4
    warmup_steps: int = 8
    batch_rows: int = 8
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.in_domain_budget_words <= 0:
            raise ValueError("in_domain_budget_words must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1 or self.eval_every < 1 or self.batch_rows < 1:
            raise ValueError("max_epochs, eval_every, batch_rows must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


@dataclass
class TrainedModel:
    """Parameters plus enough provenance to identify the producing run."""

    params: ParamSet
    method: str
    config_hash: str
    seed: int
    steps: int
    history: list[dict] = field(default_factory=list)


class TaskFamily(Protocol):
    n_domains: int

    def loss(self, params: ParamSet, domain: int, mix: float,
             rng: np.random.Generator) -> LossBundle: ...


class UnmtTasks:
    """Monolingual batch sampler + combined LM/BT loss over real corpora.

    ``mix`` is the fraction of rows drawn from domains other than the
    requested one (uniformly); the rest come from the requested domain.
    """

    def __init__(self, model_cfg: TransformerConfig, corpora: list[DomainCorpus],
                 noise: NoiseConfig, batch_rows: int = 8):
        if not corpora:
            raise ValueError("need at least one domain corpus")
        self.model_cfg = model_cfg
        self.corpora = corpora
        self.noise = noise
        self.batch_rows = batch_rows

    @property
    def n_domains(self) -> int:
        return len(self.corpora)

    def _sample_side(self, domain: int, want_src: bool, mix: float,
                     rng: np.random.Generator) -> list[list[int]]:
        n_other = int(round(mix * self.batch_rows))
        others = [j for j in range(self.n_domains) if j != domain]
        rows = []
        for r in range(self.batch_rows):
            d = domain
            if r >= self.batch_rows - n_other:
                d = others[int(rng.integers(len(others)))]
            pool = self.corpora[d].src_sentences if want_src else self.corpora[d].tgt_sentences
            rows.append(pool[int(rng.integers(len(pool)))])
        return rows

    def loss(self, params: ParamSet, domain: int, mix: float,
             rng: np.random.Generator) -> LossBundle:
        src = TokenBatch.from_sentences(self._sample_side(domain, True, mix, rng),
                                        LANG_SRC, domain)
        tgt = TokenBatch.from_sentences(self._sample_side(domain, False, mix, rng),
                                        LANG_TGT, domain)
        model = SharedEncDec(self.model_cfg, params)
        return combined_loss(model, src, tgt, self.noise, rng)


class QuadraticTasks:
    """Scalar surrogate family L_i(t) = (t - a_i)^2 / 2 on the same code path.

    Mixing follows the batch-fraction reading: the mixed loss weights the
    home domain by (1 - mix) and the mean of the other domains by mix.
    """

    def __init__(self, targets: list[float]):
        if not targets:
            raise ValueError("need at least one quadratic target")
        self.targets = [float(a) for a in targets]

    @property
    def n_domains(self) -> int:
        return len(self.targets)

    @staticmethod
    def make_params(theta0: float) -> ParamSet:
        ps = ParamSet()
        ps.add("theta", np.array([theta0], dtype=np.float32))
        return ps

    def _quad(self, theta: Tensor, a: float) -> Tensor:
        const = Tensor(np.array([a], dtype=np.float32))
        diff = ad.sub(theta, const)
        return ad.scale(ad.tsum(ad.mul(diff, diff)), 0.5)

    def loss(self, params: ParamSet, domain: int, mix: float,
             rng: np.random.Generator) -> LossBundle:
        theta = params["theta"]
        home = self._quad(theta, self.targets[domain])
        if mix == 0.0 or self.n_domains == 1:
            lm = home
        else:
            others = [self._quad(theta, a) for j, a in enumerate(self.targets) if j != domain]
            acc = others[0]
            for o in others[1:]:
                acc = ad.add(acc, o)
            lm = ad.add(ad.scale(home, 1.0 - mix), ad.scale(acc, mix / len(others)))
        bt = ad.scale(lm, 0.0)
        return LossBundle(lm=lm, bt=bt, total=ad.add(lm, bt), token_counts={})


def _accumulate_grads(into: ParamSet, source: ParamSet) -> None:
    for name, t in into.items():
        g = source[name].grad
        if g is None:
            continue
        if t.grad is None:
            t.grad = g.copy()
        else:
            t.grad += g


def inner_adapt(theta: ParamSet, tasks: TaskFamily, domain: int, alpha: float,
                rng: np.random.Generator, inner_steps: int = 1) -> ParamSet:
    """One-step (or k-step) SGD adaptation on a clone; theta is untouched."""
    adapted = theta.deep_clone()
    opt = Sgd(lr=alpha)
    for _ in range(inner_steps):
        with Tape():
            bundle = tasks.loss(adapted, domain, 0.0, rng)
        backward(bundle.total)
        opt.step(adapted)
    return adapted


def meta_step_umt(theta: ParamSet, tasks: TaskFamily, cfg: MetaConfig, opt,
                  step: int) -> dict:
    """Adapt per domain, re-evaluate each domain's loss at its adapted
    parameters on fresh batches, accumulate those gradients onto theta in
    ascending domain order, take one optimizer step. Returns mean meta-test
    loss components."""
    theta.zero_grads()
    sums = np.zeros(3)
    for i in range(tasks.n_domains):
        adapted = inner_adapt(theta, tasks, i, cfg.alpha,
                              stream(cfg.seed, step, i, INNER), cfg.inner_steps_per_domain)
        with Tape():
            bundle = tasks.loss(adapted, i, 0.0, stream(cfg.seed, step, i, META))
        backward(bundle.total)
        _accumulate_grads(theta, adapted)
        sums += (float(bundle.total.data), float(bundle.lm.data), float(bundle.bt.data))
    opt.step(theta)
    total, lm, bt = sums / tasks.n_domains
    return {"loss": total, "lm": lm, "bt": bt}


def meta_step_gumt(theta: ParamSet, tasks: TaskFamily, cfg: MetaConfig, opt,
                   step: int) -> dict:
    """meta_step_umt plus two generalization terms per domain: the meta-test
    batch mixes in other domains (cross-domain), and the pre-adaptation
    parameters take a gradient from fresh home-domain batches (aggregate)."""
    if tasks.n_domains < 2:
        raise ValueError("meta_step_gumt needs at least two domains")
    theta.zero_grads()
    mix = cfg.cross_domain_mix if cfg.use_cross_domain else 0.0
    sums = np.zeros(3)
    for i in range(tasks.n_domains):
        adapted = inner_adapt(theta, tasks, i, cfg.alpha,
                              stream(cfg.seed, step, i, INNER), cfg.inner_steps_per_domain)
        with Tape():
            bundle = tasks.loss(adapted, i, mix, stream(cfg.seed, step, i, META))
        backward(bundle.total)
        _accumulate_grads(theta, adapted)
        sums += (float(bundle.total.data), float(bundle.lm.data), float(bundle.bt.data))
        if cfg.use_aggregate:
            with Tape():
                agg = tasks.loss(theta, i, 0.0, stream(cfg.seed, step, i, AGG))
            backward(agg.total)
    opt.step(theta)
    total, lm, bt = sums / tasks.n_domains
    return {"loss": total, "lm": lm, "bt": bt}


def transfer_step(theta: ParamSet, tasks: TaskFamily, cfg: MetaConfig, opt,
                  step: int) -> dict:
    """Plain joint training: one round-robin domain, one optimizer step."""
    theta.zero_grads()
    domain = step % tasks.n_domains
    with Tape():
        bundle = tasks.loss(theta, domain, 0.0, stream(cfg.seed, step, domain, META))
    backward(bundle.total)
    opt.step(theta)
    return {"loss": float(bundle.total.data), "lm": float(bundle.lm.data),
            "bt": float(bundle.bt.data)}


_STEP_FNS: dict[str, Callable] = {
    "transfer": transfer_step,
    "metaumt": meta_step_umt,
    "metagumt": meta_step_gumt,
}


def pretrain(tasks: TaskFamily, cfg: MetaConfig, method: str, params: ParamSet,
             hook: Callable[[int, ParamSet], None] | None = None,
             step_offset: int = 0) -> list[dict]:
    """Run cfg.meta_steps of the chosen method, mutating params in place.

    ``step_offset`` shifts the step counter, and with it every batch stream,
    so a run can continue from where an earlier one stopped instead of
    replaying its batches.
    """
    if method not in _STEP_FNS:
        raise ValueError(f"method must be one of {PRETRAIN_METHODS}, got {method!r}")
    step_fn = _STEP_FNS[method]
    opt = Adam(lr=cfg.beta, clip_norm=cfg.clip_norm)
    history = []
    for k in range(cfg.meta_steps):
        t = step_offset + k
        vals = step_fn(params, tasks, cfg, opt, t)
        history.append({"step": t, **vals})
        if hook is not None:
            hook(t, params)
    return history


def transfer_pretrain(tasks: TaskFamily, cfg: MetaConfig, params: ParamSet,
                      hook=None) -> list[dict]:
    return pretrain(tasks, cfg, "transfer", params, hook)


def _dev_bleu(model: SharedEncDec, dev_pairs) -> dict:
    s2t = evaluate_model(model, dev_pairs, "s2t")
    t2s = evaluate_model(model, dev_pairs, "t2s")
    return {"mean": 0.5 * (s2t + t2s), "s2t": s2t, "t2s": t2s}


def _epoch_loop(model: SharedEncDec, train_step: Callable[[int, int], float],
                steps_per_epoch: int, dev_pairs, max_epochs: int, patience: int,
                eval_every: int) -> tuple[ParamSet, int, list[dict]]:
    """Shared early-stopping skeleton: train an epoch, score dev BLEU, keep
    the best snapshot. Epoch 0 records the incoming model; the convergence
    epoch is the earliest best epoch >= 1."""
    first = _dev_bleu(model, dev_pairs)
    history = [{"epoch": 0, "dev_bleu": first["mean"], "dev_s2t": first["s2t"],
                "dev_t2s": first["t2s"], "train_loss": math.nan}]
    best_bleu, best_epoch = -math.inf, 0
    best_params = model.params.deep_clone()
    for epoch in range(1, max_epochs + 1):
        ep_loss = 0.0
        for k in range(steps_per_epoch):
            ep_loss += train_step(epoch, k)
        if epoch % eval_every != 0 and epoch != max_epochs:
            continue
        scores = _dev_bleu(model, dev_pairs)
        history.append({"epoch": epoch, "dev_bleu": scores["mean"],
                        "dev_s2t": scores["s2t"], "dev_t2s": scores["t2s"],
                        "train_loss": ep_loss / steps_per_epoch})
        if scores["mean"] > best_bleu:
            best_bleu, best_epoch = scores["mean"], epoch
            best_params = model.params.deep_clone()
        elif epoch - best_epoch >= patience:
            break
    return best_params, best_epoch, history


def _draw_rows(pool: list[list[int]], rng: np.random.Generator, rows: int) -> list[list[int]]:
    return [pool[int(rng.integers(len(pool)))] for _ in range(rows)]


def finetune(params: ParamSet, model_cfg: TransformerConfig, corpus: DomainCorpus,
             dev_pairs, cfg: FinetuneConfig, noise: NoiseConfig,
             seed: int) -> tuple[ParamSet, int, list[dict]]:
    """Adapt pretrained params to one low-resource domain with the combined
    loss over a word-budgeted sample. Returns (best params, convergence
    epoch, history); the convergence epoch is the argmax-dev-BLEU epoch."""
    if not corpus.src_sentences or not corpus.tgt_sentences:
        raise DataError("empty in-domain corpus")
    budgeted = sample_in_domain(corpus, cfg.in_domain_budget_words, seed)
    src_pool, tgt_pool = budgeted.src_sentences, budgeted.tgt_sentences
    model = SharedEncDec(model_cfg, params)
    opt = Adam(lr=cfg.lr, warmup_steps=cfg.warmup_steps, clip_norm=cfg.clip_norm)
    steps_per_epoch = max(1, (len(src_pool) + len(tgt_pool)) // (2 * cfg.batch_rows))

    def train_step(epoch: int, k: int) -> float:
        rng = child_rng(seed, 300 + epoch, k)
        sb = TokenBatch.from_sentences(_draw_rows(src_pool, rng, cfg.batch_rows),
                                       LANG_SRC, corpus.domain_id)
        tb = TokenBatch.from_sentences(_draw_rows(tgt_pool, rng, cfg.batch_rows),
                                       LANG_TGT, corpus.domain_id)
        with Tape():
            bundle = combined_loss(model, sb, tb, noise, rng)
        backward(bundle.total)
        opt.step(params)
        return float(bundle.total.data)

    return _epoch_loop(model, train_step, steps_per_epoch, dev_pairs,
                       cfg.max_epochs, cfg.patience, cfg.eval_every)


def sample_pairs(pairs, word_budget: int, seed: int):
    """Budget-limited parallel sample; the budget counts source-side words."""
    if not pairs:
        raise DataError("no parallel pairs to sample from")
    total_available = sum(len(s) for s, _ in pairs)
    if word_budget > total_available:
        raise DataError(f"word budget {word_budget} exceeds pool size {total_available}")
    max_len = max(len(s) for s, _ in pairs)
    if word_budget < max_len:
        raise DataError(f"word budget {word_budget} below longest source {max_len}")
    order = child_rng(seed, 12).permutation(len(pairs))
    kept, total = [], 0
    for idx in order:
        n = len(pairs[idx][0])
        if total + n <= word_budget:
            kept.append(pairs[idx])
            total += n
    return kept


def supervised_baseline(model_cfg: TransformerConfig, train_pairs, dev_pairs,
                        word_budget: int, cfg: FinetuneConfig,
                        seed: int) -> tuple[ParamSet, int, list[dict]]:
    """Seq2seq cross-entropy in both directions on a small parallel sample,
    from fresh parameters; no monolingual losses anywhere."""
    chosen = sample_pairs(train_pairs, word_budget, seed)
    params = init_params(model_cfg, seed)
    model = SharedEncDec(model_cfg, params)
    opt = Adam(lr=cfg.lr, warmup_steps=cfg.warmup_steps, clip_norm=cfg.clip_norm)
    steps_per_epoch = max(1, len(chosen) // cfg.batch_rows)

    def train_step(epoch: int, k: int) -> float:
        rng = child_rng(seed, 600 + epoch, k)
        idx = [int(rng.integers(len(chosen))) for _ in range(cfg.batch_rows)]
        sb = TokenBatch.from_sentences([chosen[i][0] for i in idx], LANG_SRC)
        tb = TokenBatch.from_sentences([chosen[i][1] for i in idx], LANG_TGT)
        with Tape():
            loss = bt_pair_loss(model, sb, tb, sb, tb, rng)
        backward(loss)
        opt.step(params)
        return float(loss.data)

    return _epoch_loop(model, train_step, steps_per_epoch, dev_pairs,
                       cfg.max_epochs, cfg.patience, cfg.eval_every)


def mlm_pretrain(params: ParamSet, model_cfg: TransformerConfig,
                 src_pool: list[list[int]], tgt_pool: list[list[int]], steps: int,
                 seed: int, lr: float = 3e-4, batch_rows: int = 8,
                 mask_prob: float = 0.15, clip_norm: float | None = 5.0) -> list[dict]:
    """Masked-token pretraining of the encoder on both languages at once;
    decoder-side parameters ride along with zero grads."""
    if not src_pool or not tgt_pool:
        raise DataError("empty pools for masked pretraining")
    model = SharedEncDec(model_cfg, params)
    opt = Adam(lr=lr, clip_norm=clip_norm)
    history = []
    for t in range(steps):
        rng = child_rng(seed, 800, t)
        sb = TokenBatch.from_sentences(_draw_rows(src_pool, rng, batch_rows), LANG_SRC)
        tb = TokenBatch.from_sentences(_draw_rows(tgt_pool, rng, batch_rows), LANG_TGT)
        with Tape():
            loss = ad.add(model.mlm_loss(sb, mask_prob, rng),
                          model.mlm_loss(tb, mask_prob, rng))
        backward(loss)
        params.ensure_grads()
        opt.step(params)
        history.append({"step": t, "loss": float(loss.data)})
    return history


def dae_pretrain(params: ParamSet, model_cfg: TransformerConfig,
                 corpora: list[DomainCorpus], noise: NoiseConfig, steps: int,
                 seed: int, lr: float = 2e-3, batch_rows: int = 16,
                 clip_norm: float | None = 5.0, warmup_steps: int = 30) -> list[dict]:
    """Denoising-only warmup of the full encoder-decoder, round-robin over
    domains.

    Back-translating with a raw decoder reinforces unconditional generation
    and collapses to the modal token; this stage teaches input-conditioned
    reconstruction first so generation has something to bootstrap from.
    """
    if not corpora:
        raise DataError("dae_pretrain needs at least one domain corpus")
    model = SharedEncDec(model_cfg, params)
    opt = Adam(lr=lr, warmup_steps=warmup_steps, clip_norm=clip_norm)
    history = []
    for t in range(steps):
        c = corpora[t % len(corpora)]
        rng = child_rng(seed, 850, t)
        sb = TokenBatch.from_sentences(_draw_rows(c.src_sentences, rng, batch_rows),
                                       LANG_SRC, c.domain_id)
        tb = TokenBatch.from_sentences(_draw_rows(c.tgt_sentences, rng, batch_rows),
                                       LANG_TGT, c.domain_id)
        with Tape():
            loss = lm_loss(model, sb, tb, noise, rng)
        backward(loss)
        params.ensure_grads()
        opt.step(params)
        history.append({"step": t, "loss": float(loss.data)})
    return history


def unmt_only_baseline(model_cfg: TransformerConfig, corpus: DomainCorpus, dev_pairs,
                       cfg: FinetuneConfig, noise: NoiseConfig, seed: int,
                       mlm_steps: int = 100, mlm_lr: float = 3e-4,
                       dae_steps: int = 0,
                       ) -> tuple[ParamSet, int, list[dict]]:
    """In-domain-only pipeline: masked + denoising init on the budgeted
    monolingual data, then the standard finetuning loop on the same sample."""
    if not corpus.src_sentences or not corpus.tgt_sentences:
        raise DataError("empty in-domain corpus")
    params = init_params(model_cfg, seed)
    budgeted = sample_in_domain(corpus, cfg.in_domain_budget_words, seed)
    mlm_pretrain(params, model_cfg, budgeted.src_sentences, budgeted.tgt_sentences,
                 mlm_steps, seed, lr=mlm_lr, batch_rows=cfg.batch_rows)
    if dae_steps:
        dae_pretrain(params, model_cfg, [budgeted], noise, dae_steps, seed,
                     lr=mlm_lr, batch_rows=cfg.batch_rows)
    return finetune(params, model_cfg, corpus, dev_pairs, cfg, noise, seed)
