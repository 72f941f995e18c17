"""The ten go/no-go checks for this package, one test per criterion.

Checks 1-5 re-run the dual-route oracles at full scale with pinned
tolerances: autodiff vs finite differences, meta updates vs closed forms,
bitwise reduction equivalences, detached generation, and BLEU vs a
brute-force counter. Checks 6-9 share one complete run of the default
desk-scale suite (6 out-domains, 5,000-word in-domain budget, 3 seeds)
and assert the headline orderings. Check 10 pins byte-identical reruns.
Each check reports as a single pass/fail line under pytest -v.
"""

import statistics
import time

import numpy as np
import pytest

from mumt.autodiff import Tape, backward
from mumt.bleu import corpus_bleu
from mumt.data import LANG_SRC, LANG_TGT, SyntheticLanguageSpec, TokenBatch, generate_corpora
from mumt.harness import DIRECTIONS, default_config, run_matrix, write_csv
from mumt.losses import NoiseConfig, bt_loss, bt_pair_loss
from mumt.meta import (
    MetaConfig,
    QuadraticTasks,
    UnmtTasks,
    meta_step_gumt,
    meta_step_umt,
    pretrain,
)
from mumt.model import SharedEncDec, TransformerConfig, init_params
from mumt.optim import Sgd

from gradcheck_utils import random_graph, check_graph
from test_bleu import brute_bleu
from test_meta import oracle_gumt_grad, oracle_umt_grad
from test_harness import tiny_experiment


def _theta(params):
    return float(params["theta"].data[0])


def test_c01_gradients_match_finite_differences():
    """>= 100 random graphs <= 64 elements, rel err < 1e-3, under 30 s."""
    t0 = time.perf_counter()
    for seed in range(100):
        leaves, program, out = random_graph(np.random.default_rng([770, seed]))
        bad = check_graph(leaves, program, out)
        assert not bad, f"graph {seed} disagrees: {bad[:3]}"
    assert time.perf_counter() - t0 < 30.0


def test_c02_meta_updates_match_closed_forms():
    """Both meta steps equal hand derivations to 1e-6 on >= 20 draws, and
    iterated updates on symmetric quadratics land on mean(a_i); under 5 s."""
    t0 = time.perf_counter()
    for draw in range(24):
        rng = np.random.default_rng([501, draw])
        n = [2, 3, 5][int(rng.integers(3))]
        targets = [int(rng.integers(-32, 33)) / 16.0 for _ in range(n)]
        theta0 = int(rng.integers(-32, 33)) / 16.0
        alpha = int(rng.integers(0, 9)) / 16.0
        beta = int(rng.integers(1, 7)) / 32.0
        mix = [0.0, 0.25, 0.5, 0.75, 1.0][int(rng.integers(5))]
        use_cd, use_agg = bool(rng.integers(2)), bool(rng.integers(2))
        tasks = QuadraticTasks(targets)

        pa = QuadraticTasks.make_params(theta0)
        meta_step_umt(pa, tasks, MetaConfig(alpha=alpha, beta=beta, n_out_domains=n,
                                            seed=0), Sgd(lr=beta), 0)
        want = theta0 - beta * oracle_umt_grad(theta0, targets, alpha)
        assert _theta(pa) == pytest.approx(want, abs=1e-6)

        pb = QuadraticTasks.make_params(theta0)
        meta_step_gumt(pb, tasks, MetaConfig(alpha=alpha, beta=beta, n_out_domains=n,
                                             cross_domain_mix=mix, use_cross_domain=use_cd,
                                             use_aggregate=use_agg, seed=0), Sgd(lr=beta), 0)
        want = theta0 - beta * oracle_gumt_grad(theta0, targets, alpha, mix, use_cd, use_agg)
        assert _theta(pb) == pytest.approx(want, abs=1e-6)

    tasks = QuadraticTasks([0.0, 2.0])
    params = QuadraticTasks.make_params(-1.5)
    cfg = MetaConfig(alpha=0.1, beta=0.2, n_out_domains=2, seed=0)
    opt = Sgd(lr=0.2)
    for t in range(60):
        meta_step_umt(params, tasks, cfg, opt, t)
    assert abs(_theta(params) - 1.0) < 1e-3
    assert time.perf_counter() - t0 < 5.0


@pytest.fixture(scope="module")
def lattice_world():
    spec = SyntheticLanguageSpec(
        n_domains=3, shared_vocab_size=16, domain_vocab_size=8, anchor_tokens=6,
        sentence_len_min=4, sentence_len_max=8, train_sentences_per_domain=40,
        eval_pairs_per_domain=8, seed=11)
    corpora = generate_corpora(spec)
    model_cfg = TransformerConfig(vocab_size=len(spec.vocab), n_layers=1, d_model=16,
                                  n_heads=2, d_ff=32, max_len=10)
    return corpora, model_cfg


def test_c03_reduction_lattice_bitwise(lattice_world):
    """gumt(mix 0, aggregate off) == umt and umt(alpha 0, one domain) ==
    transfer, parameter for parameter at the byte level."""
    corpora, model_cfg = lattice_world

    def bitwise(pa, pb):
        return all(pa[n].data.tobytes() == pb[n].data.tobytes() for n, _ in pa.items())

    tasks = UnmtTasks(model_cfg, corpora, NoiseConfig(), batch_rows=4)
    cfg = MetaConfig(alpha=0.02, beta=1e-3, n_out_domains=3, meta_steps=2,
                     cross_domain_mix=0.0, use_aggregate=False, seed=5, batch_rows=4)
    pa = init_params(model_cfg, seed=7)
    pb = pa.deep_clone()
    pretrain(tasks, cfg, "metagumt", pa)
    pretrain(tasks, cfg, "metaumt", pb)
    assert bitwise(pa, pb)

    tasks1 = UnmtTasks(model_cfg, corpora[:1], NoiseConfig(), batch_rows=4)
    cfg1 = MetaConfig(alpha=0.0, beta=1e-3, n_out_domains=1, meta_steps=3, seed=9,
                      batch_rows=4)
    pc = init_params(model_cfg, seed=8)
    pd = pc.deep_clone()
    pretrain(tasks1, cfg1, "metaumt", pc)
    pretrain(tasks1, cfg1, "transfer", pd)
    assert bitwise(pc, pd)


def test_c04_backtranslation_is_detached():
    """bt gradients equal the same loss with pseudo-pairs precomputed as
    constants, elementwise."""
    cfg = TransformerConfig(vocab_size=64, n_layers=1, d_model=32, n_heads=2,
                            d_ff=64, max_len=12, dropout=0.1)
    model = SharedEncDec.init(cfg, seed=1)
    rng = np.random.default_rng(40)
    src = TokenBatch.from_sentences(
        [list(rng.integers(7, 35, size=rng.integers(3, 8))) for _ in range(6)], LANG_SRC)
    tgt = TokenBatch.from_sentences(
        [list(rng.integers(35, 64, size=rng.integers(3, 8))) for _ in range(6)], LANG_TGT)

    p1 = model.params.deep_clone()
    m1 = model.bind(p1)
    with Tape():
        loss1 = bt_loss(m1, src, tgt, np.random.default_rng(7))
    backward(loss1)

    p2 = model.params.deep_clone()
    m2 = model.bind(p2)
    pseudo_src = m2.greedy_decode(tgt, LANG_SRC)
    pseudo_tgt = m2.greedy_decode(src, LANG_TGT)
    with Tape():
        loss2 = bt_pair_loss(m2, pseudo_src, pseudo_tgt, src, tgt, np.random.default_rng(7))
    backward(loss2)

    assert loss1.data.tobytes() == loss2.data.tobytes()
    for name, t in p1.items():
        g1, g2 = t.grad, p2[name].grad
        assert (g1 is None) == (g2 is None), name
        if g1 is not None:
            assert np.array_equal(g1, g2), name


def test_c05_bleu_matches_brute_force():
    """corpus_bleu equals an independent n-gram walk to 1e-9 on 1,000 random
    pairs and reproduces the pinned brevity-penalty example."""
    rng = np.random.default_rng(123)
    pairs_checked = 0
    while pairs_checked < 1000:
        k = int(rng.integers(1, 8))
        hyps = [list(map(int, rng.integers(0, 20, size=rng.integers(1, 13))))
                for _ in range(k)]
        refs = [list(map(int, rng.integers(0, 20, size=rng.integers(1, 13))))
                for _ in range(k)]
        assert corpus_bleu(hyps, refs) == pytest.approx(brute_bleu(hyps, refs), abs=1e-9)
        pairs_checked += k
    assert corpus_bleu([[1, 2, 3, 4]], [[1, 2, 3, 4, 5]]) == pytest.approx(
        77.88007830714049, abs=1e-9)


# ------------------------------------------------- the default suite (6-9)


@pytest.fixture(scope="module")
def default_suite(tmp_path_factory):
    cfg = default_config()
    t0 = time.perf_counter()
    rows, report = run_matrix(cfg, out_dir=tmp_path_factory.mktemp("suite"))
    elapsed = time.perf_counter() - t0
    return cfg, rows, report, elapsed


def _final_eval_rows(rows):
    return [r for r in rows if r.phase == "eval" and r.run_id == f"{r.method}-s{r.seed}"]


def _median_bleu(rows, method, direction=None):
    vals = [r.bleu for r in rows if r.method == method
            and (direction is None or r.direction == direction)]
    assert vals, f"no rows for {method}/{direction}"
    return statistics.median(vals)


def test_c06_trend_ordering_and_gaps(default_suite):
    """Median test BLEU per direction: metagumt >= metaumt >= transfer >=
    unadapted, both meta methods at least +1 over transfer, supervised and
    unmt_only below transfer; whole suite under 30 minutes."""
    _, rows, _, elapsed = default_suite
    finals = _final_eval_rows(rows)
    for d in DIRECTIONS:
        gumt = _median_bleu(finals, "metagumt", d)
        umt = _median_bleu(finals, "metaumt", d)
        tr = _median_bleu(finals, "transfer", d)
        un = _median_bleu(finals, "unadapted", d)
        sup = _median_bleu(finals, "supervised", d)
        uo = _median_bleu(finals, "unmt_only", d)
        assert gumt >= umt >= tr >= un, \
            f"{d}: gumt {gumt:.2f}, umt {umt:.2f}, transfer {tr:.2f}, unadapted {un:.2f}"
        assert umt - tr >= 1.0, f"{d}: metaumt {umt:.2f} vs transfer {tr:.2f}"
        assert gumt - tr >= 1.0, f"{d}: metagumt {gumt:.2f} vs transfer {tr:.2f}"
        assert sup < tr, f"{d}: supervised {sup:.2f} not below transfer {tr:.2f}"
        assert uo < tr, f"{d}: unmt_only {uo:.2f} not below transfer {tr:.2f}"
    assert elapsed < 1800.0, f"suite took {elapsed:.0f}s"


def test_c07_meta_methods_converge_no_later(default_suite):
    """Median convergence epoch: metagumt <= metaumt <= transfer."""
    _, rows, _, _ = default_suite
    finals = _final_eval_rows(rows)

    def med_epoch(method):
        per_seed = sorted({(r.seed, r.epoch_or_step) for r in finals
                           if r.method == method})
        return statistics.median([e for _, e in per_seed])

    gumt, umt, tr = med_epoch("metagumt"), med_epoch("metaumt"), med_epoch("transfer")
    assert gumt <= umt <= tr, f"epochs: gumt {gumt}, umt {umt}, transfer {tr}"


def test_c08_ablation_term_ordering(default_suite):
    """Median test BLEU (pooled over seeds and directions) of the gumt term
    corners: on/on >= each single-term corner >= off/off."""
    _, rows, _, _ = default_suite

    def corner(cd, agg):
        tag = f"ablation-cd{cd}agg{agg}-"
        vals = [r.bleu for r in rows if r.run_id.startswith(tag) and r.phase == "eval"]
        assert vals, f"no rows for corner {tag}"
        return statistics.median(vals)

    on_on, on_off, off_on, off_off = corner(1, 1), corner(1, 0), corner(0, 1), corner(0, 0)
    assert on_on >= on_off >= off_off, \
        f"on/on {on_on:.2f}, on/off {on_off:.2f}, off/off {off_off:.2f}"
    assert on_on >= off_on >= off_off, \
        f"on/on {on_on:.2f}, off/on {off_on:.2f}, off/off {off_off:.2f}"


def test_c09_zero_shot_unseen_domain(default_suite):
    """On the domain never seen in pretraining or finetuning, metagumt's
    median BLEU (pooled over seeds and directions) is at least transfer's."""
    cfg, rows, _, _ = default_suite
    zs = [r for r in rows if r.run_id.endswith("-zeroshot")
          and r.domain == cfg.unseen_domain]
    gumt = _median_bleu(zs, "metagumt")
    tr = _median_bleu(zs, "transfer")
    assert gumt >= tr, f"unseen domain: metagumt {gumt:.2f} < transfer {tr:.2f}"


def test_c10_matrix_rerun_is_byte_identical(tmp_path):
    """Identical config and seeds give a byte-identical metrics CSV."""
    cfg = tiny_experiment(dae_steps=2, unmt_warmup_steps=3, transfer_steps=4,
                          seeds=(0, 1))
    blobs = []
    for tag in ("a", "b"):
        rows, _ = run_matrix(cfg)
        path = tmp_path / f"{tag}.csv"
        write_csv(path, rows)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]
