"""Synthetic language, corpora, noise, and batching contracts."""

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mumt.data import (
    EOS,
    LANG_SRC,
    LANG_TGT,
    N_SPECIALS,
    PAD,
    DataError,
    DomainCorpus,
    SyntheticLanguageSpec,
    TokenBatch,
    Vocabulary,
    add_noise,
    child_rng,
    generate_corpora,
    load_corpora,
    make_batches,
    sample_in_domain,
    save_corpora,
)


@pytest.fixture(scope="module")
def spec():
    return SyntheticLanguageSpec(
        n_domains=3,
        shared_vocab_size=12,
        domain_vocab_size=8,
        anchor_tokens=4,
        sentence_len_min=3,
        sentence_len_max=8,
        train_sentences_per_domain=120,
        eval_pairs_per_domain=40,
        seed=5,
    )


@pytest.fixture(scope="module")
def corpora(spec):
    return generate_corpora(spec)


def test_special_token_ids_fixed(spec):
    v = spec.vocab
    assert v.tokens[PAD] == "<pad>" and PAD == 0
    assert v.tokens[1] == "<bos>" and v.tokens[EOS] == "<eos>" and EOS == 2
    assert v.tokens[3] == "<unk>" and v.tokens[4] == "<mask>"
    assert v.tokens[LANG_SRC] == "<s>" and v.tokens[LANG_TGT] == "<t>"


def test_cipher_is_involutive_bijection(spec):
    c = spec.cipher
    assert sorted(c.keys()) == list(range(len(spec.vocab)))
    assert sorted(c.values()) == list(range(len(spec.vocab)))
    for k, v in c.items():
        assert c[v] == k


def test_anchor_tokens_map_to_themselves(spec):
    anchors = spec.function_ids[: spec.anchor_tokens]
    assert all(spec.cipher[a] == a for a in anchors)
    non_anchor = spec.function_ids[spec.anchor_tokens:]
    assert all(spec.cipher[i] != i for i in non_anchor)


def test_reorder_swaps_adjacent_pairs(spec):
    assert spec.reorder([10, 11, 12, 13]) == [11, 10, 13, 12]
    assert spec.reorder([10, 11, 12]) == [11, 10, 12]
    assert spec.reorder([7]) == [7]
    assert spec.reorder([]) == []


@given(st.lists(st.integers(0, 100), max_size=20))
def test_reorder_is_involution(xs):
    r = SyntheticLanguageSpec.reorder
    assert r(r(xs)) == list(xs)


def test_generation_deterministic(spec):
    a = generate_corpora(spec)
    b = generate_corpora(SyntheticLanguageSpec(**spec.knobs()))
    for ca, cb in zip(a, b):
        assert ca.src_sentences == cb.src_sentences
        assert ca.tgt_sentences == cb.tgt_sentences
        assert ca.eval_pairs == cb.eval_pairs


def test_eval_pairs_aligned_by_construction(spec, corpora):
    for c in corpora:
        for s, t in c.eval_pairs:
            assert spec.to_target(s) == t
            assert spec.to_source(t) == s  # decipher(reorder^-1(t)) = s


def test_eval_pairs_absent_from_training_sides(corpora):
    for c in corpora:
        srcs = {tuple(s) for s in c.src_sentences}
        tgts = {tuple(s) for s in c.tgt_sentences}
        for s, t in c.eval_pairs:
            assert tuple(s) not in srcs
            assert tuple(t) not in tgts


def test_domain_topic_blocks_disjoint(spec, corpora):
    for a in range(spec.n_domains):
        topic_a = set(spec.topic_ids[a]) | {spec.cipher[i] for i in spec.topic_ids[a]}
        for b, c in enumerate(corpora):
            if a == b:
                continue
            hist = Counter()
            for s in c.src_sentences + c.tgt_sentences:
                hist.update(s)
            assert sum(hist[t] for t in topic_a) == 0


def test_function_words_shared_across_domains(spec, corpora):
    fn = set(spec.function_ids)
    for c in corpora:
        used = set()
        for s in c.src_sentences:
            used.update(s)
        assert len(used & fn) > len(fn) // 2


def test_training_sides_unpaired_but_same_marginal_family(spec, corpora):
    c = corpora[0]
    # independent streams: deciphered tgt sentences differ from src sentences
    back = [spec.to_source(t) for t in c.tgt_sentences]
    assert back != c.src_sentences
    # src side reproducible from its own stream regardless of tgt generation
    redo = [spec.sample_sentence(0, child_rng(spec.seed, 0, 0))
            for _ in range(3)][0]
    assert redo == c.src_sentences[0]


def test_sentence_lengths_in_range(spec, corpora):
    for c in corpora:
        for s in c.src_sentences:
            assert spec.sentence_len_min <= len(s) <= spec.sentence_len_max


def test_sample_in_domain_budget_window(spec, corpora):
    budget = 300
    reduced = sample_in_domain(corpora[0], budget, seed=9)
    for side in ("src", "tgt"):
        total = reduced.side_tokens(side)
        assert budget - spec.sentence_len_max <= total <= budget
    assert reduced.eval_pairs == corpora[0].eval_pairs


def test_sample_in_domain_full_budget_keeps_everything():
    sents = [[9, 10, 11], [12, 13], [14, 15, 16, 17]]
    c = DomainCorpus(0, sents, [list(reversed(s)) for s in sents], [])
    full = c.side_tokens("src")
    reduced = sample_in_domain(c, full, seed=1)
    assert reduced.side_tokens("src") == full
    assert sorted(map(tuple, reduced.src_sentences)) == sorted(map(tuple, sents))


def test_sample_in_domain_overbudget_is_error(corpora):
    with pytest.raises(DataError, match="budget"):
        sample_in_domain(corpora[0], corpora[0].side_tokens("src") + 1, seed=0)


def test_sample_in_domain_deterministic(corpora):
    a = sample_in_domain(corpora[0], 200, seed=4)
    b = sample_in_domain(corpora[0], 200, seed=4)
    assert a.src_sentences == b.src_sentences and a.tgt_sentences == b.tgt_sentences


# ---------------------------------------------------------------------------
# noise


def test_noise_identity_when_disabled():
    s = [10, 11, 12, 13, 14]
    assert add_noise(s, 0.0, 0, np.random.default_rng(0)) == s


def test_noise_empty_in_empty_out():
    assert add_noise([], 0.3, 3, np.random.default_rng(0)) == []


def test_noise_invalid_params():
    rng = np.random.default_rng(0)
    with pytest.raises(DataError):
        add_noise([1], 1.0, 3, rng)
    with pytest.raises(DataError):
        add_noise([1], -0.1, 3, rng)
    with pytest.raises(DataError):
        add_noise([1], 0.1, -1, rng)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(7, 200), min_size=1, max_size=24),
    st.floats(0.0, 0.95),
    st.integers(0, 5),
    st.integers(0, 2**16),
)
def test_noise_output_is_nonempty_submultiset(sentence, drop, window, seed):
    out = add_noise(sentence, drop, window, np.random.default_rng(seed))
    assert len(out) >= 1
    assert not Counter(out) - Counter(sentence)


def test_noise_drop_rate_monte_carlo():
    rng = np.random.default_rng(123)
    sentence = list(range(7, 27))  # 20 tokens
    drop = 0.1
    kept = 0
    trials = 4000
    for _ in range(trials):
        kept += len(add_noise(sentence, drop, 0, rng))
    rate = 1.0 - kept / (trials * len(sentence))
    assert abs(rate - drop) < 0.02


def test_noise_displacement_bounded_by_window():
    rng = np.random.default_rng(42)
    window = 3
    for _ in range(500):
        n = int(rng.integers(2, 30))
        sentence = list(range(100, 100 + n))  # distinct tokens index positions
        out = add_noise(sentence, 0.0, window, rng)
        assert sorted(out) == sentence
        for new_pos, tok in enumerate(out):
            old_pos = tok - 100
            assert abs(new_pos - old_pos) <= window


def test_noise_keeps_one_token_when_all_dropped():
    # drop_prob near 1 on short sentences exercises the survivor rule
    rng = np.random.default_rng(7)
    for _ in range(200):
        out = add_noise([50, 51], 0.94, 0, rng)
        assert 1 <= len(out) <= 2


# ---------------------------------------------------------------------------
# batching


def test_make_batches_conserves_sentences(corpora):
    sents = corpora[0].src_sentences
    batches = make_batches(sents, LANG_SRC, tokens_per_batch=64, seed=3)
    got = Counter(tuple(s) for b in batches for s in b.sentences())
    assert got == Counter(tuple(s) for s in sents)


def test_make_batches_respects_budget(corpora):
    for b in make_batches(corpora[0].src_sentences, LANG_SRC, 64, seed=3):
        assert b.n_tokens <= 64
        assert b.tokens.dtype == np.int64


def test_make_batches_oversize_sentence_error():
    with pytest.raises(DataError, match="exceeds"):
        make_batches([[9] * 10], LANG_SRC, tokens_per_batch=5, seed=0)


def test_make_batches_deterministic(corpora):
    a = make_batches(corpora[0].src_sentences, LANG_SRC, 64, seed=8)
    b = make_batches(corpora[0].src_sentences, LANG_SRC, 64, seed=8)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert np.array_equal(x.tokens, y.tokens)


def test_token_batch_padding_and_masks():
    tb = TokenBatch.from_sentences([[8, 9], [10, 11, 12]], LANG_TGT)
    assert tb.tokens.shape == (2, 3)
    assert tb.tokens[0, 2] == PAD
    assert np.array_equal(tb.pad_mask(), np.array([[False, False, True], [False, False, False]]))
    assert tb.sentences() == [[8, 9], [10, 11, 12]]
    assert np.array_equal(tb.lang, [LANG_TGT, LANG_TGT])


def test_token_batch_rejects_empty():
    with pytest.raises(DataError):
        TokenBatch.from_sentences([], LANG_SRC)
    with pytest.raises(DataError):
        TokenBatch.from_sentences([[1], []], LANG_SRC)


# ---------------------------------------------------------------------------
# files


def test_corpus_file_round_trip(spec, corpora, tmp_path):
    save_corpora(corpora, spec.vocab, tmp_path)
    expected = {"vocab.txt"} | {f"domain{c.domain_id}" for c in corpora}
    assert {p.name for p in tmp_path.iterdir()} == expected
    for c in corpora:
        d = tmp_path / f"domain{c.domain_id}"
        assert {p.name for p in d.iterdir()} == {"src.txt", "tgt.txt", "eval.src.txt", "eval.tgt.txt"}
    loaded, vocab = load_corpora(tmp_path)
    assert vocab.tokens == spec.vocab.tokens
    for a, b in zip(corpora, loaded):
        assert a.src_sentences == b.src_sentences
        assert a.tgt_sentences == b.tgt_sentences
        assert a.eval_pairs == b.eval_pairs


def test_vocab_round_trip_and_unknown_token(spec, tmp_path):
    spec.vocab.save(tmp_path / "vocab.txt")
    v = Vocabulary.load(tmp_path / "vocab.txt")
    words = spec.vocab.decode([7, 8, 9])
    assert v.encode(words) == [7, 8, 9]
    with pytest.raises(DataError, match="unknown token"):
        v.encode(["definitely-not-a-token"])


def test_vocab_requires_special_prefix():
    with pytest.raises(DataError, match="special"):
        Vocabulary(["a", "b"])
