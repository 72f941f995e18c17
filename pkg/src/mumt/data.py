"""Synthetic multi-domain language pairs and batching.

The paired language is a token-level substitution cipher plus a deterministic
local reordering (swap positions 2k and 2k+1). All domains share one zipf-
weighted function-word inventory; each domain owns a disjoint topic-token
block. A configurable prefix of the function words are *anchors* that the
cipher maps to themselves (the stand-in for shared numerals/names that ground
the two embedding spaces). The cipher is stored as a single involution over
the whole vocabulary, so deciphering is the same map and the reorder rule is
its own inverse: the ground-truth alignment check is just applying both twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, BOS, EOS, UNK, MASK, LANG_SRC, LANG_TGT = 0, 1, 2, 3, 4, 5, 6
N_SPECIALS = 7
SPECIAL_TOKENS = ["<pad>", "<bos>", "<eos>", "<unk>", "<mask>", "<s>", "<t>"]


class DataError(ValueError):
    pass


def child_rng(*key: int) -> np.random.Generator:
    """Independent generator derived from an integer key path."""
    return np.random.default_rng(list(key))


class Vocabulary:
    """Token string <-> id table; line number in the file is the id."""

    def __init__(self, tokens: list[str]):
        if tokens[:N_SPECIALS] != SPECIAL_TOKENS:
            raise DataError("vocabulary must start with the fixed special tokens")
        if len(set(tokens)) != len(tokens):
            raise DataError("vocabulary contains duplicate tokens")
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: list[str]) -> list[int]:
        try:
            return [self.index[w] for w in words]
        except KeyError as e:
            raise DataError(f"unknown token {e.args[0]!r}") from None

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(Path(path).read_text().splitlines())


def _zipf_weights(n: int, exponent: float = 1.0) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    return w / w.sum()


@dataclass
class SyntheticLanguageSpec:
    """Frozen description of one paired-language universe.

    The constructor arguments are the knobs; ``derive`` fills the derived
    fields (vocabulary, cipher, per-domain token blocks, mixture weights)
    deterministically from the seed.
    """

    n_domains: int = 8
    shared_vocab_size: int = 48
    domain_vocab_size: int = 12
    anchor_tokens: int = 12
    sentence_len_min: int = 4
    sentence_len_max: int = 12
    topic_rate: float = 0.35
    style_strength: float = 0.5
    train_sentences_per_domain: int = 2000
    eval_pairs_per_domain: int = 1500
    seed: int = 0
    # derived
    vocab: Vocabulary = field(default=None, repr=False, compare=False)
    cipher: dict[int, int] = field(default=None, repr=False, compare=False)
    function_ids: list[int] = field(default=None, repr=False, compare=False)
    topic_ids: list[list[int]] = field(default=None, repr=False, compare=False)
    function_weights: np.ndarray = field(default=None, repr=False, compare=False)
    topic_mixture: list[np.ndarray] = field(default=None, repr=False, compare=False)
    function_next: np.ndarray = field(default=None, repr=False, compare=False)
    successor_weights: np.ndarray = field(default=None, repr=False, compare=False)
    head_next: np.ndarray = field(default=None, repr=False, compare=False)
    head_next_weights: np.ndarray = field(default=None, repr=False, compare=False)
    succ_weights_by_domain: np.ndarray = field(default=None, repr=False, compare=False)
    head_weights_by_domain: np.ndarray = field(default=None, repr=False, compare=False)

    KNOBS = (
        "n_domains", "shared_vocab_size", "domain_vocab_size", "anchor_tokens",
        "sentence_len_min", "sentence_len_max", "topic_rate", "style_strength",
        "train_sentences_per_domain", "eval_pairs_per_domain", "seed",
    )

    def __post_init__(self):
        if self.n_domains < 2:
            raise DataError(f"n_domains must be >= 2, got {self.n_domains}")
        if self.shared_vocab_size < 8 or self.domain_vocab_size < 8:
            raise DataError("vocab sizes must be >= 8")
        if not 0 <= self.anchor_tokens <= self.shared_vocab_size:
            raise DataError("anchor_tokens must fit inside shared_vocab_size")
        if not 1 <= self.sentence_len_min <= self.sentence_len_max:
            raise DataError("bad sentence length range")
        if not 0.0 <= self.topic_rate <= 1.0:
            raise DataError("topic_rate must be in [0, 1]")
        if not 0.0 <= self.style_strength <= 1.0:
            raise DataError("style_strength must be in [0, 1]")
        if self.vocab is None:
            self._derive()

    def _derive(self) -> None:
        tokens = list(SPECIAL_TOKENS)
        cipher: dict[int, int] = {i: i for i in range(N_SPECIALS)}
        function_ids: list[int] = []
        # anchors: single token shared by both languages, top zipf slots
        for k in range(self.anchor_tokens):
            tokens.append(f"num{k:02d}")
            i = len(tokens) - 1
            cipher[i] = i
            function_ids.append(i)
        # remaining function words: src/tgt pair per type
        for k in range(self.shared_vocab_size - self.anchor_tokens):
            tokens.append(f"fn{k:02d}")
            tokens.append(f"FN{k:02d}")
            s, t = len(tokens) - 2, len(tokens) - 1
            cipher[s], cipher[t] = t, s
            function_ids.append(s)
        # per-domain topic blocks, disjoint across domains
        topic_ids: list[list[int]] = []
        for d in range(self.n_domains):
            block: list[int] = []
            for k in range(self.domain_vocab_size):
                tokens.append(f"d{d}w{k:02d}")
                tokens.append(f"D{d}W{k:02d}")
                s, t = len(tokens) - 2, len(tokens) - 1
                cipher[s], cipher[t] = t, s
                block.append(s)
            topic_ids.append(block)
        # shuffle the non-anchor pairings so the cipher is not positional
        rng = child_rng(self.seed, 901)
        pair_srcs = [s for s in cipher if cipher[s] != s and s < cipher[s]]
        pair_tgts = [cipher[s] for s in pair_srcs]
        shuffled = list(np.array(pair_tgts)[rng.permutation(len(pair_tgts))])
        for s, t in zip(pair_srcs, shuffled):
            cipher[s] = int(t)
            cipher[int(t)] = s
        self.vocab = Vocabulary(tokens)
        self.cipher = cipher
        self.function_ids = function_ids
        self.topic_ids = topic_ids
        self.function_weights = _zipf_weights(len(function_ids))
        self.topic_mixture = [_zipf_weights(self.domain_vocab_size) for _ in range(self.n_domains)]
        # bigram table over function words: a few zipf-drawn successors per
        # head make block-mates informative, which is what lets the pair be
        # deciphered from monolingual text alone
        rng_chain = child_rng(self.seed, 902)
        n_fn = len(function_ids)
        n_succ = min(4, n_fn)
        self.function_next = np.stack([
            rng_chain.choice(n_fn, size=n_succ, replace=False, p=self.function_weights)
            for _ in range(n_fn)])
        self.successor_weights = _zipf_weights(n_succ)
        # head chain across blocks: block composition survives the reorder
        # rule untouched, so this dependence reads the same in both languages
        # and keeps every adjacent position informative, not just block-mates
        rng_heads = child_rng(self.seed, 903)
        self.head_next = np.stack([
            rng_heads.choice(n_fn, size=n_succ, replace=False, p=self.function_weights)
            for _ in range(n_fn)])
        self.head_next_weights = _zipf_weights(n_succ)
        # per-domain style: each domain blends the shared conditional weights
        # of every transition with its own permutation of them, so domains
        # share support but disagree about which continuation is likely; that
        # disagreement is what a multi-domain compromise model has to resolve
        # and a freshly adapted model does not. Full permutation drowns the
        # structure the unsupervised bootstrap needs, hence the blend knob.
        rng_style = child_rng(self.seed, 904)
        s = self.style_strength

        def styled(base):
            return np.stack([
                np.stack([(1.0 - s) * base + s * base[rng_style.permutation(n_succ)]
                          for _ in range(n_fn)])
                for _ in range(self.n_domains)])

        self.succ_weights_by_domain = styled(self.successor_weights)
        self.head_weights_by_domain = styled(self.head_next_weights)
        # bijection sanity: involution covering the whole inventory
        assert sorted(self.cipher) == list(range(len(tokens)))
        assert all(self.cipher[self.cipher[i]] == i for i in self.cipher)

    def knobs(self) -> dict:
        return {k: getattr(self, k) for k in self.KNOBS}

    @classmethod
    def from_knobs(cls, knobs: dict) -> "SyntheticLanguageSpec":
        unknown = set(knobs) - set(cls.KNOBS)
        if unknown:
            raise DataError(f"unknown language knobs: {sorted(unknown)}")
        return cls(**knobs)

    # ---- ground-truth transforms

    def apply_cipher(self, sentence: list[int]) -> list[int]:
        return [self.cipher[t] for t in sentence]

    @staticmethod
    def reorder(sentence: list[int]) -> list[int]:
        """Swap positions (2k, 2k+1); an odd tail token stays. Involution."""
        out = list(sentence)
        for k in range(0, len(out) - 1, 2):
            out[k], out[k + 1] = out[k + 1], out[k]
        return out

    def to_target(self, src_sentence: list[int]) -> list[int]:
        return self.reorder(self.apply_cipher(src_sentence))

    def to_source(self, tgt_sentence: list[int]) -> list[int]:
        return self.apply_cipher(self.reorder(tgt_sentence))

    def sample_sentence(self, domain: int, rng: np.random.Generator) -> list[int]:
        """Source-inventory sentence built from two-token blocks at (2k, 2k+1).

        A function block is a bigram draw (head, successor) whose head follows
        a chain over the previous function block's head, both under the
        domain's own conditional weights; a topic block is two independent
        domain-topic draws. Blocks line up with the reorder rule's swap
        boundaries, so swapping only flips each bigram in place and the head
        chain is untouched; both languages then keep the same adjacency
        information at every position, which is what makes the pair
        decipherable equally well in both directions from monolingual text.
        """
        n = int(rng.integers(self.sentence_len_min, self.sentence_len_max + 1))
        out = []
        fids = self.function_ids
        tids = self.topic_ids[domain]
        tw = self.topic_mixture[domain]
        head = None
        while len(out) < n:
            if n - len(out) == 1:
                out.append(fids[int(rng.choice(len(fids), p=self.function_weights))])
                break
            if rng.random() < self.topic_rate:
                out.append(int(rng.choice(tids, p=tw)))
                out.append(int(rng.choice(tids, p=tw)))
            else:
                if head is None:
                    head = int(rng.choice(len(fids), p=self.function_weights))
                else:
                    head = int(rng.choice(self.head_next[head],
                                          p=self.head_weights_by_domain[domain][head]))
                tail = int(rng.choice(self.function_next[head],
                                      p=self.succ_weights_by_domain[domain][head]))
                out.append(fids[head])
                out.append(fids[tail])
        return out


@dataclass
class DomainCorpus:
    domain_id: int
    src_sentences: list[list[int]]
    tgt_sentences: list[list[int]]
    eval_pairs: list[tuple[list[int], list[int]]]

    def side_tokens(self, side: str) -> int:
        sents = self.src_sentences if side == "src" else self.tgt_sentences
        return sum(len(s) for s in sents)


def generate_corpora(spec: SyntheticLanguageSpec) -> list[DomainCorpus]:
    """One corpus per domain; src/tgt training sides use independent streams
    (unpaired by construction), eval pairs are aligned by construction."""
    corpora = []
    for d in range(spec.n_domains):
        rng_src = child_rng(spec.seed, d, 0)
        rng_tgt = child_rng(spec.seed, d, 1)
        rng_eval = child_rng(spec.seed, d, 2)
        src = [spec.sample_sentence(d, rng_src) for _ in range(spec.train_sentences_per_domain)]
        tgt = [spec.to_target(spec.sample_sentence(d, rng_tgt))
               for _ in range(spec.train_sentences_per_domain)]
        src_seen = {tuple(s) for s in src}
        tgt_seen = {tuple(s) for s in tgt}
        pairs = []
        attempts = 0
        while len(pairs) < spec.eval_pairs_per_domain:
            s = spec.sample_sentence(d, rng_eval)
            t = spec.to_target(s)
            attempts += 1
            if tuple(s) in src_seen or tuple(t) in tgt_seen:
                if attempts > 50 * spec.eval_pairs_per_domain:
                    raise DataError("cannot draw eval pairs disjoint from training sides")
                continue
            pairs.append((s, t))
        corpora.append(DomainCorpus(d, src, tgt, pairs))
    return corpora


def sample_in_domain(corpus: DomainCorpus, word_budget: int, seed: int) -> DomainCorpus:
    """Budget-limited copy: each training side keeps a seeded sentence sample
    whose token total lands in [word_budget - max_len, word_budget]."""

    def take(sentences: list[list[int]], stream: int) -> list[list[int]]:
        total_available = sum(len(s) for s in sentences)
        if word_budget > total_available:
            raise DataError(f"word budget {word_budget} exceeds corpus size {total_available}")
        max_len = max(len(s) for s in sentences)
        if word_budget < max_len:
            raise DataError(f"word budget {word_budget} below longest sentence {max_len}")
        order = child_rng(seed, corpus.domain_id, stream).permutation(len(sentences))
        kept, total = [], 0
        # scanning the whole permutation (no early stop) guarantees both that
        # an exact-size budget keeps everything and that the final total lands
        # in [budget - max_len, budget]: a sentence is only ever skipped once
        # the running total exceeds budget - max_len
        for idx in order:
            n = len(sentences[idx])
            if total + n <= word_budget:
                kept.append(sentences[idx])
                total += n
        return kept

    return DomainCorpus(
        corpus.domain_id,
        take(corpus.src_sentences, 10),
        take(corpus.tgt_sentences, 11),
        corpus.eval_pairs,
    )


def add_noise(sentence: list[int], drop_prob: float, shuffle_window: int,
              rng: np.random.Generator) -> list[int]:
    """Independent token drops, then a bounded local shuffle.

    Never drops everything: if every token is dropped one survivor is chosen
    uniformly. No token moves more than shuffle_window positions from its
    post-drop index (argsort of index + U[0, window+1) keys).
    """
    if not 0.0 <= drop_prob < 1.0:
        raise DataError(f"drop_prob must be in [0, 1), got {drop_prob}")
    if shuffle_window < 0:
        raise DataError(f"shuffle_window must be >= 0, got {shuffle_window}")
    n = len(sentence)
    if n == 0:
        return []
    if drop_prob > 0.0:
        keep = rng.random(n) >= drop_prob
        if not keep.any():
            keep[int(rng.integers(n))] = True
        kept = [t for t, k in zip(sentence, keep) if k]
    else:
        kept = list(sentence)
    if shuffle_window > 0 and len(kept) > 1:
        keys = np.arange(len(kept)) + rng.uniform(0.0, shuffle_window + 1, size=len(kept))
        kept = [kept[i] for i in np.argsort(keys, kind="stable")]
    return kept


@dataclass
class TokenBatch:
    """Padded id matrix plus per-row lengths and language tags."""

    tokens: np.ndarray          # (B, L) int64, PAD-filled
    lengths: np.ndarray         # (B,) int64
    lang: np.ndarray            # (B,) int64, LANG_SRC or LANG_TGT
    domain: int = -1

    @classmethod
    def from_sentences(cls, sentences: list[list[int]], lang, domain: int = -1) -> "TokenBatch":
        if not sentences:
            raise DataError("cannot batch zero sentences")
        if any(len(s) == 0 for s in sentences):
            raise DataError("cannot batch an empty sentence")
        b = len(sentences)
        lengths = np.array([len(s) for s in sentences], dtype=np.int64)
        mat = np.full((b, int(lengths.max())), PAD, dtype=np.int64)
        for i, s in enumerate(sentences):
            mat[i, : len(s)] = s
        lang_arr = np.full(b, lang, dtype=np.int64) if np.isscalar(lang) else np.asarray(lang, dtype=np.int64)
        return cls(mat, lengths, lang_arr, domain)

    @property
    def n_rows(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_tokens(self) -> int:
        return int(self.lengths.sum())

    def sentences(self) -> list[list[int]]:
        return [list(map(int, self.tokens[i, : self.lengths[i]])) for i in range(self.n_rows)]

    def pad_mask(self) -> np.ndarray:
        """(B, L) bool, True at padding positions."""
        return np.arange(self.tokens.shape[1])[None, :] >= self.lengths[:, None]


def make_batches(sentences: list[list[int]], lang, tokens_per_batch: int, seed: int,
                 domain: int = -1) -> list[TokenBatch]:
    """Seeded shuffle, then greedy packing under a non-pad token budget.

    Every sentence lands in exactly one batch; a sentence longer than the
    budget is an error.
    """
    if tokens_per_batch < 1:
        raise DataError("tokens_per_batch must be >= 1")
    too_long = [s for s in sentences if len(s) > tokens_per_batch]
    if too_long:
        raise DataError(f"sentence of {len(too_long[0])} tokens exceeds budget {tokens_per_batch}")
    order = child_rng(seed, 77).permutation(len(sentences))
    batches: list[TokenBatch] = []
    cur: list[list[int]] = []
    cur_tokens = 0
    for idx in order:
        s = sentences[idx]
        if cur and cur_tokens + len(s) > tokens_per_batch:
            batches.append(TokenBatch.from_sentences(cur, lang, domain))
            cur, cur_tokens = [], 0
        cur.append(s)
        cur_tokens += len(s)
    if cur:
        batches.append(TokenBatch.from_sentences(cur, lang, domain))
    return batches


# ---------------------------------------------------------------------------
# corpus files: data/<domain>/{src.txt,tgt.txt,eval.src.txt,eval.tgt.txt}


def save_corpora(corpora: list[DomainCorpus], vocab: Vocabulary, root: str | Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    vocab.save(root / "vocab.txt")
    for c in corpora:
        d = root / f"domain{c.domain_id}"
        d.mkdir(exist_ok=True)
        _write_sentences(d / "src.txt", c.src_sentences, vocab)
        _write_sentences(d / "tgt.txt", c.tgt_sentences, vocab)
        _write_sentences(d / "eval.src.txt", [p[0] for p in c.eval_pairs], vocab)
        _write_sentences(d / "eval.tgt.txt", [p[1] for p in c.eval_pairs], vocab)


def load_corpora(root: str | Path) -> tuple[list[DomainCorpus], Vocabulary]:
    root = Path(root)
    vocab = Vocabulary.load(root / "vocab.txt")
    corpora = []
    dirs = sorted(root.glob("domain*"), key=lambda p: int(p.name[6:]))
    if not dirs:
        raise DataError(f"no domain directories under {root}")
    for d in dirs:
        src = _read_sentences(d / "src.txt", vocab)
        tgt = _read_sentences(d / "tgt.txt", vocab)
        es = _read_sentences(d / "eval.src.txt", vocab)
        et = _read_sentences(d / "eval.tgt.txt", vocab)
        if len(es) != len(et):
            raise DataError(f"{d}: eval sides have different lengths")
        corpora.append(DomainCorpus(int(d.name[6:]), src, tgt, list(zip(es, et))))
    return corpora, vocab


def _write_sentences(path: Path, sentences: list[list[int]], vocab: Vocabulary) -> None:
    with open(path, "w") as f:
        for s in sentences:
            f.write(" ".join(vocab.decode(s)) + "\n")


def _read_sentences(path: Path, vocab: Vocabulary) -> list[list[int]]:
    out = []
    for line in Path(path).read_text().splitlines():
        words = line.split()
        if words:
            out.append(vocab.encode(words))
    return out
