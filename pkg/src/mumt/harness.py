"""Experiment matrix over synthetic domains: config, pipelines, CSV, reports.

One config drives everything: six methods x seeds, periodic pretraining
evaluation, per-epoch finetuning curves, final test scores, zero-shot
scoring across every domain, and the cross/aggregate-term ablation.
Results are MetricsRow records written through one sorted CSV sink, so a
rerun with the same config is byte-identical (wall timing defaults to 0
and is opt-in precisely to keep that true).
"""

from __future__ import annotations

import hashlib
import json
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .bleu import evaluate_model
from .data import SyntheticLanguageSpec, child_rng, generate_corpora
from .losses import NoiseConfig
from .meta import (
    FinetuneConfig,
    MetaConfig,
    UnmtTasks,
    dae_pretrain,
    finetune,
    mlm_pretrain,
    pretrain,
    supervised_baseline,
    unmt_only_baseline,
)
from .model import SharedEncDec, TransformerConfig, init_params

METHODS = ("unadapted", "transfer", "metaumt", "metagumt", "supervised", "unmt_only")
PRETRAINED_METHODS = ("unadapted", "transfer", "metaumt", "metagumt")
PHASES = ("pretrain", "finetune", "eval")
DIRECTIONS = ("s2t", "t2s")
CSV_HEADER = "run_id,method,phase,domain,direction,seed,epoch_or_step,bleu,lm_loss,bt_loss,wall_ms"


class ConfigError(ValueError):
    """Bad experiment configuration; the CLI maps this to exit code 2."""


@dataclass
class MetricsRow:
    run_id: str
    method: str
    phase: str
    domain: int
    direction: str
    seed: int
    epoch_or_step: int
    bleu: float
    lm_loss: float | None = None
    bt_loss: float | None = None
    wall_ms: float = 0.0

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError(f"bleu out of range: {self.bleu}")
        for name in ("lm_loss", "bt_loss"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.epoch_or_step < 0 or self.wall_ms < 0:
            raise ValueError("epoch_or_step and wall_ms must be >= 0")

    def csv_line(self) -> str:
        def num(v):
            return "" if v is None else f"{v:.6f}"

        return ",".join([
            self.run_id, self.method, self.phase, str(self.domain), self.direction,
            str(self.seed), str(self.epoch_or_step), num(self.bleu),
            num(self.lm_loss), num(self.bt_loss), f"{self.wall_ms:.3f}",
        ])

    @classmethod
    def from_csv_line(cls, line: str) -> "MetricsRow":
        parts = line.rstrip("\n").split(",")
        if len(parts) != 11:
            raise ValueError(f"bad metrics row: {line!r}")
        opt = lambda s: None if s == "" else float(s)
        return cls(parts[0], parts[1], parts[2], int(parts[3]), parts[4], int(parts[5]),
                   int(parts[6]), float(parts[7]), opt(parts[8]), opt(parts[9]),
                   float(parts[10]))


def row_sort_key(row: MetricsRow):
    return (row.run_id, PHASES.index(row.phase), row.epoch_or_step, row.domain,
            row.direction)


@dataclass
class ExperimentConfig:
    methods: tuple = METHODS
    language: SyntheticLanguageSpec = field(default_factory=SyntheticLanguageSpec)
    out_domains: tuple = (0, 1, 2, 3, 4, 5)
    in_domain: int = 6
    unseen_domain: int = 7
    seeds: tuple = (0, 1, 2)
    meta: MetaConfig = field(default_factory=MetaConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    model: TransformerConfig | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    supervised_word_budget: int = 10000
    mlm_steps: int = 80
    mlm_lr: float = 3e-4
    dae_steps: int = 0
    unmt_warmup_steps: int = 0
    transfer_steps: int | None = None
    eval_slice: int = 160
    pretrain_eval_every: int = 30
    pretrain_eval_pairs: int = 32
    zero_shot_methods: tuple = ("transfer", "metagumt")
    ablation: bool = True

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.out_domains = tuple(self.out_domains)
        self.seeds = tuple(self.seeds)
        self.zero_shot_methods = tuple(self.zero_shot_methods)
        if self.model is None:
            self.model = TransformerConfig(vocab_size=len(self.language.vocab))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; valid: {METHODS}")
        if not self.methods or not self.seeds:
            raise ConfigError("methods and seeds must be non-empty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be >= 0")
        n = self.language.n_domains
        ids = set(self.out_domains) | {self.in_domain, self.unseen_domain}
        if any(not 0 <= d < n for d in ids):
            raise ConfigError(f"domain ids must be in [0, {n})")
        if self.in_domain in self.out_domains:
            raise ConfigError("in_domain must not be an out-domain")
        if self.unseen_domain in self.out_domains or self.unseen_domain == self.in_domain:
            raise ConfigError("unseen_domain must be outside out-domains and in-domain")
        if len(set(self.out_domains)) != len(self.out_domains) or not self.out_domains:
            raise ConfigError("out_domains must be non-empty and unique")
        if self.meta.n_out_domains != len(self.out_domains):
            raise ConfigError(
                f"meta.n_out_domains {self.meta.n_out_domains} != "
                f"{len(self.out_domains)} configured out-domains")
        if self.model.vocab_size != len(self.language.vocab):
            raise ConfigError(
                f"model vocab_size {self.model.vocab_size} != language vocabulary "
                f"{len(self.language.vocab)}")
        if self.eval_slice < 4 or self.eval_slice > self.language.eval_pairs_per_domain:
            raise ConfigError("eval_slice must be in [4, eval_pairs_per_domain]")
        if self.pretrain_eval_every < 1 or self.pretrain_eval_pairs < 1:
            raise ConfigError("pretrain_eval_every and pretrain_eval_pairs must be >= 1")
        if self.supervised_word_budget <= 0:
            raise ConfigError("supervised_word_budget must be > 0")
        if self.mlm_steps < 0 or self.mlm_lr <= 0:
            raise ConfigError("mlm_steps must be >= 0 and mlm_lr > 0")
        if self.dae_steps < 0 or self.unmt_warmup_steps < 0:
            raise ConfigError("dae_steps and unmt_warmup_steps must be >= 0")
        if self.transfer_steps is not None and self.transfer_steps < 1:
            raise ConfigError("transfer_steps must be None (auto) or >= 1")
        bad_zs = [m for m in self.zero_shot_methods if m not in METHODS]
        if bad_zs:
            raise ConfigError(f"unknown zero_shot_methods {bad_zs}")

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "language": self.language.knobs(),
            "out_domains": list(self.out_domains),
            "in_domain": self.in_domain,
            "unseen_domain": self.unseen_domain,
            "seeds": list(self.seeds),
            "meta": asdict(self.meta),
            "finetune": asdict(self.finetune),
            "model": self.model.to_dict(),
            "noise": {"drop_prob": self.noise.drop_prob,
                      "shuffle_window": self.noise.shuffle_window},
            "supervised_word_budget": self.supervised_word_budget,
            "mlm_steps": self.mlm_steps,
            "mlm_lr": self.mlm_lr,
            "dae_steps": self.dae_steps,
            "unmt_warmup_steps": self.unmt_warmup_steps,
            "transfer_steps": self.transfer_steps,
            "eval_slice": self.eval_slice,
            "pretrain_eval_every": self.pretrain_eval_every,
            "pretrain_eval_pairs": self.pretrain_eval_pairs,
            "zero_shot_methods": list(self.zero_shot_methods),
            "ablation": self.ablation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kwargs = {}
        try:
            if "language" in d:
                kwargs["language"] = SyntheticLanguageSpec.from_knobs(d.pop("language"))
            if "meta" in d:
                kwargs["meta"] = MetaConfig(**d.pop("meta"))
            if "finetune" in d:
                kwargs["finetune"] = FinetuneConfig(**d.pop("finetune"))
            if "model" in d:
                kwargs["model"] = TransformerConfig.from_dict(d.pop("model"))
            if "noise" in d:
                kwargs["noise"] = NoiseConfig(**d.pop("noise"))
            scalar_keys = ("methods", "out_domains", "in_domain", "unseen_domain",
                           "seeds", "supervised_word_budget", "mlm_steps", "mlm_lr",
                           "dae_steps", "unmt_warmup_steps", "transfer_steps",
                           "eval_slice", "pretrain_eval_every", "pretrain_eval_pairs",
                           "zero_shot_methods", "ablation")
            for k in scalar_keys:
                if k in d:
                    kwargs[k] = d.pop(k)
            if d:
                raise ConfigError(f"unknown config keys: {sorted(d)}")
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e

    def transfer_pretrain_steps(self) -> int:
        """Steps for the transfer continuation; the auto default matches the
        meta methods' data budget (one meta step touches 2 * n_out_domains
        batches: inner adapt plus meta test, versus one for a plain step)."""
        if self.transfer_steps is not None:
            return self.transfer_steps
        return 2 * len(self.out_domains) * self.meta.meta_steps

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {path}: {e}") from e
        return cls.from_dict(raw)


def shared_init(cfg: ExperimentConfig, out_corpora, tasks, seed: int):
    """Common initialization for every pretrained method at one seed.

    Masked-LM on the pooled out-domain text aligns the two embedding spaces,
    denoising reconstruction wakes up the decoder, and a short joint warmup
    carries the model past the point where back-translation feeds itself.
    The methods under comparison then diverge from this one parameter set.
    """
    params = init_params(cfg.model, seed)
    src_pool = [s for c in out_corpora for s in c.src_sentences]
    tgt_pool = [s for c in out_corpora for s in c.tgt_sentences]
    mlm_pretrain(params, cfg.model, src_pool, tgt_pool, cfg.mlm_steps,
                 seed, lr=cfg.mlm_lr, batch_rows=cfg.meta.batch_rows)
    if cfg.dae_steps:
        dae_pretrain(params, cfg.model, out_corpora, cfg.noise, cfg.dae_steps,
                     seed, lr=cfg.mlm_lr, batch_rows=cfg.meta.batch_rows)
    if cfg.unmt_warmup_steps:
        warm_cfg = replace(cfg.meta, seed=seed, meta_steps=cfg.unmt_warmup_steps)
        pretrain(tasks, warm_cfg, "transfer", params)
    return params


def split_eval(corpus, n_slice: int, seed: int):
    """Fixed shuffled carve-up of a domain's aligned pairs: dev half, test
    half, and the untouched remainder (the supervised training pool)."""
    pairs = corpus.eval_pairs
    if n_slice > len(pairs):
        raise ConfigError(f"eval_slice {n_slice} exceeds {len(pairs)} available pairs")
    order = child_rng(seed, corpus.domain_id, 55).permutation(len(pairs))
    sliced = [pairs[i] for i in order[:n_slice]]
    rest = [pairs[i] for i in order[n_slice:]]
    half = n_slice // 2
    return sliced[:half], sliced[half:], rest


class MatrixRunner:
    """Executes experiment cells with per-seed caching of shared stages.

    Every pretrained method at a given seed starts from one shared
    initialization (masked-LM, then denoising, then a short joint warmup on
    the out-domains), so the methods differ only in the update rule applied
    afterwards. The transfer pretraining is additionally shared between the
    transfer and unadapted methods, mirroring how the baselines are defined.
    """

    def __init__(self, cfg: ExperimentConfig, wall_clock: bool = False, log=None):
        self.cfg = cfg
        self.wall_clock = wall_clock
        self.log = log if log is not None else (lambda msg: None)
        self.corpora = generate_corpora(cfg.language)
        self.out_corpora = [self.corpora[d] for d in cfg.out_domains]
        self.in_corpus = self.corpora[cfg.in_domain]
        self.dev, self.test, self.rest = split_eval(self.in_corpus, cfg.eval_slice,
                                                    cfg.language.seed)
        self.tasks = UnmtTasks(cfg.model, self.out_corpora, cfg.noise,
                               batch_rows=cfg.meta.batch_rows)
        self.rows: list[MetricsRow] = []
        self._init_cache = {}
        self._pre_cache = {}
        self._fit_cache = {}
        self._eval_cache = {}

    def _ms(self) -> float:
        return time.perf_counter() * 1000.0 if self.wall_clock else 0.0

    # ----------------------------------------------------------- stages

    def _shared_init(self, seed: int):
        if seed not in self._init_cache:
            cfg = self.cfg
            self.log(f"[init] seed {seed}: mlm {cfg.mlm_steps}, dae {cfg.dae_steps}, "
                     f"warmup {cfg.unmt_warmup_steps}")
            self._init_cache[seed] = shared_init(cfg, self.out_corpora, self.tasks,
                                                 seed)
        return self._init_cache[seed].deep_clone()

    def _pretrain_key(self, method: str, cd: bool | None, agg: bool | None):
        if method in ("transfer", "unadapted"):
            return ("transfer", False, False)
        if cd is None:
            cd = self.cfg.meta.use_cross_domain
        if agg is None:
            agg = self.cfg.meta.use_aggregate
        if method == "metaumt" or (method == "metagumt" and not cd and not agg):
            # with both terms off the gumt step replays umt batch-for-batch
            return ("metaumt", False, False)
        return ("metagumt", cd, agg)

    def _pretrained(self, method: str, seed: int, cd=None, agg=None):
        key = self._pretrain_key(method, cd, agg) + (seed,)
        if key in self._pre_cache:
            return key
        name, k_cd, k_agg, _ = key
        self.log(f"[pretrain] {name} cd={k_cd} agg={k_agg} seed {seed}")
        params = self._shared_init(seed)
        if name == "transfer":
            # continue the shared warmup's batch stream rather than replay it
            steps = self.cfg.transfer_pretrain_steps()
            offset = self.cfg.unmt_warmup_steps
        else:
            steps, offset = self.cfg.meta.meta_steps, 0
        meta_cfg = replace(self.cfg.meta, seed=seed, meta_steps=steps,
                           use_cross_domain=k_cd, use_aggregate=k_agg)
        model = SharedEncDec(self.cfg.model, params)
        probe_pairs = self.dev[: self.cfg.pretrain_eval_pairs]
        strides = []
        t0 = self._ms()
        last = offset + steps - 1

        def hook(t, _params):
            if (t + 1) % self.cfg.pretrain_eval_every == 0 or t == last:
                strides.append((t, evaluate_model(model, probe_pairs, "s2t"),
                                evaluate_model(model, probe_pairs, "t2s"),
                                self._ms() - t0))

        history = pretrain(self.tasks, meta_cfg, name, params, hook,
                           step_offset=offset)
        self._pre_cache[key] = (params, strides, history)
        return key

    def _finetuned(self, method: str, seed: int, cd=None, agg=None):
        if method in ("supervised", "unmt_only"):
            key = (method, False, False, seed)
        else:
            key = self._pretrain_key(method, cd, agg) + (seed,)
        if key in self._fit_cache:
            return key
        t0 = self._ms()
        if method == "supervised":
            self.log(f"[train] supervised seed {seed}")
            best, conv, history = supervised_baseline(
                self.cfg.model, self.rest, self.dev, self.cfg.supervised_word_budget,
                self.cfg.finetune, seed)
        elif method == "unmt_only":
            self.log(f"[train] unmt_only seed {seed}")
            best, conv, history = unmt_only_baseline(
                self.cfg.model, self.in_corpus, self.dev, self.cfg.finetune,
                self.cfg.noise, seed, mlm_steps=self.cfg.mlm_steps,
                mlm_lr=self.cfg.mlm_lr, dae_steps=self.cfg.dae_steps)
        else:
            pre_key = self._pretrained(method, seed, cd, agg)
            self.log(f"[finetune] {key[0]} cd={key[1]} agg={key[2]} seed {seed}")
            params = self._pre_cache[pre_key][0].deep_clone()
            best, conv, history = finetune(params, self.cfg.model, self.in_corpus,
                                           self.dev, self.cfg.finetune, self.cfg.noise,
                                           seed)
        self._fit_cache[key] = (best, conv, history, self._ms() - t0)
        return key

    def _test_bleu(self, cache_key, params) -> dict:
        if cache_key not in self._eval_cache:
            t0 = self._ms()
            model = SharedEncDec(self.cfg.model, params)
            scores = {d: evaluate_model(model, self.test, d) for d in DIRECTIONS}
            self._eval_cache[cache_key] = (scores, self._ms() - t0)
        return self._eval_cache[cache_key]

    # ------------------------------------------------------------ cells

    def _emit_pretrain_rows(self, run_id, method, seed, pre_key):
        _, strides, history = self._pre_cache[pre_key]
        by_step = {h["step"]: h for h in history}
        for (t, s2t, t2s, ms) in strides:
            h = by_step[t]
            for direction, bleu in (("s2t", s2t), ("t2s", t2s)):
                self.rows.append(MetricsRow(run_id, method, "pretrain",
                                            self.cfg.in_domain, direction, seed, t,
                                            bleu, h["lm"], h["bt"], ms))

    def _emit_finetune_rows(self, run_id, method, seed, fit_key):
        _, _, history, ms = self._fit_cache[fit_key]
        for h in history:
            for direction in DIRECTIONS:
                self.rows.append(MetricsRow(run_id, method, "finetune",
                                            self.cfg.in_domain, direction, seed,
                                            h["epoch"], h[f"dev_{direction}"],
                                            None, None, ms))

    def _emit_eval_rows(self, run_id, method, seed, scores, epoch, ms):
        for direction in DIRECTIONS:
            self.rows.append(MetricsRow(run_id, method, "eval", self.cfg.in_domain,
                                        direction, seed, epoch, scores[direction],
                                        None, None, ms))

    def run_cell(self, method: str, seed: int) -> None:
        run_id = f"{method}-s{seed}"
        if method == "unadapted":
            pre_key = self._pretrained("transfer", seed)
            params = self._pre_cache[pre_key][0]
            scores, ms = self._test_bleu(("unadapted",) + pre_key, params)
            self._emit_eval_rows(run_id, method, seed, scores, 0, ms)
            self.log(f"[eval] {run_id}: s2t {scores['s2t']:.2f} t2s {scores['t2s']:.2f}")
            return
        if method in ("transfer", "metaumt", "metagumt"):
            pre_key = self._pretrained(method, seed)
            self._emit_pretrain_rows(run_id, method, seed, pre_key)
        fit_key = self._finetuned(method, seed)
        self._emit_finetune_rows(run_id, method, seed, fit_key)
        best, conv, _, _ = self._fit_cache[fit_key]
        scores, ms = self._test_bleu(fit_key, best)
        self._emit_eval_rows(run_id, method, seed, scores, conv, ms)
        self.log(f"[eval] {run_id}: s2t {scores['s2t']:.2f} t2s {scores['t2s']:.2f} "
                 f"(epoch {conv})")

    def run_zero_shot(self) -> None:
        domains = list(self.cfg.out_domains) + [self.cfg.in_domain, self.cfg.unseen_domain]
        for method in [m for m in self.cfg.zero_shot_methods if m in self.cfg.methods]:
            for seed in self.cfg.seeds:
                fit_key = self._finetuned(method, seed)
                best = self._fit_cache[fit_key][0]
                model = SharedEncDec(self.cfg.model, best)
                run_id = f"{method}-s{seed}-zeroshot"
                for d in domains:
                    t0 = self._ms()
                    _, test_d, _ = split_eval(self.corpora[d], self.cfg.eval_slice,
                                              self.cfg.language.seed)
                    for direction in DIRECTIONS:
                        bleu = evaluate_model(model, test_d, direction)
                        self.rows.append(MetricsRow(run_id, method, "eval", d,
                                                    direction, seed, 0, bleu, None,
                                                    None, self._ms() - t0))
                self.log(f"[zero-shot] {run_id} done")

    def run_ablation(self) -> None:
        corners = [(False, False), (True, False), (False, True), (True, True)]
        for cd, agg in corners:
            for seed in self.cfg.seeds:
                fit_key = self._finetuned("metagumt", seed, cd, agg)
                best, conv, _, _ = self._fit_cache[fit_key]
                scores, ms = self._test_bleu(fit_key, best)
                run_id = f"ablation-cd{int(cd)}agg{int(agg)}-s{seed}"
                self._emit_eval_rows(run_id, "metagumt", seed, scores, conv, ms)
            self.log(f"[ablation] cd={cd} agg={agg} done")


def run_matrix(cfg: ExperimentConfig, out_dir=None, wall_clock: bool = False,
               log=None) -> tuple[list[MetricsRow], str]:
    """Execute every requested cell plus zero-shot and ablation passes,
    returning sorted metric rows and a rendered text report."""
    runner = MatrixRunner(cfg, wall_clock=wall_clock, log=log)
    for method in [m for m in METHODS if m in cfg.methods]:
        for seed in cfg.seeds:
            runner.run_cell(method, seed)
    runner.run_zero_shot()
    if cfg.ablation:
        runner.run_ablation()
    rows = sorted(runner.rows, key=row_sort_key)
    _check_completeness(rows, cfg)
    report = render_report(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "metrics.csv", rows)
        (out / "report.txt").write_text(report)
        cfg.save(out / "config.json")
    return rows, report


def _check_completeness(rows: list[MetricsRow], cfg: ExperimentConfig) -> None:
    want = {(m, s, d) for m in cfg.methods for s in cfg.seeds for d in DIRECTIONS}
    got = [(r.method, r.seed, r.direction) for r in rows
           if r.phase == "eval" and r.run_id == f"{r.method}-s{r.seed}"]
    if sorted(got) != sorted(want):
        raise RuntimeError("final-eval rows are not exactly one per method/seed/direction")


def write_csv(path, rows: list[MetricsRow]) -> None:
    lines = [CSV_HEADER] + [r.csv_line() for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> list[MetricsRow]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ValueError(f"{path} does not start with the metrics header")
    return [MetricsRow.from_csv_line(line) for line in text[1:] if line]


def _median(vals):
    return statistics.median(vals) if vals else float("nan")


def render_report(rows: list[MetricsRow]) -> str:
    """Plain-text summary: per-method medians, zero-shot table, ablation."""
    main_eval = [r for r in rows if r.phase == "eval"
                 and r.run_id == f"{r.method}-s{r.seed}"]
    methods = [m for m in METHODS if any(r.method == m for r in main_eval)]
    lines = ["== final test BLEU (median over seeds) =="]
    lines.append(f"{'method':<12}{'s2t':>8}{'t2s':>8}{'epoch':>7}")
    for m in methods:
        cells = {}
        for d in DIRECTIONS:
            cells[d] = _median([r.bleu for r in main_eval
                                if r.method == m and r.direction == d])
        epochs = sorted({(r.seed, r.epoch_or_step) for r in main_eval if r.method == m})
        med_epoch = _median([e for _, e in epochs])
        lines.append(f"{m:<12}{cells['s2t']:>8.2f}{cells['t2s']:>8.2f}{med_epoch:>7.1f}")

    zs = [r for r in rows if r.run_id.endswith("-zeroshot")]
    if zs:
        lines.append("")
        lines.append("== zero-shot test BLEU by domain (median over seeds) ==")
        zs_methods = sorted({r.method for r in zs})
        header = f"{'domain':<8}" + "".join(f"{m + '-' + d:>16}"
                                            for m in zs_methods for d in DIRECTIONS)
        lines.append(header)
        for dom in sorted({r.domain for r in zs}):
            cells = []
            for m in zs_methods:
                for d in DIRECTIONS:
                    cells.append(_median([r.bleu for r in zs if r.domain == dom
                                          and r.method == m and r.direction == d]))
            lines.append(f"{dom:<8}" + "".join(f"{c:>16.2f}" for c in cells))

    ab = [r for r in rows if r.run_id.startswith("ablation-")]
    if ab:
        lines.append("")
        lines.append("== ablation: cross-domain / aggregate terms (median test BLEU) ==")
        lines.append(f"{'cross':<7}{'aggregate':<11}{'s2t':>8}{'t2s':>8}")
        for cd in (0, 1):
            for agg in (0, 1):
                tag = f"ablation-cd{cd}agg{agg}"
                sel = [r for r in ab if r.run_id.startswith(tag)]
                s = _median([r.bleu for r in sel if r.direction == "s2t"])
                t = _median([r.bleu for r in sel if r.direction == "t2s"])
                lines.append(f"{('on' if cd else 'off'):<7}"
                             f"{('on' if agg else 'off'):<11}{s:>8.2f}{t:>8.2f}")
    return "\n".join(lines) + "\n"


def default_config() -> ExperimentConfig:
    """The desk-scale suite the acceptance checks run against."""
    language = SyntheticLanguageSpec()
    return ExperimentConfig(
        language=language,
        model=TransformerConfig(vocab_size=len(language.vocab)),
        meta=MetaConfig(alpha=0.05, beta=2e-3, n_out_domains=6, meta_steps=25,
                        batch_rows=16),
        finetune=FinetuneConfig(in_domain_budget_words=5000, max_epochs=6,
                                patience=3, lr=1e-3, warmup_steps=8,
                                batch_rows=16),
        noise=NoiseConfig(drop_prob=0.1, shuffle_window=1),
        mlm_steps=2000,
        mlm_lr=2e-3,
        dae_steps=800,
        unmt_warmup_steps=1600,
        pretrain_eval_every=10,
    )
