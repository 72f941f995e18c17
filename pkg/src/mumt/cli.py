"""Command-line front end: data generation, training stages, evaluation,
the full experiment matrix, and report rendering.

Exit codes: 0 success, 2 configuration problems (bad JSON, bad flags,
inconsistent settings), 3 runtime or numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bleu import DIRECTIONS, evaluate_model
from .data import DataError, SyntheticLanguageSpec, generate_corpora, save_corpora
from .harness import (
    ConfigError,
    ExperimentConfig,
    default_config,
    read_csv,
    render_report,
    run_matrix,
    shared_init,
    split_eval,
)
from .losses import NoiseConfig
from .meta import PRETRAIN_METHODS, UnmtTasks, finetune, pretrain
from .model import SharedEncDec, TransformerConfig
from .params import ParamSet, load_json_sidecar, save_json_sidecar


def _load_config(path: str | None) -> ExperimentConfig:
    return default_config() if path is None else ExperimentConfig.load(path)


def _sidecar_path(ckpt: str) -> str:
    return ckpt + ".json"


def _save_checkpoint(params: ParamSet, ckpt: str, meta: dict) -> None:
    Path(ckpt).parent.mkdir(parents=True, exist_ok=True)
    params.save(ckpt)
    save_json_sidecar(_sidecar_path(ckpt), meta)


def _load_checkpoint(ckpt: str):
    try:
        params = ParamSet.load(ckpt)
    except FileNotFoundError as e:
        raise ConfigError(f"checkpoint not found: {ckpt}") from e
    try:
        meta = load_json_sidecar(_sidecar_path(ckpt))
    except FileNotFoundError as e:
        raise ConfigError(f"missing checkpoint sidecar {_sidecar_path(ckpt)}") from e
    language = SyntheticLanguageSpec.from_knobs(meta["language"])
    model_cfg = TransformerConfig.from_dict(meta["model"])
    return params, meta, language, model_cfg


def cmd_gen_data(args) -> int:
    if args.spec is None:
        language = SyntheticLanguageSpec()
    else:
        try:
            knobs = json.loads(Path(args.spec).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"spec file not found: {args.spec}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {args.spec}: {e}") from e
        try:
            language = SyntheticLanguageSpec.from_knobs(knobs)
        except (TypeError, DataError) as e:
            raise ConfigError(str(e)) from e
    corpora = generate_corpora(language)
    save_corpora(corpora, language.vocab, args.out)
    total = sum(len(c.src_sentences) + len(c.tgt_sentences) for c in corpora)
    print(f"wrote {len(corpora)} domains ({total} training sentences, "
          f"vocab {len(language.vocab)}) to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args.config)
    corpora = generate_corpora(cfg.language)
    out_corpora = [corpora[d] for d in cfg.out_domains]
    seed = cfg.seeds[0] if args.seed is None else args.seed
    tasks = UnmtTasks(cfg.model, out_corpora, cfg.noise, batch_rows=cfg.meta.batch_rows)
    params = shared_init(cfg, out_corpora, tasks, seed)
    if args.method == "transfer":
        steps, offset = cfg.transfer_pretrain_steps(), cfg.unmt_warmup_steps
    else:
        steps, offset = cfg.meta.meta_steps, 0
    meta_cfg = replace(cfg.meta, seed=seed, meta_steps=steps)
    history = pretrain(tasks, meta_cfg, args.method, params, step_offset=offset)
    _save_checkpoint(params, args.out, {
        "method": args.method,
        "seed": seed,
        "steps": steps,
        "config_hash": cfg.config_hash(),
        "language": cfg.language.knobs(),
        "model": cfg.model.to_dict(),
        "noise": {"drop_prob": cfg.noise.drop_prob,
                  "shuffle_window": cfg.noise.shuffle_window},
    })
    last = history[-1]["loss"] if history else float("nan")
    print(f"pretrained {args.method} seed {seed} for {steps} steps "
          f"(final loss {last:.4f}); checkpoint: {args.out}")
    return 0


def cmd_finetune(args) -> int:
    params, meta, language, model_cfg = _load_checkpoint(args.ckpt)
    cfg = _load_config(args.config)
    if cfg.language.knobs() != language.knobs():
        cfg = replace(cfg, language=language, model=model_cfg)
    corpora = generate_corpora(language)
    if not 0 <= args.in_domain < language.n_domains:
        raise ConfigError(f"in-domain {args.in_domain} outside [0, {language.n_domains})")
    corpus = corpora[args.in_domain]
    dev, _, _ = split_eval(corpus, cfg.eval_slice, language.seed)
    seed = int(meta.get("seed", 0)) if args.seed is None else args.seed
    ft_cfg = replace(cfg.finetune, in_domain_budget_words=args.budget)
    noise = NoiseConfig(**meta["noise"]) if "noise" in meta else cfg.noise
    best, conv, history = finetune(params, model_cfg, corpus, dev, ft_cfg, noise, seed)
    _save_checkpoint(best, args.out, {
        "method": f"{meta.get('method', 'unknown')}+finetuned",
        "seed": seed,
        "steps": conv,
        "config_hash": cfg.config_hash(),
        "in_domain": args.in_domain,
        "language": language.knobs(),
        "model": model_cfg.to_dict(),
        "noise": meta.get("noise", {"drop_prob": noise.drop_prob,
                                    "shuffle_window": noise.shuffle_window}),
    })
    print(f"finetuned on domain {args.in_domain} (budget {args.budget}); "
          f"convergence epoch {conv}, best dev BLEU "
          f"{max(h['dev_bleu'] for h in history):.2f}; checkpoint: {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    params, meta, language, model_cfg = _load_checkpoint(args.ckpt)
    if not 0 <= args.domain < language.n_domains:
        raise ConfigError(f"domain {args.domain} outside [0, {language.n_domains})")
    corpora = generate_corpora(language)
    model = SharedEncDec(model_cfg, params)
    bleu = evaluate_model(model, corpora[args.domain].eval_pairs, args.direction)
    print(f"domain={args.domain} direction={args.direction} bleu={bleu:.4f}")
    return 0


def cmd_matrix(args) -> int:
    cfg = _load_config(args.config)
    log = print if args.verbose else None
    rows, report = run_matrix(cfg, out_dir=args.out, wall_clock=args.wall_clock, log=log)
    print(report, end="")
    print(f"\n{len(rows)} metric rows written to {Path(args.out) / 'metrics.csv'}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.inp)
    csv_path = path / "metrics.csv" if path.is_dir() else path
    if not csv_path.exists():
        raise ConfigError(f"no metrics CSV at {csv_path}")
    rows = read_csv(csv_path)
    if args.format == "csv":
        print(csv_path.read_text(), end="")
    else:
        print(render_report(rows), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mumt",
                                description="meta-learned unsupervised MT on "
                                            "synthetic multi-domain language pairs")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate and save the synthetic corpora")
    g.add_argument("--spec", default=None, help="JSON file of language knobs")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("pretrain", help="masked-LM init plus one pretraining method")
    t.add_argument("--method", required=True, choices=PRETRAIN_METHODS)
    t.add_argument("--config", default=None, help="experiment config JSON")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True, help="checkpoint file to write")
    t.set_defaults(fn=cmd_pretrain)

    f = sub.add_parser("finetune", help="adapt a checkpoint to one domain")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--in-domain", type=int, required=True)
    f.add_argument("--budget", type=int, default=5000)
    f.add_argument("--config", default=None)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--out", required=True)
    f.set_defaults(fn=cmd_finetune)

    e = sub.add_parser("evaluate", help="BLEU of a checkpoint on one domain")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--domain", type=int, required=True)
    e.add_argument("--direction", choices=DIRECTIONS, default="s2t")
    e.set_defaults(fn=cmd_evaluate)

    m = sub.add_parser("matrix", help="run the full experiment matrix")
    m.add_argument("--config", default=None)
    m.add_argument("--out", required=True, help="results directory")
    m.add_argument("--wall-clock", action="store_true",
                   help="record real phase timings (CSV no longer byte-stable)")
    m.add_argument("--verbose", action="store_true")
    m.set_defaults(fn=cmd_matrix)

    r = sub.add_parser("report", help="render metrics from a results directory")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--format", choices=("csv", "txt"), default="txt")
    r.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
