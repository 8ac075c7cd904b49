"""Command-line entry point.

One subcommand per pipeline stage: ingest | stats | kappa | split |
build-prompts | icl | train | tune-thresholds | evaluate | ablate.
Experiment subcommands write their outputs under a fresh run directory
named <UTC timestamp>-<config hash>, always containing config.json (the
exact configuration, argv, and library version).  Exit codes: 0 success,
1 runtime failure (partial artifacts are kept), 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ABLATION_ARMS, RunConfig
from .corpus import (
    AnnotationRound,
    Corpus,
    corpus_stats,
    kappa_report,
    load_corpus,
    stratified_split,
    write_corpus,
)
from .evaluation import ThresholdProfile, decode_predictions, f1_scores, tune_thresholds
from .experiments import (
    build_training_prompts,
    evaluate_trained,
    load_checkpoint,
    make_backend,
    make_embed_backend,
    predict_probs,
    prompt_record_rows,
    run_ablation,
    run_icl,
    run_training,
    save_checkpoint,
    write_jsonl,
)
from .synthetic import generate_corpus
from .verbalizer import save_head


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    """Config file (if given) with explicit flag overrides applied on top."""
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in ("backend", "seed", "mode", "k_demo", "n_tokens", "token_budget",
                 "icl_token_budget", "icl_n_tokens", "lam", "bank_capacity",
                 "epochs", "batch_size", "lr", "d_h", "adapter_rank",
                 "no_weighcon", "no_demonstration", "no_space_thinking"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(cfg, **overrides)


def _make_run_dir(out_root: str, cfg: RunConfig, argv: list[str]) -> Path:
    """Fresh directory <out>/<timestamp>-<hash>[-n] with the config echo."""
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    base = Path(out_root) / f"{stamp}-{cfg.config_hash()}"
    run_dir = base
    n = 1
    while run_dir.exists():
        n += 1
        run_dir = Path(f"{base}-{n}")
    run_dir.mkdir(parents=True)
    echo = {
        "version": __version__,
        "argv": argv,
        "timestamp": stamp,
        "config": cfg.as_dict(),
    }
    (run_dir / "config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return run_dir


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


# -- subcommand handlers --


def _cmd_ingest(args, argv) -> int:
    if args.synthetic is not None:
        corpus = generate_corpus(args.synthetic, seed=args.seed or 0)
    else:
        if args.input is None:
            print("ingest: need --input or --synthetic", file=sys.stderr)
            return 2
        corpus = load_corpus(args.input)
    write_corpus(corpus, args.output)
    print(f"wrote {len(corpus)} documents ({corpus.n_sentences} sentences) "
          f"to {args.output}")
    return 0


def _cmd_stats(args, argv) -> int:
    corpus = load_corpus(args.corpus)
    print(json.dumps(corpus_stats(corpus).as_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_kappa(args, argv) -> int:
    a = load_corpus(args.corpus)
    b = load_corpus(args.corpus_b)
    report = kappa_report(
        AnnotationRound.from_corpus(a, "a"), AnnotationRound.from_corpus(b, "b")
    )
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _cmd_split(args, argv) -> int:
    corpus = load_corpus(args.corpus)
    ratios = _parse_float_list(args.ratios)
    train, dev, test = stratified_split(corpus, ratios, seed=args.seed or 0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("dev", dev), ("test", test)):
        write_corpus(split, out / f"{name}.jsonl")
    summary = {name: len(split) for name, split in
               (("train", train), ("dev", dev), ("test", test))}
    _write_json(out / "split.json", {"ratios": list(ratios), "seed": args.seed or 0,
                                     "sizes": summary})
    print(json.dumps(summary))
    return 0


def _cmd_build_prompts(args, argv) -> int:
    cfg = _config_from_args(args).effective()
    corpus = load_corpus(args.corpus)
    pool = load_corpus(args.pool) if args.pool else corpus
    backend = make_backend(cfg, pool)
    embed = make_embed_backend(cfg)
    budget = args.budget if args.budget is not None else cfg.icl_token_budget
    rows = prompt_record_rows(corpus, pool, embed, cfg, backend.tokenizer, budget,
                              exclude_self=args.pool is None)
    write_jsonl(rows, args.output)
    print(f"wrote {len(rows)} prompts to {args.output}")
    return 0


def _cmd_icl(args, argv) -> int:
    cfg = _config_from_args(args)
    test = load_corpus(args.test)
    train = load_corpus(args.train)
    backend = make_backend(cfg, test)  # echo reads gold for the queried split
    embed = make_embed_backend(cfg)
    run_dir = _make_run_dir(args.out, cfg, argv)
    shots = _parse_int_list(args.shots)
    summary = {}
    for k in shots:
        report, _ = run_icl(test, train, k, backend, embed, cfg,
                            trace_path=run_dir / f"trace-{k}shot.jsonl")
        _write_json(run_dir / f"report-{k}shot.json", report.as_dict())
        summary[k] = {"micro_f1": report.micro_f1, "macro_f1": report.macro_f1,
                      "n_parse_failures": report.n_parse_failures}
    lines = ["| Shots | Micro F1 | Macro F1 | Parse failures |",
             "| --- | --- | --- | --- |"]
    for k in shots:
        row = summary[k]
        lines.append(f"| {k} | {row['micro_f1']:.4f} | {row['macro_f1']:.4f} "
                     f"| {row['n_parse_failures']} |")
    (run_dir / "report.md").write_text("\n".join(lines) + "\n")
    _write_json(run_dir / "summary.json", {str(k): v for k, v in summary.items()})
    print(json.dumps({str(k): v for k, v in summary.items()}, indent=2))
    print(f"run directory: {run_dir}")
    return 0


def _cmd_train(args, argv) -> int:
    cfg = _config_from_args(args)
    train = load_corpus(args.train)
    dev = load_corpus(args.dev)
    run_dir = _make_run_dir(args.out, cfg, argv)
    result = run_training(train, dev, cfg,
                          telemetry_path=run_dir / "telemetry.jsonl")
    save_checkpoint(result, cfg, train.label_set, run_dir / "checkpoint.pt")
    save_head(result.head, run_dir / "head.bin")
    _write_json(run_dir / "profile.json", result.profile.as_dict())
    _write_json(run_dir / "report.json", result.report.as_dict())
    (run_dir / "report.md").write_text(result.report.markdown() + "\n")
    _write_json(run_dir / "history.json",
                {"best_epoch": result.best_epoch, "epochs": result.history})
    print(json.dumps({"best_epoch": result.best_epoch,
                      "dev_micro_f1": result.report.micro_f1,
                      "dev_macro_f1": result.report.macro_f1}, indent=2))
    print(f"run directory: {run_dir}")
    return 0


def _cmd_tune_thresholds(args, argv) -> int:
    cfg, label_set, backend, head, pair_net, _ = load_checkpoint(args.checkpoint)
    if args.grid:
        grid = _parse_float_list(args.grid)
        cfg = dataclasses.replace(cfg, grid=grid)
    dev = load_corpus(args.dev)
    pool = load_corpus(args.train)
    run_dir = _make_run_dir(args.out, cfg, argv)
    embed = make_embed_backend(cfg)
    budget = min(cfg.token_budget, backend.context_limit - cfg.n_tokens)
    prompts = build_training_prompts(
        dev, pool, embed, dataclasses.replace(cfg, token_budget=budget),
        backend.tokenizer, exclude_self=False,
    )
    probs, gold, _ = predict_probs(backend, head, prompts, cfg)
    profile = tune_thresholds(probs, gold, grid=cfg.grid,
                              label_names=label_set.names)
    pred = decode_predictions(probs, profile, cfg.mode)
    report = f1_scores(pred, gold, label_names=label_set.names)
    _write_json(run_dir / "profile.json", profile.as_dict())
    _write_json(run_dir / "report.json", report.as_dict())
    print(json.dumps(profile.as_dict(), indent=2))
    print(f"run directory: {run_dir}")
    return 0


def _cmd_evaluate(args, argv) -> int:
    cfg, label_set, backend, head, pair_net, profile = load_checkpoint(args.checkpoint)
    test = load_corpus(args.test)
    pool = load_corpus(args.train)
    run_dir = _make_run_dir(args.out, cfg, argv)
    embed = make_embed_backend(cfg)
    if args.profile:
        profile = ThresholdProfile.from_dict(json.loads(Path(args.profile).read_text()))
    if args.fixed_threshold is not None:
        profile = ThresholdProfile.fixed(len(label_set), args.fixed_threshold)
    budget = min(cfg.token_budget, backend.context_limit - cfg.n_tokens)
    prompts = build_training_prompts(
        test, pool, embed, dataclasses.replace(cfg, token_budget=budget),
        backend.tokenizer, exclude_self=False,
    )
    probs, gold, _ = predict_probs(backend, head, prompts, cfg)
    pred = decode_predictions(probs, profile, cfg.mode)
    report = f1_scores(pred, gold, label_names=label_set.names,
                       config={"thresholds": profile.as_dict()})
    _write_json(run_dir / "report.json", report.as_dict())
    (run_dir / "report.md").write_text(report.markdown() + "\n")
    print(json.dumps({"micro_f1": report.micro_f1, "macro_f1": report.macro_f1},
                     indent=2))
    print(f"run directory: {run_dir}")
    return 0


def _cmd_ablate(args, argv) -> int:
    cfg = _config_from_args(args)
    train = load_corpus(args.train)
    dev = load_corpus(args.dev)
    test = load_corpus(args.test)
    arms = tuple(args.arms.split(","))
    run_dir = _make_run_dir(args.out, cfg, argv)
    results = run_ablation(train, dev, test, cfg, arms=arms)
    lines = ["| Arm | Dev micro F1 | Test micro F1 | Test macro F1 |",
             "| --- | --- | --- | --- |"]
    summary = {}
    for arm in arms:
        dev_rep, test_rep = results[arm]["dev"], results[arm]["test"]
        _write_json(run_dir / f"report-{arm}.json",
                    {"dev": dev_rep.as_dict(), "test": test_rep.as_dict(),
                     "best_epoch": results[arm]["best_epoch"]})
        lines.append(f"| {arm} | {dev_rep.micro_f1:.4f} | {test_rep.micro_f1:.4f} "
                     f"| {test_rep.macro_f1:.4f} |")
        summary[arm] = {"dev_micro_f1": dev_rep.micro_f1,
                        "test_micro_f1": test_rep.micro_f1}
    (run_dir / "report.md").write_text("\n".join(lines) + "\n")
    _write_json(run_dir / "summary.json", summary)
    print(json.dumps(summary, indent=2))
    print(f"run directory: {run_dir}")
    return 0


# -- parser --


def _add_config_flags(p: argparse.ArgumentParser, training: bool = False) -> None:
    p.add_argument("--config", help="JSON (or TOML on Python 3.11+) config file")
    p.add_argument("--backend", choices=["toy", "echo"], default=None,
                   help="language-model backend")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["multi", "single"], default=None)
    p.add_argument("--k-demo", dest="k_demo", type=int, default=None,
                   help="demonstrations per query")
    p.add_argument("--n-tokens", dest="n_tokens", type=int, default=None,
                   help="generated tokens fed to the classification head")
    if training:
        p.add_argument("--lam", "--lambda", dest="lam", type=float, default=None,
                       help="contrastive loss weight (0 disables)")
        p.add_argument("--bank-capacity", dest="bank_capacity", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--token-budget", dest="token_budget", type=int, default=None)
        p.add_argument("--no-weighcon", dest="no_weighcon", action="store_true",
                       default=None, help="ablation: drop the contrastive term")
        p.add_argument("--no-demonstration", dest="no_demonstration",
                       action="store_true", default=None,
                       help="ablation: query-only prompts")
        p.add_argument("--no-space-thinking", dest="no_space_thinking",
                       action="store_true", default=None,
                       help="ablation: generate a single token")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssc",
        description="Multi-label sequential sentence classification toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file or generate a synthetic one")
    p.add_argument("--input", help="raw corpus JSONL to validate")
    p.add_argument("--synthetic", type=int, metavar="N_DOCS",
                   help="generate a deterministic synthetic corpus instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("kappa", help="per-label and macro agreement of two annotation rounds")
    p.add_argument("--corpus", required=True, help="round A (same documents)")
    p.add_argument("--corpus-b", required=True, help="round B")
    p.set_defaults(func=_cmd_kappa)

    p = sub.add_parser("split", help="stratified train/dev/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("build-prompts", help="emit assembled prompts as JSONL")
    p.add_argument("--corpus", required=True, help="queries come from here")
    p.add_argument("--pool", help="demonstration pool (default: the corpus itself)")
    p.add_argument("--budget", type=int, default=None, help="prompt token budget")
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_build_prompts)

    p = sub.add_parser("icl", help="in-context learning over a shot sweep")
    p.add_argument("--test", required=True)
    p.add_argument("--train", required=True, help="demonstration pool")
    p.add_argument("--shots", default="0,1,5,10", help="comma-separated shot counts")
    p.add_argument("--out", default="runs")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_icl)

    p = sub.add_parser("train", help="adapter+head training with the combined objective")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", default="runs")
    _add_config_flags(p, training=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("tune-thresholds", help="per-label threshold grid search on dev")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--train", required=True, help="demonstration pool")
    p.add_argument("--grid", help="start,stop,step override")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=_cmd_tune_thresholds)

    p = sub.add_parser("evaluate", help="score a checkpoint on a held-out split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--train", required=True, help="demonstration pool")
    p.add_argument("--profile", help="threshold profile JSON (default: checkpoint's)")
    p.add_argument("--fixed-threshold", dest="fixed_threshold", type=float,
                   help="flat threshold comparison mode, e.g. 0.4")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score each ablation arm")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--arms", default=",".join(ABLATION_ARMS))
    p.add_argument("--out", default="runs")
    _add_config_flags(p, training=True)
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
