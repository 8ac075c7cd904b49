"""Experiment harnesses: in-context-learning sweeps, head/adapter training
with the combined objective, threshold tuning, and ablation arms.

Training updates only the adapters, the verbalizer head, and the pair
weighting net; the backbone stays frozen.  Each step computes
l_total = l_ce + lam * l_con on one batch, pushes the batch representations
into the memory bank afterwards, and logs a telemetry row.  The dev-best
state (by the configured selection metric) is what a run returns.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backends import EchoBackend, ExternalLMBackend, LMBackend, ToyTransformerBackend
from .config import ABLATION_ARMS, ConfigError, RunConfig
from .contrastive import MemoryBank, PairWeightNet, combined_loss, \
    weighted_contrastive_loss
from .corpus import Corpus, Document, LabelSet
from .evaluation import EvalReport, ThresholdProfile, decode_predictions, f1_scores, \
    tune_thresholds
from .prompting import ParseFailure, Prompt, assemble_prompt, parse_generated_label, \
    prompt_record
from .retrieval import CachedEmbeddingBackend, EmbeddingBackend, HashedBowBackend, \
    rank_demonstrations
from .verbalizer import VerbalizerHead, classification_loss, concat_hidden


def make_backend(config: RunConfig, corpus: Corpus | None = None) -> LMBackend:
    """Backend named by the config: toy | echo | external:<model_id>."""
    if config.backend == "toy":
        return ToyTransformerBackend(seed=config.seed)
    if config.backend == "echo":
        if corpus is None:
            raise ConfigError("echo backend needs a corpus to read gold labels from")
        return EchoBackend(corpus)
    if config.backend.startswith("external:"):
        return ExternalLMBackend(
            endpoint="configured-externally", model_id=config.backend.split(":", 1)[1]
        )
    raise ConfigError(f"unknown backend {config.backend!r}")


def make_embed_backend(config: RunConfig) -> EmbeddingBackend:
    if config.embed_backend == "hashed-bow":
        return CachedEmbeddingBackend(HashedBowBackend())
    raise ConfigError(f"unknown embedding backend {config.embed_backend!r}")


def _instances(corpus: Corpus) -> list[tuple[Document, int]]:
    return [(doc, pos) for doc in corpus.documents for pos in range(len(doc))]


def _prompt_for(
    doc: Document,
    pos: int,
    pool: Corpus,
    embed: EmbeddingBackend,
    label_set: LabelSet,
    k: int,
    budget: int,
    tokenizer,
    exclude_self: bool,
) -> Prompt:
    demos = rank_demonstrations(
        doc.sentences[pos], pool, k, embed,
        exclude_doc_id=doc.doc_id if exclude_self else None,
    )
    return assemble_prompt(demos, doc, pos, label_set, budget, tokenizer)


def _majority_vector(corpus: Corpus) -> np.ndarray:
    """One-hot vector of the most frequent gold label (parse-failure fallback)."""
    counts = np.zeros(len(corpus.label_set), dtype=int)
    for _, sent in corpus.iter_sentences():
        counts += sent.gold
    out = np.zeros(len(corpus.label_set), dtype=np.int8)
    out[int(np.argmax(counts))] = 1
    return out


def _prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def write_jsonl(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False))
            f.write("\n")


def prompt_record_rows(
    corpus: Corpus,
    pool: Corpus,
    embed: EmbeddingBackend,
    config: RunConfig,
    tokenizer,
    budget: int,
    exclude_self: bool,
) -> list[dict]:
    """JSON-ready prompt records for every sentence of a corpus."""
    rows = []
    for doc, pos in _instances(corpus):
        prompt = _prompt_for(
            doc, pos, pool, embed, corpus.label_set, config.k_demo, budget,
            tokenizer, exclude_self=exclude_self,
        )
        rows.append(prompt_record(prompt))
    return rows


# -- in-context learning --


def run_icl(
    test: Corpus,
    train: Corpus,
    k: int,
    backend: LMBackend,
    embed_backend: EmbeddingBackend,
    config: RunConfig | None = None,
    trace_path: str | Path | None = None,
) -> tuple[EvalReport, list[dict]]:
    """Classify every test sentence by prompting the backend with the k most
    similar training documents as demonstrations.

    Parse failures fall back to the training majority label and are counted
    in the report.  A backend failure mid-run still writes the partial trace
    before the error propagates.
    """
    cfg = config or RunConfig()
    label_set = test.label_set
    budget = min(cfg.icl_token_budget, backend.context_limit - cfg.icl_n_tokens)
    fallback = _majority_vector(train)
    preds, golds, trace = [], [], []
    n_failures = 0
    try:
        for doc, pos in _instances(test):
            sent = doc.sentences[pos]
            prompt = _prompt_for(
                doc, pos, train, embed_backend, label_set, k, budget,
                backend.tokenizer, exclude_self=True,
            )
            result = backend.generate(prompt.text, cfg.icl_n_tokens)
            parsed = parse_generated_label(result.decoded, label_set, cfg.mode)
            if isinstance(parsed, ParseFailure):
                n_failures += 1
                pred = fallback
                parsed_names = None
            else:
                pred = parsed
                parsed_names = list(label_set.labels_of(parsed))
            preds.append(pred)
            golds.append(sent.gold)
            trace.append({
                "doc_id": doc.doc_id,
                "index": sent.index,
                "prompt_hash": _prompt_hash(prompt.text),
                "n_shots": prompt.n_shots,
                "generated": result.decoded,
                "parsed": parsed_names,
                "gold": list(label_set.labels_of(sent.gold)),
            })
    finally:
        if trace_path is not None:
            write_jsonl(trace, trace_path)
    report = f1_scores(
        np.stack(preds), np.stack(golds), label_names=label_set.names,
        n_parse_failures=n_failures,
        config={"k": k, "n_tokens": cfg.icl_n_tokens, "mode": cfg.mode,
                "backend": backend.name},
    )
    return report, trace


def shot_sweep(
    test: Corpus,
    train: Corpus,
    ks: tuple[int, ...],
    backend: LMBackend,
    embed_backend: EmbeddingBackend,
    config: RunConfig | None = None,
) -> dict[int, EvalReport]:
    """run_icl at each shot count; one report per k."""
    return {
        k: run_icl(test, train, k, backend, embed_backend, config)[0] for k in ks
    }


# -- training --


@dataclass
class TrainResult:
    backend: LMBackend
    head: VerbalizerHead
    pair_net: PairWeightNet
    profile: ThresholdProfile
    report: EvalReport
    best_epoch: int
    history: list[dict] = field(default_factory=list)
    telemetry: list[dict] = field(default_factory=list)


def _trainable_state(backend, head, pair_net) -> dict:
    adapters = {
        k: v.detach().clone()
        for k, v in backend.model.state_dict().items()
        if ".adapter." in k
    }
    return {
        "adapters": adapters,
        "head": {k: v.detach().clone() for k, v in head.state_dict().items()},
        "pair_net": {k: v.detach().clone() for k, v in pair_net.state_dict().items()},
    }


def _load_trainable_state(state: dict, backend, head, pair_net) -> None:
    missing, unexpected = backend.model.load_state_dict(state["adapters"], strict=False)
    if unexpected:
        raise ValueError(f"unexpected adapter keys: {unexpected}")
    head.load_state_dict(state["head"])
    pair_net.load_state_dict(state["pair_net"])


def build_training_prompts(
    corpus: Corpus,
    pool: Corpus,
    embed: EmbeddingBackend,
    config: RunConfig,
    tokenizer,
    exclude_self: bool,
) -> list[tuple[Document, int, Prompt]]:
    """One prompt per sentence, demos drawn from the pool (self excluded for
    the training split).  Prompts are fixed for the whole run, so they are
    assembled once."""
    cfg = config
    out = []
    for doc, pos in _instances(corpus):
        prompt = _prompt_for(
            doc, pos, pool, embed, corpus.label_set, cfg.k_demo, cfg.token_budget,
            tokenizer, exclude_self=exclude_self,
        )
        out.append((doc, pos, prompt))
    return out


def predict_probs(
    backend,
    head: VerbalizerHead,
    prompts: list[tuple[Document, int, Prompt]],
    config: RunConfig,
) -> tuple[np.ndarray, np.ndarray, list[tuple[str, int]]]:
    """(probs, gold, refs) for a prepared prompt list, batched, no gradients."""
    cfg = config
    probs, golds, refs = [], [], []
    with torch.no_grad():
        for lo in range(0, len(prompts), cfg.batch_size):
            chunk = prompts[lo : lo + cfg.batch_size]
            _, hidden = backend.generate_batch([p.text for _, _, p in chunk], cfg.n_tokens)
            _, p = head(concat_hidden(hidden))
            probs.append(p.detach().to(torch.float64).numpy())
            for doc, pos, _ in chunk:
                golds.append(doc.sentences[pos].gold)
                refs.append((doc.doc_id, pos))
    return np.concatenate(probs), np.stack(golds), refs


def run_training(
    train: Corpus,
    dev: Corpus,
    config: RunConfig,
    backend: LMBackend | None = None,
    embed_backend: EmbeddingBackend | None = None,
    telemetry_path: str | Path | None = None,
) -> TrainResult:
    """Adapter + head + pair-net training with the combined objective.

    Per step: greedy-generate n_tokens per prompt, concatenate the hidden
    states, head forward, l_ce plus (when lam > 0) the contrastive term over
    batch + bank, one optimizer step, then push the batch representations
    into the bank.  After each epoch the dev split is scored with freshly
    tuned thresholds; the best epoch's state is restored at the end.
    """
    cfg = config.effective()
    label_set = train.label_set
    m = len(label_set)
    if backend is None:
        backend = make_backend(cfg, train)
        if not hasattr(backend, "attach_adapters"):
            raise ConfigError(
                f"backend {cfg.backend!r} is not trainable; use toy or external"
            )
        backend.attach_adapters(rank=cfg.adapter_rank, seed=cfg.seed)
    embed = embed_backend or make_embed_backend(cfg)

    head = VerbalizerHead(cfg.n_tokens, backend.d_model, cfg.d_h, m, seed=cfg.seed)
    pair_net = PairWeightNet(m)
    bank = MemoryBank(cfg.bank_capacity, d_model=cfg.d_h, n_labels=m)
    params = [p for p in backend.model.parameters() if p.requires_grad]
    params += list(head.parameters()) + list(pair_net.parameters())
    optimizer = torch.optim.AdamW(params, lr=cfg.lr, weight_decay=0.0)

    budget = min(cfg.token_budget, backend.context_limit - cfg.n_tokens)
    train_cfg = cfg
    train_prompts = build_training_prompts(
        train, train, embed, _with_budget(train_cfg, budget), backend.tokenizer,
        exclude_self=True,
    )
    dev_prompts = build_training_prompts(
        dev, train, embed, _with_budget(train_cfg, budget), backend.tokenizer,
        exclude_self=False,
    )

    rng = np.random.default_rng(cfg.seed)
    telemetry: list[dict] = []
    history: list[dict] = []
    best = None  # (metric, epoch, state, profile, report)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_prompts))
        epoch_rows = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_prompts[i] for i in order[lo : lo + cfg.batch_size]]
            Y = np.stack([doc.sentences[pos].gold for doc, pos, _ in batch])
            _, hidden = backend.generate_batch([p.text for _, _, p in batch], cfg.n_tokens)
            h, p = head(concat_hidden(hidden))
            l_ce = classification_loss(p, Y, cfg.mode)
            if cfg.lam > 0:
                l_con, n_pos, n_skip = weighted_contrastive_loss(h, Y, bank, pair_net)
            else:
                l_con, n_pos, n_skip = torch.zeros(()), 0, 0
            breakdown = combined_loss(l_ce, l_con, cfg.lam, n_pos, n_skip)
            row = breakdown.record(step + 1, len(bank))
            if not np.isfinite(row["l_total"]):
                raise RuntimeError(
                    f"training diverged at step {step + 1}: l_ce={row['l_ce']}, "
                    f"l_con={row['l_con']}, lr={cfg.lr}"
                )
            optimizer.zero_grad()
            breakdown.l_total.backward()
            optimizer.step()
            step += 1
            if cfg.lam > 0:
                bank.push(h.detach(), Y)
            row["bank_size"] = len(bank)
            telemetry.append(row)
            epoch_rows.append(row)

        dev_probs, dev_gold, _ = predict_probs(backend, head, dev_prompts, cfg)
        profile = tune_thresholds(dev_probs, dev_gold, grid=cfg.grid,
                                  label_names=label_set.names)
        pred = decode_predictions(dev_probs, profile, cfg.mode)
        report = f1_scores(pred, dev_gold, label_names=label_set.names,
                           config={"epoch": epoch, **_config_echo(cfg)})
        metric = getattr(report, cfg.selection_metric)
        history.append({
            "epoch": epoch,
            "dev_micro_f1": report.micro_f1,
            "dev_macro_f1": report.macro_f1,
            "mean_l_ce": float(np.mean([r["l_ce"] for r in epoch_rows])),
            "mean_l_con": float(np.mean([r["l_con"] for r in epoch_rows])),
            "mean_l_total": float(np.mean([r["l_total"] for r in epoch_rows])),
        })
        if best is None or metric > best[0]:
            best = (metric, epoch, _trainable_state(backend, head, pair_net),
                    profile, report)

    _load_trainable_state(best[2], backend, head, pair_net)
    if telemetry_path is not None:
        write_jsonl(telemetry, telemetry_path)
    return TrainResult(
        backend=backend, head=head, pair_net=pair_net,
        profile=best[3], report=best[4], best_epoch=best[1],
        history=history, telemetry=telemetry,
    )


def _with_budget(cfg: RunConfig, budget: int) -> RunConfig:
    return dataclasses.replace(cfg, token_budget=budget)


def _config_echo(cfg: RunConfig) -> dict:
    return {
        "k_demo": cfg.k_demo,
        "n_tokens": cfg.n_tokens,
        "lambda": cfg.lam,
        "bank_capacity": cfg.bank_capacity,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "ablation": {
            "no_weighcon": cfg.no_weighcon,
            "no_demonstration": cfg.no_demonstration,
            "no_space_thinking": cfg.no_space_thinking,
        },
    }


def evaluate_trained(
    result: TrainResult,
    corpus: Corpus,
    pool: Corpus,
    config: RunConfig,
    embed_backend: EmbeddingBackend | None = None,
    profile: ThresholdProfile | None = None,
) -> EvalReport:
    """Score a trained model on a held-out split using its tuned thresholds
    (or a supplied profile, e.g. the fixed-0.4 comparison)."""
    cfg = config.effective()
    embed = embed_backend or make_embed_backend(cfg)
    budget = min(cfg.token_budget, result.backend.context_limit - cfg.n_tokens)
    prompts = build_training_prompts(
        corpus, pool, embed, _with_budget(cfg, budget), result.backend.tokenizer,
        exclude_self=False,
    )
    probs, gold, _ = predict_probs(result.backend, result.head, prompts, cfg)
    use = profile or result.profile
    pred = decode_predictions(probs, use, cfg.mode)
    return f1_scores(pred, gold, label_names=corpus.label_set.names,
                     config=_config_echo(cfg))


def run_ablation(
    train: Corpus,
    dev: Corpus,
    test: Corpus,
    config: RunConfig,
    arms: tuple[str, ...] = ABLATION_ARMS,
    embed_backend: EmbeddingBackend | None = None,
) -> dict[str, dict]:
    """Train one arm per flag combination and score each on dev and test."""
    out = {}
    for arm in arms:
        arm_cfg = config.with_arm(arm)
        result = run_training(train, dev, arm_cfg, embed_backend=embed_backend)
        test_report = evaluate_trained(result, test, train, arm_cfg,
                                       embed_backend=embed_backend)
        out[arm] = {
            "dev": result.report,
            "test": test_report,
            "best_epoch": result.best_epoch,
        }
    return out


# -- checkpointing --


def save_checkpoint(result: TrainResult, config: RunConfig, label_set: LabelSet,
                    path: str | Path) -> None:
    """Trainable state only; the frozen backbone is rebuilt from the seed."""
    state = _trainable_state(result.backend, result.head, result.pair_net)
    torch.save({
        "config": config.as_dict(),
        "label_set": list(label_set.names),
        "best_epoch": result.best_epoch,
        "profile": result.profile.as_dict(),
        **state,
    }, path)


def load_checkpoint(path: str | Path):
    """(config, label_set, backend, head, pair_net, profile) from disk."""
    raw = torch.load(path, weights_only=True)
    cfg = RunConfig.from_dict(raw["config"]).effective()
    label_set = LabelSet(tuple(raw["label_set"]))
    backend = make_backend(cfg)
    backend.attach_adapters(rank=cfg.adapter_rank, seed=cfg.seed)
    head = VerbalizerHead(cfg.n_tokens, backend.d_model, cfg.d_h, len(label_set),
                          seed=cfg.seed)
    pair_net = PairWeightNet(len(label_set))
    _load_trainable_state(raw, backend, head, pair_net)
    profile = ThresholdProfile.from_dict(raw["profile"])
    return cfg, label_set, backend, head, pair_net, profile
