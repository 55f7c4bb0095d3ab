"""Command-line entry point wiring the pipeline stages together.

Subcommands: corpus ingest|stats, tokenizer train|encode, mlm sample,
pretrain, finetune, evaluate, report, annotate serve|resolve|export.

Each command prints a machine-readable JSON summary on stdout and writes its
declared artifacts; diagnostics go to stderr. Exit codes: 0 success,
1 runtime error, 2 usage error. A JSON config file can set any flag
(--config); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import heads, metrics, wordpiece
from .annotation import campaign as campaign_mod
from .encoder import checkpoint as ckpt_mod
from .encoder import model as model_mod
from .encoder import training as training_mod
from .mlm_data import MaskingPolicy, apply_masking, build_sequences


def _emit(summary: dict) -> None:
    print(json.dumps(summary, ensure_ascii=False))


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


_GROUP_COMMANDS = ("corpus", "tokenizer", "mlm", "annotate")


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into flags placed before the explicit ones.

    Config keys are flag names without the leading dashes ("vocab-size": 500).
    Explicit command-line flags win because argparse keeps the last value.
    """
    out = list(argv)
    path = None
    for i, tok in enumerate(out):
        if tok == "--config" and i + 1 < len(out):
            path = out[i + 1]
            del out[i:i + 2]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            del out[i]
            break
    if path is None:
        return out
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    flags: list[str] = []
    for key, value in cfg.items():
        if isinstance(value, bool):
            if value:
                flags.append(f"--{key}")
        else:
            flags += [f"--{key}", str(value)]
    # insert right after the (sub)command tokens so explicit flags override
    pos = 0
    seen_command = False
    for i, tok in enumerate(out):
        if tok.startswith("-"):
            continue
        pos = i + 1
        if seen_command or tok not in _GROUP_COMMANDS:
            break
        seen_command = True
    return out[:pos] + flags + out[pos:]


# -------------------------- corpus --------------------------


def cmd_corpus_ingest(args) -> dict:
    sources = []
    for path in args.inputs:
        p = Path(path)
        fmt = args.format or {
            ".jsonl": "jsonl", ".json": "jsonl", ".csv": "csv"
        }.get(p.suffix, "plain-text")
        tag = args.tag or p.stem
        sources.append((tag, corpus_mod.ingest_source(
            p, fmt, tag, on_error=args.on_error,
            plain_text_blocks=args.blocks,
        )))
    merged = corpus_mod.merge_corpora(sources)
    report = corpus_mod.NormalizeReport()
    cfg = corpus_mod.NormConfig(lowercase=not args.keep_case)
    normalized = corpus_mod.normalize_corpus(merged, cfg, report)
    if args.dedup_sentences:
        deduped = corpus_mod.dedup_sentences(normalized)
    else:
        deduped = corpus_mod.dedup(normalized)
    count = corpus_mod.write_jsonl(deduped, args.output)
    return {
        "command": "corpus ingest",
        "documents": count,
        "dropped_empty": report.dropped_empty,
        "output": str(args.output),
    }


def cmd_corpus_stats(args) -> dict:
    path = Path(args.input)
    if path.is_dir():
        docs = [d for f in sorted(path.glob("*.jsonl")) for d in corpus_mod.read_jsonl(f)]
    elif path.exists():
        docs = list(corpus_mod.read_jsonl(path))
    else:
        raise FileNotFoundError(f"no such corpus: {path}")
    stats = corpus_mod.corpus_stats(docs)
    _log(corpus_mod.stats_table(stats))
    if args.output:
        Path(args.output).write_text(json.dumps(stats.to_dict()) + "\n", encoding="utf-8")
    return stats.to_dict()


# -------------------------- tokenizer --------------------------


def cmd_tokenizer_train(args) -> dict:
    docs = corpus_mod.read_jsonl(args.input)
    freqs = wordpiece.word_frequencies(d.text for d in docs)
    cfg = wordpiece.TrainerConfig(
        vocab_size=args.vocab_size, min_pair_frequency=args.min_freq,
    )
    vocab = wordpiece.train_wordpiece(freqs, cfg)
    wordpiece.save_vocab(vocab, args.output)
    return {
        "command": "tokenizer train",
        "pieces": len(vocab),
        "alphabet": len(vocab.alphabet()),
        "output": str(args.output),
    }


def cmd_tokenizer_encode(args) -> dict:
    vocab = wordpiece.load_vocab(args.vocab)
    if args.text is not None:
        texts = [args.text]
    else:
        texts = Path(args.input).read_text(encoding="utf-8").splitlines()
    encoded = [wordpiece.encode(t, vocab) for t in texts]
    return {
        "command": "tokenizer encode",
        "sequences": [
            {"ids": ids, "pieces": [vocab.pieces[i] for i in ids]} for ids in encoded
        ],
    }


# -------------------------- mlm --------------------------


def cmd_mlm_sample(args) -> dict:
    vocab = wordpiece.load_vocab(args.vocab)
    texts = Path(args.input).read_text(encoding="utf-8").splitlines()
    seqs = build_sequences([wordpiece.encode(t, vocab) for t in texts if t.strip()],
                           args.max_len)
    policy = MaskingPolicy(select_prob=args.select_prob, seed=args.seed)
    batch = apply_masking(seqs, policy, len(vocab))
    if args.output:
        Path(args.output).write_text(batch.to_json() + "\n", encoding="utf-8")
    return {
        "command": "mlm sample",
        "sequences": len(batch),
        "labeled_positions": batch.num_labeled(),
        "output": str(args.output) if args.output else None,
    }


# -------------------------- pretrain --------------------------


def cmd_pretrain(args) -> dict:
    vocab = wordpiece.load_vocab(args.vocab)
    sentences = []
    for doc in corpus_mod.read_jsonl(args.corpus):
        for sent in corpus_mod.segment_sentences(doc.text):
            ids = wordpiece.encode(sent, vocab)
            if ids:
                sentences.append(ids)
    if not sentences:
        raise ValueError("corpus produced no sentences")
    seqs = build_sequences(sentences, args.max_len)
    cfg = model_mod.desk_config(
        vocab_size=len(vocab), max_positions=max(args.max_len, 16),
        hidden_dim=args.hidden_dim, num_layers=args.layers, num_heads=args.heads,
        ff_dim=args.ff_dim,
    )
    policy = MaskingPolicy(seed=args.seed)
    schedule = training_mod.PretrainSchedule(
        steps=args.steps, batch_size=args.batch_size, lr=args.lr,
        warmup_frac=args.warmup_frac, log_every=args.log_every,
    )
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        ckpt, history = training_mod.pretrain(
            seqs, cfg, policy, schedule, seed=args.seed,
            vocab_fingerprint=ckpt_mod.vocab_fingerprint(vocab),
            log_stream=log_fh,
        )
    finally:
        if log_fh:
            log_fh.close()
    ckpt_mod.save_checkpoint(ckpt, args.output)
    summary = {
        "command": "pretrain",
        "steps": ckpt.training_meta["steps"],
        "final_loss": ckpt.training_meta["final_loss"],
        "sequences": len(seqs),
        "output": str(args.output),
    }
    if history:
        first, last = training_mod.smoothed_loss(history)
        summary["smoothed_initial_loss"] = first
        summary["smoothed_final_loss"] = last
    return summary


# -------------------------- finetune / evaluate / report --------------------------


def _task_spec_from_args(args) -> heads.TaskSpec:
    if args.task == "multilabel" and not args.labels:
        return heads.toxicity_multilabel_spec()
    if not args.labels:
        raise ValueError("--labels is required for binary/multiclass tasks")
    return heads.TaskSpec(kind=args.task, labels=tuple(args.labels.split(",")))


def cmd_finetune(args) -> dict:
    vocab = wordpiece.load_vocab(args.vocab)
    ckpt = ckpt_mod.load_checkpoint(args.checkpoint, vocab)
    spec = _task_spec_from_args(args)
    train = heads.read_labeled_jsonl(args.train)
    val = heads.read_labeled_jsonl(args.val) if args.val else []
    cfg = heads.FineTuneConfig(
        lr=args.lr, batch_size=args.batch_size, epochs=args.epochs,
        seed=args.seed, max_len=args.max_len, patience=args.patience,
    )
    model = heads.attach_head(ckpt, spec, seed=args.seed)
    tuned, history = heads.finetune(model, train, val, vocab, cfg)
    task_ckpt = ckpt_mod.EncoderCheckpoint(
        config=tuned.config, params=tuned.params,
        vocab_fingerprint=tuned.vocab_fingerprint,
        training_meta=tuned.training_meta, task_spec=tuned.spec.to_dict(),
    )
    ckpt_mod.save_checkpoint(task_ckpt, args.output)
    return {
        "command": "finetune",
        "task": spec.kind,
        "labels": list(spec.labels),
        "epochs_run": len(history),
        "final_train_loss": history[-1]["train_loss"] if history else None,
        "best_val_metric": tuned.training_meta.get("best_val_metric"),
        "output": str(args.output),
    }


def _load_task_model(path: str, vocab) -> heads.TaskModel:
    ckpt = ckpt_mod.load_checkpoint(path, vocab)
    if ckpt.task_spec is None:
        raise ValueError(f"{path} is not a fine-tuned task checkpoint")
    return heads.TaskModel(
        config=ckpt.config, params=ckpt.params,
        spec=heads.TaskSpec.from_dict(ckpt.task_spec),
        vocab_fingerprint=ckpt.vocab_fingerprint,
        training_meta=ckpt.training_meta,
    )


def cmd_evaluate(args) -> dict:
    vocab = wordpiece.load_vocab(args.vocab)
    model = _load_task_model(args.model, vocab)
    examples = heads.read_labeled_jsonl(args.data)
    preds = heads.predict(model, [ex.text for ex in examples], vocab, args.max_len)
    if model.spec.kind == "multilabel":
        gold = [ex.label for ex in examples]
        report = metrics.multilabel_metrics(gold, preds, model.spec.labels)
    else:
        gold = [ex.label for ex in examples]
        cm = metrics.confusion_matrix(gold, preds, model.spec.labels)
        report = metrics.metrics_from_confusion(cm)
    result = {"command": "evaluate", "task": model.spec.kind,
              "examples": len(examples), **report.to_dict()}
    if args.output:
        Path(args.output).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    return result


def cmd_report(args) -> dict:
    scores = json.loads(Path(args.scores).read_text(encoding="utf-8"))
    entries = {m: row["tasks"] for m, row in scores["models"].items()}
    sizes = {m: row.get("size", "") for m, row in scores["models"].items()}
    text = metrics.render_report(
        entries, format=args.format, columns=scores.get("columns"), sizes=sizes,
    )
    Path(args.output).write_text(text, encoding="utf-8")
    return {"command": "report", "models": len(entries),
            "format": args.format, "output": str(args.output)}


# -------------------------- annotate --------------------------


def _load_campaign_args(args) -> campaign_mod.Campaign:
    return campaign_mod.load_campaign(
        args.items, args.annotators.split(","), args.log,
    )


def cmd_annotate_serve(args) -> dict:
    import uvicorn

    from .annotation.service import create_app

    campaign = _load_campaign_args(args)
    app = create_app(campaign)
    _log(f"serving annotation API on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return {"command": "annotate serve", "stopped": True}


def cmd_annotate_resolve(args) -> dict:
    campaign = _load_campaign_args(args)
    pairs = campaign.complete_pairs()
    resolved, summary = campaign_mod.resolve_agreement(
        rec for pair in pairs.values() for rec in pair
    )
    stats = campaign_mod.agreement_stats(pairs) if pairs else {}
    return {"command": "annotate resolve", "summary": summary, **stats}


def cmd_annotate_export(args) -> dict:
    campaign = _load_campaign_args(args)
    pairs = campaign.complete_pairs()
    resolved, _ = campaign_mod.resolve_agreement(
        rec for pair in pairs.values() for rec in pair
    )
    files = campaign_mod.export_dataset(resolved, campaign.items, args.task)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    written = {}
    for kind, rows in files.items():
        path = outdir / f"{args.task}_{kind}.jsonl"
        path.write_text(campaign_mod.rows_to_jsonl(rows), encoding="utf-8")
        written[kind] = {"path": str(path), "rows": len(rows)}
    return {"command": "annotate export", "task": args.task, "files": written}


# -------------------------- parser --------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monoglot",
        description="Low-resource language model pipeline: corpus, tokenizer, "
                    "pretraining, fine-tuning, evaluation, annotation.",
    )
    parser.add_argument("--config", help="JSON config file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    corpus_p = sub.add_parser("corpus", help="corpus ingestion and statistics")
    corpus_sub = corpus_p.add_subparsers(dest="subcommand", required=True)
    ing = corpus_sub.add_parser("ingest", help="normalize + dedup sources into JSONL")
    ing.add_argument("inputs", nargs="+", help="source files")
    ing.add_argument("--format", choices=["jsonl", "plain-text", "csv"],
                     help="input format (default: by file extension)")
    ing.add_argument("--tag", help="source tag (default: file stem)")
    ing.add_argument("--output", required=True)
    ing.add_argument("--on-error", choices=["abort", "skip"], default="abort")
    ing.add_argument("--keep-case", action="store_true")
    ing.add_argument("--blocks", action="store_true",
                     help="plain text: one document per blank-line block")
    ing.add_argument("--dedup-sentences", action="store_true",
                     help="dedup at sentence granularity instead of documents")
    ing.set_defaults(func=cmd_corpus_ingest)
    sta = corpus_sub.add_parser("stats", help="corpus statistics")
    sta.add_argument("input", help="normalized JSONL file or directory of them")
    sta.add_argument("--output", help="also write stats JSON here")
    sta.set_defaults(func=cmd_corpus_stats)

    tok_p = sub.add_parser("tokenizer", help="subword vocabulary")
    tok_sub = tok_p.add_subparsers(dest="subcommand", required=True)
    tr = tok_sub.add_parser("train", help="train a vocabulary")
    tr.add_argument("--input", required=True, help="normalized corpus JSONL")
    tr.add_argument("--vocab-size", type=int, default=1000)
    tr.add_argument("--min-freq", type=int, default=1)
    tr.add_argument("--output", required=True)
    tr.set_defaults(func=cmd_tokenizer_train)
    en = tok_sub.add_parser("encode", help="encode text with a vocabulary")
    en.add_argument("--vocab", required=True)
    en.add_argument("--text")
    en.add_argument("--input", help="file of lines to encode")
    en.set_defaults(func=cmd_tokenizer_encode)

    mlm_p = sub.add_parser("mlm", help="masked-LM data sampling")
    mlm_sub = mlm_p.add_subparsers(dest="subcommand", required=True)
    ms = mlm_sub.add_parser("sample", help="build + mask sequences")
    ms.add_argument("--vocab", required=True)
    ms.add_argument("--input", required=True, help="file of sentences, one per line")
    ms.add_argument("--max-len", type=int, default=128)
    ms.add_argument("--seed", type=int, default=0)
    ms.add_argument("--select-prob", type=float, default=0.15)
    ms.add_argument("--output")
    ms.set_defaults(func=cmd_mlm_sample)

    pre = sub.add_parser("pretrain", help="masked-LM pretraining")
    pre.add_argument("--corpus", required=True)
    pre.add_argument("--vocab", required=True)
    pre.add_argument("--output", required=True)
    pre.add_argument("--steps", type=int, default=200)
    pre.add_argument("--batch-size", type=int, default=16)
    pre.add_argument("--lr", type=float, default=1e-3)
    pre.add_argument("--warmup-frac", type=float, default=0.1)
    pre.add_argument("--max-len", type=int, default=64)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--hidden-dim", type=int, default=128)
    pre.add_argument("--layers", type=int, default=2)
    pre.add_argument("--heads", type=int, default=2)
    pre.add_argument("--ff-dim", type=int, default=512)
    pre.add_argument("--log", help="line-delimited JSON training log")
    pre.add_argument("--log-every", type=int, default=10)
    pre.set_defaults(func=cmd_pretrain)

    fin = sub.add_parser("finetune", help="fine-tune a classification head")
    fin.add_argument("--checkpoint", required=True)
    fin.add_argument("--vocab", required=True)
    fin.add_argument("--train", required=True)
    fin.add_argument("--val")
    fin.add_argument("--task", choices=list(heads.TASK_KINDS), required=True)
    fin.add_argument("--labels", help="comma-separated label names")
    fin.add_argument("--output", required=True)
    fin.add_argument("--lr", type=float, default=3e-4)
    fin.add_argument("--batch-size", type=int, default=8)
    fin.add_argument("--epochs", type=int, default=20)
    fin.add_argument("--max-len", type=int, default=64)
    fin.add_argument("--patience", type=int, default=0)
    fin.add_argument("--seed", type=int, default=0)
    fin.set_defaults(func=cmd_finetune)

    ev = sub.add_parser("evaluate", help="metrics for a fine-tuned model")
    ev.add_argument("--model", required=True, help="fine-tuned task checkpoint")
    ev.add_argument("--vocab", required=True)
    ev.add_argument("--data", required=True, help="labeled JSONL")
    ev.add_argument("--max-len", type=int, default=64)
    ev.add_argument("--output", help="metrics JSON path")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("report", help="render a model-by-task accuracy table")
    rep.add_argument("--scores", required=True,
                     help='JSON: {"models": {name: {"size","tasks"}}, "columns": [...]}')
    rep.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    rep.add_argument("--output", required=True)
    rep.set_defaults(func=cmd_report)

    ann = sub.add_parser("annotate", help="dual-annotator labeling")
    ann_sub = ann.add_subparsers(dest="subcommand", required=True)
    srv = ann_sub.add_parser("serve", help="run the annotation HTTP service")
    srv.add_argument("--items", required=True, help="campaign items JSONL")
    srv.add_argument("--annotators", required=True, help="two ids, comma-separated")
    srv.add_argument("--log", required=True, help="append-only record log path")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8571)
    srv.set_defaults(func=cmd_annotate_serve)
    res = ann_sub.add_parser("resolve", help="apply the agreement rule")
    res.add_argument("--items", required=True)
    res.add_argument("--annotators", required=True)
    res.add_argument("--log", required=True)
    res.set_defaults(func=cmd_annotate_resolve)
    exp = ann_sub.add_parser("export", help="write fine-tuning datasets")
    exp.add_argument("--items", required=True)
    exp.add_argument("--annotators", required=True)
    exp.add_argument("--log", required=True)
    exp.add_argument("--task", choices=list(campaign_mod.TASKS), required=True)
    exp.add_argument("--output", required=True, help="output directory")
    exp.set_defaults(func=cmd_annotate_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_inject_config(list(argv if argv is not None else sys.argv[1:])))
    except json.JSONDecodeError as exc:
        _log(f"invalid config file: {exc}")
        return 2
    try:
        summary = args.func(args)
        _emit(summary)
        return 0
    except BrokenPipeError:
        return 1
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        _log(f"{type(exc).__module__}.{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
