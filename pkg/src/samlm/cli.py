"""Command-line pipeline: ingest, label, train, evaluate, generate.

Settings come from an optional JSON config file plus flags; flags win. Exit
codes: 0 success, 1 usage error, 2 runtime error. All randomness is seeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus, evaluate, generation, lda, ngram, tensor, trainer
from .corpus import AttributeInventory, Vocabulary
from .model import ModelConfig, VARIANTS, build, load_model


class CliParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the pipeline contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--out", type=Path, help="output directory")


def build_parser() -> CliParser:
    parser = CliParser(prog="samlm", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=CliParser)

    p = sub.add_parser("ingest", help="read a JSONL corpus and build vocabularies")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="JSONL corpus")
    p.add_argument("--cap", type=int, help="total vocabulary size cap incl. specials (default 10000)")
    p.add_argument("--min-count", type=int, help="minimum token count (default 1)")

    p = sub.add_parser("lda-label", help="fit a topic model and write a category-labeled corpus")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--topics", type=int, help="number of topics (default 5)")
    p.add_argument("--alpha", type=float, help="doc-topic prior (default 50/topics)")
    p.add_argument("--beta", type=float, help="topic-word prior (default 0.01)")
    p.add_argument("--iterations", type=int, help="Gibbs sweeps (default 1000)")
    p.add_argument("--cap", type=int)
    p.add_argument("--top-words", type=int, help="words per topic in the report (default 15)")

    p = sub.add_parser("train", help="train a model variant")
    _add_common(p)
    p.add_argument("--train", dest="train_path", type=Path, required=True)
    p.add_argument("--valid", dest="valid_path", type=Path, required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), help="model variant (default RNN)")
    p.add_argument("--d", type=int, help="hidden size (default 64)")
    p.add_argument("--dtilde", type=int, help="attribute embedding size (default equals --d)")
    p.add_argument("--cap", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--clip-norm", type=float)

    p = sub.add_parser("eval", help="corpus perplexity of a checkpoint")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True, help="checkpoint path")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--corpus-id", default="")

    p = sub.add_parser("word-delta", help="per-word perplexity-change report between two checkpoints")
    _add_common(p)
    p.add_argument("--model-a", type=Path, required=True)
    p.add_argument("--model-b", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--threshold", type=float, help="nats separating improved/worse (default 0.05)")
    p.add_argument("--min-word-count", type=int, help="occurrences required per word (default 5)")

    p = sub.add_parser("ngram", help="fit and evaluate the smoothed n-gram baseline")
    _add_common(p)
    p.add_argument("--train", dest="train_path", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--order", type=int, help="n-gram order (default 5)")
    p.add_argument("--cap", type=int)
    p.add_argument("--min-count", type=int)

    p = sub.add_parser("generate", help="decode text under attribute conditioning")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--title", help="title string, or path to a file holding it")
    p.add_argument("--author")
    p.add_argument("--category")
    p.add_argument("--max-len", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--strategy", choices=["greedy", "sample"])

    p = sub.add_parser("vary", help="regenerate with a substituted author")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--title", help="title string, or path to a file holding it")
    p.add_argument("--author", required=True, help="original author")
    p.add_argument("--fake-author", required=True)
    p.add_argument("--category")
    p.add_argument("--max-len", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--strategy", choices=["greedy", "sample"])

    p = sub.add_parser("export-attn", help="export the attention trace of one document")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--doc-id", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every variant")
    _add_common(p)
    p.add_argument("--dims", choices=["tiny"], default="tiny")
    p.add_argument("--eps", type=float)
    p.add_argument("--tol", type=float)

    return parser


def _setting(args, config: dict, key: str, default):
    """Flag if given, else config value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _load_config(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    return json.loads(Path(args.config).read_text(encoding="utf-8"))


def _out_dir(args, config: dict) -> Path:
    out = _setting(args, config, "out", Path("samlm-out"))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_corpus_artifacts(model_path: Path) -> tuple[Vocabulary, AttributeInventory]:
    """Vocabulary and inventories live beside the checkpoint."""
    run_dir = model_path.parent
    vocab = Vocabulary.load(run_dir / "vocab.txt")
    attrs = AttributeInventory(
        authors=Vocabulary.load(run_dir / "authors.txt", n_specials=1),
        categories=Vocabulary.load(run_dir / "categories.txt", n_specials=1),
    )
    return vocab, attrs


def _save_corpus_artifacts(out: Path, vocab: Vocabulary, attrs: AttributeInventory) -> None:
    vocab.save(out / "vocab.txt")
    attrs.authors.save(out / "authors.txt")
    attrs.categories.save(out / "categories.txt")


def _title_tokens(raw: str | None) -> tuple[str, ...] | None:
    if raw is None:
        return None
    path = Path(raw)
    if path.is_file():
        raw = path.read_text(encoding="utf-8")
    tokens = tuple(raw.split())
    return tokens or None


def _indexed(path: Path, vocab, attrs):
    return corpus.index_corpus(corpus.ingest(path), vocab, attrs)


def cmd_ingest(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    docs = corpus.ingest(args.data)
    vocab = corpus.build_vocab(
        docs,
        cap=_setting(args, config, "cap", 10000),
        min_count=_setting(args, config, "min_count", 1),
    )
    attrs = corpus.build_attributes(docs)
    _save_corpus_artifacts(out, vocab, attrs)
    stats = {
        "documents": len(docs),
        "tokens": sum(len(d.text) for d in docs),
        "vocab_size": len(vocab),
        "authors": len(attrs.authors) - 1,
        "categories": len(attrs.categories) - 1,
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_lda_label(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    docs = corpus.ingest(args.data)
    vocab = corpus.build_vocab(docs, cap=_setting(args, config, "cap", 10000))
    attrs = corpus.build_attributes(docs)
    indexed = corpus.index_corpus(docs, vocab, attrs)
    cfg = lda.LdaConfig(
        n_topics=_setting(args, config, "topics", 5),
        alpha=_setting(args, config, "alpha", None),
        beta=_setting(args, config, "beta", 0.01),
        iterations=_setting(args, config, "iterations", 1000),
        seed=_setting(args, config, "seed", 0),
    )
    topic_model = lda.fit(indexed, cfg, vocab_size=len(vocab))
    labeled = lda.label_corpus(topic_model, docs)
    corpus.write_jsonl(labeled, out / "labeled.jsonl")
    k = _setting(args, config, "top_words", 15)
    lines = [
        f"topic-{i}: {' '.join(words)}"
        for i, words in enumerate(lda.top_words(topic_model, k, vocab))
    ]
    (out / "topic_words.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    train_docs = corpus.ingest(args.train_path)
    valid_docs = corpus.ingest(args.valid_path)
    vocab = corpus.build_vocab(
        train_docs,
        cap=_setting(args, config, "cap", 10000),
        min_count=_setting(args, config, "min_count", 1),
    )
    attrs = corpus.build_attributes(train_docs)
    _save_corpus_artifacts(out, vocab, attrs)

    d = _setting(args, config, "d", 64)
    seed = _setting(args, config, "seed", 0)
    model_cfg = ModelConfig(
        variant=_setting(args, config, "variant", "RNN"),
        d=d,
        d_tilde=_setting(args, config, "dtilde", d),
        vocab_size=len(vocab),
        n_authors=len(attrs.authors),
        n_categories=len(attrs.categories),
        seed=seed,
    )
    sam = build(model_cfg)
    train_cfg = trainer.TrainConfig(
        lr=_setting(args, config, "lr", 0.001),
        batch_size=_setting(args, config, "batch_size", 20),
        max_epochs=_setting(args, config, "max_epochs", 100),
        patience=_setting(args, config, "patience", 5),
        clip_norm=_setting(args, config, "clip_norm", 5.0),
        seed=seed,
    )
    result = trainer.train(
        sam,
        corpus.index_corpus(train_docs, vocab, attrs),
        corpus.index_corpus(valid_docs, vocab, attrs),
        train_cfg,
        run_dir=out,
        log=print,
    )
    print(f"best epoch {result.best_epoch}  best valid ppl {result.best_valid_ppl:.3f}")
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    sam = load_model(args.model)
    vocab, attrs = _load_corpus_artifacts(args.model)
    docs = _indexed(args.data, vocab, attrs)
    report = evaluate.perplexity(
        sam, docs, model_id=sam.config.variant, corpus_id=args.corpus_id or args.data.stem
    )
    (out / "perplexity.csv").write_text(report.csv(), encoding="utf-8")
    print(report.csv().strip())
    return 0


def cmd_word_delta(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    model_a = load_model(args.model_a)
    model_b = load_model(args.model_b)
    vocab, attrs = _load_corpus_artifacts(args.model_b)
    docs = _indexed(args.data, vocab, attrs)
    report = evaluate.word_delta(
        model_a,
        model_b,
        docs,
        vocab,
        categories=attrs.categories,
        threshold=_setting(args, config, "threshold", 0.05),
        min_count=_setting(args, config, "min_word_count", 5),
    )
    evaluate.write_word_delta_csv(report, out / "word_delta.csv")
    print(evaluate.format_word_delta(report))
    return 0


def cmd_ngram(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    train_docs = corpus.ingest(args.train_path)
    vocab = corpus.build_vocab(
        train_docs,
        cap=_setting(args, config, "cap", 10000),
        min_count=_setting(args, config, "min_count", 1),
    )
    attrs = corpus.build_attributes(train_docs)
    order = _setting(args, config, "order", 5)
    kn = ngram.KneserNeyModel.fit(
        corpus.index_corpus(train_docs, vocab, attrs), order=order, vocab_size=len(vocab)
    )
    kn.save(out / f"kn{order}.counts")
    docs = _indexed(args.data, vocab, attrs)
    report = kn.perplexity(docs, corpus_id=args.data.stem)
    (out / "ngram_perplexity.csv").write_text(report.csv(), encoding="utf-8")
    print(report.csv().strip())
    return 0


def _gen_request(args, config) -> generation.GenRequest:
    return generation.GenRequest(
        title=_title_tokens(args.title),
        author=getattr(args, "author", None),
        category=getattr(args, "category", None),
        max_len=_setting(args, config, "max_len", 50),
        temperature=_setting(args, config, "temperature", 1.0),
        strategy=_setting(args, config, "strategy", "sample"),
        seed=_setting(args, config, "seed", 0),
    )


def cmd_generate(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    sam = load_model(args.model)
    vocab, attrs = _load_corpus_artifacts(args.model)
    result = generation.generate(sam, vocab, attrs, _gen_request(args, config))
    attn_path = None
    if not result.trace.empty:
        attn_path = out / "attention.csv"
        generation.export_attention(result, attn_path)
    payload = {
        "tokens": result.tokens,
        "probabilities": result.probabilities,
        "warnings": result.warnings,
        "attention_csv_path": str(attn_path) if attn_path else None,
    }
    (out / "generation.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(" ".join(result.tokens))
    return 0


def cmd_vary(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    sam = load_model(args.model)
    vocab, attrs = _load_corpus_artifacts(args.model)
    source = corpus.Document(
        id="vary-source",
        text=("-",),
        title=_title_tokens(args.title),
        author=args.author,
        category=getattr(args, "category", None),
    )
    result = generation.style_variation(
        sam,
        vocab,
        attrs,
        source,
        fake_author=args.fake_author,
        max_len=_setting(args, config, "max_len", 50),
        temperature=_setting(args, config, "temperature", 1.0),
        strategy=_setting(args, config, "strategy", "sample"),
        seed=_setting(args, config, "seed", 0),
    )
    paths = {}
    for label, gen in (("original", result.original), ("varied", result.varied)):
        if not gen.trace.empty:
            path = out / f"attention_{label}.csv"
            generation.export_attention(gen, path)
            paths[label] = str(path)
    payload = {
        "original": {"tokens": result.original.tokens, "warnings": result.original.warnings},
        "varied": {"tokens": result.varied.tokens, "warnings": result.varied.warnings},
        "divergence": result.divergence,
        "token_overlap": result.token_overlap,
        "attention_csv_path": paths,
    }
    (out / "variation.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"divergence": result.divergence, "token_overlap": result.token_overlap}))
    return 0


def cmd_export_attn(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    sam = load_model(args.model)
    vocab, attrs = _load_corpus_artifacts(args.model)
    raw_docs = corpus.ingest(args.data)
    matches = [d for d in raw_docs if d.id == args.doc_id]
    if not matches:
        raise ValueError(f"document id {args.doc_id!r} not found in {args.data}")
    doc = matches[0]
    indexed = corpus.index_document(doc, vocab, attrs)
    fwd = sam.forward_document(indexed, want_caches=False)
    if fwd.trace.empty:
        raise ValueError(f"variant {sam.config.variant} records no attention trace")
    fwd.trace.main_tokens = [vocab.token_for(t) for t in indexed.text_ids]
    fwd.trace.title_tokens = list(doc.title or [])
    path = out / f"attention_{args.doc_id}.csv"
    generation.export_attention(fwd.trace, path)
    print(str(path))
    return 0


def cmd_gradcheck(args) -> int:
    config = _load_config(args)
    seed = _setting(args, config, "seed", 0)
    eps = _setting(args, config, "eps", 1e-5)
    tol = _setting(args, config, "tol", 1e-4)
    dims = dict(d=4, d_tilde=3, vocab_size=7, n_authors=2, n_categories=2)
    doc = corpus.IndexedDocument(
        id="gradcheck",
        text_ids=(3, 5, 4, corpus.EOS_ID),
        title_ids=(4, 6),
        author_id=1,
        category_id=1,
    )
    all_passed = True
    for name in sorted(VARIANTS):
        sam = build(ModelConfig(variant=name, seed=seed, **dims))
        sam.store.zero_grads()
        fwd = sam.forward_document(doc, want_trace=False)
        sam.backward_document(fwd)
        report = tensor.grad_check(
            lambda store: sam.forward_document(doc, want_trace=False, want_caches=False).total_nll,
            sam.store,
            eps=eps,
            tol=tol,
        )
        all_passed = all_passed and report.passed
        print(f"## {name}")
        print(report.format_table())
    if not all_passed:
        raise ValueError("gradient check failed")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "lda-label": cmd_lda_label,
    "train": cmd_train,
    "eval": cmd_eval,
    "word-delta": cmd_word_delta,
    "ngram": cmd_ngram,
    "generate": cmd_generate,
    "vary": cmd_vary,
    "export-attn": cmd_export_attn,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return COMMANDS[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure contract: report and exit 2
        print(f"samlm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
