"""Command-line entry points.

Subcommands:

    preprocess  raw TSVs -> vocabulary, encoded splits, statistics table
    finetune    word vectors + binary-sentiment corpus -> fine-tuned vectors
    train       encoded splits -> checkpoint + per-epoch history TSV
    evaluate    checkpoint + labeled split -> metrics report
    sweep       single-axis hyperparameter sensitivity runs -> report

Global flags (before the subcommand): --seed overrides the config seed,
--config points at a key=value config file, --out directs the command's
report (a file for evaluate/sweep, a directory for train).  Reports default
to stdout.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import metrics, rcnn
from . import sweep as sw
from . import train as tr
from .config import TrainConfig, load_config
from .dataio import (LABELS, build_embedding_matrix, load_checkpoint,
                     load_dataset, load_sentence_vectors, load_vocab,
                     load_word_vectors, save_checkpoint, save_vocab,
                     save_word_vectors)
from .finetune import (FinetuneSchedule, build_finetune_model,
                       finetune_embeddings, load_finetune_corpus)
from .textprep import (TokenSequence, Vocabulary, assemble_input, build_vocab,
                       clean_text, tokenize)

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emoconv",
        description="Emotion classification for three-turn conversations.")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None,
                        help="report destination (file; a directory for train)")
    parser.add_argument("--config", default=None, help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="encode raw dataset TSVs")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("finetune", help="fine-tune word vectors on a binary corpus")
    p.add_argument("--corpus", required=True, help="TSV with header text<TAB>label")
    p.add_argument("--embeddings-in", required=True)
    p.add_argument("--embeddings-out", required=True)
    p.add_argument("--epochs-frozen", type=int, default=1)
    p.add_argument("--epochs-unfrozen", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--filters", type=int, default=300)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("train", help="train the classifier on encoded splits")
    p.add_argument("--data-dir", required=True,
                   help="directory produced by the preprocess command")
    p.add_argument("--embeddings", default=None,
                   help="pretrained word vectors (text format); random if absent")
    p.add_argument("--sentence-vectors", required=True,
                   help="sentence-vector TSV, or 'none' for the ablation")
    p.add_argument("--select", choices=("best", "last"), default="best")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", required=True, help="labeled dataset TSV")
    p.add_argument("--split-name", default="test",
                   help="split semantics for loading (train applies the "
                        "length filter)")
    p.add_argument("--sentence-vectors", default="none")
    p.add_argument("--score-others", action="store_true",
                   help="include the 'others' class in micro-F1")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="single-axis hyperparameter sensitivity runs")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated values for the axis")
    p.add_argument("--seeds", default="0,1,2,3,4",
                   help="comma-separated run seeds")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--sentence-vectors", default="none")
    p.add_argument("--runs-dir", default="sweep_runs",
                   help="per-run record files for resumable sweeps")
    p.set_defaults(func=cmd_sweep)
    return parser


def _load_base_config(args) -> TrainConfig:
    config = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("report written to %s", args.out)
    else:
        sys.stdout.write(text)


def _avg_utterance_tokens(split) -> float:
    counts = [len(tokenize(clean_text(turn)))
              for conv in split.conversations for turn in conv.turns]
    return sum(counts) / len(counts) if counts else 0.0


def cmd_preprocess(args) -> int:
    splits = [load_dataset(args.train, "train"), load_dataset(args.val, "val")]
    if args.test:
        splits.append(load_dataset(args.test, "test"))
    vocab = build_vocab([assemble_input(c.turns)
                         for c in splits[0].conversations])
    os.makedirs(args.out_dir, exist_ok=True)
    save_vocab(vocab, os.path.join(args.out_dir, "vocab.txt"))

    lines = ["split\ttotal\t" + "\t".join(LABELS) +
             "\tavg_tokens_per_utterance\tencoded"]
    for split in splits:
        encoded = tr.encode_split(split, vocab)
        tr.save_encoded(encoded, split.label_counts,
                        os.path.join(args.out_dir, f"{split.name}.ids.tsv"))
        counts = [str(split.label_counts.get(name, 0)) for name in LABELS]
        lines.append(f"{split.name}\t{len(split)}\t" + "\t".join(counts) +
                     f"\t{_avg_utterance_tokens(split):.2f}\t{len(encoded)}")
    lines.append(f"vocab_size\t{vocab.size}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_finetune(args) -> int:
    corpus = load_finetune_corpus(args.corpus)
    vocab = build_vocab([TokenSequence(tokenize(clean_text(text)))
                         for text, _ in corpus])
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    pretrained = load_word_vectors(args.embeddings_in, args.dim)
    emb, coverage = build_embedding_matrix(vocab, pretrained, args.dim, rng)
    log.info("corpus vocabulary %d tokens, pretrained coverage %.1f%%",
             vocab.size, 100 * coverage)
    model = build_finetune_model(emb, rng, filters_per_size=args.filters)
    schedule = FinetuneSchedule(frozen_epochs=args.epochs_frozen,
                                unfrozen_epochs=args.epochs_unfrozen,
                                lr=args.lr, batch_size=args.batch_size)
    emb, losses = finetune_embeddings(model, corpus, schedule, rng, vocab=vocab)
    save_word_vectors(vocab.id_to_token[3:], emb.table.values[3:],
                      args.embeddings_out)
    _emit(args, "epoch\tloss\n" +
          "".join(f"{i + 1}\t{loss!r}\n" for i, loss in enumerate(losses)))
    return 0


def _load_store(path_or_none, dim: int):
    if path_or_none is None or path_or_none == "none":
        return None
    return load_sentence_vectors(path_or_none, dim)


def cmd_train(args) -> int:
    config = _load_base_config(args)
    vocab = load_vocab(os.path.join(args.data_dir, "vocab.txt"))
    train_ex, train_counts = tr.load_encoded(os.path.join(args.data_dir, "train.ids.tsv"))
    val_ex, val_counts = tr.load_encoded(os.path.join(args.data_dir, "val.ids.tsv"))
    if not train_ex or not val_ex:
        raise ValueError("encoded train and val splits must be non-empty")

    store = _load_store(args.sentence_vectors, config.sentence_dim)
    if store is None:
        config = config.replace(sentence_dim=0)
    else:
        tr._check_sentence_coverage(train_ex, store, "training")
        tr._check_sentence_coverage(val_ex, store, "validation")

    rng = np.random.default_rng(config.seed)
    pretrained = (load_word_vectors(args.embeddings, config.embedding_dim)
                  if args.embeddings else {})
    emb, coverage = build_embedding_matrix(vocab, pretrained,
                                           config.embedding_dim, rng)
    if args.embeddings:
        log.info("pretrained coverage %.1f%% of %d tokens", 100 * coverage,
                 vocab.size - 3)
    params = rcnn.init_model(config, emb, rng)
    weights = tr.compute_class_weights(train_counts, val_counts)
    ckpt, history = tr.train_encoded(params, train_ex, val_ex, store, config,
                                     rng, weights=weights, vocab=vocab,
                                     select=args.select)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    save_checkpoint(ckpt, ckpt_path)
    tr.write_history(history, os.path.join(out_dir, "history.tsv"))
    log.info("checkpoint (epoch %d, val micro-F1 %.4f) written to %s",
             ckpt.epoch, ckpt.best_val_f1, ckpt_path)
    sys.stdout.write(tr.format_history(history))
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    params = rcnn.restore(ckpt.config, ckpt.params)
    split = load_dataset(args.split, args.split_name)
    if any(c.label is None for c in split.conversations):
        raise ValueError(f"{args.split}: evaluation needs labels on every row")
    examples = tr.encode_split(split, ckpt.vocab)
    store = _load_store(args.sentence_vectors, ckpt.config.sentence_dim)
    if ckpt.config.sentence_dim > 0:
        if store is None:
            raise ValueError("checkpoint fuses sentence vectors; pass "
                             "--sentence-vectors")
        tr._check_sentence_coverage(examples, store, args.split_name)
    scored = LABELS if args.score_others else metrics.SCORED_CLASSES
    cm, _ = tr.evaluate(params, examples, store, ckpt.config.batch_size, scored)
    _emit(args, metrics.format_report(cm, scored))
    return 0


def cmd_sweep(args) -> int:
    config = _load_base_config(args)
    train_split = load_dataset(args.train, "train")
    val_split = load_dataset(args.val, "val")
    vocab = build_vocab([assemble_input(c.turns)
                         for c in train_split.conversations])
    store = _load_store(args.sentence_vectors, config.sentence_dim)
    if store is None:
        config = config.replace(sentence_dim=0)
    pretrained = (load_word_vectors(args.embeddings, config.embedding_dim)
                  if args.embeddings else None)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"cannot parse --values {args.values!r} / --seeds "
                         f"{args.seeds!r} as numbers") from None
    spec = sw.SweepSpec(args.axis, values, seeds)
    _, aggregates = sw.run_sweep(spec, config, train_split, val_split, store,
                                 vocab, runs_dir=args.runs_dir,
                                 pretrained=pretrained)
    _emit(args, sw.format_sweep_report(aggregates))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # every failure is a nonzero exit with a message
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
