"""Embedding fine-tuning via a binary-sentiment CNN.

A small convolutional classifier (kernel widths 1/2/3, 300 filters each,
sigmoid output) trains on noisily labeled (text, 0/1) pairs with the
embedding table frozen for the first epoch and unfrozen afterwards.  The
trained embedding matrix is the product; the CNN itself is scaffolding and
is thrown away.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import tensor as T
from .textprep import Vocabulary, clean_text, tokenize
from .train import adam_step, init_adam

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass
class FinetuneSchedule:
    frozen_epochs: int = 1
    unfrozen_epochs: int = 3
    lr: float = 0.0005
    batch_size: int = 64

    @property
    def total_epochs(self) -> int:
        return self.frozen_epochs + self.unfrozen_epochs


@dataclass
class FinetuneModel:
    emb: L.EmbeddingMatrix
    bank: L.ConvFilterBank
    out_w: T.Tensor
    out_b: T.Tensor
    dropout_rate: float = 0.5

    def named(self) -> dict[str, T.Tensor]:
        out = {"embedding.table": self.emb.table}
        for i, k in enumerate(self.bank.kernel_sizes):
            out[f"conv_k{k}.w"] = self.bank.weights[i]
            out[f"conv_k{k}.b"] = self.bank.biases[i]
        out["output.w"] = self.out_w
        out["output.b"] = self.out_b
        return out


def build_finetune_model(emb: L.EmbeddingMatrix, rng, kernel_sizes=(1, 2, 3),
                         filters_per_size: int = 300) -> FinetuneModel:
    """CNN over the embedding: conv bank -> max pool -> dropout -> sigmoid."""
    bank = L.init_conv_bank(rng, emb.dim, kernel_sizes, filters_per_size)
    out_w, out_b = L.init_linear(rng, 1, bank.output_dim)
    return FinetuneModel(emb=emb, bank=bank, out_w=out_w, out_b=out_b)


def forward_finetune(model: FinetuneModel, ids, training: bool, rng) -> T.Tensor:
    """Probability of the positive class for one token-id sequence."""
    seq = L.embedding_lookup(model.emb, ids)
    pooled = L.conv1d_over_time(model.bank, seq, seq.shape[0])
    pooled = L.dropout(pooled, model.dropout_rate, training, rng)
    return T.sigmoid(L.linear(model.out_w, model.out_b, pooled))


def binary_cross_entropy(probs: T.Tensor, labels) -> T.Tensor:
    """Mean BCE over a probability vector, logs floored at 1e-12."""
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ValueError(f"probs shape {probs.shape} != labels shape {labels.shape}")
    pos = T.mul(T.log(T.clamp_min(probs, LOG_FLOOR)), T.constant(labels))
    anti = T.sub(T.constant(np.ones_like(labels)), probs)
    neg = T.mul(T.log(T.clamp_min(anti, LOG_FLOOR)), T.constant(1.0 - labels))
    return T.scale(T.sum_all(T.add(pos, neg)), -1.0 / labels.size)


def encode_corpus(corpus, vocab: Vocabulary) -> list[tuple[np.ndarray, int]]:
    """(text, 0/1) pairs -> (token-id array, label) pairs."""
    out = []
    for text, label in corpus:
        if label not in (0, 1):
            raise ValueError(f"finetune labels must be 0 or 1, got {label!r}")
        tokens = tokenize(clean_text(text))
        if not tokens:
            continue
        out.append((np.array([vocab.lookup(t) for t in tokens], dtype=np.int64),
                    int(label)))
    if not out:
        raise ValueError("finetune corpus is empty after tokenization")
    return out


def finetune_embeddings(model: FinetuneModel, corpus, schedule: FinetuneSchedule,
                        rng, *, vocab: Vocabulary):
    """Train the CNN on the corpus; returns (embedding matrix, epoch losses).

    The embedding stays bit-identical through ``frozen_epochs`` and is
    returned still attached to ``model.emb`` after the unfrozen epochs.
    """
    if schedule.lr <= 0 or schedule.batch_size < 1:
        raise ValueError(f"bad schedule: lr {schedule.lr}, batch {schedule.batch_size}")
    encoded = encode_corpus(corpus, vocab)
    named = model.named()
    adam = init_adam(named)
    losses = []
    for epoch in range(1, schedule.total_epochs + 1):
        model.emb.frozen = epoch <= schedule.frozen_epochs
        order = rng.permutation(len(encoded))
        loss_sum = 0.0
        for start in range(0, len(order), schedule.batch_size):
            chunk = [encoded[i] for i in order[start:start + schedule.batch_size]]
            probs = T.concat([forward_finetune(model, ids, True, rng)
                              for ids, _ in chunk], axis=0)
            loss = binary_cross_entropy(probs, [y for _, y in chunk])
            T.reset_grads(named.values())
            T.backward(loss)
            adam_step(adam, named, schedule.lr)
            loss_sum += loss.item() * len(chunk)
        losses.append(loss_sum / len(encoded))
        log.info("finetune epoch %d (%s): loss %.4f", epoch,
                 "frozen" if epoch <= schedule.frozen_epochs else "unfrozen",
                 losses[-1])
    model.emb.frozen = False
    return model.emb, losses


def predict_finetune(model: FinetuneModel, encoded) -> np.ndarray:
    """Eval-mode 0/1 predictions for (ids, label) pairs."""
    return np.array([int(forward_finetune(model, ids, False, None).item() >= 0.5)
                     for ids, _ in encoded])


def load_finetune_corpus(path) -> list[tuple[str, int]]:
    """TSV with header ``text<TAB>label``, label 0 or 1."""
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "text\tlabel":
            raise ValueError(f"{path}: expected header 'text<TAB>label', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            text, tab, raw = line.rpartition("\t")
            if not tab or raw not in ("0", "1"):
                raise ValueError(f"{path} line {lineno}: expected 'text<TAB>0|1'")
            out.append((text, int(raw)))
    return out
