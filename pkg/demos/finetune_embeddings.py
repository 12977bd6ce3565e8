"""Adapt word vectors on a cheaply labeled binary corpus.

A small convolutional classifier reads each text through the embedding
table; after a warm-up epoch with the table frozen, gradients flow into the
vectors themselves.  The classifier is a means to an end — what we keep is
the moved table.
"""

import numpy as np

from emoconv.dataio import build_embedding_matrix
from emoconv.finetune import (FinetuneSchedule, build_finetune_model,
                              encode_corpus, finetune_embeddings,
                              predict_finetune)
from emoconv.textprep import TokenSequence, build_vocab, clean_text, tokenize

# -- 1. a noisy sentiment corpus ----------------------------------------------
# Positive texts contain "glee"; the rest is shared filler, so the only way
# to win is to give that one row a distinctive vector.

rng = np.random.default_rng(4)
FILLER = ["movie", "was", "so", "very", "the", "plot", "music"]
corpus = []
for i in range(100):
    words = [FILLER[j] for j in rng.integers(0, len(FILLER), 5)]
    label = int(i % 2 == 0)
    if label:
        words.insert(int(rng.integers(0, len(words))), "glee")
    corpus.append((" ".join(words), label))
train_part, held_out = corpus[:80], corpus[80:]

vocab = build_vocab([TokenSequence(tokenize(clean_text(t)))
                     for t, _ in corpus])
embedding, _ = build_embedding_matrix(vocab, {}, 8, rng)
before = embedding.table.values.copy()

# -- 2. fine-tune ---------------------------------------------------------------

model = build_finetune_model(embedding, rng, filters_per_size=8)
schedule = FinetuneSchedule(frozen_epochs=1, unfrozen_epochs=5, lr=0.02,
                            batch_size=16)
embedding, losses = finetune_embeddings(model, train_part, schedule, rng,
                                        vocab=vocab)
for epoch, loss in enumerate(losses, start=1):
    tag = "frozen" if epoch <= schedule.frozen_epochs else "unfrozen"
    print(f"epoch {epoch} ({tag:8s}) loss {loss:.4f}")

# -- 3. what moved ----------------------------------------------------------------

drift = np.linalg.norm(embedding.table.values - before, axis=1)
moved = sorted(zip(drift, vocab.id_to_token), reverse=True)[:5]
print("\nrows that moved most:")
for dist, token in moved:
    print(f"  {token:8s} {dist:.4f}")

encoded = encode_corpus(held_out, vocab)
preds = predict_finetune(model, encoded)
accuracy = float(np.mean(preds == [label for _, label in held_out]))
print(f"\nheld-out accuracy: {accuracy:.2f}")
