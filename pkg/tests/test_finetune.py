import numpy as np
import numpy.testing as npt
import pytest

from emoconv import finetune as ft
from emoconv import layers as L
from emoconv import tensor as T
from emoconv.textprep import TokenSequence, build_vocab


def _corpus(n, seed, positive="good", held_out=0):
    """Texts labeled by the presence of one keyword."""
    rng = np.random.default_rng(seed)
    filler = ["movie", "was", "so", "very", "the", "plot", "acting", "music"]
    rows = []
    for i in range(n + held_out):
        words = [filler[j] for j in rng.integers(0, len(filler), rng.integers(3, 7))]
        label = int(i % 2 == 0)
        if label:
            words.insert(int(rng.integers(0, len(words) + 1)), positive)
        rows.append((" ".join(words), label))
    return rows[:n], rows[n:]


def _setup(seed=0, dim=8, filters=8, corpus_size=60, held_out=0):
    corpus, held = _corpus(corpus_size, seed, held_out=held_out)
    vocab = build_vocab([TokenSequence(t.split()) for t, _ in corpus])
    rng = np.random.default_rng(seed)
    emb_vals = np.vstack([np.zeros(dim), rng.uniform(-0.1, 0.1, (vocab.size - 1, dim))])
    emb = L.EmbeddingMatrix.from_array(emb_vals)
    model = ft.build_finetune_model(emb, rng, filters_per_size=filters)
    return model, corpus, held, vocab, rng


def test_model_shapes_and_param_count():
    rng = np.random.default_rng(0)
    emb = L.EmbeddingMatrix.from_array(rng.uniform(-0.1, 0.1, (20, 100)))
    model = ft.build_finetune_model(emb, rng)
    bank_params = sum(w.size + b.size for w, b in zip(model.bank.weights,
                                                      model.bank.biases))
    assert bank_params == 180900
    assert model.out_w.shape == (1, 900)
    assert set(model.named()) == {"embedding.table", "conv_k1.w", "conv_k1.b",
                                  "conv_k2.w", "conv_k2.b", "conv_k3.w",
                                  "conv_k3.b", "output.w", "output.b"}


def test_forward_probability_range_and_zero_init():
    model, corpus, _, vocab, rng = _setup()
    for text, _ in corpus[:10]:
        ids = [vocab.lookup(t) for t in text.split()]
        p = ft.forward_finetune(model, ids, False, None).item()
        assert 0.0 < p < 1.0

    model.out_w.values[:] = 0.0
    model.out_b.values[:] = 0.0
    for text, _ in corpus[:5]:
        ids = [vocab.lookup(t) for t in text.split()]
        assert ft.forward_finetune(model, ids, False, None).item() == 0.5


def test_binary_cross_entropy_values_and_gradient():
    perfect = T.constant(np.array([1.0, 0.0]))
    assert ft.binary_cross_entropy(perfect, [1, 0]).item() == 0.0

    half = T.constant(np.array([0.5, 0.5]))
    npt.assert_allclose(ft.binary_cross_entropy(half, [1, 0]).item(), np.log(2))

    with pytest.raises(ValueError):
        ft.binary_cross_entropy(half, [1, 0, 1])

    rng = np.random.default_rng(3)
    z = T.Tensor(rng.uniform(-1, 1, 6), requires_grad=True)
    labels = [1, 0, 1, 1, 0, 0]

    def f(ps):
        return ft.binary_cross_entropy(T.sigmoid(ps[0]), labels)

    assert T.finite_diff_check(f, [z], eps=1e-5) < 1e-4


def test_encode_corpus_validation():
    vocab = build_vocab([TokenSequence(["good", "bad"])])
    encoded = ft.encode_corpus([("Good!", 1), ("bad", 0)], vocab)
    assert [y for _, y in encoded] == [1, 0]
    with pytest.raises(ValueError):
        ft.encode_corpus([("fine", 2)], vocab)
    with pytest.raises(ValueError):
        ft.encode_corpus([], vocab)
    with pytest.raises(ValueError):
        ft.encode_corpus([("", 1)], vocab)


def test_frozen_epoch_keeps_embedding_bit_identical():
    model, corpus, _, vocab, rng = _setup(seed=5)
    before = model.emb.table.values.copy()
    schedule = ft.FinetuneSchedule(frozen_epochs=1, unfrozen_epochs=0, lr=0.01,
                                   batch_size=16)
    emb, losses = ft.finetune_embeddings(model, corpus, schedule, rng, vocab=vocab)
    assert len(losses) == 1
    npt.assert_array_equal(emb.table.values, before)
    assert model.emb.frozen is False


def test_unfrozen_epochs_touch_only_corpus_rows():
    model, corpus, _, vocab, rng = _setup(seed=6)
    # an extra vocabulary row no corpus text references
    absent_id = vocab.add("neverused")
    dim = model.emb.dim
    grown = np.vstack([model.emb.table.values,
                       np.random.default_rng(1).uniform(-0.1, 0.1, (1, dim))])
    model.emb = L.EmbeddingMatrix.from_array(grown)
    before = model.emb.table.values.copy()

    schedule = ft.FinetuneSchedule(frozen_epochs=1, unfrozen_epochs=2, lr=0.01,
                                   batch_size=16)
    emb, losses = ft.finetune_embeddings(model, corpus, schedule, rng, vocab=vocab)
    used = sorted({i for ids, _ in ft.encode_corpus(corpus, vocab) for i in ids})
    assert not np.array_equal(emb.table.values[used], before[used])
    npt.assert_array_equal(emb.table.values[absent_id], before[absent_id])
    npt.assert_array_equal(emb.table.values[0], before[0])  # PAD untouched
    assert losses[-1] < losses[0]


def test_finetune_learns_the_separating_keyword():
    model, corpus, held, vocab, rng = _setup(seed=7, corpus_size=80, held_out=20)
    schedule = ft.FinetuneSchedule(frozen_epochs=1, unfrozen_epochs=3, lr=0.02,
                                   batch_size=16)
    ft.finetune_embeddings(model, corpus, schedule, rng, vocab=vocab)
    encoded_held = ft.encode_corpus(held, vocab)
    preds = ft.predict_finetune(model, encoded_held)
    accuracy = float(np.mean(preds == [y for _, y in encoded_held]))
    assert accuracy >= 0.9, f"held-out accuracy {accuracy}"


def test_load_finetune_corpus(tmp_path):
    p = tmp_path / "corpus.tsv"
    p.write_text("text\tlabel\nliked it\t1\nmeh\t0\n", encoding="utf-8")
    assert ft.load_finetune_corpus(p) == [("liked it", 1), ("meh", 0)]

    bad = tmp_path / "bad.tsv"
    bad.write_text("text\tlabel\nliked it\t2\n", encoding="utf-8")
    with pytest.raises(ValueError) as err:
        ft.load_finetune_corpus(bad)
    assert "line 2" in str(err.value)

    noheader = tmp_path / "nh.tsv"
    noheader.write_text("liked it\t1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        ft.load_finetune_corpus(noheader)
