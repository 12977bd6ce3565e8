import dataclasses

import numpy as np
import numpy.testing as npt
import pytest

from emoconv import dataio as dio
from emoconv.config import TrainConfig, load_config
from emoconv.textprep import Vocabulary


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_dataset_parses_rows_verbatim(tmp_path):
    p = _write(tmp_path / "train.txt",
               "id\tturn1\tturn2\tturn3\tlabel\n"
               "c1\thi there\thello\twhy not\tHappy\n"
               "c2\tugh\tso bad\tterrible\tangry\n")
    split = dio.load_dataset(p, "train")
    assert len(split) == 2
    assert split.conversations[0].turns == ("hi there", "hello", "why not")
    assert split.conversations[0].label == "happy"  # case-insensitive
    assert split.label_counts == {"happy": 1, "sad": 0, "angry": 1, "others": 0}


def test_load_dataset_errors(tmp_path):
    bad_header = _write(tmp_path / "a.txt", "id\tt1\tt2\tt3\tlabel\nc\ta\tb\tc\thappy\n")
    with pytest.raises(ValueError):
        dio.load_dataset(bad_header, "train")

    short_row = _write(tmp_path / "b.txt",
                       "id\tturn1\tturn2\tturn3\tlabel\n"
                       "c1\ta\tb\tc\thappy\n"
                       "c2\ta\tb\n")
    with pytest.raises(ValueError) as err:
        dio.load_dataset(short_row, "train")
    assert "line 3" in str(err.value) and "4 or 5" in str(err.value)

    bad_label = _write(tmp_path / "c.txt",
                       "id\tturn1\tturn2\tturn3\tlabel\nc1\ta\tb\tc\tjoyful\n")
    with pytest.raises(ValueError) as err:
        dio.load_dataset(bad_label, "train")
    assert "joyful" in str(err.value)

    unlabeled_train = _write(tmp_path / "d.txt",
                             "id\tturn1\tturn2\tturn3\nc1\ta\tb\tc\n")
    with pytest.raises(ValueError):
        dio.load_dataset(unlabeled_train, "train")


def test_load_dataset_unlabeled_test_split(tmp_path):
    p = _write(tmp_path / "test.txt",
               "id\tturn1\tturn2\tturn3\nc1\ta\tb\tc\nc2\td\te\tf\n")
    split = dio.load_dataset(p, "test")
    assert len(split) == 2
    assert split.conversations[0].label is None
    assert split.label_counts == {}


def test_load_word_vectors(tmp_path):
    p = _write(tmp_path / "vec.txt", "hello 0.1 0.2\nbye -1 2\n")
    vecs = dio.load_word_vectors(p, expected_dim=2)
    npt.assert_array_equal(vecs["hello"], [0.1, 0.2])
    npt.assert_array_equal(vecs["bye"], [-1.0, 2.0])

    short = _write(tmp_path / "short.txt", "hello 0.1 0.2\nbye 0.3\n")
    with pytest.raises(ValueError) as err:
        dio.load_word_vectors(short, 2)
    assert "line 2" in str(err.value)

    bad = _write(tmp_path / "bad.txt", "hello 0.1 x\n")
    with pytest.raises(ValueError):
        dio.load_word_vectors(bad, 2)


def test_load_word_vectors_keeps_first_duplicate(tmp_path, caplog):
    p = _write(tmp_path / "vec.txt", "a 1 1\na 2 2\nb 3 3\n")
    with caplog.at_level("WARNING", logger="emoconv.dataio"):
        vecs = dio.load_word_vectors(p, 2)
    npt.assert_array_equal(vecs["a"], [1.0, 1.0])
    assert any("1" in rec.message or "duplicate" in rec.message.lower()
               for rec in caplog.records)


def test_load_sentence_vectors(tmp_path):
    p = _write(tmp_path / "sv.tsv", "c1\t0 0 0\nc2\t0.5 -1 2\n")
    store = dio.load_sentence_vectors(p, 3)
    npt.assert_array_equal(store.get("c1"), np.zeros(3))
    assert store.missing_ids([dio.Conversation("c3", ("a", "b", "c"))]) == ["c3"]

    dup = _write(tmp_path / "dup.tsv", "c1\t0 0 0\nc1\t1 1 1\n")
    with pytest.raises(ValueError) as err:
        dio.load_sentence_vectors(dup, 3)
    assert "c1" in str(err.value)

    wrong = _write(tmp_path / "wrong.tsv", "c1\t0 0\n")
    with pytest.raises(ValueError) as err:
        dio.load_sentence_vectors(wrong, 3)
    assert "line 1" in str(err.value)


def test_sentence_vectors_round_trip(tmp_path):
    store = dio.SentenceVectorStore(4)
    rng = np.random.default_rng(0)
    for i in range(5):
        store.vectors[f"c{i}"] = rng.standard_normal(4)
    path = tmp_path / "sv.tsv"
    dio.save_sentence_vectors(store, path)
    back = dio.load_sentence_vectors(path, 4)
    for cid, vec in store.vectors.items():
        npt.assert_array_equal(back.get(cid), vec)


def test_build_embedding_matrix_copies_and_fills():
    vocab = Vocabulary()
    for tok in ("a", "b", "c", "d"):
        vocab.add(tok)
    pretrained = {"a": np.array([1.0, 2.0]), "c": np.array([-3.0, 4.0]),
                  "zzz": np.array([9.0, 9.0])}
    emb, coverage = dio.build_embedding_matrix(vocab, pretrained, 2,
                                               np.random.default_rng(0))
    assert emb.vocab_size == 7 and emb.dim == 2
    npt.assert_array_equal(emb.table.values[0], [0.0, 0.0])           # PAD
    npt.assert_array_equal(emb.table.values[3], [1.0, 2.0])           # "a"
    npt.assert_array_equal(emb.table.values[5], [-3.0, 4.0])          # "c"
    for row in (1, 2, 4, 6):                                          # UNK, EOS, b, d
        assert (np.abs(emb.table.values[row]) <= 0.05).all()
        assert np.abs(emb.table.values[row]).max() > 0
    assert coverage == 2 / 4

    emb2, cov2 = dio.build_embedding_matrix(Vocabulary(), pretrained, 2,
                                            np.random.default_rng(0))
    assert cov2 == 0.0 and emb2.vocab_size == 3


def test_build_embedding_matrix_deterministic():
    vocab = Vocabulary()
    for tok in ("a", "b"):
        vocab.add(tok)
    m1, _ = dio.build_embedding_matrix(vocab, {}, 3, np.random.default_rng(9))
    m2, _ = dio.build_embedding_matrix(vocab, {}, 3, np.random.default_rng(9))
    npt.assert_array_equal(m1.table.values, m2.table.values)


def _toy_checkpoint():
    vocab = Vocabulary()
    vocab.add("hello")
    rng = np.random.default_rng(3)
    params = {"w": rng.standard_normal((3, 4)), "b": rng.standard_normal(4)}
    return dio.Checkpoint(dio.CHECKPOINT_VERSION, vocab, params,
                          TrainConfig(hidden_size=3, sentence_dim=0),
                          epoch=4, best_val_f1=0.625)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    ckpt = _toy_checkpoint()
    path = tmp_path / "model.ckpt"
    dio.save_checkpoint(ckpt, path)
    back = dio.load_checkpoint(path)
    assert back.epoch == 4 and back.best_val_f1 == 0.625
    assert back.vocab.id_to_token == ckpt.vocab.id_to_token
    assert back.config == ckpt.config
    for name, arr in ckpt.params.items():
        assert back.params[name].tobytes() == arr.tobytes()

    # identical checkpoints serialize to identical bytes
    path2 = tmp_path / "model2.ckpt"
    dio.save_checkpoint(ckpt, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_bad_files(tmp_path):
    path = tmp_path / "model.ckpt"
    dio.save_checkpoint(_toy_checkpoint(), path)

    tampered = bytearray(path.read_bytes())
    tampered[:4] = b"NOPE"
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(tampered))
    with pytest.raises(ValueError) as err:
        dio.load_checkpoint(bad)
    assert "not a checkpoint" in str(err.value)

    versioned = bytearray(path.read_bytes())
    versioned[4:8] = (99).to_bytes(4, "little")
    vbad = tmp_path / "vbad.ckpt"
    vbad.write_bytes(bytes(versioned))
    with pytest.raises(ValueError) as err:
        dio.load_checkpoint(vbad)
    assert "99" in str(err.value) and "1" in str(err.value)

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ValueError) as err:
        dio.load_checkpoint(truncated)
    assert "truncated" in str(err.value)


def test_vocab_file_round_trip(tmp_path):
    vocab = Vocabulary()
    for tok in ("hi", "there", "🙂"):
        vocab.add(tok)
    path = tmp_path / "vocab.txt"
    dio.save_vocab(vocab, path)
    back = dio.load_vocab(path)
    assert back.id_to_token == vocab.id_to_token
    assert back.token_to_id == vocab.token_to_id

    (tmp_path / "bad.txt").write_text("hi\nthere\n", encoding="utf-8")
    with pytest.raises(ValueError):
        dio.load_vocab(tmp_path / "bad.txt")


def test_config_defaults_match_stated_hyperparameters(tmp_path):
    cfg = load_config(_write(tmp_path / "empty.cfg", ""))
    assert cfg == TrainConfig()
    assert (cfg.lr, cfg.batch_size, cfg.epochs) == (0.0005, 64, 6)
    assert (cfg.clip_norm, cfg.anneal_factor, cfg.anneal_after_epoch) == (5.0, 0.2, 5)
    assert (cfg.freeze_embedding_epochs, cfg.dropout_bilstm, cfg.dropout_linear) == (2, 0.5, 0.7)
    assert (cfg.hidden_size, cfg.num_layers, cfg.sentence_dim) == (200, 2, 2304)


def test_config_overrides_and_errors(tmp_path):
    cfg = load_config(_write(tmp_path / "o.cfg",
                             "# comment\nhidden_size = 300\nlr=0.001  # inline\n"))
    assert cfg.hidden_size == 300 and cfg.lr == 0.001
    assert cfg.batch_size == 64  # untouched default

    with pytest.raises(ValueError) as err:
        load_config(_write(tmp_path / "bad.cfg", "lr = abc\n"))
    assert "lr" in str(err.value) and "line 1" in str(err.value)

    with pytest.raises(ValueError) as err:
        load_config(_write(tmp_path / "unk.cfg", "momentum = 0.9\n"))
    assert "momentum" in str(err.value)

    with pytest.raises(ValueError):
        load_config(_write(tmp_path / "range.cfg", "dropout_bilstm = 1.0\n"))

    with pytest.raises(ValueError):
        load_config(_write(tmp_path / "noeq.cfg", "just words\n"))


def test_config_replace_validates():
    with pytest.raises(ValueError):
        TrainConfig().replace(lr=-1.0)
    cfg = TrainConfig().replace(num_layers=1, hidden_size=4)
    assert cfg.num_layers == 1
    assert dataclasses.asdict(cfg) == cfg.to_dict()
