"""End-to-end checks of the command-line interface.

Each test drives ``cli.main`` with real files in a temp directory, the way a
user would, and inspects the artifacts it leaves behind.
"""

import numpy as np
import pytest

import toycorpus
from emoconv import cli, dataio
from emoconv import train as tr
from emoconv.textprep import SPECIALS

CONFIG_TEXT = """\
lr = 0.02
batch_size = 4
epochs = 2
hidden_size = 4
num_layers = 1
sentence_dim = 3
embedding_dim = 6
dropout_bilstm = 0.0
dropout_linear = 0.0
freeze_embedding_epochs = 1
anneal_after_epoch = 99
seed = 5
"""


@pytest.fixture()
def world(tmp_path):
    train_split = toycorpus.make_split("train", 16, seed=1)
    val_split = toycorpus.make_split("val", 8, seed=2)
    toycorpus.write_split(train_split, tmp_path / "train.txt")
    toycorpus.write_split(val_split, tmp_path / "val.txt")
    store = toycorpus.store_for([train_split, val_split], dim=3, seed=3)
    dataio.save_sentence_vectors(store, tmp_path / "sv.tsv")
    (tmp_path / "config.txt").write_text(CONFIG_TEXT)
    return tmp_path


def preprocess(world, out_dir="data", report="stats.tsv"):
    rc = cli.main(["--out", str(world / report), "preprocess",
                   "--train", str(world / "train.txt"),
                   "--val", str(world / "val.txt"),
                   "--out-dir", str(world / out_dir)])
    assert rc == 0
    return world / out_dir


def run_train(world, data_dir, out_dir, extra=()):
    return cli.main(["--config", str(world / "config.txt"),
                     "--out", str(world / out_dir), *extra,
                     "train", "--data-dir", str(data_dir),
                     "--sentence-vectors", str(world / "sv.tsv")])


def test_preprocess_artifacts(world):
    data_dir = preprocess(world)
    vocab = dataio.load_vocab(data_dir / "vocab.txt")
    assert vocab.id_to_token[:3] == list(SPECIALS)

    text = (data_dir / "train.ids.tsv").read_text()
    assert text.startswith("# label_counts\t")
    examples, counts = tr.load_encoded(data_dir / "train.ids.tsv")
    assert len(examples) == 16
    assert sum(counts.values()) == 16
    raw = dataio.load_dataset(world / "train.txt", "train")
    npt = np.testing
    for got, want in zip(examples, tr.encode_split(raw, vocab)):
        assert got.id == want.id and got.label == want.label
        npt.assert_array_equal(got.ids, want.ids)

    stats = (world / "stats.tsv").read_text()
    assert stats.splitlines()[0].startswith("split\ttotal\thappy")
    assert f"vocab_size\t{vocab.size}" in stats


def test_preprocess_rejects_malformed_file(world, capsys):
    bad = world / "bad.txt"
    bad.write_text("not\ta\tdataset\n")
    rc = cli.main(["preprocess", "--train", str(bad),
                   "--val", str(world / "val.txt"),
                   "--out-dir", str(world / "data")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_train_then_evaluate(world, capsys):
    data_dir = preprocess(world)
    assert run_train(world, data_dir, "run") == 0
    out = capsys.readouterr().out
    assert out.startswith(tr.HISTORY_HEADER)
    assert (world / "run" / "model.ckpt").exists()
    history = (world / "run" / "history.tsv").read_text()
    assert len(history.splitlines()) == 1 + 2  # header + one row per epoch

    rc = cli.main(["evaluate", "--checkpoint", str(world / "run" / "model.ckpt"),
                   "--split", str(world / "val.txt"),
                   "--sentence-vectors", str(world / "sv.tsv")])
    assert rc == 0
    report = capsys.readouterr().out
    assert "micro_f1\t" in report
    assert "scored_classes\thappy,sad,angry" in report

    rc = cli.main(["evaluate", "--checkpoint", str(world / "run" / "model.ckpt"),
                   "--split", str(world / "val.txt"),
                   "--sentence-vectors", str(world / "sv.tsv"),
                   "--score-others"])
    assert rc == 0
    assert "scored_classes\thappy,sad,angry,others" in capsys.readouterr().out


def test_train_runs_are_bit_identical(world):
    data_dir = preprocess(world)
    assert run_train(world, data_dir, "a") == 0
    assert run_train(world, data_dir, "b") == 0
    assert ((world / "a" / "model.ckpt").read_bytes()
            == (world / "b" / "model.ckpt").read_bytes())
    assert ((world / "a" / "history.tsv").read_text()
            == (world / "b" / "history.tsv").read_text())


def test_seed_flag_overrides_config(world):
    data_dir = preprocess(world)
    assert run_train(world, data_dir, "a") == 0
    assert run_train(world, data_dir, "c", extra=("--seed", "11")) == 0
    assert ((world / "a" / "model.ckpt").read_bytes()
            != (world / "c" / "model.ckpt").read_bytes())


def test_sentence_vector_ablation(world):
    data_dir = preprocess(world)
    rc = cli.main(["--config", str(world / "config.txt"),
                   "--out", str(world / "ablate"),
                   "train", "--data-dir", str(data_dir),
                   "--sentence-vectors", "none"])
    assert rc == 0
    ckpt = dataio.load_checkpoint(world / "ablate" / "model.ckpt")
    assert ckpt.config.sentence_dim == 0


def test_evaluate_demands_sentence_vectors_when_fused(world, capsys):
    data_dir = preprocess(world)
    assert run_train(world, data_dir, "run") == 0
    capsys.readouterr()
    rc = cli.main(["evaluate", "--checkpoint", str(world / "run" / "model.ckpt"),
                   "--split", str(world / "val.txt")])
    assert rc == 1
    assert "sentence" in capsys.readouterr().err


def test_finetune_writes_usable_vectors(world):
    lines = ["text\tlabel"]
    for i in range(8):
        lines.append(f"yay great fun {i}\t1")
        lines.append(f"sigh bad day {i}\t0")
    (world / "corpus.tsv").write_text("\n".join(lines) + "\n")
    rng = np.random.default_rng(0)
    dataio.save_word_vectors(["yay", "sigh", "day"],
                             rng.normal(size=(3, 6)), world / "vec_in.txt")

    rc = cli.main(["--out", str(world / "ft.tsv"), "finetune",
                   "--corpus", str(world / "corpus.tsv"),
                   "--embeddings-in", str(world / "vec_in.txt"),
                   "--embeddings-out", str(world / "vec_out.txt"),
                   "--epochs-frozen", "1", "--epochs-unfrozen", "1",
                   "--dim", "6", "--filters", "4", "--lr", "0.01"])
    assert rc == 0
    vectors = dataio.load_word_vectors(world / "vec_out.txt", 6)
    assert {"yay", "sigh", "great"} <= set(vectors)
    report = (world / "ft.tsv").read_text().splitlines()
    assert report[0] == "epoch\tloss" and len(report) == 3


def test_sweep_report_and_records(world):
    rc = cli.main(["--config", str(world / "config.txt"),
                   "--out", str(world / "sweep.tsv"),
                   "sweep", "--train", str(world / "train.txt"),
                   "--val", str(world / "val.txt"),
                   "--axis", "lr", "--values", "0.02,0.001", "--seeds", "0,1",
                   "--sentence-vectors", "none",
                   "--runs-dir", str(world / "runs")])
    assert rc == 0
    report = (world / "sweep.tsv").read_text().splitlines()
    assert report[0].startswith("axis\tvalue")
    assert len(report) == 3
    assert len(list((world / "runs").glob("run_*.json"))) == 4


def test_errors_exit_nonzero(world, capsys):
    rc = cli.main(["train", "--data-dir", str(world / "nowhere"),
                   "--sentence-vectors", "none"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["not-a-command"])
