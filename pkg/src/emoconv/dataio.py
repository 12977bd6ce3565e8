"""File formats: dataset TSV, word vectors, sentence vectors, checkpoints.

Checkpoint layout (version 1, little-endian):

    magic "EMOC" | u32 version | u64 json_len | json metadata |
    per array (in metadata order): u64 byte_len | float64 raw values

The JSON metadata carries the vocabulary, the config snapshot, the epoch,
the best validation score, and the name/shape of every array; array payloads
are raw float64, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .textprep import Vocabulary

log = logging.getLogger(__name__)

LABELS = ("happy", "sad", "angry", "others")
LABEL_TO_INDEX = {name: i for i, name in enumerate(LABELS)}

DATASET_HEADER = "id\tturn1\tturn2\tturn3\tlabel"
DATASET_HEADER_UNLABELED = "id\tturn1\tturn2\tturn3"

CHECKPOINT_MAGIC = b"EMOC"
CHECKPOINT_VERSION = 1


@dataclass
class Conversation:
    id: str
    turns: tuple[str, str, str]
    label: str | None = None


@dataclass
class DatasetSplit:
    name: str
    conversations: list[Conversation]
    label_counts: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.conversations)


@dataclass
class SentenceVectorStore:
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def get(self, conv_id: str) -> np.ndarray:
        return self.vectors[conv_id]

    def missing_ids(self, conversations) -> list[str]:
        return [c.id for c in conversations if c.id not in self.vectors]


def load_dataset(path, split: str) -> DatasetSplit:
    """Parse a conversation TSV.

    The header must be exactly ``id/turn1/turn2/turn3/label`` (tab-separated)
    or the same without the label column.  Labels parse case-insensitively;
    train and val rows must carry one.
    """
    conversations: list[Conversation] = []
    counts = {name: 0 for name in LABELS}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").rstrip("\r")
        if header not in (DATASET_HEADER, DATASET_HEADER_UNLABELED):
            raise ValueError(f"{path}: unrecognized header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) not in (4, 5):
                raise ValueError(f"{path} line {lineno}: expected 4 or 5 "
                                 f"tab-separated fields, got {len(fields)}")
            label = None
            if len(fields) == 5:
                raw = fields[4].strip().lower()
                if raw not in LABEL_TO_INDEX:
                    raise ValueError(f"{path} line {lineno}: unknown label {fields[4]!r}")
                label = raw
                counts[label] += 1
            elif split in ("train", "val"):
                raise ValueError(f"{path} line {lineno}: split {split!r} requires a label")
            conversations.append(Conversation(fields[0], (fields[1], fields[2], fields[3]),
                                              label))
    if not any(counts.values()):
        counts = {}
    return DatasetSplit(split, conversations, counts)


def load_word_vectors(path, expected_dim: int) -> dict[str, np.ndarray]:
    """Text-format word vectors: token then whitespace-separated decimals.

    Duplicate tokens keep their first occurrence; the number skipped is
    logged.  Tokens containing whitespace are unsupported by the format.
    """
    out: dict[str, np.ndarray] = {}
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, raw = parts[0], parts[1:]
            if len(raw) != expected_dim:
                raise ValueError(f"{path} line {lineno}: expected {expected_dim} "
                                 f"values, got {len(raw)}")
            try:
                vec = np.array(raw, dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path} line {lineno}: non-numeric vector entry") from None
            if token in out:
                duplicates += 1
                continue
            out[token] = vec
    if duplicates:
        log.warning("%s: skipped %d duplicate token lines", path, duplicates)
    return out


def load_sentence_vectors(path, expected_dim: int) -> SentenceVectorStore:
    """Sentence-vector TSV: ``id<TAB>v1 v2 ... v_dim``, one id per line."""
    store = SentenceVectorStore(expected_dim)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            conv_id, tab, raw = line.partition("\t")
            if not tab:
                raise ValueError(f"{path} line {lineno}: expected 'id<TAB>values'")
            if conv_id in store.vectors:
                raise ValueError(f"{path} line {lineno}: duplicate id {conv_id!r}")
            values = raw.split()
            if len(values) != expected_dim:
                raise ValueError(f"{path} line {lineno}: expected {expected_dim} "
                                 f"values, got {len(values)}")
            store.vectors[conv_id] = np.array(values, dtype=np.float64)
    return store


def save_sentence_vectors(store: SentenceVectorStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for conv_id, vec in store.vectors.items():
            fh.write(conv_id + "\t" + " ".join(repr(float(v)) for v in vec) + "\n")


def build_embedding_matrix(vocab: Vocabulary, pretrained: dict[str, np.ndarray],
                           dim: int, rng):
    """Vocabulary rows from pretrained vectors.

    PAD stays zero; tokens found in ``pretrained`` are copied verbatim;
    everything else (including UNK and EOS) draws uniform [-0.05, 0.05]
    entries.  Returns the matrix plus the fraction of real (non-special)
    vocabulary tokens that were found.
    """
    from .layers import EmbeddingMatrix

    for token, vec in pretrained.items():
        if vec.shape != (dim,):
            raise ValueError(f"pretrained vector for {token!r} has shape {vec.shape}, "
                             f"expected ({dim},)")
        break
    values = np.zeros((vocab.size, dim))
    found = 0
    for idx in range(1, vocab.size):
        token = vocab.id_to_token[idx]
        vec = pretrained.get(token) if idx >= 3 else None
        if vec is not None:
            values[idx] = vec
            found += 1
        else:
            values[idx] = rng.uniform(-0.05, 0.05, dim)
    real_tokens = vocab.size - 3
    coverage = found / real_tokens if real_tokens else 0.0
    return EmbeddingMatrix.from_array(values), coverage


def save_word_vectors(tokens: list[str], matrix: np.ndarray, path) -> None:
    """Write rows in the word-vector text format, one token per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for token, row in zip(tokens, matrix):
            fh.write(token + " " + " ".join(repr(float(v)) for v in row) + "\n")


@dataclass
class Checkpoint:
    format_version: int
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    config: TrainConfig
    epoch: int
    best_val_f1: float


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    names = sorted(ckpt.params)
    meta = {
        "arrays": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
        "best_val_f1": ckpt.best_val_f1,
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "vocab": ckpt.vocab.id_to_token,
    }
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", ckpt.format_version))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            payload = np.ascontiguousarray(ckpt.params[name], dtype=np.float64)
            raw = payload.tobytes()
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"{path}: truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {version} is not the "
                             f"supported version {CHECKPOINT_VERSION}")
        (meta_len,) = struct.unpack("<Q", _read_exact(fh, 8, path, "metadata length"))
        meta = json.loads(_read_exact(fh, meta_len, path, "metadata"))
        params = {}
        for entry in meta["arrays"]:
            shape = tuple(entry["shape"])
            (nbytes,) = struct.unpack("<Q", _read_exact(fh, 8, path, "array length"))
            want = int(np.prod(shape, dtype=np.int64)) * 8
            if nbytes != want:
                raise ValueError(f"{path}: array {entry['name']!r} payload is "
                                 f"{nbytes} bytes, expected {want}")
            raw = _read_exact(fh, nbytes, path, f"array {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    vocab = Vocabulary(token_to_id={}, id_to_token=list(meta["vocab"]))
    cfg = TrainConfig(**meta["config"]).validate()
    return Checkpoint(version, vocab, params, cfg, int(meta["epoch"]),
                      float(meta["best_val_f1"]))


def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")


def load_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
    if tokens[:3] != list(("<pad>", "<unk>", "<eos>")):
        raise ValueError(f"{path}: vocabulary file must start with the three "
                         "reserved tokens")
    return Vocabulary(token_to_id={}, id_to_token=tokens)
