"""Single-axis hyperparameter sensitivity sweeps.

Each (value, seed) pair is one full train+eval run.  Run results are
content-addressed by the SHA-256 of the effective config, so an interrupted
sweep resumes without recomputing finished runs; aggregation reports the
mean and sample standard deviation of validation micro-F1 per value, plus a
"not trained effectively" flag for runs whose final training loss never
beat the uniform-prediction baseline.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import rcnn
from . import train as tr
from .config import TrainConfig
from .dataio import DatasetSplit, SentenceVectorStore, build_embedding_matrix
from .metrics import aggregate_seeds
from .textprep import Vocabulary

log = logging.getLogger(__name__)

SWEEP_AXES = ("hidden_size", "num_layers", "batch_size", "lr",
              "dropout_bilstm", "dropout_linear")

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class SweepSpec:
    axis: str
    values: list
    seeds: list[int] = dataclasses.field(default_factory=lambda: list(DEFAULT_SEEDS))

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis {self.axis!r} is not one of {', '.join(SWEEP_AXES)}")
        if not self.values or not self.seeds:
            raise ValueError("sweep needs at least one value and one seed")


@dataclass
class RunRecord:
    axis: str
    value: float
    seed: int
    config_hash: str
    best_val_f1: float
    final_train_loss: float
    baseline_loss: float
    trained_effectively: bool

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _axis_value(axis: str, value):
    return int(value) if axis in ("hidden_size", "num_layers", "batch_size") else float(value)


def run_one(base_config: TrainConfig, axis: str, value, seed: int,
            train_split: DatasetSplit, val_split: DatasetSplit,
            store: SentenceVectorStore | None, vocab: Vocabulary,
            pretrained: dict | None = None) -> RunRecord:
    """One sweep cell: reseed, rebuild the model, train, score."""
    value = _axis_value(axis, value)
    config = base_config.replace(**{axis: value, "seed": seed})
    rng = np.random.default_rng(seed)
    emb, _ = build_embedding_matrix(vocab, pretrained or {}, config.embedding_dim, rng)
    params = rcnn.init_model(config, emb, rng)
    ckpt, history = tr.train(params, train_split, val_split, store, config, rng,
                             vocab=vocab)
    weights = tr.compute_class_weights(train_split.label_counts, val_split.label_counts)
    labels = [tr.LABEL_TO_INDEX[c.label] for c in train_split.conversations]
    baseline = tr.uniform_baseline_loss(weights, labels)
    final_loss = history[-1].train_loss
    return RunRecord(axis=axis, value=value, seed=seed,
                     config_hash=config_hash(config),
                     best_val_f1=ckpt.best_val_f1,
                     final_train_loss=final_loss,
                     baseline_loss=baseline,
                     trained_effectively=final_loss < baseline)


def _record_path(runs_dir, record_hash: str) -> str:
    return os.path.join(runs_dir, f"run_{record_hash[:16]}.json")


def load_record(path) -> RunRecord:
    with open(path, encoding="utf-8") as fh:
        return RunRecord(**json.load(fh))


def run_sweep(spec: SweepSpec, base_config: TrainConfig,
              train_split: DatasetSplit, val_split: DatasetSplit,
              store: SentenceVectorStore | None, vocab: Vocabulary,
              runs_dir=None, pretrained: dict | None = None):
    """All |values| x |seeds| runs; returns (records, aggregate rows).

    With ``runs_dir`` set, each run's record is written there as JSON and
    any pre-existing record with a matching config hash is reused instead
    of retrained.
    """
    if runs_dir is not None:
        os.makedirs(runs_dir, exist_ok=True)
    records: list[RunRecord] = []
    for raw_value in spec.values:
        value = _axis_value(spec.axis, raw_value)
        for seed in spec.seeds:
            cfg = base_config.replace(**{spec.axis: value}, seed=seed)
            h = config_hash(cfg)
            path = _record_path(runs_dir, h) if runs_dir is not None else None
            if path is not None and os.path.exists(path):
                rec = load_record(path)
                log.info("sweep %s=%s seed %d: reusing %s", spec.axis, value, seed, path)
            else:
                rec = run_one(base_config, spec.axis, value, seed,
                              train_split, val_split, store, vocab, pretrained)
                if path is not None:
                    with open(path, "w", encoding="utf-8") as fh:
                        fh.write(rec.to_json() + "\n")
            records.append(rec)
    aggregates = []
    for value in spec.values:
        cell = [r for r in records if r.value == _axis_value(spec.axis, value)]
        agg = aggregate_seeds([r.best_val_f1 for r in cell])
        aggregates.append({"axis": spec.axis, "value": _axis_value(spec.axis, value),
                           "mean_val_f1": agg.mean, "sd_val_f1": agg.sd,
                           "runs": len(cell),
                           "not_trained_effectively": sum(not r.trained_effectively
                                                          for r in cell)})
    return records, aggregates


def format_sweep_report(aggregates) -> str:
    lines = ["axis\tvalue\tmean_val_f1\tsd_val_f1\truns\tnot_trained_effectively"]
    for row in aggregates:
        lines.append(f"{row['axis']}\t{row['value']}\t{row['mean_val_f1']:.6f}\t"
                     f"{row['sd_val_f1']:.6f}\t{row['runs']}\t"
                     f"{row['not_trained_effectively']}")
    return "\n".join(lines) + "\n"
