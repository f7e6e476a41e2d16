"""Training loop, evaluation, and multi-seed runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from lsdgnn.convgraph import Conversation
from lsdgnn.curriculum import (
    DifficultyParams,
    build_schedule,
    curriculum_epoch_plan,
    default_wheel,
    load_wheel,
    shuffled_epoch_plan,
)
from lsdgnn.datasets import DatasetManifest, load_dataset
from lsdgnn.errors import ConfigError, TrainingDiverged
from lsdgnn.harness.checkpoint import Checkpoint
from lsdgnn.harness.config import RunConfig
from lsdgnn.harness.metrics import EvalReport, compute_metrics
from lsdgnn.model import ModelConfig, attention_distances, conversation_loss, init_params, model_forward
from lsdgnn.numerics.optim import Optimizer
from lsdgnn.numerics.tensor import ParameterStore, backward

log = logging.getLogger(__name__)


@dataclass
class EpochLog:
    epoch: int
    conversations: int
    steps: int
    loss: float  # summed objective over the epoch's steps / utterances seen
    train_accuracy: float  # training-mode predictions, so dropout applies
    dev: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "epoch": self.epoch,
            "conversations": self.conversations,
            "steps": self.steps,
            "loss": self.loss,
            "train_accuracy": self.train_accuracy,
        }
        if self.dev is not None:
            out["dev"] = self.dev
        return out


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    params: ParameterStore
    model_config: ModelConfig
    log: list[EpochLog] = field(default_factory=list)
    best_dev_epoch: int | None = None
    best_dev_weighted_f1: float | None = None


def epoch_plan(run: RunConfig, dataset: DatasetManifest, wheel=None) -> list[list[str]]:
    """Conversation ids per epoch, from the curriculum or the full set."""
    cur = run.curriculum
    if not cur.enabled:
        return shuffled_epoch_plan(dataset.ids, run.epochs, run.seed)
    if cur.num_buckets > len(dataset.conversations):
        raise ConfigError(
            f"curriculum.num_buckets={cur.num_buckets} exceeds {len(dataset.conversations)} conversations"
        )
    if wheel is None:
        wheel = load_wheel(run.paths.wheel) if run.paths.wheel else default_wheel()
    wheel = wheel.subset(dataset.emotion_labels)
    schedule = build_schedule(dataset.conversations, wheel, DifficultyParams(cur.k, cur.b), cur.num_buckets)
    return curriculum_epoch_plan(schedule, run.epochs, run.seed, cur.epochs_per_bucket)


def evaluate_params(params: ParameterStore, config: ModelConfig, conversations: Sequence[Conversation]
                    ) -> tuple[EvalReport, np.ndarray]:
    """Eval-mode metrics over labelled conversations, plus the stacked probabilities."""
    labels, preds, probs = [], [], []
    for conv in conversations:
        res = model_forward(conv, params, config, mode="eval")
        labels.extend(conv.labels)
        preds.extend(res.predictions.tolist())
        probs.append(res.probabilities.data)
    return compute_metrics(labels, preds, config.num_classes), np.concatenate(probs, axis=0)


def mean_attention_distance(params: ParameterStore, config: ModelConfig,
                            conversations: Sequence[Conversation]) -> float:
    """Eval-mode Frobenius distance between the channels' attention matrices, averaged over layers and conversations."""
    dists = []
    for conv in conversations:
        res = model_forward(conv, params, config, mode="eval")
        dists.extend(attention_distances(res.traces["short"], res.traces["long"]))
    return float(np.mean(dists))


def eval_loss(params: ParameterStore, config: ModelConfig, conversations: Sequence[Conversation]) -> float:
    """Eval-mode objective per utterance, one conversation per batch."""
    total, count = 0.0, 0
    for conv in conversations:
        loss, _ = conversation_loss([conv], params, config, mode="eval")
        total += loss.item()
        count += len(conv)
    return total / count


def train(run: RunConfig, dataset: DatasetManifest | None = None, dev: DatasetManifest | None = None,
          wheel=None, on_epoch: Callable[[EpochLog], None] | None = None) -> TrainResult:
    """Train from scratch; fully determined by ``run.seed``."""
    if dataset is None:
        if not run.paths.dataset:
            raise ConfigError("paths.dataset is not set")
        dataset = load_dataset(run.paths.dataset)
    if dev is None and run.paths.dev:
        dev = load_dataset(run.paths.dev)
    config = run.model_config(dataset.modality_dims, dataset.num_classes)
    if dev is not None and (dev.modality_dims != dataset.modality_dims or dev.emotion_labels != dataset.emotion_labels):
        raise ConfigError("dev set does not share the training set's labels and modality widths")

    plan = epoch_plan(run, dataset, wheel)
    params = init_params(config, seed=run.seed)
    optimizer = Optimizer(run.optimizer)
    rng = np.random.default_rng(run.seed)
    lookup = dataset.by_id()
    history: list[EpochLog] = []
    best_epoch, best_f1, best_params = None, None, None

    for epoch, ids in enumerate(plan, start=1):
        total, utterances, correct, steps = 0.0, 0, 0, 0
        for start in range(0, len(ids), run.batch_size):
            batch = [lookup[cid] for cid in ids[start : start + run.batch_size]]
            loss, results = conversation_loss(batch, params, config, mode="train", rng=rng)
            value = loss.item()
            steps += 1
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, step {steps}")
            backward(loss, params)
            optimizer.step(params)
            total += value
            for conv, res in zip(batch, results):
                utterances += len(conv)
                correct += int(np.sum(res.predictions == np.asarray(conv.labels)))
        entry = EpochLog(epoch, len(ids), steps, total / utterances, correct / utterances)
        if dev is not None:
            report, _ = evaluate_params(params, config, dev.conversations)
            entry.dev = {"weighted_f1": report.weighted_f1, "macro_f1": report.macro_f1,
                         "accuracy": report.accuracy}
            if best_f1 is None or report.weighted_f1 > best_f1:
                best_epoch, best_f1, best_params = epoch, report.weighted_f1, params.state_dict()
        history.append(entry)
        log.info("epoch %d: %s", epoch, entry.to_dict())
        if on_epoch is not None:
            on_epoch(entry)

    ckpt = Checkpoint(
        run_config=run.to_dict(),
        model_config=config.to_dict(),
        emotion_labels=list(dataset.emotion_labels),
        params=params.state_dict(),
        rng_state=rng.bit_generator.state,
        epoch=len(plan),
    )
    if best_params is not None:
        ckpt.extra["best_dev_params"] = best_params
    return TrainResult(ckpt, params, config, history, best_epoch, best_f1)


def evaluate(checkpoint: Checkpoint, dataset: DatasetManifest) -> EvalReport:
    config = checkpoint.model()
    if config.modality_dims != dataset.modality_dims:
        raise ConfigError(
            f"checkpoint modality widths {config.modality_dims} do not match the dataset's {dataset.modality_dims}"
        )
    if config.num_classes != dataset.num_classes:
        raise ConfigError(f"checkpoint has {config.num_classes} classes, dataset {dataset.num_classes}")
    report, _ = evaluate_params(checkpoint.parameter_store(), config, dataset.conversations)
    return report


@dataclass
class SeedSummary:
    seeds: list[int]
    reports: list[EvalReport]

    def mean(self) -> dict[str, float]:
        return {
            key: float(np.mean([getattr(r, key) for r in self.reports]))
            for key in ("weighted_f1", "macro_f1", "accuracy")
        }


def train_seeds(run: RunConfig, seeds: Sequence[int], dataset: DatasetManifest | None = None,
                eval_set: DatasetManifest | None = None) -> SeedSummary:
    """Train once per seed and score each run on ``eval_set`` (default: the dev set, else training data)."""
    if dataset is None:
        dataset = load_dataset(run.paths.dataset)
    if eval_set is None:
        eval_set = load_dataset(run.paths.dev) if run.paths.dev else dataset
    reports = []
    for seed in seeds:
        seeded = RunConfig.from_dict({**run.to_dict(), "seed": int(seed)})
        result = train(seeded, dataset)
        reports.append(evaluate(result.checkpoint, eval_set))
    return SeedSummary(list(seeds), reports)
