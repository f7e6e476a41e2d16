"""Conversation difficulty from emotional shifts, and a bucketed training schedule.

Emotions sit on a valence/arousal wheel. A speaker's consecutive utterances
with different labels form a shift, weighted by how similar the two emotions
are. A conversation's difficulty is

    DIF = (sum of weighted shifts + N_sp) / (N_u + N_sp)

with N_sp distinct speakers and N_u utterances. Conversations are sorted by
difficulty, cut into buckets, and training adds one bucket per epoch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from lsdgnn.convgraph import Conversation
from lsdgnn.errors import ConfigError, DataError, FormatError, LabelIndexError

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class EmotionWheel:
    """Label -> (valence, arousal). ``N`` is the number of labels in play.

    A point at the origin is the neutral emotion; every other point must lie
    on the unit circle. Points with valence exactly 0 fall into the
    ``1/N`` similarity case.
    """

    points: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        pts = {}
        for label, (v, a) in self.points.items():
            v, a = float(v), float(a)
            if not (math.isfinite(v) and math.isfinite(a)):
                raise ConfigError(f"wheel point {label!r} is not finite")
            norm2 = v * v + a * a
            if norm2 != 0.0 and abs(norm2 - 1.0) >= UNIT_TOL:
                raise ConfigError(f"wheel point {label!r} = ({v}, {a}) is off the unit circle")
            pts[str(label)] = (v, a)
        if not pts:
            raise ConfigError("emotion wheel is empty")
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.points)

    def __contains__(self, label: str) -> bool:
        return label in self.points

    def point(self, label: str) -> tuple[float, float]:
        try:
            return self.points[label]
        except KeyError:
            raise LabelIndexError(f"emotion {label!r} is not on the wheel") from None

    def subset(self, labels: Iterable[str]) -> EmotionWheel:
        """Restrict to ``labels`` (in that order), so ``N`` counts the dataset's emotions."""
        labels = list(labels)
        missing = [lab for lab in labels if lab not in self.points]
        if missing:
            raise ConfigError(f"wheel has no point for {missing}")
        return EmotionWheel({lab: self.points[lab] for lab in labels})

    def to_json(self) -> str:
        body = {lab: {"valence": v, "arousal": a} for lab, (v, a) in self.points.items()}
        return json.dumps({"points": body}, indent=2) + "\n"


def load_wheel(path: str | Path) -> EmotionWheel:
    """Read a wheel file: ``{"points": {label: {"valence": v, "arousal": a}}}``."""
    text = Path(path).read_text()
    return _parse_wheel(text, str(path))


def default_wheel() -> EmotionWheel:
    text = resources.files("lsdgnn").joinpath("data/default_wheel.json").read_text()
    return _parse_wheel(text, "default_wheel.json")


def _parse_wheel(text: str, source: str) -> EmotionWheel:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict) or not isinstance(raw.get("points"), dict):
        raise FormatError(f"{source}: expected an object with a 'points' map")
    extra = set(raw) - {"points", "_comment"}
    if extra:
        raise FormatError(f"{source}: unknown keys {sorted(extra)}")
    pts = {}
    for label, entry in raw["points"].items():
        if not isinstance(entry, dict) or set(entry) != {"valence", "arousal"}:
            raise FormatError(f"{source}: point {label!r} needs exactly 'valence' and 'arousal'")
        pts[label] = (entry["valence"], entry["arousal"])
    return EmotionWheel(pts)


def emotion_similarity(wheel: EmotionWheel, e_i: str, e_j: str) -> float:
    """Similarity in [0, 1] of two emotions on the wheel.

    Same-sign valence gives ``max(cos theta, 0)``, opposite signs give 0, and a
    zero valence on either side gives ``1 / N``.
    """
    vi, ai = wheel.point(e_i)
    vj, aj = wheel.point(e_j)
    prod = vi * vj
    if prod > 0:
        # Both points are on the unit circle here, so the dot product is cos theta.
        return max(min(vi * vj + ai * aj, 1.0), 0.0)
    if prod < 0:
        return 0.0
    return 1.0 / wheel.N


@dataclass(frozen=True)
class DifficultyParams:
    k: float = 1.0
    b: float = 0.4

    def __post_init__(self):
        if not (math.isfinite(self.k) and math.isfinite(self.b)):
            raise ConfigError(f"difficulty parameters must be finite, got k={self.k}, b={self.b}")


def weighted_shift(similarity: float, params: DifficultyParams) -> float:
    return params.k * similarity + params.b


def sequence_difficulty(speakers: Sequence[str], emotions: Sequence[str], wheel: EmotionWheel,
                        params: DifficultyParams, stats: dict | None = None) -> float:
    """Difficulty of a labelled utterance sequence; ``stats["visits"]`` counts utterances scanned."""
    if len(speakers) != len(emotions):
        raise DataError(f"{len(speakers)} speakers but {len(emotions)} emotions")
    if not speakers:
        raise DataError("cannot score an empty conversation")
    last: dict[str, str] = {}
    total = 0.0
    for spk, emo in zip(speakers, emotions):
        prev = last.get(spk)
        if prev is not None and prev != emo:
            total += weighted_shift(emotion_similarity(wheel, prev, emo), params)
        last[spk] = emo
    if stats is not None:
        stats["visits"] = stats.get("visits", 0) + len(speakers)
    n_sp = len(last)
    return (total + n_sp) / (len(speakers) + n_sp)


def conversation_difficulty(conversation: Conversation, wheel: EmotionWheel, params: DifficultyParams,
                            emotion_labels: Sequence[str] | None = None, stats: dict | None = None) -> float:
    """DIF of a conversation whose labels index ``emotion_labels`` (default: the wheel's labels)."""
    names = list(emotion_labels) if emotion_labels is not None else list(wheel.labels)
    emotions = []
    for u in conversation.utterances:
        if u.label is None:
            raise DataError(f"conversation {conversation.id!r} utterance {u.index} has no label")
        if not 0 <= u.label < len(names):
            raise DataError(
                f"conversation {conversation.id!r} utterance {u.index}: label {u.label} out of range"
            )
        emotions.append(names[u.label])
    return sequence_difficulty(conversation.speakers, emotions, wheel, params, stats)


@dataclass(frozen=True)
class CurriculumSchedule:
    buckets: tuple[tuple[str, ...], ...]
    difficulties: dict[str, float] = field(repr=False)
    total_epochs: int | None = None

    @property
    def num_buckets(self) -> int:
        return len(self.buckets)

    @property
    def ordered_ids(self) -> list[str]:
        return [cid for bucket in self.buckets for cid in bucket]


def bucket_sizes(m: int, k: int) -> list[int]:
    """Near-equal sizes summing to ``m``; the larger buckets come first."""
    q, r = divmod(m, k)
    return [q + 1] * r + [q] * (k - r)


def build_schedule(conversations: Sequence[Conversation], wheel: EmotionWheel, params: DifficultyParams,
                   num_buckets: int, emotion_labels: Sequence[str] | None = None,
                   total_epochs: int | None = None, stats: dict | None = None) -> CurriculumSchedule:
    """Sort by (DIF, id) and cut into ``num_buckets`` contiguous buckets."""
    if num_buckets < 1:
        raise ConfigError(f"num_buckets must be >= 1, got {num_buckets}")
    if num_buckets > len(conversations):
        raise ConfigError(f"num_buckets={num_buckets} exceeds {len(conversations)} conversations")
    dif = {}
    for conv in conversations:
        if conv.id in dif:
            raise DataError(f"duplicate conversation id {conv.id!r}")
        dif[conv.id] = conversation_difficulty(conv, wheel, params, emotion_labels, stats)
    order = sorted(dif, key=lambda cid: (dif[cid], cid))
    buckets, start = [], 0
    for size in bucket_sizes(len(order), num_buckets):
        buckets.append(tuple(order[start : start + size]))
        start += size
    return CurriculumSchedule(tuple(buckets), dif, total_epochs)


def buckets_in_play(epoch: int, num_buckets: int, epochs_per_bucket: int = 1) -> int:
    """How many buckets the 1-based ``epoch`` trains on."""
    return min(num_buckets, -(-epoch // epochs_per_bucket))


def _epoch_order(ids: Iterable[str], seed: int, epoch: int) -> list[str]:
    # Shuffle from id order, so the result depends only on the set of ids.
    ids = sorted(ids)
    rng = np.random.default_rng((seed, epoch))
    return [ids[j] for j in rng.permutation(len(ids))]


def shuffled_epoch_plan(ids: Sequence[str], total_epochs: int, seed: int = 0) -> list[list[str]]:
    """Every id in every epoch; the plan used when the curriculum is off."""
    if total_epochs < 1:
        raise ConfigError(f"total_epochs must be >= 1, got {total_epochs}")
    return [_epoch_order(ids, seed, e) for e in range(1, total_epochs + 1)]


def curriculum_epoch_plan(schedule: CurriculumSchedule, total_epochs: int | None = None, seed: int = 0,
                          epochs_per_bucket: int = 1) -> list[list[str]]:
    """Conversation ids per epoch, shuffled with a seed derived from (seed, epoch).

    Epoch ``e`` uses buckets ``1..ceil(e / epochs_per_bucket)``; once every
    bucket is in, each epoch uses the full set.
    """
    t = total_epochs if total_epochs is not None else schedule.total_epochs
    if t is None or t < 1:
        raise ConfigError(f"total_epochs must be >= 1, got {t}")
    if epochs_per_bucket < 1:
        raise ConfigError(f"epochs_per_bucket must be >= 1, got {epochs_per_bucket}")
    plan = []
    for epoch in range(1, t + 1):
        used = buckets_in_play(epoch, schedule.num_buckets, epochs_per_bucket)
        plan.append(_epoch_order((cid for bucket in schedule.buckets[:used] for cid in bucket), seed, epoch))
    return plan


def format_difficulty_report(difficulties: Mapping[str, float]) -> str:
    """``conversation_id DIF`` per line, ascending by DIF then id."""
    order = sorted(difficulties, key=lambda cid: (difficulties[cid], cid))
    return "".join(f"{cid} {difficulties[cid]!r}\n" for cid in order)
