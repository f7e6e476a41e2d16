"""Dataset files, splitting, and a synthetic conversation generator.

File format: line-delimited JSON. Line 1 is a header object

    {"name": ..., "emotion_labels": [...], "modality_dims": {"text": d, "audio": d, "visual": d}, "wheel": ...}

and every further line is one conversation

    {"id": ..., "utterances": [{"index": 1, "speaker": ..., "label": 0,
                                "text_feat": [...], "audio_feat": [...], "visual_feat": [...]}, ...]}

Keys are written in this fixed order and floats in shortest round-trip form,
so loading and re-saving a canonical file reproduces it byte for byte. A
modality configured with width 0 is written as an empty list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from lsdgnn.convgraph import MODALITIES, Conversation, Utterance
from lsdgnn.errors import ConfigError, DataError, FormatError

HEADER_KEYS = ("name", "emotion_labels", "modality_dims", "wheel")
CONVERSATION_KEYS = ("id", "utterances")
UTTERANCE_KEYS = ("index", "speaker", "label", "text_feat", "audio_feat", "visual_feat")

# Label sets and input widths of the two public benchmarks. Feature files for
# them are not shipped; extract features externally and build a manifest with
# manifest_from_arrays().
IEMOCAP_LABELS = ("happy", "sad", "neutral", "angry", "excited", "frustrated")
MELD_LABELS = ("neutral", "surprise", "fear", "sadness", "joy", "disgust", "anger")
BENCHMARK_WIDTHS = {"IEMOCAP": 2948, "MELD": 1666}


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    name: str
    emotion_labels: tuple[str, ...]
    modality_dims: dict[str, int]
    conversations: tuple[Conversation, ...]
    wheel: str | None = None  # wheel file reference; None means the packaged default

    def __post_init__(self):
        object.__setattr__(self, "emotion_labels", tuple(self.emotion_labels))
        object.__setattr__(self, "conversations", tuple(self.conversations))
        dims = dict(self.modality_dims)
        unknown = set(dims) - set(MODALITIES)
        if unknown:
            raise DataError(f"unknown modalities {sorted(unknown)}")
        object.__setattr__(self, "modality_dims", {m: int(dims.get(m, 0)) for m in MODALITIES})
        validate_manifest(self)

    @property
    def num_classes(self) -> int:
        return len(self.emotion_labels)

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.conversations]

    def by_id(self) -> dict[str, Conversation]:
        return {c.id: c for c in self.conversations}

    def subset(self, ids: Sequence[str], name: str | None = None) -> DatasetManifest:
        lookup = self.by_id()
        missing = [cid for cid in ids if cid not in lookup]
        if missing:
            raise DataError(f"unknown conversation ids {missing}")
        return replace(self, name=name or self.name, conversations=tuple(lookup[cid] for cid in ids))

    def num_utterances(self) -> int:
        return sum(len(c) for c in self.conversations)


def validate_manifest(manifest: DatasetManifest) -> None:
    K = len(manifest.emotion_labels)
    if K == 0:
        raise DataError("emotion_labels is empty")
    if len(set(manifest.emotion_labels)) != K:
        raise DataError("emotion_labels contains duplicates")
    if any(d < 0 for d in manifest.modality_dims.values()):
        raise DataError(f"negative modality width in {manifest.modality_dims}")
    seen = set()
    for conv in manifest.conversations:
        if conv.id in seen:
            raise DataError(f"duplicate conversation id {conv.id!r}")
        seen.add(conv.id)
        if not conv.utterances:
            raise DataError(f"conversation {conv.id!r} has no utterances")
        for u in conv.utterances:
            where = f"conversation {conv.id!r} utterance {u.index}"
            if u.label is not None and not 0 <= u.label < K:
                raise DataError(f"{where}: label {u.label} outside [0, {K})")
            for m in MODALITIES:
                vec = getattr(u, m)
                width = 0 if vec is None else vec.size
                if width != manifest.modality_dims[m]:
                    raise DataError(f"{where}: {m} width {width} != configured {manifest.modality_dims[m]}")
                if width and not np.all(np.isfinite(vec)):
                    raise DataError(f"{where}: non-finite {m} features")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _floats(vec: np.ndarray | None) -> list[float]:
    return [] if vec is None else [float(x) for x in vec]


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def dumps_dataset(manifest: DatasetManifest) -> str:
    header = {
        "name": manifest.name,
        "emotion_labels": list(manifest.emotion_labels),
        "modality_dims": {m: manifest.modality_dims[m] for m in MODALITIES},
        "wheel": manifest.wheel,
    }
    lines = [_dumps(header)]
    for conv in manifest.conversations:
        utts = [
            {
                "index": u.index,
                "speaker": u.speaker,
                "label": u.label,
                "text_feat": _floats(u.text),
                "audio_feat": _floats(u.audio),
                "visual_feat": _floats(u.visual),
            }
            for u in conv.utterances
        ]
        lines.append(_dumps({"id": conv.id, "utterances": utts}))
    return "\n".join(lines) + "\n"


def save_dataset(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(manifest))


def _expect_keys(obj, keys: Sequence[str], what: str, lineno: int) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{what} must be an object", lineno)
    if set(obj) != set(keys):
        missing = sorted(set(keys) - set(obj))
        extra = sorted(set(obj) - set(keys))
        raise FormatError(f"{what}: missing keys {missing}, unexpected keys {extra}", lineno)


def _feature(values, what: str, lineno: int) -> np.ndarray | None:
    if not isinstance(values, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in values
    ):
        raise FormatError(f"{what} must be a list of numbers", lineno)
    return np.array(values, dtype=np.float64) if values else None


def loads_dataset(text: str) -> DatasetManifest:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty dataset file", 1)
    records = []
    for lineno, line in enumerate(lines, start=1):
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON ({exc.msg} at column {exc.colno})", lineno) from None
    lineno, header = records[0]
    _expect_keys(header, HEADER_KEYS, "header", lineno)
    labels = header["emotion_labels"]
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise FormatError("emotion_labels must be a list of strings", lineno)
    dims = header["modality_dims"]
    if not isinstance(dims, dict) or set(dims) != set(MODALITIES) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in dims.values()
    ):
        raise FormatError(f"modality_dims must map {list(MODALITIES)} to integers", lineno)
    wheel = header["wheel"]
    if wheel is not None and not isinstance(wheel, str):
        raise FormatError("wheel must be a string or null", lineno)

    conversations = []
    for lineno, rec in records[1:]:
        _expect_keys(rec, CONVERSATION_KEYS, "conversation", lineno)
        cid = rec["id"]
        if not isinstance(cid, str) or not cid:
            raise FormatError("conversation id must be a non-empty string", lineno)
        if not isinstance(rec["utterances"], list):
            raise FormatError(f"conversation {cid!r}: utterances must be a list", lineno)
        utts = []
        for k, u in enumerate(rec["utterances"], start=1):
            what = f"conversation {cid!r} utterance #{k}"
            _expect_keys(u, UTTERANCE_KEYS, what, lineno)
            if not isinstance(u["index"], int) or isinstance(u["index"], bool):
                raise FormatError(f"{what}: index must be an integer", lineno)
            if u["index"] != k:
                raise FormatError(
                    f"{what}: index {u['index']} breaks the contiguous 1..N ordering", lineno
                )
            if not isinstance(u["speaker"], str):
                raise FormatError(f"{what}: speaker must be a string", lineno)
            label = u["label"]
            if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
                raise FormatError(f"{what}: label must be an integer or null", lineno)
            if label is not None and not 0 <= label < len(labels):
                raise DataError(f"line {lineno}: {what}: label {label} outside [0, {len(labels)})")
            for m in MODALITIES:
                got = len(u[f"{m}_feat"]) if isinstance(u[f"{m}_feat"], list) else -1
                if got != dims[m]:
                    raise DataError(f"line {lineno}: {what}: {m}_feat width {got} != configured {dims[m]}")
            try:
                utts.append(Utterance(
                    index=k,
                    speaker=u["speaker"],
                    label=label,
                    text=_feature(u["text_feat"], f"{what} text_feat", lineno),
                    audio=_feature(u["audio_feat"], f"{what} audio_feat", lineno),
                    visual=_feature(u["visual_feat"], f"{what} visual_feat", lineno),
                ))
            except DataError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
        conversations.append(Conversation(cid, tuple(utts)))
    if not isinstance(header["name"], str):
        raise FormatError("name must be a string", 1)
    return DatasetManifest(header["name"], tuple(labels), dims, tuple(conversations), wheel)


def load_dataset(path: str | Path) -> DatasetManifest:
    return loads_dataset(Path(path).read_text())


def manifest_from_arrays(name: str, emotion_labels: Sequence[str], conversations: Sequence[Mapping],
                         wheel: str | None = None) -> DatasetManifest:
    """Build a manifest from externally extracted features.

    Each conversation mapping needs ``id``, ``speakers`` (length n), ``labels``
    (length n) and any of ``text``/``audio``/``visual`` as (n, d) arrays.
    Widths are taken from the first conversation.
    """
    if not conversations:
        raise DataError("no conversations given")
    dims = {m: (np.asarray(conversations[0][m]).shape[1] if m in conversations[0] else 0) for m in MODALITIES}
    convs = []
    for c in conversations:
        n = len(c["speakers"])
        if len(c["labels"]) != n:
            raise DataError(f"conversation {c['id']!r}: {len(c['labels'])} labels for {n} speakers")
        mats = {m: np.asarray(c[m], dtype=np.float64) for m in MODALITIES if m in c}
        for m, mat in mats.items():
            if mat.ndim != 2 or mat.shape[0] != n:
                raise DataError(f"conversation {c['id']!r}: {m} features have shape {mat.shape}, need ({n}, d)")
        utts = tuple(
            Utterance(i + 1, c["speakers"][i], None if c["labels"][i] is None else int(c["labels"][i]),
                      **{m: mats[m][i] for m in mats})
            for i in range(n)
        )
        convs.append(Conversation(str(c["id"]), utts))
    return DatasetManifest(name, tuple(emotion_labels), dims, tuple(convs), wheel)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_counts(m: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``m`` items; ties go to the earlier split."""
    raw = [m * f for f in fractions]
    counts = [math.floor(x) for x in raw]
    left = m - sum(counts)
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:left]:
        counts[k] += 1
    return counts


def split_dataset(manifest: DatasetManifest, fractions: Sequence[float] = (0.8, 0.1, 0.1),
                  seed: int = 0) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Seeded conversation-level split into (train, dev, test)."""
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(not f > 0 for f in fractions):
        raise ConfigError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    m = len(manifest.conversations)
    counts = split_counts(m, fractions)
    if min(counts) == 0:
        raise ConfigError(f"{m} conversations cannot fill splits {fractions} (counts {counts})")
    perm = np.random.default_rng(seed).permutation(m)
    ids = [manifest.conversations[j].id for j in perm]
    out, start = [], 0
    for part, count in zip(("train", "dev", "test"), counts):
        out.append(manifest.subset(ids[start : start + count], f"{manifest.name}/{part}"))
        start += count
    return tuple(out)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    num_conversations: int = 20
    speakers: tuple[int, int] = (2, 3)  # inclusive range per conversation
    utterances: tuple[int, int] = (6, 10)  # inclusive range per conversation
    shift_probability: float = 0.3
    separation: float = 4.0  # minimum distance between class means, per modality
    noise_std: float = 1.0
    modality_dims: dict = field(default_factory=lambda: {"text": 16, "audio": 0, "visual": 0})
    num_classes: int = 6
    emotion_labels: tuple[str, ...] | None = None
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        self.speakers = tuple(self.speakers)
        self.utterances = tuple(self.utterances)
        for what, (lo, hi) in (("speakers", self.speakers), ("utterances", self.utterances)):
            if not 1 <= lo <= hi:
                raise ConfigError(f"{what} range must satisfy 1 <= lo <= hi, got ({lo}, {hi})")
        if self.speakers[0] > self.utterances[0]:
            raise ConfigError("every conversation needs at least as many utterances as speakers")
        if self.num_conversations < 1:
            raise ConfigError(f"num_conversations must be >= 1, got {self.num_conversations}")
        if not 0.0 <= self.shift_probability <= 1.0:
            raise ConfigError(f"shift_probability must lie in [0, 1], got {self.shift_probability}")
        if not self.separation > 0 or not self.noise_std > 0:
            raise ConfigError("separation and noise_std must be positive")
        unknown = set(self.modality_dims) - set(MODALITIES)
        if unknown:
            raise ConfigError(f"unknown modalities {sorted(unknown)}")
        self.modality_dims = {m: int(self.modality_dims.get(m, 0)) for m in MODALITIES}
        if sum(self.modality_dims.values()) == 0 or min(self.modality_dims.values()) < 0:
            raise ConfigError(f"modality_dims need at least one positive width, got {self.modality_dims}")
        if self.emotion_labels is None:
            pool = IEMOCAP_LABELS + ("fear", "surprise", "disgust")
            if self.num_classes > len(pool):
                raise ConfigError(f"give emotion_labels explicitly for more than {len(pool)} classes")
            self.emotion_labels = pool[: self.num_classes]
        self.emotion_labels = tuple(self.emotion_labels)
        if len(self.emotion_labels) != self.num_classes:
            raise ConfigError(f"{len(self.emotion_labels)} emotion labels for {self.num_classes} classes")
        if self.num_classes < 2 and self.shift_probability > 0:
            raise ConfigError("shifts need at least two classes")

    @classmethod
    def from_dict(cls, raw: Mapping) -> SynthConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown synth config keys {sorted(extra)}")
        return cls(**raw)


def class_means(rng: np.random.Generator, K: int, d: int, separation: float) -> np.ndarray:
    """K Gaussian-drawn means rescaled so the closest pair is ``separation`` apart."""
    means = rng.normal(size=(K, d))
    if K < 2:
        return means
    diff = means[:, None, :] - means[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    closest = dist[np.triu_indices(K, 1)].min()
    return means * (separation / closest)


def generate_synthetic(config: SynthConfig) -> DatasetManifest:
    rng = np.random.default_rng(config.seed)
    K = config.num_classes
    means = {m: class_means(rng, K, d, config.separation) for m, d in config.modality_dims.items() if d}
    width = len(str(config.num_conversations - 1))
    convs = []
    for c in range(config.num_conversations):
        n_sp = int(rng.integers(config.speakers[0], config.speakers[1] + 1))
        n_u = int(rng.integers(max(config.utterances[0], n_sp), config.utterances[1] + 1))
        names = [chr(ord("A") + s) if s < 26 else f"S{s}" for s in range(n_sp)]
        # Every speaker talks at least once; the remaining turns are uniform.
        order = list(rng.permutation(n_sp)) + list(rng.integers(0, n_sp, size=n_u - n_sp))
        current: dict[int, int] = {}
        utts = []
        for i, s in enumerate(order):
            s = int(s)
            if s not in current:
                emo = int(rng.integers(K))
            elif rng.random() < config.shift_probability:
                emo = int(rng.integers(K - 1))
                emo += emo >= current[s]
            else:
                emo = current[s]
            current[s] = emo
            feats = {m: means[m][emo] + config.noise_std * rng.normal(size=means[m].shape[1]) for m in means}
            utts.append(Utterance(i + 1, names[s], emo, **feats))
        convs.append(Conversation(f"conv{c:0{width}d}", tuple(utts)))
    return DatasetManifest(config.name, config.emotion_labels, config.modality_dims, tuple(convs))
