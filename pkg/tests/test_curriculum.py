import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsdgnn.convgraph import Conversation, Utterance
from lsdgnn.curriculum import (
    CurriculumSchedule,
    DifficultyParams,
    EmotionWheel,
    build_schedule,
    bucket_sizes,
    conversation_difficulty,
    curriculum_epoch_plan,
    default_wheel,
    emotion_similarity,
    format_difficulty_report,
    load_wheel,
    sequence_difficulty,
    shuffled_epoch_plan,
    weighted_shift,
)
from lsdgnn.datasets import IEMOCAP_LABELS, MELD_LABELS
from lsdgnn.errors import ConfigError, DataError, FormatError, LabelIndexError

IEMOCAP = default_wheel().subset(IEMOCAP_LABELS)


def conv(cid, speakers, labels):
    return Conversation(cid, tuple(Utterance(i + 1, s, lab, text=[0.0]) for i, (s, lab) in enumerate(zip(speakers, labels))))


# ---------------------------------------------------------------- wheel


def test_default_wheel_angles():
    w = default_wheel()
    for label, deg in {"happy": 20, "excited": 45, "angry": 135, "fear": 130, "frustrated": 150,
                       "disgust": 165, "sad": 200, "joy": 20, "anger": 135, "sadness": 200}.items():
        v, a = w.point(label)
        assert abs(v - math.cos(math.radians(deg))) < 1e-15
        assert abs(a - math.sin(math.radians(deg))) < 1e-15
    assert w.point("surprise") == (0.0, 1.0)
    assert w.point("neutral") == (0.0, 0.0)


def test_default_wheel_covers_both_benchmarks():
    assert IEMOCAP.N == 6
    assert default_wheel().subset(MELD_LABELS).N == 7


def test_wheel_rejects_off_circle_points():
    with pytest.raises(ConfigError):
        EmotionWheel({"odd": (0.5, 0.5)})
    with pytest.raises(ConfigError):
        default_wheel().subset(["happy", "bored"])


def test_wheel_file_round_trip(tmp_path):
    path = tmp_path / "wheel.json"
    path.write_text(IEMOCAP.to_json())
    assert load_wheel(path).points == IEMOCAP.points


def test_wheel_file_errors(tmp_path):
    path = tmp_path / "wheel.json"
    path.write_text('{"points": {"happy": {"valence": 1.0}}}')
    with pytest.raises(FormatError):
        load_wheel(path)
    path.write_text('{"points": {}, "extra": 1}')
    with pytest.raises(FormatError):
        load_wheel(path)
    path.write_text('{"points": \n')
    with pytest.raises(FormatError, match="line"):
        load_wheel(path)


# ---------------------------------------------------------------- similarity


def test_similarity_cases():
    assert emotion_similarity(IEMOCAP, "happy", "happy") == 1.0
    assert emotion_similarity(IEMOCAP, "happy", "sad") == 0.0
    assert abs(emotion_similarity(IEMOCAP, "neutral", "angry") - 1 / 6) < 1e-9
    assert abs(emotion_similarity(IEMOCAP, "neutral", "angry") - 0.166667) < 1e-6
    assert abs(emotion_similarity(IEMOCAP, "happy", "excited") - 0.90631) < 1e-5
    assert abs(emotion_similarity(IEMOCAP, "happy", "excited") - math.cos(math.radians(25))) < 1e-12


def test_similarity_zero_valence_surprise_uses_dataset_count():
    meld = default_wheel().subset(MELD_LABELS)
    assert abs(emotion_similarity(meld, "surprise", "joy") - 1 / 7) < 1e-15


def test_similarity_same_sign_obtuse_clamps_to_zero():
    w = EmotionWheel({"a": (math.cos(math.radians(80)), math.sin(math.radians(80))),
                      "b": (math.cos(math.radians(-80)), math.sin(math.radians(-80)))})
    assert emotion_similarity(w, "a", "b") == 0.0


def test_similarity_unknown_label():
    with pytest.raises(LabelIndexError):
        emotion_similarity(IEMOCAP, "happy", "bored")


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(IEMOCAP_LABELS), st.sampled_from(IEMOCAP_LABELS))
def test_similarity_symmetric_and_bounded(a, b):
    s = emotion_similarity(IEMOCAP, a, b)
    assert s == emotion_similarity(IEMOCAP, b, a)
    assert 0.0 <= s <= 1.0
    va, vb = IEMOCAP.point(a)[0], IEMOCAP.point(b)[0]
    cases = [va * vb > 0, va * vb < 0, va * vb == 0]
    assert sum(cases) == 1
    if va * vb == 0:
        assert s == 1 / 6


# ---------------------------------------------------------------- weighted shift and difficulty


@pytest.mark.parametrize("k,b,s,want", [(1, 0.4, 1, 1.4), (1, 0.1, 0, 0.1), (-1, 1, 0.3, 0.7)])
def test_weighted_shift(k, b, s, want):
    assert abs(weighted_shift(s, DifficultyParams(k, b)) - want) < 1e-15


def test_difficulty_no_shift_single_speaker():
    assert sequence_difficulty("AAA", ["sad"] * 3, IEMOCAP, DifficultyParams()) == 0.25


def test_difficulty_opposite_valence_shift():
    got = sequence_difficulty("AABB", ["happy", "sad", "neutral", "neutral"], IEMOCAP, DifficultyParams(1, 0.4))
    assert abs(got - 0.4) < 1e-12


def test_difficulty_similar_emotions():
    got = sequence_difficulty("AA", ["happy", "excited"], IEMOCAP, DifficultyParams(1, 0.4))
    assert abs(got - 0.76877) < 1e-5
    assert abs(got - (math.cos(math.radians(25)) + 0.4 + 1) / 3) < 1e-12


def test_difficulty_only_compares_same_speaker_neighbours():
    # A: happy -> happy (no shift) even though B speaks sad in between.
    assert sequence_difficulty("ABA", ["happy", "sad", "happy"], IEMOCAP, DifficultyParams()) == 2 / 5


def test_conversation_difficulty_uses_label_names_and_requires_labels():
    c = conv("x", "AABB", [0, 1, 2, 2])  # happy, sad, neutral, neutral
    assert abs(conversation_difficulty(c, IEMOCAP, DifficultyParams(1, 0.4)) - 0.4) < 1e-12
    missing = conv("y", "AB", [0, None])
    with pytest.raises(DataError, match="utterance 2"):
        conversation_difficulty(missing, IEMOCAP, DifficultyParams())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from(IEMOCAP_LABELS)), min_size=1, max_size=15),
       st.floats(0, 1))
def test_difficulty_bounds_and_single_visit(pairs, b):
    speakers = [s for s, _ in pairs]
    emotions = [e for _, e in pairs]
    stats = {}
    d = sequence_difficulty(speakers, emotions, IEMOCAP, DifficultyParams(1.0, b), stats)
    n_u, n_sp = len(pairs), len(set(speakers))
    assert 0 < d <= (2 * n_u + n_sp) / (n_u + n_sp)
    assert stats["visits"] == n_u


# ---------------------------------------------------------------- schedule


def _dataset(m=10, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for c in range(m):
        n = int(rng.integers(2, 8))
        out.append(conv(f"c{c:02d}", [("A", "B")[int(x)] for x in rng.integers(0, 2, n)], rng.integers(0, 6, n).tolist()))
    return out


def test_bucket_sizes_larger_first():
    assert bucket_sizes(10, 5) == [2] * 5
    assert bucket_sizes(11, 3) == [4, 4, 3]
    assert bucket_sizes(7, 1) == [7]


def test_schedule_five_buckets_of_two_sorted():
    sched = build_schedule(_dataset(), IEMOCAP, DifficultyParams(), 5)
    assert [len(b) for b in sched.buckets] == [2] * 5
    difs = [sched.difficulties[c] for c in sched.ordered_ids]
    assert difs == sorted(difs)
    for lo, hi in zip(sched.buckets, sched.buckets[1:]):
        assert max(sched.difficulties[c] for c in lo) <= min(sched.difficulties[c] for c in hi)


def test_schedule_single_bucket_holds_everything():
    data = _dataset()
    sched = build_schedule(data, IEMOCAP, DifficultyParams(), 1)
    assert sorted(sched.buckets[0]) == sorted(c.id for c in data)


def test_schedule_ties_broken_by_id():
    data = [conv(cid, "AB", [0, 0]) for cid in ["d", "b", "a", "c"]]
    sched = build_schedule(data, IEMOCAP, DifficultyParams(), 2)
    assert sched.buckets == (("a", "b"), ("c", "d"))


def test_schedule_rejects_too_many_buckets():
    with pytest.raises(ConfigError):
        build_schedule(_dataset(3), IEMOCAP, DifficultyParams(), 4)


def test_epoch_plan_cumulative_then_full():
    sched = build_schedule(_dataset(), IEMOCAP, DifficultyParams(), 5)
    plan = curriculum_epoch_plan(sched, 9, seed=1)
    assert len(plan) == 9
    for e, ids in enumerate(plan, start=1):
        want = [c for b in sched.buckets[: min(e, 5)] for c in b]
        assert sorted(ids) == sorted(want)
    assert set(plan[0]) == set(sched.buckets[0])
    assert plan == curriculum_epoch_plan(sched, 9, seed=1)


def test_epoch_plan_inclusion_is_monotone():
    sched = build_schedule(_dataset(12), IEMOCAP, DifficultyParams(), 4)
    plan = curriculum_epoch_plan(sched, 8, seed=0)
    for a, b in zip(plan, plan[1:]):
        assert set(a) <= set(b)


def test_epochs_per_bucket_slows_the_schedule():
    sched = build_schedule(_dataset(), IEMOCAP, DifficultyParams(), 5)
    plan = curriculum_epoch_plan(sched, 12, seed=0, epochs_per_bucket=2)
    sizes = [len(p) for p in plan]
    assert sizes == [2, 2, 4, 4, 6, 6, 8, 8, 10, 10, 10, 10]


def test_single_bucket_plan_equals_plain_shuffle():
    data = _dataset()
    sched = build_schedule(data, IEMOCAP, DifficultyParams(), 1)
    assert curriculum_epoch_plan(sched, 4, seed=3) == shuffled_epoch_plan([c.id for c in data], 4, seed=3)


def test_difficulty_report_format():
    text = format_difficulty_report({"b": 0.5, "a": 0.5, "c": 0.25})
    assert text == "c 0.25\na 0.5\nb 0.5\n"


def test_packaged_wheel_is_valid_json():
    from importlib import resources

    raw = json.loads(resources.files("lsdgnn").joinpath("data/default_wheel.json").read_text())
    assert set(raw["points"]) >= set(IEMOCAP_LABELS) | set(MELD_LABELS)


def test_schedule_type_exposes_bucket_count():
    sched = CurriculumSchedule((("a",), ("b",)), {"a": 0.1, "b": 0.2}, 3)
    assert sched.num_buckets == 2
    assert len(curriculum_epoch_plan(sched)) == 3
