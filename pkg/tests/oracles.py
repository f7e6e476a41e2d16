"""Slow, independent reference implementations used as test oracles."""

import numpy as np


def brute_force_edges(speakers, omega):
    """Literal reading of the construction: for each utterance i >= 2 walk
    j = i-1, i-2, ..., 1, link every j visited, and stop right after the
    omega-th same-speaker link. omega=None never stops early."""
    edges = set()
    n = len(speakers)
    for i in range(2, n + 1):
        same = 0
        j = i - 1
        while j >= 1:
            rel = 1 if speakers[j - 1] == speakers[i - 1] else 0
            edges.add((j, i, rel))
            same += rel
            if omega is not None and same == omega:
                break
            j -= 1
    return edges


def naive_f1_scores(labels, preds, K):
    """Per-class precision/recall/F1 by counting, then weighted and macro means."""
    labels, preds = list(labels), list(preds)
    f1s, supports = [], []
    for k in range(K):
        tp = sum(1 for y, p in zip(labels, preds) if y == k and p == k)
        fp = sum(1 for y, p in zip(labels, preds) if y != k and p == k)
        fn = sum(1 for y, p in zip(labels, preds) if y == k and p != k)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        f1s.append(f1)
        supports.append(tp + fn)
    total = len(labels)
    weighted = sum(f * s for f, s in zip(f1s, supports)) / total
    accuracy = sum(1 for y, p in zip(labels, preds) if y == p) / total
    return f1s, weighted, float(np.mean(f1s)), accuracy


def random_speakers(rng, max_n=12, max_speakers=4):
    n = int(rng.integers(1, max_n + 1))
    k = int(rng.integers(1, max_speakers + 1))
    return tuple("ABCD"[int(s)] for s in rng.integers(0, k, size=n))
