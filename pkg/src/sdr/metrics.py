"""Video-level ROC-AUC (pairwise credit with half credit for ties) and accuracy."""
import numpy as np


class UndefinedMetricError(ValueError):
    pass


def auc(scores, labels):
    """Probability a random fake outscores a random real; ties count 1/2.

    Computed from midranks, which equals the pairwise count exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    # midrank for each run of tied scores
    bounds = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(scores)]])
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def acc(scores, labels, threshold=0.5):
    """Fraction with (score >= threshold) == (label == fake)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise UndefinedMetricError("accuracy of an empty set")
    return float(np.mean((scores >= threshold) == (labels == 1)))


def video_level(scores, labels, video_ids):
    """Average clip scores per video. Returns (scores, labels) in video-id order."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    ids = np.asarray(video_ids)
    uniq = np.unique(ids)
    vs, vl = [], []
    for v in uniq:
        m = ids == v
        if len(set(labels[m].tolist())) != 1:
            raise ValueError(f"video {v} has clips with different labels")
        vs.append(scores[m].mean())
        vl.append(labels[m][0])
    return np.array(vs), np.array(vl)
