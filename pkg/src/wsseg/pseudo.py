"""Hybrid hard/soft pseudo-labels from a transport plan and timestamp
annotations.

Between two timestamps the class can only be one of the two flanking
classes. The plan decides how many samples lean each way; a scale
parameter converts those counts into hard one-hot regions at both ends,
and the middle keeps the plan's two-class soft distribution. Before the
first and after the last timestamp the nearest timestamp's class is used.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class PseudoLabels:
    y: np.ndarray  # (C, T) per-sample class distributions, columns sum to 1
    hard_mask: np.ndarray  # (T,) True where the column is a hard one-hot


def count_assignments(q, lo, hi, class_a, class_b):
    """Two-class restricted argmax counts over rows lo..hi inclusive.

    A row goes to ``class_a`` when ``q[t, a] >= q[t, b]`` (ties favor the
    earlier class). The counts always sum to the interval length.
    """
    if class_a == class_b:
        raise ValueError("classes must differ")
    if lo > hi:
        return 0, 0
    rows = q[lo : hi + 1]
    n_a = int(np.count_nonzero(rows[:, class_a] >= rows[:, class_b]))
    return n_a, (hi - lo + 1) - n_a


def normalize_two_class(q, t, class_a, class_b):
    """Scale (q[t,a], q[t,b]) to sum to one; (0.5, 0.5) when both vanish."""
    qa = float(q[t, class_a])
    qb = float(q[t, class_b])
    total = qa + qb
    if total <= 0.0:
        return 0.5, 0.5
    return qa / total, qb / total


def generate(q, annotations, eps_hard, num_classes=None):
    """Build pseudo-labels for a full sequence.

    ``q`` is the (T, C) transport plan read as per-sample class scores
    (columns of absent classes may be zero). Per interval (t_n, t_{n+1})
    the first floor(eps_hard * N_a) interior samples are hard a, the last
    floor(eps_hard * N_b) hard b, the rest soft. Region cuts use floors,
    so the hard set grows monotonically with eps_hard.
    """
    if not 0.0 <= eps_hard <= 1.0:
        raise ValueError("eps_hard must lie in [0, 1]")
    q = np.asarray(q, dtype=np.float64)
    t_len, c = q.shape
    if num_classes is not None:
        c = num_classes
    positions = annotations.positions
    classes = annotations.classes
    if positions.size == 0:
        raise ValueError("annotations must contain at least one timestamp")
    if positions[0] < 0 or positions[-1] >= t_len:
        raise ValueError("timestamp positions outside the sequence")

    y = np.zeros((c, t_len))
    hard = np.zeros(t_len, dtype=bool)

    first, last = int(positions[0]), int(positions[-1])
    y[int(classes[0]), : first + 1] = 1.0
    hard[: first + 1] = True
    y[:, last:] = 0.0
    y[int(classes[-1]), last:] = 1.0
    hard[last:] = True

    for n in range(positions.size - 1):
        t_n, t_next = int(positions[n]), int(positions[n + 1])
        a, b = int(classes[n]), int(classes[n + 1])
        y[:, t_n] = 0.0
        y[a, t_n] = 1.0
        hard[t_n] = True
        interior = t_next - t_n - 1
        if interior <= 0:
            continue
        if a == b:
            y[a, t_n + 1 : t_next] = 1.0
            hard[t_n + 1 : t_next] = True
            continue
        n_a, n_b = count_assignments(q, t_n + 1, t_next - 1, a, b)
        hard_a = int(np.floor(eps_hard * n_a))
        hard_b = int(np.floor(eps_hard * n_b))
        if hard_a + hard_b > interior:  # unreachable for consistent counts
            hard_a = int(np.floor(interior * n_a / (n_a + n_b)))
            hard_b = interior - hard_a
        for offset in range(interior):
            t = t_n + 1 + offset
            if offset < hard_a:
                y[a, t] = 1.0
                hard[t] = True
            elif offset >= interior - hard_b:
                y[b, t] = 1.0
                hard[t] = True
            else:
                qa, qb = normalize_two_class(q, t, a, b)
                y[a, t] = qa
                y[b, t] = qb
    return PseudoLabels(y=y, hard_mask=hard)
