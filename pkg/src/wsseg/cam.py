"""Class activation maps: project the multi-label classifier weight back
onto the feature map to localize each class along the sequence.

CAM matrices are ``(C, T)`` and nonnegative (ReLU). The pseudo mask is the
per-column argmax over raw CAM values; per-class max-normalization is
applied separately where comparable confidences are needed.
"""

import numpy as np


def compute_cams(z, weight):
    """ReLU(weight @ z): one activation row per class.

    ``z`` is the (F, T) feature map, ``weight`` the (C, F) multi-label
    classifier weight (bias excluded).
    """
    z = np.asarray(z)
    weight = np.asarray(weight)
    if weight.shape[1] != z.shape[0]:
        raise ValueError(f"weight is {weight.shape}, feature map has {z.shape[0]} channels")
    return np.maximum(weight @ z, 0.0)


def normalize_cams(m):
    """Divide each class row by its max; zero rows stay zero. Idempotent."""
    m = np.asarray(m, dtype=np.float64)
    peaks = m.max(axis=1, keepdims=True)
    scale = np.where(peaks > 0.0, peaks, 1.0)
    return m / scale


def pseudo_mask(m):
    """Per-sample class assignment: argmax over classes, ties to the lowest index."""
    return np.argmax(m, axis=0)
