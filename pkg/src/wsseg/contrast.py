"""Timestamp-constrained hybrid hard example mining and the
sample-to-prototype InfoNCE loss.

Anchors mix uniformly random positions with "hard" ones whose cosine
against their own positive prototype is closest to -1. Negative
prototypes per anchor are the hardest 60% (highest similarity), thinned
to a random 50%; percentages round up. Samples between two timestamps
whose prediction matches neither flanking class contribute an extra pair:
the wrongly predicted class as negative, the equal-weight mixture of the
two flanking prototypes as positive.

Prototype rows act as constants here (stop-gradient): the bank evolves
only through its momentum updates, so the loss returns gradients for the
embeddings alone.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContrastPair:
    anchor: int  # sample index
    pos_classes: tuple  # one class, or two for a mixture positive
    pos_weights: tuple
    neg_classes: tuple

    def __post_init__(self):
        if set(self.pos_classes) & set(self.neg_classes):
            raise ValueError("a class cannot be both positive and negative")


@dataclass
class ContrastBatch:
    pairs: list

    def __len__(self):
        return len(self.pairs)

    def __bool__(self):
        return bool(self.pairs)


def mine_pairs(vn, mask_classes, y_prob, annotations, bank, seed, anchor_count=64):
    """Build a ContrastBatch for one sequence.

    ``vn`` is the (dim, T) L2-normalized embedding map, ``mask_classes``
    the CAM pseudo mask, ``y_prob`` the final-stage (C, T) probabilities.
    Returns an empty batch (skip signal) when fewer than two prototypes
    are initialized.
    """
    rng = np.random.default_rng(seed)
    init = bank.initialized_classes()
    if init.size < 2:
        return ContrastBatch([])
    init_set = set(int(c) for c in init)
    t_len = vn.shape[1]

    eligible = np.flatnonzero(np.isin(mask_classes, init))
    pairs = []
    if eligible.size:
        n = min(anchor_count, eligible.size)
        n_rand = math.ceil(n / 2)
        rand_pick = rng.choice(eligible, size=n_rand, replace=False)
        chosen = set(int(t) for t in rand_pick)
        n_hard = n - n_rand
        if n_hard > 0:
            rest = eligible[~np.isin(eligible, rand_pick)]
            # hardness: cosine with own positive prototype closest to -1
            own = (vn[:, rest] * bank.p[mask_classes[rest]].T).sum(axis=0)
            order = np.argsort(own, kind="stable")[:n_hard]
            chosen.update(int(t) for t in rest[order])
        for t in sorted(chosen):
            pos = int(mask_classes[t])
            negs = _select_negatives(vn[:, t], pos, init, bank, rng)
            pairs.append(
                ContrastPair(anchor=t, pos_classes=(pos,), pos_weights=(1.0,), neg_classes=negs)
            )

    predicted = np.argmax(y_prob, axis=0)
    positions = annotations.positions
    classes = annotations.classes
    for n_idx in range(len(positions) - 1):
        lo, hi = int(positions[n_idx]), int(positions[n_idx + 1])
        ca, cb = int(classes[n_idx]), int(classes[n_idx + 1])
        if not {ca, cb} <= init_set:
            continue
        for t in range(lo + 1, min(hi, t_len)):
            wrong = int(predicted[t])
            if wrong in (ca, cb) or wrong not in init_set:
                continue
            if ca == cb:
                pos_classes, pos_weights = (ca,), (1.0,)
            else:
                pos_classes, pos_weights = (ca, cb), (0.5, 0.5)
            pairs.append(
                ContrastPair(
                    anchor=t,
                    pos_classes=pos_classes,
                    pos_weights=pos_weights,
                    neg_classes=(wrong,),
                )
            )
    return ContrastBatch(pairs)


def _select_negatives(v_t, pos, init, bank, rng):
    candidates = np.array([c for c in init if c != pos], dtype=np.int64)
    if candidates.size == 0:
        return ()
    sims = bank.p[candidates] @ v_t
    k_hard = math.ceil(0.6 * candidates.size)
    order = np.argsort(-sims, kind="stable")[:k_hard]
    pool = candidates[order]
    k_keep = math.ceil(0.5 * pool.size)
    keep = rng.choice(pool, size=k_keep, replace=False)
    return tuple(int(c) for c in np.sort(keep))


def info_nce(batch, vn, bank, tau, with_grad=False):
    """Mean InfoNCE over the batch; optionally the gradient wrt ``vn``.

    Per anchor: -log( exp(v.P_pos/tau) / sum_{c in {pos} u negs} exp(v.P_c/tau) ).
    Mixture positives use the weighted prototype vector. Anchors without
    negatives contribute -log 1 = 0.
    """
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    if not batch:
        raise ValueError("batch must be non-empty")
    loss = 0.0
    d_vn = np.zeros_like(vn) if with_grad else None
    for pair in batch.pairs:
        v = vn[:, pair.anchor]
        p_pos = np.zeros(vn.shape[0])
        for c, w in zip(pair.pos_classes, pair.pos_weights):
            p_pos += w * bank.p[c]
        protos = [p_pos] + [bank.p[c] for c in pair.neg_classes]
        logits = np.array([v @ p for p in protos]) / tau
        shift = logits.max()
        exp = np.exp(logits - shift)
        total = exp.sum()
        loss += float(np.log(total) + shift - logits[0])
        if with_grad:
            soft = exp / total
            grad = -p_pos / tau
            for p, s in zip(protos, soft):
                grad = grad + (s / tau) * p
            d_vn[:, pair.anchor] += grad
    n = len(batch.pairs)
    loss /= n
    if with_grad:
        d_vn /= n
        return loss, d_vn
    return loss
