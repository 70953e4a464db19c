"""Hard-example mining and sample-to-prototype InfoNCE."""

import numpy as np
import pytest

from wsseg.contrast import ContrastBatch, ContrastPair, info_nce, mine_pairs
from wsseg.proto import PrototypeBank, update_bank
from wsseg.seqdata import TimestampAnnotations

from conftest import assert_grad_close, central_difference


def _bank(vectors, momentum=0.9):
    vectors = np.asarray(vectors, dtype=np.float64)
    bank = PrototypeBank(vectors.shape[0], vectors.shape[1], momentum)
    for c, v in enumerate(vectors):
        if np.any(v != 0.0):
            update_bank(bank, c, v)
    return bank


def _unit_rows(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _setup(rng, t_len=40, c=4, dim=6):
    vn = _unit_rows(rng, t_len, dim).T
    bank = _bank(_unit_rows(rng, c, dim))
    mask = rng.integers(0, c, size=t_len)
    y_prob = rng.dirichlet(np.ones(c), size=t_len).T
    ann = TimestampAnnotations(np.array([5, 20, 35]), np.array([1, 2, 3]))
    return vn, bank, mask, y_prob, ann


def test_mine_requires_two_initialized_classes(rng):
    vn, _, mask, y_prob, ann = _setup(rng)
    poor = PrototypeBank(4, 6)
    update_bank(poor, 1, np.ones(6) / np.sqrt(6))
    assert not mine_pairs(vn, mask, y_prob, ann, poor, seed=0)


def test_mine_two_class_pool_degenerates_to_single_negative(rng):
    vn, _, _, _, ann = _setup(rng, c=2)
    bank = _bank(_unit_rows(rng, 2, 6))
    mask = rng.integers(0, 2, size=40)
    y_prob = rng.dirichlet(np.ones(2), size=40).T
    ann2 = TimestampAnnotations(np.array([5, 20]), np.array([0, 1]))
    batch = mine_pairs(vn, mask, y_prob, ann2, bank, seed=3)
    regular = [p for p in batch.pairs if len(p.pos_classes) == 1]
    assert regular and all(len(p.neg_classes) == 1 for p in regular)


def test_mine_no_constraint_pairs_when_predictions_agree(rng):
    vn, bank, _, _, _ = _setup(rng)
    t_len = vn.shape[1]
    ann = TimestampAnnotations(np.array([0, t_len - 1]), np.array([1, 2]))
    mask = np.ones(t_len, dtype=int)
    y_prob = np.zeros((4, t_len))
    y_prob[1, : t_len // 2] = 1.0  # every prediction matches a flanking class
    y_prob[2, t_len // 2 :] = 1.0
    batch = mine_pairs(vn, mask, y_prob, ann, bank, seed=1, anchor_count=8)
    assert all(len(p.pos_classes) == 1 for p in batch.pairs)


def test_mine_constraint_pairs_for_misclassified_middle(rng):
    vn, bank, _, _, _ = _setup(rng)
    t_len = vn.shape[1]
    ann = TimestampAnnotations(np.array([0, t_len - 1]), np.array([1, 2]))
    mask = np.ones(t_len, dtype=int)
    y_prob = np.zeros((4, t_len))
    y_prob[1] = 1.0
    y_prob[:, 7] = 0.0
    y_prob[3, 7] = 1.0  # class 3 is neither flanking class
    batch = mine_pairs(vn, mask, y_prob, ann, bank, seed=1, anchor_count=8)
    mixtures = [p for p in batch.pairs if len(p.pos_classes) == 2]
    assert len(mixtures) == 1
    pair = mixtures[0]
    assert pair.anchor == 7
    assert pair.pos_classes == (1, 2) and pair.pos_weights == (0.5, 0.5)
    assert pair.neg_classes == (3,)


def test_mine_deterministic(rng):
    vn, bank, mask, y_prob, ann = _setup(rng)
    a = mine_pairs(vn, mask, y_prob, ann, bank, seed=77)
    b = mine_pairs(vn, mask, y_prob, ann, bank, seed=77)
    assert a.pairs == b.pairs


def test_mine_never_shares_pos_and_neg(rng):
    for seed in range(10):
        vn, bank, mask, y_prob, ann = _setup(rng)
        batch = mine_pairs(vn, mask, y_prob, ann, bank, seed=seed, anchor_count=16)
        for p in batch.pairs:
            assert not set(p.pos_classes) & set(p.neg_classes)


def test_contrast_pair_rejects_overlap():
    with pytest.raises(ValueError):
        ContrastPair(anchor=0, pos_classes=(1,), pos_weights=(1.0,), neg_classes=(1, 2))


def test_info_nce_no_negatives_is_zero(rng):
    vn = _unit_rows(rng, 3, 4).T
    bank = _bank(_unit_rows(rng, 2, 4))
    batch = ContrastBatch([ContrastPair(0, (1,), (1.0,), ())])
    assert info_nce(batch, vn, bank, tau=0.1) == 0.0


def test_info_nce_symmetric_similarities_log2():
    vn = np.array([[1.0], [0.0]])
    bank = _bank([[1.0, 0.0], [1.0, 0.0]])  # both prototypes equal: v.P equal
    batch = ContrastBatch([ContrastPair(0, (0,), (1.0,), (1,))])
    loss = info_nce(batch, vn, bank, tau=0.5)
    np.testing.assert_allclose(loss, np.log(2.0), rtol=1e-12)


def test_info_nce_scalar_oracle():
    # v.P_pos = 1, v.P_neg = -1, tau = 1 -> -log(e / (e + e^-1))
    vn = np.array([[1.0], [0.0]])
    bank = _bank([[1.0, 0.0], [-1.0, 0.0]])
    batch = ContrastBatch([ContrastPair(0, (0,), (1.0,), (1,))])
    loss = info_nce(batch, vn, bank, tau=1.0)
    np.testing.assert_allclose(loss, 0.126928011042972, rtol=1e-10)


def test_info_nce_shift_invariance(rng):
    vn = _unit_rows(rng, 1, 3).T
    base = _unit_rows(rng, 3, 3)
    batch = ContrastBatch([ContrastPair(0, (0,), (1.0,), (1, 2))])
    loss_a = info_nce(batch, vn, _bank(base), tau=0.3)
    # adding a constant vector along v to every prototype shifts all
    # similarities of the single anchor equally
    shift = 0.37 * vn[:, 0]
    loss_b = info_nce(batch, vn, _bank(base + shift), tau=0.3)
    np.testing.assert_allclose(loss_a, loss_b, atol=1e-10)


def test_info_nce_nonnegative(rng):
    for seed in range(10):
        local = np.random.default_rng(seed)
        vn, bank, mask, y_prob, ann = _setup(local)
        batch = mine_pairs(vn, mask, y_prob, ann, bank, seed=seed)
        if batch:
            assert info_nce(batch, vn, bank, tau=0.2) >= 0.0


def test_info_nce_requires_positive_temperature(rng):
    vn = _unit_rows(rng, 2, 3).T
    bank = _bank(_unit_rows(rng, 2, 3))
    batch = ContrastBatch([ContrastPair(0, (0,), (1.0,), (1,))])
    with pytest.raises(ValueError):
        info_nce(batch, vn, bank, tau=0.0)


def test_info_nce_gradient_matches_finite_differences(rng):
    vn = _unit_rows(rng, 6, 4).T.copy()
    bank = _bank(_unit_rows(rng, 3, 4))
    batch = ContrastBatch(
        [
            ContrastPair(0, (0,), (1.0,), (1, 2)),
            ContrastPair(2, (1, 2), (0.5, 0.5), (0,)),
            ContrastPair(4, (2,), (1.0,), (0,)),
        ]
    )
    loss, grad = info_nce(batch, vn, bank, tau=0.1, with_grad=True)
    numeric = central_difference(lambda: info_nce(batch, vn, bank, tau=0.1), vn, step=1e-4)
    assert_grad_close(grad, numeric)


def test_info_nce_mixture_positive_uses_weighted_vector(rng):
    vn = np.array([[1.0], [0.0]])
    bank = _bank([[0.6, 0.8], [0.6, -0.8], [-1.0, 0.0]])
    batch = ContrastBatch([ContrastPair(0, (0, 1), (0.5, 0.5), (2,))])
    p_mix = 0.5 * bank.p[0] + 0.5 * bank.p[1]
    s_pos = p_mix @ vn[:, 0] / 0.2
    s_neg = bank.p[2] @ vn[:, 0] / 0.2
    want = -(s_pos - np.logaddexp(s_pos, s_neg))
    np.testing.assert_allclose(info_nce(batch, vn, bank, tau=0.2), want, rtol=1e-10)
