"""Hardest-in-batch contrastive margin loss on unit descriptors."""

import numpy as np


def contrastive_loss(desc_p: np.ndarray, desc_q: np.ndarray,
                     margin_pos: float, margin_neg: float):
    """Loss and analytic gradients for a batch of corresponding descriptors.

    Row i of desc_p and desc_q are descriptors of the same surface point.
    Per anchor, the positive term penalizes pair distance above margin_pos
    and the negative term penalizes the hardest (smallest) cross-pair
    distance below margin_neg; the hardest negative is searched over both
    directions (p_i against every q_j and q_i against every p_j, j != i).
    Ties pick the first candidate in that scan order, and gradients flow
    only through the selected terms.

    Returns (loss, grad_p, grad_q).
    """
    p = np.asarray(desc_p, dtype=np.float64)
    q = np.asarray(desc_q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2:
        raise ValueError(f"descriptor batches must share shape, got "
                         f"{p.shape} vs {q.shape}")
    n = p.shape[0]
    if n < 2:
        raise ValueError("batch must contain at least 2 pairs "
                         "(negatives must exist)")

    d2 = np.maximum(
        (p * p).sum(1)[:, None] + (q * q).sum(1)[None, :] - 2.0 * (p @ q.T), 0.0)
    dist = np.sqrt(d2)
    pos = np.diag(dist).copy()

    off = dist.copy()
    np.fill_diagonal(off, np.inf)
    pq_idx = off.argmin(axis=1)            # hardest q_j for p_i
    pq_val = off[np.arange(n), pq_idx]
    qp_idx = off.argmin(axis=0)            # hardest p_j for q_i (column scan)
    qp_val = off[qp_idx, np.arange(n)]
    use_pq = pq_val <= qp_val              # tie: first direction wins
    neg = np.where(use_pq, pq_val, qp_val)

    pos_active = pos > margin_pos
    neg_active = neg < margin_neg
    loss = float(np.mean(np.maximum(pos - margin_pos, 0.0)
                         + np.maximum(margin_neg - neg, 0.0)))

    grad_p = np.zeros_like(p)
    grad_q = np.zeros_like(q)
    scale = 1.0 / n
    for i in np.nonzero(pos_active)[0]:
        if pos[i] > 0.0:
            u = (p[i] - q[i]) / pos[i] * scale
            grad_p[i] += u
            grad_q[i] -= u
    for i in np.nonzero(neg_active)[0]:
        if neg[i] <= 0.0:
            continue  # zero-distance negative: flat subgradient
        if use_pq[i]:
            j = pq_idx[i]
            u = (p[i] - q[j]) / neg[i] * scale
            grad_p[i] -= u
            grad_q[j] += u
        else:
            j = qp_idx[i]
            u = (q[i] - p[j]) / neg[i] * scale
            grad_q[i] -= u
            grad_p[j] += u
    return loss, grad_p, grad_q
