"""Auto-weighted multi-label contrastive objective with a FIFO memory bank.

For anchors i in the current batch and pool members k in batch + bank:

    l_con = -sum_c mean_i mean_{j in P_i(c)}
                a_ij * sim(h_i, h_j) / sum_{k != i} (1 - a_ik) * sim(h_i, h_k)

with sim(h_i, h_j) = exp(cos(h_i, h_j)) and a_ij a learned pair weight
sigma(W [y_i ; y_j] + b) over the two label vectors.  P_i(c) contains the
pool members j != i sharing class c with the anchor.  There is no logarithm
around the ratio; the loss is computed exactly in this form, so well-matched
pairs drive it negative.  (i, c) terms with an empty P_i(c) are skipped; if
everything is skipped the loss is 0.  Bank entries are value snapshots and
never serve as anchors.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


class PairWeightNet(nn.Module):
    """One-layer map over concatenated label vectors; zero-initialized so
    every pair weight starts at sigma(0) = 0.5."""

    def __init__(self, n_labels: int):
        super().__init__()
        self.n_labels = n_labels
        self.lin = nn.Linear(2 * n_labels, 1)
        nn.init.zeros_(self.lin.weight)
        nn.init.zeros_(self.lin.bias)

    def forward(self, pairs: torch.Tensor) -> torch.Tensor:
        """pairs (..., 2*n_labels) -> weights (...,) in (0, 1)."""
        if pairs.shape[-1] != 2 * self.n_labels:
            raise ValueError(
                f"expected trailing dim {2 * self.n_labels}, got {pairs.shape[-1]}"
            )
        return torch.sigmoid(self.lin(pairs).squeeze(-1))


def pair_weight(net: PairWeightNet, y_i, y_j) -> torch.Tensor:
    """Weight for one ordered pair of label vectors."""
    dtype = net.lin.weight.dtype
    y_i = torch.as_tensor(np.asarray(y_i), dtype=dtype)
    y_j = torch.as_tensor(np.asarray(y_j), dtype=dtype)
    if y_i.shape != (net.n_labels,) or y_j.shape != (net.n_labels,):
        raise ValueError("label vectors must have length n_labels")
    return net(torch.cat([y_i, y_j]))


def positives(i: int, c: int, pool_labels: np.ndarray) -> list[int]:
    """Indices j != i in the pool sharing class c with anchor i.

    Empty whenever the anchor itself lacks class c.
    """
    labels = np.asarray(pool_labels)
    if not labels[i, c]:
        return []
    return [j for j in range(labels.shape[0]) if j != i and labels[j, c]]


@dataclass
class BankEntry:
    h: torch.Tensor  # constant snapshot, no graph linkage
    y: np.ndarray
    step: int


class MemoryBank:
    """FIFO store of recent (representation, labels) pairs used to widen the
    contrastive pool beyond the current batch."""

    def __init__(self, capacity: int, d_model: int, n_labels: int):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.d_model = d_model
        self.n_labels = n_labels
        self._entries: deque[BankEntry] = deque(maxlen=capacity)
        self._counter = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[BankEntry]:
        return list(self._entries)

    def push(self, H: torch.Tensor, Y) -> None:
        """Append one batch; oldest entries are evicted beyond capacity.
        Stored representations are detached copies."""
        Y = np.asarray(Y)
        if H.ndim != 2 or H.shape[1] != self.d_model:
            raise ValueError(f"expected representations (k, {self.d_model})")
        if Y.shape != (H.shape[0], self.n_labels):
            raise ValueError(f"expected labels ({H.shape[0]}, {self.n_labels})")
        if self.capacity == 0:
            return
        for row in range(H.shape[0]):
            self._entries.append(
                BankEntry(h=H[row].detach().clone(), y=Y[row].copy(), step=self._counter)
            )
            self._counter += 1

    def snapshot(self) -> tuple[torch.Tensor, np.ndarray] | tuple[None, None]:
        """Immutable stacked view of the current contents (oldest first)."""
        if not self._entries:
            return None, None
        hs = torch.stack([e.h for e in self._entries])
        ys = np.stack([e.y for e in self._entries])
        return hs, ys


def weighted_contrastive_loss(
    H: torch.Tensor,
    Y,
    bank: MemoryBank | None,
    net: PairWeightNet,
) -> tuple[torch.Tensor, int, int]:
    """(l_con, n_positive_pairs, n_skipped_terms) over one batch.

    H (nb, d) are anchor representations (with gradients), Y (nb, m) their
    label vectors.  Skipped terms are (anchor, class) combinations whose
    positive set is empty.
    """
    if H.ndim != 2 or H.shape[0] < 1:
        raise ValueError("H must be (batch, d) with batch >= 1")
    Y = np.asarray(Y)
    if Y.shape[0] != H.shape[0]:
        raise ValueError("H and Y row counts disagree")
    nb, m = Y.shape
    bank_h, bank_y = bank.snapshot() if bank is not None else (None, None)
    if bank_h is not None:
        pool_H = torch.cat([H, bank_h.to(H.dtype)])
        pool_Y = np.concatenate([Y, bank_y])
    else:
        pool_H, pool_Y = H, Y
    if not torch.isfinite(pool_H).all():
        raise ValueError("non-finite representation")
    norms_a = torch.linalg.norm(H, dim=1)
    norms_p = torch.linalg.norm(pool_H, dim=1)
    if (norms_a == 0).any() or (norms_p == 0).any():
        raise ValueError("zero-norm representation")

    n_pool = pool_H.shape[0]
    cos = (H / norms_a[:, None]) @ (pool_H / norms_p[:, None]).T  # (nb, n_pool)
    sim = torch.exp(cos)

    y_a = torch.as_tensor(Y, dtype=H.dtype)
    y_p = torch.as_tensor(pool_Y, dtype=H.dtype)
    pairs = torch.cat(
        [y_a[:, None, :].expand(nb, n_pool, m), y_p[None, :, :].expand(nb, n_pool, m)],
        dim=-1,
    )
    alpha = net(pairs)  # (nb, n_pool)

    not_self = torch.ones(nb, n_pool, dtype=torch.bool)
    not_self[torch.arange(nb), torch.arange(nb)] = False
    denom = ((1.0 - alpha) * sim * not_self).sum(dim=1)  # (nb,)
    safe_denom = torch.where(denom > 0, denom, torch.ones_like(denom))
    ratio = alpha * sim / safe_denom[:, None]

    total = H.new_zeros(())
    n_positive_pairs = 0
    n_skipped = 0
    anchor_has = torch.as_tensor(Y, dtype=torch.bool)
    pool_has = torch.as_tensor(pool_Y, dtype=torch.bool)
    for c in range(m):
        pos_mask = anchor_has[:, c][:, None] & pool_has[:, c][None, :] & not_self
        counts = pos_mask.sum(dim=1)
        valid = counts > 0
        n_positive_pairs += int(counts.sum())
        n_skipped += int(nb - valid.sum())
        if valid.any():
            per_anchor = (ratio * pos_mask).sum(dim=1)[valid] / counts[valid].to(H.dtype)
            total = total - per_anchor.mean()
    return total, n_positive_pairs, n_skipped


def _scalar(x) -> float:
    return float(x.detach()) if torch.is_tensor(x) else float(x)


@dataclass
class LossBreakdown:
    l_ce: object
    l_con: object
    l_total: object
    lam: float
    n_positive_pairs: int
    n_skipped_terms: int

    def record(self, step: int, bank_size: int) -> dict:
        """Telemetry row for the per-step JSONL log."""
        return {
            "step": step,
            "l_ce": _scalar(self.l_ce),
            "l_con": _scalar(self.l_con),
            "l_total": _scalar(self.l_total),
            "n_positive_pairs": self.n_positive_pairs,
            "n_skipped_terms": self.n_skipped_terms,
            "bank_size": bank_size,
        }


def combined_loss(
    l_ce, l_con, lam: float = 0.1, n_positive_pairs: int = 0, n_skipped_terms: int = 0
) -> LossBreakdown:
    """l_total = l_ce + lam * l_con; lam = 0 disables the contrastive arm."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    return LossBreakdown(
        l_ce=l_ce,
        l_con=l_con,
        l_total=l_ce + lam * l_con,
        lam=lam,
        n_positive_pairs=n_positive_pairs,
        n_skipped_terms=n_skipped_terms,
    )
