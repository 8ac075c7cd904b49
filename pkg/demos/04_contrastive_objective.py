"""The auto-weighted multi-label contrastive objective, piece by piece.

Run from the repository root:  python3 demos/04_contrastive_objective.py
"""

import numpy as np
import torch

from ssclib.contrastive import (
    MemoryBank,
    PairWeightNet,
    combined_loss,
    pair_weight,
    positives,
    weighted_contrastive_loss,
)

torch.manual_seed(0)

# Pair weights come from a one-layer net over the concatenated label
# vectors of the two sentences.  It starts at zeros, so every pair weighs
# sigma(0) = 0.5 until training moves it.
net = PairWeightNet(n_labels=3)
y_methods = np.array([0, 1, 0], dtype=np.int8)
y_multi = np.array([0, 1, 1], dtype=np.int8)
print("alpha(METHODS, METHODS+RESULTS) at init:",
      float(pair_weight(net, y_methods, y_multi).detach()))

# Positives are pool members that share a class with the anchor; an anchor
# without the class contributes a skipped term instead.
pool_labels = np.array([[1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1]], np.int8)
print("positives of anchor 0 for class 0:", positives(0, 0, pool_labels))
print("positives of anchor 3 for class 1:", positives(3, 1, pool_labels))

# Two identical single-class anchors are each other's only positive, and
# each positive is the whole of the other-rows denominator, so the loss is
# exactly -1 per class mean: the fully-aligned floor.
H = torch.tensor([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], requires_grad=True)
Y = np.array([[1, 0, 0], [1, 0, 0]], dtype=np.int8)
loss, n_pairs, n_skipped = weighted_contrastive_loss(H, Y, None, net)
print(f"\ntwo identical anchors: loss {float(loss.detach()):+.6f}, "
      f"{n_pairs} positive pairs, {n_skipped} skipped terms")

# The memory bank widens the pool beyond the batch with detached copies of
# recent representations (FIFO beyond capacity).  Bank rows join every
# denominator and positive set but are never anchors themselves.
bank = MemoryBank(capacity=3, d_model=3, n_labels=3)
bank.push(torch.randn(2, 3), np.array([[1, 0, 0], [0, 1, 0]], np.int8))
bank.push(torch.randn(2, 3), np.array([[0, 0, 1], [1, 0, 0]], np.int8))
print(f"bank holds {len(bank)} of 4 pushed rows (capacity 3, oldest evicted)")

loss_b, n_pairs_b, n_skipped_b = weighted_contrastive_loss(H, Y, bank, net)
print(f"with the bank in the pool: loss {float(loss_b.detach()):+.6f}, "
      f"{n_pairs_b} positive pairs, {n_skipped_b} skipped terms")

# Training optimizes l_ce + lambda * l_con and logs one telemetry row per
# step; lambda = 0 switches the contrastive arm off entirely.
breakdown = combined_loss(torch.tensor(0.7), loss_b, lam=0.1,
                          n_positive_pairs=n_pairs_b,
                          n_skipped_terms=n_skipped_b)
print("\ntelemetry row:", breakdown.record(step=1, bank_size=len(bank)))
