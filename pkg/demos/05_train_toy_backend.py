"""Adapter + verbalizer training on the toy transformer backend.

The backbone stays frozen; only the low-rank adapters, the two-layer
verbalizer head, and the pair-weight net receive gradients.  Takes about
fifteen seconds on one CPU.

Run from the repository root:  python3 demos/05_train_toy_backend.py
"""

import torch

from ssclib.config import RunConfig
from ssclib.corpus import stratified_split
from ssclib.experiments import run_training
from ssclib.synthetic import generate_corpus

torch.set_num_threads(1)

corpus = generate_corpus(n_docs=200, seed=7, max_sentences=1)
train, dev, _ = stratified_split(corpus, (0.6, 0.2, 0.2), seed=0)
config = RunConfig(backend="toy", seed=0, k_demo=0, n_tokens=2, lam=0.1,
                   bank_capacity=128, epochs=5, batch_size=8, lr=3e-3)
print(f"training on {len(train)} docs, selecting on {len(dev)} dev docs")

result = run_training(train, dev, config)

print("\nper-epoch dev scores (thresholds re-tuned each epoch):")
for row in result.history:
    print(f"  epoch {row['epoch']}: micro F1 {row['dev_micro_f1']:.4f}, "
          f"macro F1 {row['dev_macro_f1']:.4f}, "
          f"mean l_total {row['mean_l_total']:.4f}")
print(f"best epoch: {result.best_epoch}")

print("\nloss telemetry, first and last step:")
for row in (result.telemetry[0], result.telemetry[-1]):
    print(f"  step {row['step']:>2}: l_ce {row['l_ce']:.4f}  "
          f"l_con {row['l_con']:+.4f}  l_total {row['l_total']:.4f}  "
          f"bank {row['bank_size']}")

print("\ntuned thresholds:",
      [round(float(t), 2) for t in result.profile.thresholds])
print("\ndev report at the best epoch:")
print(result.report.markdown())
