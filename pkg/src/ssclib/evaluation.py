"""Per-label threshold tuning, prediction decoding, and micro/macro F1.

Thresholds are tuned independently per label by exhaustive grid search on a
validation split: the smallest grid value maximizing that label's binary F1
wins.  Decoding never emits an empty multi-label prediction (argmax
fallback).  F1 conventions: per-label F1 is 0 when its denominator is 0;
micro F1 pools TP/FP/FN over all sentence-label decisions; macro F1 is the
unweighted mean of per-label F1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_GRID = (0.05, 0.95, 0.05)
FIXED_COMPARISON_THRESHOLD = 0.4


def threshold_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Ascending grid values start, start+step, ..., up to stop inclusive."""
    if step <= 0 or stop < start or not 0 <= start <= 1 or not 0 <= stop <= 1:
        raise ValueError(f"degenerate grid ({start}, {stop}, {step})")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


@dataclass(frozen=True)
class ThresholdProfile:
    """One decision threshold per label plus how it was obtained."""

    thresholds: np.ndarray
    grid: tuple[float, float, float]
    source_split: str
    missing_labels: tuple[str, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        if t.ndim != 1 or ((t < 0) | (t > 1)).any():
            raise ValueError("thresholds must be a 1-D vector in [0, 1]")
        object.__setattr__(self, "thresholds", t)

    @classmethod
    def fixed(cls, n_labels: int, value: float = FIXED_COMPARISON_THRESHOLD
              ) -> "ThresholdProfile":
        """Flat profile, e.g. the 0.4 comparison setting."""
        return cls(
            thresholds=np.full(n_labels, value),
            grid=(value, value, 1.0),
            source_split="fixed",
        )

    def as_dict(self) -> dict:
        return {
            "thresholds": [float(t) for t in self.thresholds],
            "grid": list(self.grid),
            "source_split": self.source_split,
            "missing_labels": list(self.missing_labels),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ThresholdProfile":
        return cls(
            thresholds=np.array(raw["thresholds"], dtype=float),
            grid=tuple(raw["grid"]),
            source_split=raw["source_split"],
            missing_labels=tuple(raw["missing_labels"]),
        )


def _binary_f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def tune_thresholds(
    val_probs: np.ndarray,
    val_gold: np.ndarray,
    grid: tuple[float, float, float] = DEFAULT_GRID,
    source_split: str = "dev",
    label_names: tuple[str, ...] | None = None,
) -> ThresholdProfile:
    """Per-label exhaustive grid search for the F1-maximizing threshold.

    Labels absent from the validation gold get the 0.5 default and are
    flagged in missing_labels.
    """
    probs = np.asarray(val_probs, dtype=float)
    gold = np.asarray(val_gold)
    if probs.ndim != 2 or probs.shape != gold.shape or probs.shape[0] == 0:
        raise ValueError("need matching non-empty (n, m) probability and gold arrays")
    values = threshold_grid(*grid)
    m = probs.shape[1]
    taus = np.empty(m)
    missing = []
    for c in range(m):
        g = gold[:, c].astype(bool)
        if not g.any():
            taus[c] = 0.5
            missing.append(label_names[c] if label_names else str(c))
            continue
        best_f1, best_tau = -1.0, values[0]
        for tau in values:
            pred = probs[:, c] >= tau
            f1 = _binary_f1(
                int((pred & g).sum()), int((pred & ~g).sum()), int((~pred & g).sum())
            )
            if f1 > best_f1:  # strict: earliest (smallest) grid point wins ties
                best_f1, best_tau = f1, tau
        taus[c] = best_tau
    return ThresholdProfile(
        thresholds=taus, grid=grid, source_split=source_split,
        missing_labels=tuple(missing),
    )


def decode_predictions(
    probs: np.ndarray, profile: ThresholdProfile, mode: str
) -> np.ndarray:
    """Probabilities -> label vectors.

    multi: bit c set iff p_c >= tau_c, argmax fallback so no row is empty.
    single: one-hot argmax.
    """
    if mode not in ("multi", "single"):
        raise ValueError(f"mode must be 'multi' or 'single', got {mode!r}")
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    if probs.shape[1] != profile.thresholds.shape[0]:
        raise ValueError("probability width does not match threshold profile")
    out = np.zeros(probs.shape, dtype=np.int8)
    if mode == "single":
        out[np.arange(len(probs)), probs.argmax(axis=1)] = 1
        return out
    out[probs >= profile.thresholds[None, :]] = 1
    empty = out.sum(axis=1) == 0
    out[np.flatnonzero(empty), probs[empty].argmax(axis=1)] = 1
    return out


@dataclass
class EvalReport:
    """Micro/macro F1 plus the per-label confusion counts they derive from."""

    micro_f1: float
    macro_f1: float
    per_label: dict[str, dict[str, float]]
    n_parse_failures: int = 0
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_label": self.per_label,
            "n_parse_failures": self.n_parse_failures,
            "config": self.config,
        }

    def markdown(self) -> str:
        """Per-label table with the micro/macro summary rows."""
        lines = [
            "| Label | Precision | Recall | F1 |",
            "| --- | --- | --- | --- |",
        ]
        for name, row in self.per_label.items():
            lines.append(
                f"| {name} | {row['precision']:.4f} | {row['recall']:.4f} "
                f"| {row['f1']:.4f} |"
            )
        lines.append(f"| **Micro F1** | | | {self.micro_f1:.4f} |")
        lines.append(f"| **Macro F1** | | | {self.macro_f1:.4f} |")
        if self.n_parse_failures:
            lines.append(f"| parse failures | | | {self.n_parse_failures} |")
        return "\n".join(lines)


def f1_scores(
    pred: np.ndarray,
    gold: np.ndarray,
    label_names: tuple[str, ...] | None = None,
    n_parse_failures: int = 0,
    config: dict | None = None,
) -> EvalReport:
    """Confusion-count F1 over sentence-label decisions."""
    pred = np.asarray(pred).astype(bool)
    gold = np.asarray(gold).astype(bool)
    if pred.shape != gold.shape or pred.ndim != 2:
        raise ValueError("pred and gold must be equal-shape (n, m) arrays")
    m = pred.shape[1]
    names = label_names or tuple(str(c) for c in range(m))
    per_label: dict[str, dict[str, float]] = {}
    pooled_tp = pooled_fp = pooled_fn = 0
    for c in range(m):
        tp = int((pred[:, c] & gold[:, c]).sum())
        fp = int((pred[:, c] & ~gold[:, c]).sum())
        fn = int((~pred[:, c] & gold[:, c]).sum())
        pooled_tp, pooled_fp, pooled_fn = pooled_tp + tp, pooled_fp + fp, pooled_fn + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        per_label[names[c]] = {
            "precision": precision,
            "recall": recall,
            "f1": _binary_f1(tp, fp, fn),
            "tp": tp,
            "fp": fp,
            "fn": fn,
        }
    macro = float(np.mean([row["f1"] for row in per_label.values()]))
    micro = _binary_f1(pooled_tp, pooled_fp, pooled_fn)
    return EvalReport(
        micro_f1=micro,
        macro_f1=macro,
        per_label=per_label,
        n_parse_failures=n_parse_failures,
        config=dict(config or {}),
    )
