"""Verbalizer head: turn the n generated-token hidden states into label
probabilities and a classification loss.

The hidden states are concatenated (order preserved), passed through a
two-layer head h = ReLU(W1 e + b1), p = sigmoid(W2 h + b2).  The hidden
layer h doubles as the representation used by the contrastive objective.
Multi-label corpora use mean per-class binary cross-entropy on p;
single-label corpora use categorical cross-entropy on the logits.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

CLAMP_EPS = 1e-7


def concat_hidden(states) -> torch.Tensor:
    """Concatenate n same-dimension hidden states into one vector.

    Accepts a list of 1-D tensors/arrays, or a stacked (n, d) / batched
    (B, n, d) tensor; batched input yields (B, n*d).
    """
    if isinstance(states, (list, tuple)):
        tensors = [torch.as_tensor(s) for s in states]
        if not tensors:
            raise ValueError("need at least one hidden state")
        dims = {tuple(t.shape) for t in tensors}
        if len(dims) != 1 or tensors[0].ndim != 1:
            raise ValueError(f"hidden states must share one 1-D shape, got {dims}")
        return torch.cat(tensors)
    t = torch.as_tensor(states)
    if t.ndim == 2:
        return t.reshape(-1)
    if t.ndim == 3:
        return t.reshape(t.shape[0], -1)
    raise ValueError(f"expected (n, d) or (B, n, d), got shape {tuple(t.shape)}")


class VerbalizerHead(nn.Module):
    """Two-layer map from the concatenated states to per-label probabilities.

    Initialization is the symmetric uniform fan-in rule under a fixed seed,
    so two heads built with the same seed are identical.
    """

    def __init__(self, n_tokens: int, d_model: int, d_h: int, n_labels: int,
                 seed: int = 0):
        super().__init__()
        if min(n_tokens, d_model, d_h, n_labels) < 1:
            raise ValueError("all head dimensions must be >= 1")
        self.n_tokens = n_tokens
        self.d_model = d_model
        self.d_h = d_h
        self.n_labels = n_labels
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.fc1 = nn.Linear(n_tokens * d_model, d_h)
            self.fc2 = nn.Linear(d_h, n_labels)

    def forward(self, e: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(h, p) for one vector (n*d,) or a batch (B, n*d)."""
        e = torch.as_tensor(e)
        if not torch.isfinite(e).all():
            raise ValueError("non-finite verbalizer input")
        h = torch.relu(self.fc1(e))
        p = torch.sigmoid(self.fc2(h))
        return h, p


def head_forward(head: VerbalizerHead, e) -> tuple[torch.Tensor, torch.Tensor]:
    return head(e)


def classification_loss(p: torch.Tensor, y_gold, mode: str) -> torch.Tensor:
    """Scalar classification loss for one instance or a batch (batch mean).

    multi: mean over classes of binary cross-entropy against p.
    single: categorical cross-entropy on the logits recovered from p
    (the logit transform inverts the sigmoid exactly).
    Probabilities are clamped to [eps, 1-eps], eps = 1e-7.
    """
    if mode not in ("multi", "single"):
        raise ValueError(f"mode must be 'multi' or 'single', got {mode!r}")
    p = torch.as_tensor(p)
    y = torch.as_tensor(np.asarray(y_gold), dtype=p.dtype)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: p {tuple(p.shape)} vs y {tuple(y.shape)}")
    p = torch.clamp(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    if mode == "multi":
        bce = -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))
        return bce.mean()
    z = torch.log(p) - torch.log1p(-p)
    if y.ndim == 1:
        z, y = z[None, :], y[None, :]
    if not torch.all(y.sum(dim=-1) == 1):
        raise ValueError("single mode requires exactly one gold label per instance")
    log_probs = torch.log_softmax(z, dim=-1)
    return -(y * log_probs).sum(dim=-1).mean()


# -- checkpointing: flat binary of parameters + JSON shape manifest --

_PARAM_ORDER = ("fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias")


def save_head(head: VerbalizerHead, path: str | Path) -> None:
    """Write parameters as one flat float32 binary, shapes in a sidecar
    JSON manifest at <path>.json."""
    path = Path(path)
    state = head.state_dict()
    flat = np.concatenate(
        [state[k].detach().cpu().numpy().astype(np.float32).ravel() for k in _PARAM_ORDER]
    )
    path.write_bytes(flat.tobytes())
    manifest = {
        "n_tokens": head.n_tokens,
        "d_model": head.d_model,
        "d_h": head.d_h,
        "n_labels": head.n_labels,
        "dtype": "float32",
        "order": list(_PARAM_ORDER),
    }
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_head(path: str | Path) -> VerbalizerHead:
    path = Path(path)
    manifest = json.loads(Path(str(path) + ".json").read_text())
    head = VerbalizerHead(
        n_tokens=manifest["n_tokens"],
        d_model=manifest["d_model"],
        d_h=manifest["d_h"],
        n_labels=manifest["n_labels"],
    )
    flat = np.frombuffer(path.read_bytes(), dtype=manifest["dtype"]).copy()
    cursor = 0
    state = {}
    for key in manifest["order"]:
        shape = head.state_dict()[key].shape
        size = int(np.prod(shape))
        state[key] = torch.from_numpy(flat[cursor : cursor + size].reshape(shape))
        cursor += size
    if cursor != flat.size:
        raise ValueError(f"checkpoint size mismatch: read {cursor}, file has {flat.size}")
    head.load_state_dict(state)
    return head
