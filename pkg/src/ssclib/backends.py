"""Causal language-model backends.

A backend greedily generates tokens after a prompt and exposes the final
layer hidden state at each generated position.  The toy backend is a small
byte-level transformer (2 layers, d_model 64) that is cheap enough for CPU
test runs yet exercises the full generate-with-hidden-states and
frozen-backbone/trainable-adapter contracts.  Only the adapters are ever
trainable; backbone weights are frozen at construction.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


class BackendUnavailableError(RuntimeError):
    """An external backend was selected but cannot be reached."""


class ContextOverflowError(ValueError):
    """Prompt plus requested generation does not fit the context window."""


# -- tokenizers --


class Tokenizer(ABC):
    vocab_size: int

    @abstractmethod
    def encode(self, text: str) -> list[int]:
        ...

    @abstractmethod
    def decode(self, ids: list[int]) -> str:
        ...

    def count(self, text: str) -> int:
        return len(self.encode(text))


class ByteTokenizer(Tokenizer):
    """UTF-8 bytes plus BOS/EOS; decode(encode(x)) == x for any text."""

    BOS = 256
    EOS = 257

    def __init__(self):
        self.vocab_size = 258

    def encode(self, text: str) -> list[int]:
        return [self.BOS] + list(text.encode("utf-8"))

    def decode(self, ids: list[int]) -> str:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class WhitespaceTokenizer(Tokenizer):
    """Whitespace-splitting reference tokenizer; ids are assigned per session."""

    def __init__(self):
        self.vocab_size = 0
        self._ids: dict[str, int] = {}
        self._tokens: list[str] = []

    def encode(self, text: str) -> list[int]:
        out = []
        for token in text.split():
            if token not in self._ids:
                self._ids[token] = len(self._tokens)
                self._tokens.append(token)
                self.vocab_size = len(self._tokens)
            out.append(self._ids[token])
        return out

    def decode(self, ids: list[int]) -> str:
        return " ".join(
            self._tokens[i] if 0 <= i < len(self._tokens) else f"[{i}]" for i in ids
        )

    def count(self, text: str) -> int:
        return len(text.split())


# -- backend interface --


@dataclass
class GenerationResult:
    token_ids: list[int]
    hidden_states: np.ndarray  # (n, d_model), final layer, one row per generated token
    decoded: str

    def __post_init__(self):
        if len(self.token_ids) != self.hidden_states.shape[0]:
            raise ValueError("token_ids and hidden_states lengths disagree")
        if not np.isfinite(self.hidden_states).all():
            raise ValueError("non-finite hidden states")


@dataclass(frozen=True)
class ParameterGroup:
    name: str
    n_params: int
    trainable: bool


class LMBackend(ABC):
    name: str

    @property
    @abstractmethod
    def d_model(self) -> int:
        ...

    @property
    @abstractmethod
    def tokenizer(self) -> Tokenizer:
        ...

    @property
    @abstractmethod
    def context_limit(self) -> int:
        ...

    @abstractmethod
    def generate(self, prompt: str, n: int) -> GenerationResult:
        ...

    def parameter_groups(self) -> list[ParameterGroup]:
        return []


def trainable_parameters(backend: LMBackend) -> list[ParameterGroup]:
    """Named parameter groups of a backend with per-group counts and
    trainability flags (the backbone group is always frozen)."""
    return backend.parameter_groups()


# -- toy transformer --


class LowRankAdapter(nn.Module):
    """Additive low-rank delta for a linear map: x -> x @ A^T @ B^T.

    B starts at zero so attaching an adapter does not change the function.
    """

    def __init__(self, d_in: int, d_out: int, rank: int, generator: torch.Generator):
        super().__init__()
        down = torch.empty(rank, d_in)
        down.normal_(mean=0.0, std=0.02, generator=generator)
        self.down = nn.Parameter(down)
        self.up = nn.Parameter(torch.zeros(d_out, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return (x @ self.down.T) @ self.up.T


class AdaptedLinear(nn.Module):
    """Frozen base projection plus an optional trainable low-rank delta."""

    def __init__(self, d_in: int, d_out: int):
        super().__init__()
        self.base = nn.Linear(d_in, d_out)
        self.adapter: LowRankAdapter | None = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.base(x)
        if self.adapter is not None:
            y = y + self.adapter(x)
        return y


class CausalSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        assert d_model % n_heads == 0
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q = AdaptedLinear(d_model, d_model)
        self.k = AdaptedLinear(d_model, d_model)
        self.v = AdaptedLinear(d_model, d_model)
        self.o = AdaptedLinear(d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        shape = (b, t, self.n_heads, self.head_dim)
        q = self.q(x).view(shape).transpose(1, 2)
        k = self.k(x).view(shape).transpose(1, 2)
        v = self.v(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        mask = torch.triu(torch.ones(t, t, dtype=torch.bool, device=x.device), diagonal=1)
        scores = scores.masked_fill(mask, float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        out = out.transpose(1, 2).reshape(b, t, d)
        return self.o(out)


class TransformerBlock(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = CausalSelfAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model), nn.GELU(), nn.Linear(4 * d_model, d_model)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class ToyTransformerLM(nn.Module):
    """Byte-level causal LM.  forward(ids) -> (logits, hidden); hidden is the
    final-layer state after the last LayerNorm (post-norm convention)."""

    def __init__(self, vocab_size=258, d_model=64, n_heads=2, n_layers=2, max_len=2048):
        super().__init__()
        self.d_model = d_model
        self.max_len = max_len
        self.tok_emb = nn.Embedding(vocab_size, d_model)
        self.pos_emb = nn.Embedding(max_len, d_model)
        self.blocks = nn.ModuleList(TransformerBlock(d_model, n_heads) for _ in range(n_layers))
        self.ln_f = nn.LayerNorm(d_model)
        self.lm_head = nn.Linear(d_model, vocab_size, bias=False)

    def forward(self, ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, t = ids.shape
        if t > self.max_len:
            raise ContextOverflowError(f"sequence of {t} tokens exceeds max_len {self.max_len}")
        pos = torch.arange(t, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(pos)[None, :, :]
        for block in self.blocks:
            x = block(x)
        hidden = self.ln_f(x)
        return self.lm_head(hidden), hidden


class TorchCausalBackend(LMBackend):
    """LMBackend over any torch model with the (logits, hidden) contract."""

    def __init__(self, model: nn.Module, tokenizer: Tokenizer, name: str, context_limit: int):
        self.name = name
        self.model = model
        self._tokenizer = tokenizer
        self._context_limit = context_limit

    @property
    def d_model(self) -> int:
        return self.model.d_model

    @property
    def tokenizer(self) -> Tokenizer:
        return self._tokenizer

    @property
    def context_limit(self) -> int:
        return self._context_limit

    def _check_fit(self, n_prompt: int, n_new: int) -> None:
        if n_prompt + n_new > self._context_limit:
            raise ContextOverflowError(
                f"prompt of {n_prompt} tokens + {n_new} generated exceeds "
                f"context limit {self._context_limit}"
            )

    @torch.no_grad()
    def generate(self, prompt: str, n: int) -> GenerationResult:
        """Greedy decoding of n tokens; records the final-layer hidden state
        at each generated token's position."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        ids = self._tokenizer.encode(prompt)
        self._check_fit(len(ids), n)
        self.model.eval()
        seq = torch.tensor([ids], dtype=torch.long)
        for _ in range(n):
            logits, _ = self.model(seq)
            nxt = int(torch.argmax(logits[0, -1]))
            seq = torch.cat([seq, torch.tensor([[nxt]])], dim=1)
        _, hidden = self.model(seq)
        gen_ids = seq[0, len(ids):].tolist()
        return GenerationResult(
            token_ids=gen_ids,
            hidden_states=hidden[0, len(ids):].to(torch.float64).numpy(),
            decoded=self._tokenizer.decode(gen_ids),
        )

    def generate_batch(
        self, prompts: list[str], n: int, pad_id: int = 0
    ) -> tuple[list[list[int]], torch.Tensor]:
        """Batched greedy decoding for training.

        Returns (token_ids per prompt, hidden states (B, n, d_model)); the
        hidden states carry gradients back to any trainable parameters.
        Prompts are right-padded, which is safe under causal attention as
        long as reads happen at real positions.
        """
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        encoded = [self._tokenizer.encode(p) for p in prompts]
        for ids in encoded:
            self._check_fit(len(ids), n)
        lengths = [len(ids) for ids in encoded]
        total = max(lengths) + n
        seq = torch.full((len(prompts), total), pad_id, dtype=torch.long)
        for b, ids in enumerate(encoded):
            seq[b, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        cur = list(lengths)
        with torch.no_grad():
            for _ in range(n):
                logits, _ = self.model(seq[:, : max(cur)])
                for b in range(len(prompts)):
                    seq[b, cur[b]] = torch.argmax(logits[b, cur[b] - 1])
                    cur[b] += 1
        _, hidden = self.model(seq[:, : max(cur)])
        rows = torch.arange(len(prompts))[:, None]
        cols = torch.tensor(lengths)[:, None] + torch.arange(n)[None, :]
        gathered = hidden[rows, cols]  # (B, n, d)
        token_ids = [seq[b, lengths[b] : lengths[b] + n].tolist() for b in range(len(prompts))]
        return token_ids, gathered


class ToyTransformerBackend(TorchCausalBackend):
    """The deterministic desk-scale backend: seeded init, byte tokenizer.

    attn_scale multiplies the query/key init so attention starts peaked
    rather than near-uniform; without it the final hidden states reduce to
    prompt-wide byte averages and carry almost no usable signal at this
    model size.
    """

    def __init__(self, seed: int = 0, max_len: int = 2048, d_model: int = 64,
                 n_heads: int = 2, n_layers: int = 2, attn_scale: float = 8.0):
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            model = ToyTransformerLM(
                d_model=d_model, n_heads=n_heads, n_layers=n_layers, max_len=max_len
            )
        with torch.no_grad():
            for block in model.blocks:
                block.attn.q.base.weight.mul_(attn_scale)
                block.attn.k.base.weight.mul_(attn_scale)
        for p in model.parameters():
            p.requires_grad_(False)  # backbone is never trainable
        super().__init__(model, ByteTokenizer(), f"toy-seed{seed}", max_len)
        self._adapters_attached = False

    def attach_adapters(self, rank: int = 4, seed: int = 0) -> None:
        """Attach trainable low-rank deltas to every attention projection."""
        if self._adapters_attached:
            raise RuntimeError("adapters already attached")
        gen = torch.Generator().manual_seed(seed)
        for block in self.model.blocks:
            for proj in (block.attn.q, block.attn.k, block.attn.v, block.attn.o):
                proj.adapter = LowRankAdapter(
                    proj.base.in_features, proj.base.out_features, rank, gen
                )
        self._adapters_attached = True

    def _split_params(self):
        backbone, adapters = [], []
        for name, p in self.model.named_parameters():
            (adapters if ".adapter." in name else backbone).append(p)
        return backbone, adapters

    def backbone_parameters(self) -> list[torch.Tensor]:
        return self._split_params()[0]

    def adapter_parameters(self) -> list[torch.Tensor]:
        return self._split_params()[1]

    def parameter_groups(self) -> list[ParameterGroup]:
        backbone, adapters = self._split_params()
        return [
            ParameterGroup("backbone", sum(p.numel() for p in backbone), False),
            ParameterGroup("adapters", sum(p.numel() for p in adapters), True),
        ]


# -- mock and external backends --


class EchoBackend(LMBackend):
    """Test double that answers every query with its gold labels.

    The query sentence is read back out of the prompt text and looked up in
    the corpus the backend was built from, so a run over this backend checks
    the prompt/parse/score pipeline end to end.
    """

    _BEFORE = "the sentence "
    _AFTER = " plays a rhetorical role as"

    def __init__(self, corpus, d_model: int = 8):
        self.name = "echo"
        self._d_model = d_model
        self._tokenizer = WhitespaceTokenizer()
        self._gold: dict[str, tuple[str, ...]] = {}
        for _, sent in corpus.iter_sentences():
            self._gold[sent.text] = corpus.label_set.labels_of(sent.gold)

    @property
    def d_model(self) -> int:
        return self._d_model

    @property
    def tokenizer(self) -> Tokenizer:
        return self._tokenizer

    @property
    def context_limit(self) -> int:
        return 10**9

    def generate(self, prompt: str, n: int) -> GenerationResult:
        query = prompt[prompt.rfind("<Start>"):]
        end = query.rfind(self._AFTER)
        start = query.rfind(self._BEFORE, 0, end)
        if start < 0 or end < 0:
            raise ValueError("prompt does not end with a query")
        target_text = query[start + len(self._BEFORE) : end]
        labels = self._gold.get(target_text)
        if labels is None:
            raise KeyError(f"echo backend has no gold labels for {target_text!r}")
        answer = f"<{', '.join(labels)}> <End>"
        tokens = answer.split()
        tokens = (tokens + ["<End>"] * n)[:n]
        ids = self._tokenizer.encode(" ".join(tokens))
        return GenerationResult(
            token_ids=ids,
            hidden_states=np.zeros((len(ids), self._d_model)),
            decoded=" ".join(tokens),
        )


class ExternalLMBackend(LMBackend):
    """Configuration shell for a remote LLM; generation always raises.

    Parameter counts, when configured, are reported as metadata so harnesses
    can echo the frozen/trainable budget of the real deployment.
    """

    def __init__(self, endpoint: str, model_id: str, d_model: int = 2048,
                 n_frozen_params: int = 0, n_trainable_params: int = 0):
        if not endpoint or not model_id:
            raise ValueError("external backend requires endpoint and model_id")
        self.name = f"external:{model_id}"
        self.endpoint = endpoint
        self.model_id = model_id
        self._d_model = d_model
        self._tokenizer = WhitespaceTokenizer()
        self._n_frozen = n_frozen_params
        self._n_trainable = n_trainable_params

    @property
    def d_model(self) -> int:
        return self._d_model

    @property
    def tokenizer(self) -> Tokenizer:
        return self._tokenizer

    @property
    def context_limit(self) -> int:
        return 8192

    def generate(self, prompt: str, n: int) -> GenerationResult:
        raise BackendUnavailableError(
            f"external backend {self.endpoint!r} is not reachable from this build"
        )

    def parameter_groups(self) -> list[ParameterGroup]:
        return [
            ParameterGroup("backbone", self._n_frozen, False),
            ParameterGroup("adapters", self._n_trainable, True),
        ]
