"""Run configuration: one dataclass covering ICL, training, and evaluation
knobs, loadable from JSON always and from TOML on Python 3.11+.

File keys match the field names, except the contrastive weight, which is
spelled "lambda" in files (it is a keyword in Python, so the attribute is
``lam``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    tomllib = None

from .evaluation import DEFAULT_GRID


class ConfigError(ValueError):
    """Bad run configuration (unknown key, out-of-range value, bad file)."""


ABLATION_ARMS = ("full", "no-weighcon", "no-demonstration", "no-space-thinking")


@dataclass
class RunConfig:
    # backends
    backend: str = "toy"              # toy | echo | external:<model_id>
    embed_backend: str = "hashed-bow"
    seed: int = 0

    # prompting
    mode: str = "multi"               # label decision mode: multi | single
    k_demo: int = 1                   # demonstrations per query
    n_tokens: int = 2                 # generated tokens fed to the head
    token_budget: int = 1200          # fine-tuning prompt budget
    icl_token_budget: int = 8192      # in-context-learning prompt budget
    icl_n_tokens: int = 16            # generation length for ICL parsing

    # objective
    lam: float = 0.1                  # contrastive weight; 0 disables
    bank_capacity: int = 512

    # training
    epochs: int = 5
    batch_size: int = 8
    lr: float = 2e-4
    d_h: int = 256
    adapter_rank: int = 4
    selection_metric: str = "micro_f1"

    # evaluation
    grid: tuple[float, float, float] = DEFAULT_GRID

    # ablation flags
    no_weighcon: bool = False
    no_demonstration: bool = False
    no_space_thinking: bool = False

    def __post_init__(self):
        if self.mode not in ("multi", "single"):
            raise ConfigError(f"mode must be multi or single, got {self.mode!r}")
        if self.selection_metric not in ("micro_f1", "macro_f1"):
            raise ConfigError(f"unknown selection metric {self.selection_metric!r}")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        for name in ("k_demo", "bank_capacity"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("n_tokens", "token_budget", "icl_token_budget", "icl_n_tokens",
                     "epochs", "batch_size", "d_h", "adapter_rank"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        self.grid = tuple(float(g) for g in self.grid)
        if len(self.grid) != 3:
            raise ConfigError("grid must be (start, stop, step)")

    def effective(self) -> "RunConfig":
        """Config with the ablation flags folded into the knobs they gate."""
        cfg = dataclasses.replace(self)
        if cfg.no_weighcon:
            cfg.lam = 0.0
        if cfg.no_demonstration:
            cfg.k_demo = 0
        if cfg.no_space_thinking:
            cfg.n_tokens = 1
        return cfg

    def with_arm(self, arm: str) -> "RunConfig":
        """Config for one ablation arm."""
        if arm not in ABLATION_ARMS:
            raise ConfigError(f"unknown ablation arm {arm!r}; choose from {ABLATION_ARMS}")
        cfg = dataclasses.replace(
            self, no_weighcon=False, no_demonstration=False, no_space_thinking=False
        )
        if arm != "full":
            setattr(cfg, arm.replace("-", "_"), True)
        return cfg

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if path.suffix == ".toml":
            if tomllib is None:
                raise ConfigError(
                    "TOML configs need Python >= 3.11; use a JSON config here"
                )
            raw = tomllib.loads(path.read_text())
        elif path.suffix == ".json":
            raw = json.loads(path.read_text())
        else:
            raise ConfigError(f"config must be .json or .toml, got {path.name}")
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a single table/object")
        return cls.from_dict(raw)

    def config_hash(self) -> str:
        """Short stable digest used in run-directory names."""
        canon = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:8]
