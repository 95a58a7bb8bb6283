"""Service configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

TASK_TOKENS = ("[facet]", "[document]", "[related]")


@dataclass
class ServiceConfig:
    """Model, training, and serving knobs.

    ``base_model_name`` of "scratch" trains a compact word-level
    encoder-decoder from random init, which is the CPU-friendly default.
    The task control tokens are registered as atomic vocabulary entries
    before training.
    """

    base_model_name: str = "scratch"
    max_input_tokens: int = 64
    max_output_tokens: int = 48
    learning_rate: float = 3e-4
    epochs: int = 300
    batch_size: int = 32
    d_model: int = 128
    nhead: int = 4
    num_layers: int = 2
    dim_feedforward: int = 256
    dropout: float = 0.0
    seed: int = 0
    special_tokens: tuple[str, ...] = field(default=TASK_TOKENS)
    port: int = 8321

    def save(self, path: str | Path) -> None:
        data = dataclasses.asdict(self)
        data["special_tokens"] = list(self.special_tokens)
        Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data["special_tokens"] = tuple(data.get("special_tokens", TASK_TOKENS))
        return cls(**data)
