"""Fine-tune the generator on a multi-task taskset JSONL.

Input schema per line: {"task": ..., "input": ..., "target": ..., "query": ...}
with task one of facet/document/related.  The file is validated in full
before any training starts.  Examples from all tasks are shuffled into
one loader per epoch, so each task contributes its share of the summed
loss.  The checkpoint directory holds model weights, the vocabulary, the
config, and a small training log with initial/final loss.
"""

from __future__ import annotations

import json
import logging
import random
from pathlib import Path

import torch
from torch import nn

from .config import ServiceConfig
from .model import Seq2SeqModel
from .vocab import PAD, Vocab

logger = logging.getLogger(__name__)

VALID_TASKS = ("facet", "document", "related")
REQUIRED_KEYS = ("task", "input", "target", "query")


class TasksetSchemaError(ValueError):
    """The taskset file does not match the export schema."""


def load_taskset(path: str | Path) -> list[dict]:
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except ValueError as exc:
                raise TasksetSchemaError(f"{path}:{lineno}: not JSON: {exc}") from exc
            for key in REQUIRED_KEYS:
                if key not in row or not isinstance(row[key], str):
                    raise TasksetSchemaError(f"{path}:{lineno}: missing/invalid field {key!r}")
            if row["task"] not in VALID_TASKS:
                raise TasksetSchemaError(f"{path}:{lineno}: unknown task {row['task']!r}")
            if not row["input"].strip() or not row["target"].strip():
                raise TasksetSchemaError(f"{path}:{lineno}: empty input or target")
            rows.append(row)
    if not rows:
        raise TasksetSchemaError(f"{path}: no examples")
    return rows


def _pad_batch(seqs: list[list[int]]) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    return torch.tensor([s + [PAD] * (width - len(s)) for s in seqs], dtype=torch.long)


def train(taskset_path: str | Path, config: ServiceConfig, out_dir: str | Path) -> Path:
    """Train and write a checkpoint directory; returns its path."""
    rows = load_taskset(taskset_path)
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    vocab = Vocab.build(
        [r["input"] for r in rows] + [r["target"] for r in rows], config.special_tokens
    )
    examples = [
        (
            vocab.encode(r["input"])[: config.max_input_tokens],
            vocab.encode(r["target"], bos=True, eos=True)[: config.max_output_tokens + 2],
        )
        for r in rows
    ]

    model = Seq2SeqModel(len(vocab), config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    criterion = nn.CrossEntropyLoss(ignore_index=PAD)

    def epoch_loss() -> float:
        model.train()
        order = list(range(len(examples)))
        rng.shuffle(order)
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            src = _pad_batch([s for s, _ in batch])
            tgt = _pad_batch([t for _, t in batch])
            logits = model(src, tgt[:, :-1])
            loss = criterion(logits.reshape(-1, logits.size(-1)), tgt[:, 1:].reshape(-1))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.item())
            batches += 1
        return total / batches

    initial = None
    final = None
    for epoch in range(1, config.epochs + 1):
        final = epoch_loss()
        if initial is None:
            initial = final
        if epoch % 50 == 0 or epoch == 1:
            logger.info("epoch %d/%d loss %.4f", epoch, config.epochs, final)
        if final < 0.002:
            logger.info("early stop at epoch %d (loss %.5f)", epoch, final)
            break

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out_dir / "model.pt")
    vocab.save(out_dir / "vocab.json")
    config.save(out_dir / "config.json")
    (out_dir / "train_log.json").write_text(
        json.dumps(
            {
                "examples": len(examples),
                "vocab_size": len(vocab),
                "initial_loss": initial,
                "final_loss": final,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return out_dir


def load_checkpoint(checkpoint_dir: str | Path) -> tuple[Seq2SeqModel, Vocab, ServiceConfig]:
    checkpoint_dir = Path(checkpoint_dir)
    config = ServiceConfig.load(checkpoint_dir / "config.json")
    vocab = Vocab.load(checkpoint_dir / "vocab.json")
    model = Seq2SeqModel(len(vocab), config)
    model.load_state_dict(torch.load(checkpoint_dir / "model.pt", map_location="cpu"))
    model.eval()
    return model, vocab, config
