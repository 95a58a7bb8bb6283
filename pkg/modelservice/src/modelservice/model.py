"""Compact encoder-decoder transformer with greedy/sampled decoding."""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import ServiceConfig
from .vocab import BOS, EOS, PAD


class PositionalEncoding(nn.Module):
    def __init__(self, d_model: int, max_len: int = 512):
        super().__init__()
        position = torch.arange(max_len).unsqueeze(1)
        div = torch.exp(torch.arange(0, d_model, 2) * (-math.log(10000.0) / d_model))
        pe = torch.zeros(max_len, d_model)
        pe[:, 0::2] = torch.sin(position * div)
        pe[:, 1::2] = torch.cos(position * div)
        self.register_buffer("pe", pe)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.pe[: x.size(1)].unsqueeze(0)


class Seq2SeqModel(nn.Module):
    def __init__(self, vocab_size: int, config: ServiceConfig):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, config.d_model, padding_idx=PAD)
        self.positional = PositionalEncoding(config.d_model)
        self.transformer = nn.Transformer(
            d_model=config.d_model,
            nhead=config.nhead,
            num_encoder_layers=config.num_layers,
            num_decoder_layers=config.num_layers,
            dim_feedforward=config.dim_feedforward,
            dropout=config.dropout,
            batch_first=True,
        )
        self.out = nn.Linear(config.d_model, vocab_size)
        self.scale = math.sqrt(config.d_model)

    def forward(self, src: torch.Tensor, tgt: torch.Tensor) -> torch.Tensor:
        src_emb = self.positional(self.embed(src) * self.scale)
        tgt_emb = self.positional(self.embed(tgt) * self.scale)
        # bool causal mask keeps mask dtypes consistent with the padding masks
        tgt_mask = torch.triu(
            torch.ones(tgt.size(1), tgt.size(1), dtype=torch.bool, device=tgt.device), diagonal=1
        )
        hidden = self.transformer(
            src_emb,
            tgt_emb,
            tgt_mask=tgt_mask,
            src_key_padding_mask=src.eq(PAD),
            tgt_key_padding_mask=tgt.eq(PAD),
            memory_key_padding_mask=src.eq(PAD),
        )
        return self.out(hidden)

    @torch.no_grad()
    def generate(
        self,
        src_ids: list[int],
        max_new_tokens: int,
        temperature: float = 0.0,
        seed: int | None = None,
    ) -> list[int]:
        """Autoregressive decode; greedy when temperature <= 0.1."""
        self.eval()
        src = torch.tensor([src_ids], dtype=torch.long)
        generated = [BOS]
        rng = None
        if temperature > 0.1:
            rng = torch.Generator()
            rng.manual_seed(0 if seed is None else seed)
        for _ in range(max_new_tokens):
            tgt = torch.tensor([generated], dtype=torch.long)
            logits = self.forward(src, tgt)[0, -1]
            if temperature > 0.1:
                probs = torch.softmax(logits / temperature, dim=-1)
                next_id = int(torch.multinomial(probs, 1, generator=rng).item())
            else:
                next_id = int(torch.argmax(logits).item())
            generated.append(next_id)
            if next_id == EOS:
                break
        return generated[1:]
