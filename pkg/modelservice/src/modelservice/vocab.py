"""Word-level vocabulary.

Tokenization is whitespace splitting, which keeps the bracketed task
control tokens atomic by construction.  The control tokens are inserted
right after the reserved ids so they exist even if a taskset never uses
one of them.
"""

from __future__ import annotations

import json
from pathlib import Path

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocab:
    def __init__(self, tokens: list[str]):
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if self.id_to_token[:4] != list(RESERVED):
            raise ValueError("vocabulary must start with the reserved tokens")

    @classmethod
    def build(cls, texts: list[str], special_tokens: tuple[str, ...]) -> "Vocab":
        tokens = list(RESERVED) + list(special_tokens)
        seen = set(tokens)
        for text in texts:
            for token in text.split():
                if token not in seen:
                    seen.add(token)
                    tokens.append(token)
        return cls(tokens)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str, *, bos: bool = False, eos: bool = False) -> list[int]:
        ids = [self.token_to_id.get(t, UNK) for t in text.split()]
        if bos:
            ids = [BOS] + ids
        if eos:
            ids = ids + [EOS]
        return ids

    def decode(self, ids: list[int]) -> str:
        words = []
        for i in ids:
            if i in (PAD, BOS):
                continue
            if i == EOS:
                break
            words.append(self.id_to_token[i])
        return " ".join(words)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"tokens": self.id_to_token}, ensure_ascii=False) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["tokens"])
