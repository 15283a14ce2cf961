"""Vocabularies, character/token encoding, and Japanese script helpers.

Symbols are strings: single characters for the geographic task, space
delimited phoneme tokens for the cognate task. Ids 0..3 are reserved for
PAD, BOS, EOS, UNK in every vocabulary.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from nbrs.errors import DataError

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>"]

# CJK Unified Ideographs, base block plus extension A
_KANJI_RANGES = ((0x4E00, 0x9FFF), (0x3400, 0x4DBF))
_HIRAGANA = (0x3041, 0x309F)
_KATAKANA = (0x30A1, 0x30FF)
LONG_VOWEL_MARK = "ー"  # ー


def is_kanji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _KANJI_RANGES)


def is_hiragana(ch: str) -> bool:
    return _HIRAGANA[0] <= ord(ch) <= _HIRAGANA[1]


def is_katakana(ch: str) -> bool:
    return _KATAKANA[0] <= ord(ch) <= _KATAKANA[1]


def is_kana(ch: str) -> bool:
    return is_hiragana(ch) or is_katakana(ch) or ch == LONG_VOWEL_MARK


def katakana_to_hiragana(s: str) -> str:
    """Map katakana codepoints onto hiragana by the fixed block offset; the
    long-vowel mark and everything else pass through."""
    out = []
    for ch in s:
        cp = ord(ch)
        if 0x30A1 <= cp <= 0x30F6 or cp in (0x30FD, 0x30FE):
            out.append(chr(cp - 0x60))
        else:
            out.append(ch)
    return "".join(out)


def kanji_bigrams(s: str) -> set[str]:
    return {s[i : i + 2] for i in range(len(s) - 1) if is_kanji(s[i]) and is_kanji(s[i + 1])}


def shares_kanji_bigram(a: str, b: str) -> bool:
    """True iff some two-kanji substring of ``a`` also occurs in ``b``."""
    return any(bg in b for bg in kanji_bigrams(a))


@dataclass
class TokenSeq:
    ids: list[int]
    text: str
    truncated: bool = False


@dataclass
class Vocabulary:
    symbols: list[str]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.symbols[: len(RESERVED)] != RESERVED:
            raise DataError("vocabulary must start with the reserved symbols")
        if not self.index:
            self.index = {s: i for i, s in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise DataError("vocabulary contains duplicate symbols")

    def __len__(self) -> int:
        return len(self.symbols)

    def id_of(self, symbol: str) -> int:
        return self.index.get(symbol, UNK_ID)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.symbols) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Keep the most frequent symbols, ties broken by codepoint order.

    Each corpus element is a sequence of symbols; a plain string counts as a
    sequence of characters. Newlines never enter a vocabulary (the on-disk
    format is one symbol per line).
    """
    if max_size <= len(RESERVED):
        raise DataError(f"max_size must exceed {len(RESERVED)}")
    counts: Counter[str] = Counter()
    for item in corpus:
        counts.update(sym for sym in item if sym not in ("\n", "\r") and sym not in RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [sym for sym, _ in ranked[: max_size - len(RESERVED)]]
    return Vocabulary(RESERVED + kept)


def encode(vocab: Vocabulary, symbols: Sequence[str], max_len: int, add_bos_eos: bool = False) -> TokenSeq:
    """Encode to ids, truncating to ``max_len`` and padding with PAD.

    With ``add_bos_eos`` the content is clipped to leave room for both
    markers. Out-of-vocabulary symbols map to UNK.
    """
    if max_len < 1:
        raise DataError("max_len must be at least 1")
    if add_bos_eos and max_len < 2:
        raise DataError("max_len must be at least 2 to hold BOS and EOS")
    text = symbols if isinstance(symbols, str) else " ".join(symbols)
    content = [vocab.id_of(s) for s in symbols]
    if add_bos_eos:
        budget = max_len - 2
        truncated = len(content) > budget
        ids = [BOS_ID] + content[:budget] + [EOS_ID]
    else:
        truncated = len(content) > max_len
        ids = content[:max_len]
    ids = ids + [PAD_ID] * (max_len - len(ids))
    return TokenSeq(ids=ids, text=text, truncated=truncated)


def decode(vocab: Vocabulary, ids: Iterable[int], joiner: str = "") -> str:
    """Ids back to a string, dropping reserved symbols; decoding stops at EOS."""
    out = []
    for i in ids:
        if i == EOS_ID:
            break
        if i in (PAD_ID, BOS_ID):
            continue
        out.append(vocab.symbols[i] if 0 <= i < len(vocab.symbols) else RESERVED[UNK_ID])
    return joiner.join(out)
