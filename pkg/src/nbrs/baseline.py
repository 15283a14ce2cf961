"""Non-neural baseline: a spelling-to-kana aligner trained by EM, reading
statistics collected from neighbors, and longest-span substitution into a
base reading.

The aligner works over monotone many-to-many span alignments: kana characters
in the spelling anchor to themselves one-to-one, and kana-free spans of one
to three characters may read as zero to six kana. EM estimates the span
translation table; Viterbi produces the single best alignment.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from nbrs.errors import DataError
from nbrs.geodata import Neighborhood
from nbrs.textdata import is_kana, is_kanji, katakana_to_hiragana

log = logging.getLogger(__name__)

UNKNOWN_READING = "〓"

NAME_SPAN_MAX = 3
KANA_SPAN_MAX = 6


@dataclass
class Alignment:
    """Monotone partition of a spelling and its kana reading into aligned
    span pairs: the name spans concatenate to the spelling, the kana spans to
    the reading."""

    spans: list[tuple[str, str]]

    @property
    def name(self) -> str:
        return "".join(a for a, _ in self.spans)

    @property
    def pron(self) -> str:
        return "".join(b for _, b in self.spans)


def _moves(name: str, i: int, max_a: int):
    """Allowed span widths from position i: a kana character is a hard
    one-to-one anchor; kana-free spans run 1..max_a characters."""
    if is_kana(name[i]):
        yield 1, True
        return
    for a in range(1, max_a + 1):
        if i + a > len(name):
            return
        if any(is_kana(name[i + k]) for k in range(a)):
            return
        yield a, False


class Aligner:
    """Span translation table plus Viterbi inference. Unseen span pairs get a
    small smoothing floor so novel readings still align (EM estimation itself
    runs without the floor)."""

    def __init__(
        self,
        table: dict[str, dict[str, float]],
        max_name_span: int = NAME_SPAN_MAX,
        max_kana_span: int = KANA_SPAN_MAX,
        floor: float = 1e-6,
    ):
        self.table = table
        self.max_name_span = max_name_span
        self.max_kana_span = max_kana_span
        self.floor = floor

    def _score(self, a: str, b: str) -> float:
        return self.table.get(a, {}).get(b, self.floor)

    def viterbi(self, name: str, pron: str, boundaries: frozenset[int] | set[int] = frozenset()) -> Alignment | None:
        """Best monotone alignment, or None when no path exists (e.g. the
        reading is shorter than the kana content of the spelling).

        ``boundaries`` forces segmentation points: no span may straddle those
        name positions, so the aligned kana is addressable there.
        """
        n, m = len(name), len(pron)
        best = [[0.0] * (m + 1) for _ in range(n + 1)]
        back: list[list[tuple[int, int] | None]] = [[None] * (m + 1) for _ in range(n + 1)]
        best[0][0] = 1.0
        for i in range(n):
            for j in range(m + 1):
                p = best[i][j]
                if p == 0.0:
                    continue
                for a, anchored in _moves(name, i, self.max_name_span):
                    if any(i < cut < i + a for cut in boundaries):
                        continue
                    if anchored:
                        if j < m and katakana_to_hiragana(name[i]) == pron[j]:
                            cand = p
                            if cand > best[i + 1][j + 1]:
                                best[i + 1][j + 1] = cand
                                back[i + 1][j + 1] = (i, j)
                        continue
                    src = name[i : i + a]
                    for b in range(0, min(self.max_kana_span, m - j) + 1):
                        t = self._score(src, pron[j : j + b])
                        if t <= 0.0:
                            continue
                        cand = p * t
                        if cand > best[i + a][j + b]:
                            best[i + a][j + b] = cand
                            back[i + a][j + b] = (i, j)
        if best[n][m] == 0.0:
            return None
        spans: list[tuple[str, str]] = []
        i, j = n, m
        while (i, j) != (0, 0):
            pi, pj = back[i][j]
            spans.append((name[pi:i], pron[pj:j]))
            i, j = pi, pj
        spans.reverse()
        return Alignment(spans)


def _lattice_pass(name: str, pron: str, score, max_a: int, max_b: int):
    """Forward probabilities over the alignment lattice; ``score(a_span,
    b_span)`` supplies the span weights."""
    n, m = len(name), len(pron)
    alpha = [[0.0] * (m + 1) for _ in range(n + 1)]
    alpha[0][0] = 1.0
    for i in range(n):
        for j in range(m + 1):
            p = alpha[i][j]
            if p == 0.0:
                continue
            for a, anchored in _moves(name, i, max_a):
                if anchored:
                    if j < m and katakana_to_hiragana(name[i]) == pron[j]:
                        alpha[i + 1][j + 1] += p
                    continue
                src = name[i : i + a]
                for b in range(0, min(max_b, m - j) + 1):
                    t = score(src, pron[j : j + b])
                    if t > 0.0:
                        alpha[i + a][j + b] += p * t
    return alpha


def _backward_pass(name: str, pron: str, score, max_a: int, max_b: int):
    n, m = len(name), len(pron)
    beta = [[0.0] * (m + 1) for _ in range(n + 1)]
    beta[n][m] = 1.0
    for i in range(n - 1, -1, -1):
        for j in range(m, -1, -1):
            total = 0.0
            for a, anchored in _moves(name, i, max_a):
                if anchored:
                    if j < m and katakana_to_hiragana(name[i]) == pron[j]:
                        total += beta[i + 1][j + 1]
                    continue
                src = name[i : i + a]
                for b in range(0, min(max_b, m - j) + 1):
                    t = score(src, pron[j : j + b])
                    if t > 0.0:
                        total += t * beta[i + a][j + b]
            beta[i][j] = total
    return beta


@dataclass
class AlignerStats:
    pairs: int = 0
    skipped: int = 0
    iterations: int = 0
    final_change: float = 0.0


def train_aligner(
    pairs: Sequence[tuple[str, str]],
    max_name_span: int = NAME_SPAN_MAX,
    max_kana_span: int = KANA_SPAN_MAX,
    tol: float = 1e-4,
    max_iter: int = 30,
) -> tuple[Aligner, AlignerStats]:
    """EM over monotone span alignments. The first iteration weights every
    allowed span pair equally; later iterations use the estimated table.
    Unalignable pairs (reading shorter than the spelling's kana content, or
    kana content out of order) are skipped with a diagnostic count."""
    if not pairs:
        raise DataError("train_aligner needs at least one (name, pron) pair")
    stats = AlignerStats(pairs=len(pairs))
    table: dict[str, dict[str, float]] = {}
    usable: list[tuple[str, str]] = []

    def uniform(a: str, b: str) -> float:
        return 1.0

    for name, pron in pairs:
        if _lattice_pass(name, pron, uniform, max_name_span, max_kana_span)[len(name)][len(pron)] > 0.0:
            usable.append((name, pron))
        else:
            stats.skipped += 1
            log.debug("unalignable pair skipped: %s / %s", name, pron)
    if not usable:
        raise DataError("no alignable training pairs")

    for iteration in range(max_iter):
        score = uniform if iteration == 0 else (lambda a, b: table.get(a, {}).get(b, 0.0))
        counts: dict[str, Counter] = defaultdict(Counter)
        for name, pron in usable:
            alpha = _lattice_pass(name, pron, score, max_name_span, max_kana_span)
            z = alpha[len(name)][len(pron)]
            if z == 0.0:
                continue
            beta = _backward_pass(name, pron, score, max_name_span, max_kana_span)
            n, m = len(name), len(pron)
            for i in range(n):
                if is_kana(name[i]):
                    continue
                for j in range(m + 1):
                    if alpha[i][j] == 0.0:
                        continue
                    for a, anchored in _moves(name, i, max_name_span):
                        if anchored:
                            continue
                        src = name[i : i + a]
                        for b in range(0, min(max_kana_span, m - j) + 1):
                            t = score(src, pron[j : j + b])
                            if t <= 0.0:
                                continue
                            post = alpha[i][j] * t * beta[i + a][j + b] / z
                            if post > 0.0:
                                counts[src][pron[j : j + b]] += post
        new_table = {}
        for src, readings in counts.items():
            total = sum(readings.values())
            new_table[src] = {b: c / total for b, c in readings.items()}
        change = 0.0
        for src in set(table) | set(new_table):
            olds = table.get(src, {})
            news = new_table.get(src, {})
            for b in set(olds) | set(news):
                change = max(change, abs(olds.get(b, 0.0) - news.get(b, 0.0)))
        table = new_table
        stats.iterations = iteration + 1
        stats.final_change = change
        if iteration > 0 and change < tol:
            break
    return Aligner(table, max_name_span, max_kana_span), stats


# ---------------------------------------------------------------------------
# reading lexicons
# ---------------------------------------------------------------------------


@dataclass
class ReadingLexicon:
    """kanji substring -> multiset of kana readings. ``top`` resolves ties by
    smallest recorded distance, then lexicographically."""

    entries: dict[str, Counter] = field(default_factory=dict)
    nearest: dict[tuple[str, str], float] = field(default_factory=dict)

    def add(self, key: str, reading: str, count: float = 1.0, distance_km: float = 0.0) -> None:
        if not any(is_kanji(ch) for ch in key):
            return
        self.entries.setdefault(key, Counter())[reading] += count
        prev = self.nearest.get((key, reading))
        if prev is None or distance_km < prev:
            self.nearest[(key, reading)] = distance_km

    def top(self, key: str) -> str | None:
        readings = self.entries.get(key)
        if not readings:
            return None
        top_count = max(readings.values())
        tied = [r for r, c in readings.items() if c == top_count]
        if len(tied) == 1:
            return tied[0]
        return min(tied, key=lambda r: (self.nearest.get((key, r), float("inf")), r))

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def max_key_len(self) -> int:
        return max((len(k) for k in self.entries), default=0)

    def rows(self) -> list[tuple[str, str, float]]:
        out = []
        for key in sorted(self.entries):
            for reading, count in sorted(self.entries[key].items()):
                out.append((key, reading, count))
        return out


def _span_runs(alignment: Alignment, max_key_len: int):
    """Contiguous alignment-span runs and their concatenated readings."""
    spans = alignment.spans
    for lo in range(len(spans)):
        key = ""
        reading = ""
        for hi in range(lo, len(spans)):
            key += spans[hi][0]
            reading += spans[hi][1]
            if len(key) > max_key_len:
                break
            yield key, reading


def build_reading_lexicon(
    pairs: Iterable[tuple[str, str]], aligner: Aligner, max_key_len: int = 6
) -> ReadingLexicon:
    """Reading statistics over all aligned substrings of the given pairs."""
    lex = ReadingLexicon()
    for name, pron in pairs:
        alignment = aligner.viterbi(name, pron)
        if alignment is None:
            continue
        for key, reading in _span_runs(alignment, max_key_len):
            lex.add(key, reading)
    return lex


def neighbor_lexicon(neighborhood: Neighborhood, aligner: Aligner, max_key_len: int = 6) -> ReadingLexicon:
    """Per-neighborhood statistics; the most common reading per substring
    wins, ties going to the reading from the nearest neighbor."""
    lex = ReadingLexicon()
    for n in neighborhood.neighbors:
        alignment = aligner.viterbi(n.name, n.pron)
        if alignment is None:
            log.debug("unalignable neighbor skipped: %s / %s", n.name, n.pron)
            continue
        for key, reading in _span_runs(alignment, max_key_len):
            lex.add(key, reading, distance_km=n.distance_km)
    return lex


# ---------------------------------------------------------------------------
# base reading and substitution
# ---------------------------------------------------------------------------


def base_reading_with_alignment(name: str, lexicon: ReadingLexicon) -> tuple[str, Alignment]:
    """Greedy longest-match left to right over the lexicon; kana passes
    through (as hiragana); unmatched kanji read as the unknown marker."""
    spans: list[tuple[str, str]] = []
    limit = max(1, lexicon.max_key_len())
    i = 0
    while i < len(name):
        matched = False
        for length in range(min(limit, len(name) - i), 0, -1):
            key = name[i : i + length]
            reading = lexicon.top(key)
            if reading is not None:
                spans.append((key, reading))
                i += length
                matched = True
                break
        if matched:
            continue
        ch = name[i]
        spans.append((ch, katakana_to_hiragana(ch) if is_kana(ch) else (UNKNOWN_READING if is_kanji(ch) else ch)))
        i += 1
    alignment = Alignment(spans)
    return alignment.pron, alignment


def base_reading(name: str, lexicon: ReadingLexicon) -> str:
    return base_reading_with_alignment(name, lexicon)[0]


def apply_lexicon(
    name: str, base: str, lexicon: ReadingLexicon, alignment: Alignment
) -> tuple[str, Alignment]:
    """Replace the reading of the longest lexicon-known span(s) of ``name``.

    Ties on length go to the leftmost span; selected spans never overlap and
    apply left to right. Spans must land on alignment boundaries to locate
    their kana. Returns the corrected reading and its updated alignment.
    """
    if alignment.name != name or alignment.pron != base:
        raise DataError("alignment does not cover the given name and base reading")
    starts = {}
    pos = 0
    for k, (a, _) in enumerate(alignment.spans):
        starts[pos] = k
        pos += len(a)
    starts[pos] = len(alignment.spans)

    candidates = []
    for s in range(len(name)):
        if s not in starts:
            continue
        for e in range(len(name), s, -1):
            if e not in starts:
                continue
            if name[s:e] in lexicon:
                candidates.append((s, e))
    candidates.sort(key=lambda se: (-(se[1] - se[0]), se[0]))

    chosen: list[tuple[int, int]] = []
    for s, e in candidates:
        if all(e <= cs or s >= ce for cs, ce in chosen):
            chosen.append((s, e))
    chosen.sort()

    new_spans: list[tuple[str, str]] = []
    k = 0
    spans = alignment.spans
    pos = 0
    chosen_iter = iter(chosen)
    nxt = next(chosen_iter, None)
    while k < len(spans):
        if nxt is not None and pos == nxt[0]:
            s, e = nxt
            key = name[s:e]
            new_spans.append((key, lexicon.top(key)))
            while pos < e:
                pos += len(spans[k][0])
                k += 1
            nxt = next(chosen_iter, None)
        else:
            new_spans.append(spans[k])
            pos += len(spans[k][0])
            k += 1
    updated = Alignment(new_spans)
    return updated.pron, updated


def substitute(base: str, name: str, lexicon: ReadingLexicon, alignment: Alignment) -> str:
    """Corrected reading after neighbor-span substitution; the base comes
    back unchanged when no name span is in the lexicon."""
    return apply_lexicon(name, base, lexicon, alignment)[0]


@dataclass
class BaselineSystem:
    aligner: Aligner
    base_lexicon: ReadingLexicon
    stats: AlignerStats

    def predict(self, neighborhood: Neighborhood, use_neighbors: bool = True, max_key_len: int = 6) -> str:
        base, alignment = base_reading_with_alignment(neighborhood.target.name, self.base_lexicon)
        if not use_neighbors or not neighborhood.neighbors:
            return base
        lex = neighbor_lexicon(neighborhood, self.aligner, max_key_len=max_key_len)
        return substitute(base, neighborhood.target.name, lex, alignment)


def train_baseline(pairs: Sequence[tuple[str, str]], max_key_len: int = 6, **aligner_kwargs) -> BaselineSystem:
    aligner, stats = train_aligner(pairs, **aligner_kwargs)
    lexicon = build_reading_lexicon(pairs, aligner, max_key_len=max_key_len)
    return BaselineSystem(aligner=aligner, base_lexicon=lexicon, stats=stats)
