"""Cognate reflex prediction as a neighborhood task.

A cognate set maps onto a neighborhood: the target language id plays the
target spelling, the hidden reflex plays the pronunciation, and each sister
language contributes a neighbor whose "name" is its language id and whose
"pron" is its form. Memory is interleaved at token resolution (no averaging)
so the decoder can copy pieces of individual cognates. Phoneme tokens are
space delimited and carry their own vocabularies.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from nbrs.errors import DataError
from nbrs.geodata import FeatureRecord, Neighbor, Neighborhood
from nbrs.model import ModelConfig

log = logging.getLogger(__name__)

MISSING_MARKS = ("", "?", "-")


@dataclass
class CognateSet:
    set_id: str
    forms: dict[str, list[str]]  # language -> phoneme tokens
    target_lang: str | None = None  # the language whose form is to be predicted
    synthetic: bool = False

    def related(self, exclude: str | None = None) -> list[tuple[str, list[str]]]:
        skip = exclude if exclude is not None else self.target_lang
        return [(lang, toks) for lang, toks in self.forms.items() if lang != skip]


@dataclass
class CognateModelConfig:
    """Smaller transformer settings for the cognate task; interleaved memory
    is always on here."""

    layers: int = 2
    heads: int = 4
    emb_size: int = 64
    hidden: int = 128
    dropout: float = 0.1
    label_smoothing: float = 0.1
    input_vocab: int = 128
    output_vocab: int = 256
    name_len: int = 4
    pron_len: int = 16
    nneigh: int = 16
    neighbor_dropout: float = 0.0
    max_memory_rows: int = 512

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(
            layers=self.layers,
            heads=self.heads,
            emb_size=self.emb_size,
            hidden=self.hidden,
            dropout=self.dropout,
            label_smoothing=self.label_smoothing,
            latlong_grid_n=1,
            input_vocab=self.input_vocab,
            output_vocab=self.output_vocab,
            name_len=self.name_len,
            pron_len=self.pron_len,
            nneigh=self.nneigh,
            use_neighbors=True,
            use_latlong=False,
            neighbor_dropout=self.neighbor_dropout,
            token_mode="space",
            interleave_memory=True,
            max_memory_rows=self.max_memory_rows,
        )


# ---------------------------------------------------------------------------
# table I/O: TSV with a language-name header; column 1 is the set id
# ---------------------------------------------------------------------------


def load_table(path) -> tuple[list[str], list[CognateSet]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"cognate table not found: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError(f"cognate table has no header: {path}")
    header = lines[0].split("\t")
    if len(header) < 3:
        raise DataError("cognate table needs an id column and at least two languages")
    langs = header[1:]
    sets: list[CognateSet] = []
    skipped = 0
    for row_no, line in enumerate(lines[1:], 2):
        cells = line.split("\t")
        if len(cells) != len(header):
            skipped += 1
            log.debug("%s:%d: expected %d columns, got %d", path, row_no, len(header), len(cells))
            continue
        forms: dict[str, list[str]] = {}
        target = None
        for lang, cell in zip(langs, cells[1:]):
            cell = cell.strip()
            if cell == "?":
                target = lang
            elif cell not in MISSING_MARKS:
                forms[lang] = cell.split()
        if (target is None and len(forms) < 2) or (target is not None and len(forms) < 1):
            skipped += 1
            log.debug("%s:%d: fewer than two filled forms", path, row_no)
            continue
        sets.append(CognateSet(set_id=cells[0], forms=forms, target_lang=target))
    if skipped:
        log.info("skipped %d short or malformed cognate rows", skipped)
    return langs, sets


def write_table(path, langs: Sequence[str], sets: Sequence[CognateSet], predictions: dict[str, list[str]] | None = None) -> None:
    """TSV out; ``predictions`` fills target cells by set id."""
    rows = ["\t".join(["COGID", *langs])]
    for cs in sets:
        cells = [cs.set_id]
        for lang in langs:
            if lang == cs.target_lang:
                pred = (predictions or {}).get(cs.set_id)
                cells.append(" ".join(pred) if pred else "?")
            else:
                cells.append(" ".join(cs.forms.get(lang, [])))
        rows.append("\t".join(cells))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# mapping onto neighborhoods
# ---------------------------------------------------------------------------


def to_neighborhood(cs: CognateSet, target_lang: str | None = None) -> Neighborhood:
    """Neighborhood-shaped example: language ids act as spellings and forms
    as pronunciations; there are no distances and no lat/long."""
    lang = target_lang if target_lang is not None else cs.target_lang
    if lang is None:
        raise DataError(f"cognate set {cs.set_id} has no target language")
    target_form = cs.forms.get(lang)
    target = FeatureRecord(
        id=cs.set_id,
        name=lang,
        lat=0.0,
        lon=0.0,
        pron=" ".join(target_form) if target_form else None,
        ftype="cognate",
    )
    neighbors = [
        Neighbor(name=other, pron=" ".join(toks), distance_km=0.0, interesting=False)
        for other, toks in sorted(cs.related(exclude=lang))
    ]
    return Neighborhood(target=target, neighbors=neighbors)


def from_neighborhood(nb: Neighborhood) -> CognateSet:
    """Inverse of to_neighborhood (the mapping loses nothing)."""
    forms = {n.name: n.pron.split() for n in nb.neighbors}
    target_lang = nb.target.name
    if nb.target.pron:
        forms[target_lang] = nb.target.pron.split()
    return CognateSet(set_id=nb.target.id, forms=forms, target_lang=target_lang)


def training_examples(sets: Sequence[CognateSet]) -> list[Neighborhood]:
    """One example per (set, present language as target) with at least one
    sister form remaining."""
    out = []
    for cs in sets:
        for lang in sorted(cs.forms):
            if len(cs.related(exclude=lang)) >= 1:
                out.append(to_neighborhood(cs, target_lang=lang))
    return out


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


def augment_drop(sets: Sequence[CognateSet], copies: int, seed: int = 0) -> list[CognateSet]:
    """``copies`` extra sets per original, each keeping a uniform random
    nonempty proper subset of the related forms. Originals are untouched;
    sets with a single related form copy through unchanged."""
    if copies < 0:
        raise DataError("copies must be nonnegative")
    gen = np.random.default_rng(seed)
    out: list[CognateSet] = []
    for cs in sets:
        related = cs.related()
        k = len(related)
        for c in range(copies):
            if k <= 1:
                kept = related
            else:
                mask = int(gen.integers(1, 2**k - 1))  # proper nonempty subset
                kept = [related[i] for i in range(k) if mask & (1 << i)]
            forms = dict(kept)
            if cs.target_lang is not None and cs.target_lang in cs.forms:
                forms[cs.target_lang] = list(cs.forms[cs.target_lang])
            out.append(
                CognateSet(set_id=f"{cs.set_id}~drop{c}", forms=forms, target_lang=cs.target_lang, synthetic=True)
            )
    return out


class NgramModel:
    """Per-language add-1-smoothed n-gram model over phoneme tokens."""

    BOS = "<s>"
    EOS = "</s>"

    def __init__(self, order: int = 3):
        if order < 1:
            raise DataError("n-gram order must be at least 1")
        self.order = order
        self.counts: dict[tuple, Counter] = defaultdict(Counter)
        self.alphabet: set[str] = set()
        self.max_len = 1

    def fit(self, forms: Sequence[Sequence[str]]) -> "NgramModel":
        for toks in forms:
            self.alphabet.update(toks)
            self.max_len = max(self.max_len, len(toks))
            padded = [self.BOS] * (self.order - 1) + list(toks) + [self.EOS]
            for i in range(self.order - 1, len(padded)):
                self.counts[tuple(padded[i - self.order + 1 : i])][padded[i]] += 1
        if not self.alphabet:
            raise DataError("cannot fit an n-gram model on empty data")
        return self

    def _sample_once(self, gen: np.random.Generator) -> list[str]:
        symbols = sorted(self.alphabet) + [self.EOS]
        out: list[str] = []
        history = [self.BOS] * (self.order - 1)
        cap = 3 * self.max_len
        while len(out) < cap:
            counts = self.counts.get(tuple(history), Counter())
            weights = np.array([counts.get(s, 0) + 1 for s in symbols], dtype=np.float64)
            probs = weights / weights.sum()
            pick = symbols[int(gen.choice(len(symbols), size=None, p=probs))]
            if pick == self.EOS:
                break
            out.append(pick)
            history = (history + [pick])[1:] if self.order > 1 else []
        return out

    def sample(self, gen: np.random.Generator) -> list[str]:
        """Nonempty form; empty draws are resampled so token statistics track
        the training distribution."""
        for _ in range(100):
            out = self._sample_once(gen)
            if out:
                return out
        symbols = sorted(self.alphabet)
        return [symbols[int(gen.integers(0, len(symbols)))]]


def augment_ngram(
    sets: Sequence[CognateSet],
    languages: Sequence[str],
    count: int,
    order: int = 3,
    seed: int = 0,
) -> list[CognateSet]:
    """``count`` synthetic sets, one form per language sampled from that
    language's own n-gram model (the target language included)."""
    if count < 0:
        raise DataError("count must be nonnegative")
    models = {}
    for lang in languages:
        observed = [cs.forms[lang] for cs in sets if lang in cs.forms]
        if not observed:
            raise DataError(f"no observed forms to fit an n-gram model for {lang}")
        models[lang] = NgramModel(order=order).fit(observed)
    gen = np.random.default_rng(seed)
    out = []
    for i in range(count):
        forms = {lang: models[lang].sample(gen) for lang in languages}
        out.append(CognateSet(set_id=f"synth{i}", forms=forms, target_lang=None, synthetic=True))
    return out


# ---------------------------------------------------------------------------
# scoring: NED, B-cubed F over aligned positions, corpus BLEU
# ---------------------------------------------------------------------------


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    n, m = len(a), len(b)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
        prev = cur
    return prev[m]


def ned(pred: Sequence[str], ref: Sequence[str]) -> float:
    if not pred and not ref:
        return 0.0
    return edit_distance(pred, ref) / max(len(pred), len(ref))


def _nw_align(a: Sequence[str], b: Sequence[str], gap: str = "-") -> tuple[list[str], list[str]]:
    """Global alignment via the edit-distance backtrace."""
    n, m = len(a), len(b)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j] + 1, d[i, j - 1] + 1, d[i - 1, j - 1] + (a[i - 1] != b[j - 1]))
    out_a: list[str] = []
    out_b: list[str] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (a[i - 1] != b[j - 1]):
            out_a.append(a[i - 1])
            out_b.append(b[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            out_a.append(a[i - 1])
            out_b.append(gap)
            i -= 1
        else:
            out_a.append(gap)
            out_b.append(b[j - 1])
            j -= 1
    return out_a[::-1], out_b[::-1]


def bcubed_f(pred: Sequence[str], ref: Sequence[str]) -> float:
    """B-cubed F over aligned token positions: align the two sequences, then
    treat each side's symbol identities as a clustering of the positions."""
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    pa, ra = _nw_align(pred, ref)
    n = len(pa)
    clusters_p: dict[str, set[int]] = defaultdict(set)
    clusters_r: dict[str, set[int]] = defaultdict(set)
    for i in range(n):
        clusters_p[pa[i]].add(i)
        clusters_r[ra[i]].add(i)
    precision = recall = 0.0
    for i in range(n):
        cp = clusters_p[pa[i]]
        cr = clusters_r[ra[i]]
        overlap = len(cp & cr)
        precision += overlap / len(cp)
        recall += overlap / len(cr)
    precision /= n
    recall /= n
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def corpus_bleu(preds: Sequence[Sequence[str]], refs: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Standard corpus BLEU over phoneme tokens with brevity penalty and no
    smoothing (any empty clipped n-gram count zeroes the score)."""
    import math as _math

    matched = [0] * max_n
    totals = [0] * max_n
    pred_len = ref_len = 0
    for pred, ref in zip(preds, refs):
        pred_len += len(pred)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            pc = Counter(tuple(pred[i : i + n]) for i in range(len(pred) - n + 1))
            rc = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
            totals[n - 1] += sum(pc.values())
            matched[n - 1] += sum(min(c, rc.get(g, 0)) for g, c in pc.items())
    usable = [i for i in range(max_n) if totals[i] > 0]
    if not usable or pred_len == 0:
        return 0.0
    if any(matched[i] == 0 for i in usable):
        return 0.0
    log_prec = sum(_math.log(matched[i] / totals[i]) for i in usable) / len(usable)
    bp = 1.0 if pred_len > ref_len else _math.exp(1.0 - ref_len / max(pred_len, 1))
    return bp * _math.exp(log_prec)


@dataclass
class CognateScores:
    ned: float
    bcubed_f: float
    bleu: float
    scored: int
    skipped: int


def score(preds: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> CognateScores:
    """Mean NED, mean B-cubed F, and corpus BLEU over aligned lists; pairs
    with an empty reference are skipped and counted."""
    if len(preds) != len(refs):
        raise DataError("prediction and reference lists must align")
    pairs = [(p, r) for p, r in zip(preds, refs) if r]
    skipped = len(refs) - len(pairs)
    if not pairs:
        raise DataError("nothing to score: every reference is empty")
    neds = [ned(p, r) for p, r in pairs]
    bcs = [bcubed_f(p, r) for p, r in pairs]
    bleu = corpus_bleu([p for p, _ in pairs], [r for _, r in pairs])
    return CognateScores(
        ned=float(np.mean(neds)),
        bcubed_f=float(np.mean(bcs)),
        bleu=bleu,
        scored=len(pairs),
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# train / predict wrappers
# ---------------------------------------------------------------------------


def train_cognate(sets: Sequence[CognateSet], cog_cfg: CognateModelConfig, tcfg, out_dir=None):
    from nbrs.training import train

    examples = training_examples(sets)
    if not examples:
        raise DataError("no trainable cognate examples")
    return train(cog_cfg.to_model_config(), examples, tcfg, out_dir=out_dir)


def predict_reflexes(model, sets: Sequence[CognateSet], beam: int = 8) -> dict[str, list[str]]:
    from nbrs.decoding import decode_batch

    examples = [to_neighborhood(cs) for cs in sets]
    hyps = decode_batch(model, examples, beam=beam)
    return {cs.set_id: (h[0].text.split() if h else []) for cs, h in zip(sets, hyps)}
