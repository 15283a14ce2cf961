"""Beam search, beam-gap confidence, discrepancy detection, and ROC/PR.

Beam search keeps total log likelihood with no length normalization (the
pronunciations are short and tightly capped); a flag enables normalization.
The confidence score of a decode is the gap between the top two beam scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nbrs.errors import DataError
from nbrs.geodata import Neighborhood
from nbrs.model import NeighborModel, encode_batch
from nbrs.numerics import Tensor, no_grad
from nbrs.textdata import BOS_ID, EOS_ID, PAD_ID, UNK_ID, decode, is_kanji

BANNED_OUTPUT_IDS = (PAD_ID, BOS_ID, UNK_ID)


@dataclass
class BeamHypothesis:
    ids: list[int]
    log_likelihood: float
    finished: bool
    text: str


@dataclass
class DiscrepancyEvidence:
    neighbor_index: int
    neighbor_name: str
    shared_spelling: str
    shared_pron: str


@dataclass
class DiscrepancyReport:
    feature_id: str
    name: str
    reference: str
    hypothesis: str
    confidence_gap: float
    evidence: list[DiscrepancyEvidence]


def _log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return x - m - np.log(e.sum(axis=-1, keepdims=True))


def decode_batch(
    model: NeighborModel,
    neighborhoods: Sequence[Neighborhood],
    beam: int | None = None,
    max_len: int | None = None,
    length_normalize: bool = False,
    chunk_size: int = 32,
) -> list[list[BeamHypothesis]]:
    """Beam-decode every neighborhood; hypotheses come back sorted by total
    log likelihood, best first. beam=1 is greedy decoding."""
    if beam is None:
        beam = model.cfg.beam
    if beam < 1:
        raise DataError("beam must be at least 1")
    if max_len is None:
        max_len = model.cfg.pron_len
    out: list[list[BeamHypothesis]] = []
    with no_grad():
        for lo in range(0, len(neighborhoods), chunk_size):
            out.extend(_decode_chunk(model, neighborhoods[lo : lo + chunk_size], beam, max_len, length_normalize))
    return out


def _decode_chunk(model, chunk, beam, max_len, length_normalize):
    cfg = model.cfg
    b = len(chunk)
    vocab_out = model.vocab_out
    v = len(vocab_out)
    batch = encode_batch(cfg, model.vocab_in, vocab_out, chunk)
    memory, mem_mask = model.encode_memory(batch)
    mem_rep = Tensor(np.repeat(memory.data, beam, axis=0))
    mask_rep = np.repeat(mem_mask, beam, axis=0)

    seqs = np.full((b, beam, max_len), PAD_ID, dtype=np.int64)
    lls = np.full((b, beam), -np.inf)
    lls[:, 0] = 0.0
    finished = np.zeros((b, beam), dtype=bool)
    n_tokens = np.zeros((b, beam), dtype=np.int64)

    for t in range(1, max_len + 1):
        prefix = np.concatenate(
            [np.full((b, beam, 1), BOS_ID, dtype=np.int64), seqs[:, :, : t - 1]], axis=2
        ).reshape(b * beam, t)
        logits = model.decode_logits(prefix, mem_rep, mask_rep)
        logp = _log_softmax(logits.data[:, -1, :]).reshape(b, beam, v).astype(np.float64)
        logp[:, :, list(BANNED_OUTPUT_IDS)] = -np.inf

        grow = np.where(finished[:, :, None], -np.inf, lls[:, :, None] + logp)
        stay = np.where(finished, lls, -np.inf)
        cand = np.concatenate([grow.reshape(b, beam * v), stay], axis=1)
        top = np.argsort(-cand, axis=1, kind="stable")[:, :beam]

        new_seqs = np.empty_like(seqs)
        new_lls = np.empty_like(lls)
        new_fin = np.empty_like(finished)
        new_cnt = np.empty_like(n_tokens)
        for i in range(b):
            for j, c in enumerate(top[i]):
                if c < beam * v:
                    parent, tok = divmod(int(c), v)
                    new_seqs[i, j] = seqs[i, parent]
                    new_seqs[i, j, t - 1] = tok
                    new_lls[i, j] = cand[i, c]
                    new_fin[i, j] = (tok == EOS_ID) or (t == max_len)
                    new_cnt[i, j] = n_tokens[i, parent] + 1
                else:
                    parent = int(c) - beam * v
                    new_seqs[i, j] = seqs[i, parent]
                    new_lls[i, j] = lls[i, parent]
                    new_fin[i, j] = True
                    new_cnt[i, j] = n_tokens[i, parent]
        seqs, lls, finished, n_tokens = new_seqs, new_lls, new_fin, new_cnt
        if finished.all():
            break

    joiner = "" if model.cfg.token_mode == "char" else " "
    results = []
    for i in range(b):
        hyps = []
        for j in range(beam):
            if not np.isfinite(lls[i, j]):
                continue
            score = float(lls[i, j])
            if length_normalize and n_tokens[i, j] > 0:
                score /= float(n_tokens[i, j])
            ids = [int(x) for x in seqs[i, j] if x != PAD_ID]
            hyps.append(
                BeamHypothesis(
                    ids=ids,
                    log_likelihood=score,
                    finished=bool(finished[i, j]),
                    text=decode(vocab_out, seqs[i, j], joiner=joiner),
                )
            )
        hyps.sort(key=lambda h: -h.log_likelihood)
        results.append(hyps)
    return results


def beam_search(
    model: NeighborModel,
    neighborhood: Neighborhood,
    beam: int = 8,
    max_len: int | None = None,
    length_normalize: bool = False,
) -> list[BeamHypothesis]:
    return decode_batch(model, [neighborhood], beam=beam, max_len=max_len, length_normalize=length_normalize)[0]


def confidence_gap(hyps: Sequence[BeamHypothesis]) -> float:
    """Difference between the top two log likelihoods; a single hypothesis is
    maximally confident by convention (inf)."""
    if not hyps:
        raise DataError("confidence_gap needs at least one hypothesis")
    if len(hyps) == 1:
        return math.inf
    return hyps[0].log_likelihood - hyps[1].log_likelihood


def _shared_substring(a: str, b: str, min_len: int, need_kanji: bool) -> str | None:
    """Longest substring of ``a`` occurring in ``b``, at least ``min_len``
    long, optionally required to contain a kanji."""
    for length in range(min(len(a), len(b)), min_len - 1, -1):
        for start in range(0, len(a) - length + 1):
            sub = a[start : start + length]
            if need_kanji and not any(is_kanji(ch) for ch in sub):
                continue
            if sub in b:
                return sub
    return None


def detect_discrepancies(
    model: NeighborModel,
    dataset: Sequence[Neighborhood],
    beam: int | None = None,
    min_gap: float = 0.0,
    spelling_min_len: int = 2,
    pron_min_len: int = 2,
    chunk_size: int = 32,
) -> list[DiscrepancyReport]:
    """Decode everything and keep hypothesis/reference mismatches that have
    neighbor support: a neighbor sharing a kanji substring with the target's
    spelling whose pronunciation shares a substring with the hypothesis.
    Reports come back sorted by confidence gap, most confident first."""
    for nb in dataset:
        if not nb.target.pron:
            raise DataError(f"target {nb.target.id} has no reference pronunciation")
    hyp_lists = decode_batch(model, dataset, beam=beam, chunk_size=chunk_size)
    reports: list[DiscrepancyReport] = []
    for nb, hyps in zip(dataset, hyp_lists):
        if not hyps:
            continue
        hyp = hyps[0].text
        ref = nb.target.pron
        if hyp == ref:
            continue
        gap = confidence_gap(hyps)
        if gap < min_gap:
            continue
        evidence = []
        for j, n in enumerate(nb.neighbors):
            spell = _shared_substring(nb.target.name, n.name, spelling_min_len, need_kanji=True)
            if spell is None:
                continue
            pron = _shared_substring(n.pron, hyp, pron_min_len, need_kanji=False)
            if pron is None:
                continue
            evidence.append(
                DiscrepancyEvidence(neighbor_index=j, neighbor_name=n.name, shared_spelling=spell, shared_pron=pron)
            )
        if evidence:
            reports.append(
                DiscrepancyReport(
                    feature_id=nb.target.id,
                    name=nb.target.name,
                    reference=ref,
                    hypothesis=hyp,
                    confidence_gap=gap,
                    evidence=evidence,
                )
            )
    reports.sort(key=lambda r: -r.confidence_gap)
    return reports


@dataclass
class RocPrResult:
    roc_points: list[tuple[float, float]]  # (fpr, tpr), threshold descending
    auc: float
    pr_points: list[tuple[float, float]]  # (recall, precision)
    thresholds: list[float]


def roc_pr(scores: Sequence[float], labels: Sequence[int]) -> RocPrResult:
    """ROC points, trapezoidal AUC, and precision/recall over every score
    threshold (prediction is positive when score >= threshold)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise DataError("scores and labels must be equal-length 1-d sequences")
    pos = int(labels.sum())
    neg = int(labels.size - pos)
    if pos == 0 or neg == 0:
        raise DataError("need at least one positive and one negative label")

    thresholds = sorted(set(scores.tolist()), reverse=True)
    roc_points = [(0.0, 0.0)]
    pr_points = []
    for thr in thresholds:
        pred = scores >= thr
        tp = int((pred & (labels == 1)).sum())
        fp = int((pred & (labels == 0)).sum())
        roc_points.append((fp / neg, tp / pos))
        pr_points.append((tp / pos, tp / (tp + fp)))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(roc_points, roc_points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocPrResult(roc_points=roc_points, auc=auc, pr_points=pr_points, thresholds=thresholds)
