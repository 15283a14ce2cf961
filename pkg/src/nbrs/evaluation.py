"""Statistical comparisons, the neighbor-manipulation experiment, attention
export, and the neighbor-count/lat-long ablation harness."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nbrs.baseline import Aligner
from nbrs.errors import DataError
from nbrs.geodata import Neighborhood
from nbrs.model import ModelConfig, NeighborModel, encode_batch
from nbrs.numerics import no_grad

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# significance machinery
# ---------------------------------------------------------------------------


def normal_ci(p: float, n: int) -> tuple[float, float]:
    """The plus/minus sqrt(p(1-p)/N) interval around an error rate."""
    if not 0.0 <= p <= 1.0:
        raise DataError("error rate must be within [0, 1]")
    if n < 1:
        raise DataError("N must be at least 1")
    d = math.sqrt(p * (1.0 - p) / n)
    return (p - d, p + d)


@dataclass
class PairedOutcomes:
    """Per-example correctness flags for two systems on the same test set."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=bool)
        self.b = np.asarray(self.b, dtype=bool)
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise DataError("outcome vectors must be equal-length 1-d sequences")

    def __len__(self):
        return len(self.a)

    @classmethod
    def from_predictions(cls, refs: Sequence[str], sys_a: Sequence[str], sys_b: Sequence[str]):
        if not (len(refs) == len(sys_a) == len(sys_b)):
            raise DataError("prediction lists must align with references")
        return cls(
            np.array([h == r for h, r in zip(sys_a, refs)]),
            np.array([h == r for h, r in zip(sys_b, refs)]),
        )


@dataclass
class BootstrapResult:
    p_value: float
    ci_a: tuple[float, float]
    ci_b: tuple[float, float]
    err_a: float
    err_b: float
    better: str  # which system is nominally better on the full set


def paired_bootstrap(
    outcomes: PairedOutcomes,
    trials: int = 10_000,
    sample_size: int | None = None,
    seed: int = 0,
) -> BootstrapResult:
    """Resample index sets with replacement (N/2 of them per trial by
    default); p is the fraction of trials where the nominally better system
    fails to be strictly better, and the CIs are 2.5/97.5 percentiles."""
    if trials < 1:
        raise DataError("trials must be at least 1")
    n = len(outcomes)
    k = sample_size if sample_size is not None else max(1, n // 2)
    err_a_full = 1.0 - outcomes.a.mean()
    err_b_full = 1.0 - outcomes.b.mean()
    better_is_a = err_a_full <= err_b_full

    gen = np.random.default_rng(seed)
    errs_a = np.empty(trials)
    errs_b = np.empty(trials)
    not_better = 0
    chunk = max(1, min(trials, 4_000_000 // max(1, k)))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        idx = gen.integers(0, n, size=(m, k))
        ea = 1.0 - outcomes.a[idx].mean(axis=1)
        eb = 1.0 - outcomes.b[idx].mean(axis=1)
        errs_a[done : done + m] = ea
        errs_b[done : done + m] = eb
        if better_is_a:
            not_better += int((ea >= eb).sum())
        else:
            not_better += int((eb >= ea).sum())
        done += m
    return BootstrapResult(
        p_value=not_better / trials,
        ci_a=(float(np.percentile(errs_a, 2.5)), float(np.percentile(errs_a, 97.5))),
        ci_b=(float(np.percentile(errs_b, 2.5)), float(np.percentile(errs_b, 97.5))),
        err_a=err_a_full,
        err_b=err_b_full,
        better="a" if better_is_a else "b",
    )


def t_statistic(diffs: np.ndarray) -> float:
    """Paired-difference t: mean / (sd / sqrt(N)); zero-variance cases map to
    0 (all zero) or a signed infinity."""
    n = diffs.size
    m = float(diffs.mean())
    sd = float(diffs.std(ddof=1)) if n > 1 else 0.0
    if sd == 0.0:
        return 0.0 if m == 0.0 else math.copysign(math.inf, m)
    return m / (sd / math.sqrt(n))


def paired_permutation(outcomes: PairedOutcomes, perms: int = 5_000, seed: int = 0) -> float:
    """Sign-flip permutation test on the paired correctness differences; p is
    the fraction of permuted |t| at least as large as the observed |t|.
    Zero-variance differences give p = 1 by convention."""
    if perms < 1:
        raise DataError("perms must be at least 1")
    d = outcomes.a.astype(np.float64) - outcomes.b.astype(np.float64)
    n = d.size
    if float(d.std(ddof=1) if n > 1 else 0.0) == 0.0:
        return 1.0
    observed = abs(t_statistic(d))
    gen = np.random.default_rng(seed)
    hits = 0
    chunk = max(1, min(perms, 2_000_000 // n))
    done = 0
    while done < perms:
        m = min(chunk, perms - done)
        signs = np.where(gen.random((m, n)) < 0.5, 1.0, -1.0)
        flipped = signs * d
        means = flipped.mean(axis=1)
        sds = flipped.std(axis=1, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ts = np.where(sds == 0.0, np.where(means == 0.0, 0.0, np.inf), np.abs(means) / (sds / math.sqrt(n)))
        hits += int((ts >= observed).sum())
        done += m
    return hits / perms


# ---------------------------------------------------------------------------
# neighbor manipulation (does the model listen to neighbors?)
# ---------------------------------------------------------------------------


@dataclass
class ManipulationSpec:
    spelling: str
    p1: str
    p2: str

    def __post_init__(self):
        if self.p1 == self.p2:
            raise DataError("the two pronunciations must differ")


CONDITIONS = ("original", "force_p1", "force_p2")


@dataclass
class ManipulationRow:
    spelling: str
    condition: str
    n_targets: int
    proportion_p1: float
    skipped_targets: int
    unlocatable_neighbors: int


def _occurrence_edges(name: str, spelling: str) -> set[int]:
    edges: set[int] = set()
    start = name.find(spelling)
    while start != -1:
        edges.update((start, start + len(spelling)))
        start = name.find(spelling, start + len(spelling))
    return edges


def _rewrite_reading(name: str, pron: str, spelling: str, replacement: str, aligner: Aligner) -> str | None:
    """Replace the kana aligned to every occurrence of ``spelling`` in
    ``name`` with ``replacement``; None when the reading cannot be located."""
    if spelling not in name:
        return pron
    alignment = aligner.viterbi(name, pron, boundaries=_occurrence_edges(name, spelling))
    if alignment is None:
        return None
    bounds = {}
    npos = kpos = 0
    for a, b in alignment.spans:
        bounds[npos] = kpos
        npos += len(a)
        kpos += len(b)
    bounds[npos] = kpos

    out = []
    cursor = 0
    kana_cursor = 0
    start = name.find(spelling)
    while start != -1:
        end = start + len(spelling)
        if start not in bounds or end not in bounds:
            return None
        out.append(pron[kana_cursor : bounds[start]])
        out.append(replacement)
        kana_cursor = bounds[end]
        cursor = end
        start = name.find(spelling, cursor)
    out.append(pron[kana_cursor:])
    return "".join(out)


def _reading_at_spelling(name: str, pron: str, spelling: str, aligner: Aligner) -> str | None:
    """Kana aligned to the first occurrence of ``spelling`` in ``name``."""
    start = name.find(spelling)
    if start == -1:
        return None
    alignment = aligner.viterbi(name, pron, boundaries={start, start + len(spelling)})
    if alignment is None:
        return None
    bounds = {}
    npos = kpos = 0
    for a, b in alignment.spans:
        bounds[npos] = kpos
        npos += len(a)
        kpos += len(b)
    bounds[npos] = kpos
    end = start + len(spelling)
    if start not in bounds or end not in bounds:
        return None
    return pron[bounds[start] : bounds[end]]


def manipulation_experiment(
    model: NeighborModel,
    dataset: Sequence[Neighborhood],
    specs: Sequence[ManipulationSpec],
    aligner: Aligner,
    conditions: Sequence[str] = CONDITIONS,
    beam: int | None = None,
    max_targets: int | None = None,
) -> list[ManipulationRow]:
    """Decode targets under original and forced-neighbor conditions and
    report how often the primary pronunciation wins at the key spelling.
    Target spellings are never touched; only neighbor prons are rewritten.
    """
    from nbrs.decoding import decode_batch

    rows = []
    for spec in specs:
        targets = [nb for nb in dataset if spec.spelling in nb.target.name]
        skipped = sum(1 for nb in dataset if spec.spelling not in nb.target.name)
        if max_targets is not None:
            targets = targets[:max_targets]
        if not targets:
            log.warning("spelling %s absent from every target; nothing to decode", spec.spelling)
            continue
        for condition in conditions:
            unlocatable = 0
            if condition == "original":
                decoded_set = targets
            else:
                replacement = spec.p1 if condition == "force_p1" else spec.p2
                decoded_set = []
                for nb in targets:
                    clone = Neighborhood(target=nb.target, neighbors=[])
                    for n in nb.neighbors:
                        new_pron = _rewrite_reading(n.name, n.pron, spec.spelling, replacement, aligner)
                        if new_pron is None:
                            unlocatable += 1
                            new_pron = n.pron
                        clone.neighbors.append(dataclasses.replace(n, pron=new_pron))
                    decoded_set.append(clone)
            hyps = decode_batch(model, decoded_set, beam=beam)
            hits = 0
            for nb, hyp_list in zip(decoded_set, hyps):
                hyp = hyp_list[0].text if hyp_list else ""
                reading = _reading_at_spelling(nb.target.name, hyp, spec.spelling, aligner)
                if reading is None:
                    hit = spec.p1 in hyp
                else:
                    hit = spec.p1 in reading
                hits += hit
            rows.append(
                ManipulationRow(
                    spelling=spec.spelling,
                    condition=condition,
                    n_targets=len(decoded_set),
                    proportion_p1=hits / len(decoded_set),
                    skipped_targets=skipped,
                    unlocatable_neighbors=unlocatable,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# attention export
# ---------------------------------------------------------------------------


@dataclass
class AttentionExport:
    matrix: np.ndarray  # [decoder steps, memory rows]
    row_labels: list[str]  # decoded tokens
    col_labels: list[str]  # memory rows


def attention_export(model: NeighborModel, neighborhood: Neighborhood, pron: str | None = None) -> AttentionExport:
    """Cross-attention weights averaged over all decoder layers and heads,
    teacher-forcing the given pronunciation (the model's own top decode by
    default). Every row sums to one."""
    from nbrs.decoding import decode_batch
    from nbrs.model import symbols_of

    if pron is None:
        hyps = decode_batch(model, [neighborhood], beam=model.cfg.beam)[0]
        if not hyps:
            raise DataError("decoding produced no hypothesis to export attention for")
        pron = hyps[0].text

    cfg = model.cfg
    work = Neighborhood(target=dataclasses.replace(neighborhood.target, pron=pron), neighbors=neighborhood.neighbors)
    batch = encode_batch(cfg, model.vocab_in, model.vocab_out, [work])
    with no_grad():
        memory, mem_mask = model.encode_memory(batch)
        capture: list = []
        n_steps = int((batch.y_out[0] != 0).sum())
        prefix = batch.y_in[:, : max(n_steps, 1)]
        model.decode_logits(prefix, memory, mem_mask, capture=capture)
    stacked = np.stack(capture)  # [layers, 1, heads, steps, rows]
    matrix = stacked.mean(axis=(0, 2))[0]
    syms = symbols_of(pron, cfg.token_mode)
    row_labels = [*syms, "<eos>"][: matrix.shape[0]]
    return AttentionExport(matrix=matrix, row_labels=row_labels, col_labels=model.memory_row_labels(batch, 0))


# ---------------------------------------------------------------------------
# ablation sweep
# ---------------------------------------------------------------------------


@dataclass
class AblationCell:
    max_neighbors: int
    use_latlong: bool
    error_rate: float
    steps: int


def _cap_neighbors(dataset: Sequence[Neighborhood], k: int) -> list[Neighborhood]:
    return [Neighborhood(target=nb.target, neighbors=nb.neighbors[:k]) for nb in dataset]


def ablation_sweep(
    train_data: Sequence[Neighborhood],
    test_data: Sequence[Neighborhood],
    base_config: ModelConfig,
    train_config,
    neighbor_counts: Sequence[int] = (0, 1, 5, 10, 20, 30),
    latlong: Sequence[bool] = (False, True),
    beam: int = 1,
) -> list[AblationCell]:
    """Train one model per (max neighbors, lat-long) cell at desk scale and
    record held-out exact-match error."""
    from nbrs.training import exact_match, train

    cells = []
    for k in neighbor_counts:
        for ll in latlong:
            cfg = dataclasses.replace(
                base_config,
                use_neighbors=k > 0,
                nneigh=max(k, 1),
                use_latlong=ll,
            )
            tr = _cap_neighbors(train_data, k)
            te = _cap_neighbors(test_data, k)
            result = train(cfg, tr, train_config)
            err = exact_match(result.model, te, beam=beam)
            cells.append(AblationCell(max_neighbors=k, use_latlong=ll, error_rate=err, steps=result.steps_done))
            log.info("ablation cell k=%d latlong=%s err=%.4f", k, ll, err)
    return cells
