import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbrs.decoding import (
    BeamHypothesis,
    confidence_gap,
    decode_batch,
    beam_search,
    detect_discrepancies,
    roc_pr,
)
from nbrs.errors import DataError
from nbrs.geodata import FeatureRecord, Neighbor, Neighborhood
from nbrs.model import ModelConfig, NeighborModel
from nbrs.numerics import no_grad
from nbrs.textdata import BOS_ID, EOS_ID, PAD_ID, RESERVED, UNK_ID, Vocabulary, decode


def toy_model(seed, vocab_syms=("a", "b"), emb=8, name_len=4, pron_len=3):
    cfg = ModelConfig(
        layers=1, heads=2, emb_size=emb, hidden=16, dropout=0.0, label_smoothing=0.0,
        latlong_grid_n=4, input_vocab=30, output_vocab=30, name_len=name_len,
        pron_len=pron_len, nneigh=2, use_neighbors=True, use_latlong=False,
    )
    vin = Vocabulary(RESERVED + ["山", "川", "田"])
    vout = Vocabulary(RESERVED + list(vocab_syms))
    return NeighborModel.create(cfg, vin, vout, seed=seed)


def toy_neighborhood(seed=0):
    gen = np.random.default_rng(seed)
    names = ["山田", "山川", "田川", "川山"]
    target = FeatureRecord(id=f"t{seed}", name=names[int(gen.integers(0, 4))], lat=35, lon=139, pron="ab")
    neighbors = [Neighbor(name=names[int(gen.integers(0, 4))], pron="ab", distance_km=1.0, interesting=True)]
    return Neighborhood(target=target, neighbors=neighbors)


def greedy_oracle(model, nb, max_len):
    """Independent greedy loop over decode_logits."""
    from nbrs.model import encode_batch

    banned = [PAD_ID, BOS_ID, UNK_ID]
    with no_grad():
        batch = encode_batch(model.cfg, model.vocab_in, model.vocab_out, [nb])
        memory, mask = model.encode_memory(batch)
        ids = [BOS_ID]
        out = []
        for _ in range(max_len):
            logits = model.decode_logits(np.array([ids]), memory, mask).data[0, -1].copy()
            logits[banned] = -np.inf
            tok = int(np.argmax(logits))
            out.append(tok)
            if tok == EOS_ID:
                break
            ids.append(tok)
    return decode(model.vocab_out, out)


def enumerate_sequences_oracle(model, nb, max_len):
    """Exhaustively score every terminated sequence over {a, b, EOS}."""
    from nbrs.model import encode_batch

    syms = [i for i in range(len(model.vocab_out)) if i not in (PAD_ID, BOS_ID, UNK_ID, EOS_ID)]
    with no_grad():
        batch = encode_batch(model.cfg, model.vocab_in, model.vocab_out, [nb])
        memory, mask = model.encode_memory(batch)

        def logp_steps(tokens):
            ids = [BOS_ID] + list(tokens)
            logits = model.decode_logits(np.array([ids[:-1]] if len(ids) > 1 else [[BOS_ID]]), memory, mask).data[0]
            total = 0.0
            for t, tok in enumerate(tokens):
                row = logits[t].astype(np.float64)
                row = row - row.max()
                lp = row - math.log(np.exp(row).sum())
                total += lp[tok]
            return total

        scored = []
        for length in range(0, max_len):
            for seq in itertools.product(syms, repeat=length):
                scored.append((logp_steps(list(seq) + [EOS_ID]), list(seq) + [EOS_ID]))
        for seq in itertools.product(syms, repeat=max_len):
            scored.append((logp_steps(list(seq)), list(seq)))
    scored.sort(key=lambda t: -t[0])
    return scored


def test_beam_one_equals_greedy_oracle():
    for seed in range(20):
        model = toy_model(seed)
        nb = toy_neighborhood(seed)
        hyp = decode_batch(model, [nb], beam=1)[0][0]
        assert hyp.text == greedy_oracle(model, nb, model.cfg.pron_len)


def test_beam_eight_matches_exhaustive_enumeration():
    for seed in range(12):
        model = toy_model(100 + seed)
        nb = toy_neighborhood(seed)
        hyps = beam_search(model, nb, beam=8, max_len=3)
        oracle = enumerate_sequences_oracle(model, nb, 3)
        assert len(hyps) == 8
        for h, (score, seq) in zip(hyps, oracle[:8]):
            assert h.ids == seq
            assert h.log_likelihood == pytest.approx(score, abs=1e-4)


def test_beam_deterministic():
    model = toy_model(7)
    nb = toy_neighborhood(3)
    a = beam_search(model, nb, beam=4)
    b = beam_search(model, nb, beam=4)
    assert [(h.ids, h.log_likelihood) for h in a] == [(h.ids, h.log_likelihood) for h in b]


def test_beam_outputs_sorted_and_nonpositive():
    model = toy_model(9)
    hyps = beam_search(model, toy_neighborhood(1), beam=8, max_len=3)
    lls = [h.log_likelihood for h in hyps]
    assert lls == sorted(lls, reverse=True)
    assert all(ll <= 0.0 for ll in lls)
    assert all(h.finished for h in hyps)


def test_beam_respects_max_len():
    model = toy_model(11)
    hyps = beam_search(model, toy_neighborhood(5), beam=3, max_len=2)
    assert all(len([i for i in h.ids if i != EOS_ID]) <= 2 for h in hyps)


def test_length_normalization_flag_changes_scores():
    model = toy_model(13)
    nb = toy_neighborhood(2)
    plain = beam_search(model, nb, beam=4)
    normed = beam_search(model, nb, beam=4, length_normalize=True)
    n_tokens = len(plain[0].ids)
    if n_tokens > 1:
        assert normed[0].log_likelihood != plain[0].log_likelihood


# ---------------------------------------------------------------------------
# confidence gap
# ---------------------------------------------------------------------------


def _hyp(ll):
    return BeamHypothesis(ids=[4, EOS_ID], log_likelihood=ll, finished=True, text="a")


def test_confidence_gap_values():
    assert confidence_gap([_hyp(-1.0), _hyp(-3.5)]) == pytest.approx(2.5)
    assert confidence_gap([_hyp(-2.0), _hyp(-2.0)]) == 0.0


def test_confidence_gap_single_hypothesis_max_confidence():
    assert confidence_gap([_hyp(-1.0)]) == math.inf


def test_confidence_gap_requires_hypotheses():
    with pytest.raises(DataError):
        confidence_gap([])


@given(st.floats(-50, 0), st.floats(0, 30), st.floats(-5, 5))
@settings(max_examples=40, deadline=None)
def test_confidence_gap_nonnegative_and_shift_invariant(top, drop, shift):
    hyps = [_hyp(top), _hyp(top - drop)]
    gap = confidence_gap(hyps)
    assert gap >= 0
    shifted = [_hyp(top + shift), _hyp(top - drop + shift)]
    assert confidence_gap(shifted) == pytest.approx(gap, abs=1e-9)


# ---------------------------------------------------------------------------
# roc / pr
# ---------------------------------------------------------------------------


def roc_pr_oracle(scores, labels):
    """Brute-force threshold enumeration."""
    thresholds = sorted(set(scores), reverse=True)
    pos = sum(labels)
    neg = len(labels) - pos
    roc = [(0.0, 0.0)]
    pr = []
    for thr in thresholds:
        tp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 0)
        roc.append((fp / neg, tp / pos))
        pr.append((tp / pos, tp / (tp + fp)))
    auc = sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(roc, roc[1:]))
    return roc, auc, pr


def test_roc_perfect_separation():
    res = roc_pr([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert res.auc == 1.0


def test_roc_all_scores_equal():
    res = roc_pr([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
    assert res.auc == 0.5


def test_roc_six_point_hand_case_matches_oracle():
    scores = [0.9, 0.7, 0.7, 0.4, 0.3, 0.1]
    labels = [1, 1, 0, 1, 0, 0]
    roc, auc, pr = roc_pr_oracle(scores, labels)
    res = roc_pr(scores, labels)
    assert res.roc_points == roc
    assert res.auc == pytest.approx(auc, abs=1e-12)
    assert res.pr_points == pr


def test_roc_degenerate_labels_raise():
    with pytest.raises(DataError):
        roc_pr([0.1, 0.2], [1, 1])
    with pytest.raises(DataError):
        roc_pr([0.1, 0.2], [0, 0])


@given(st.integers(0, 2**31 - 1), st.integers(3, 40))
@settings(max_examples=40, deadline=None)
def test_roc_matches_oracle_random(seed, n):
    gen = np.random.default_rng(seed)
    scores = np.round(gen.random(n), 2).tolist()
    labels = (gen.random(n) > 0.5).astype(int).tolist()
    if sum(labels) in (0, n):
        labels[0] = 1 - labels[0]
    roc, auc, pr = roc_pr_oracle(scores, labels)
    res = roc_pr(scores, labels)
    assert res.auc == pytest.approx(auc, abs=1e-12)
    assert res.roc_points == [(pytest.approx(x), pytest.approx(y)) for x, y in roc]
    assert res.pr_points == [(pytest.approx(r), pytest.approx(p)) for r, p in pr]


def test_roc_handles_infinite_scores():
    res = roc_pr([math.inf, 1.0, 0.0], [1, 1, 0])
    assert res.auc == 1.0


# ---------------------------------------------------------------------------
# discrepancy detection (small trained model)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def memorizing_model():
    from nbrs.training import TrainConfig, train

    suffixes = [("東", "ひがし"), ("西", "にし"), ("南", "みなみ"), ("北", "きた")]
    data = []
    # one district whose neighbors all read 日本橋 as にっぽんばし
    neighbors = [
        Neighbor(name="日本橋" + s, pron="にっぽんばし" + r, distance_km=0.3 + 0.1 * i, interesting=True)
        for i, (s, r) in enumerate(suffixes[:3])
    ]
    for i, (s, r) in enumerate(suffixes):
        target = FeatureRecord(id=f"d{i}", name="日本橋" + s, pron="にっぽんばし" + r, lat=34.66, lon=135.5)
        others = [n for n in neighbors if n.name != target.name]
        data.append(Neighborhood(target=target, neighbors=others))
    # an unrelated district
    for i, (s, r) in enumerate(suffixes):
        target = FeatureRecord(id=f"u{i}", name="上野" + s, pron="うえの" + r, lat=35.7, lon=139.77)
        others = [
            Neighbor(name="上野" + s2, pron="うえの" + r2, distance_km=0.5, interesting=True)
            for s2, r2 in suffixes
            if s2 != s
        ][:3]
        data.append(Neighborhood(target=target, neighbors=others))

    cfg = ModelConfig(
        layers=1, heads=2, emb_size=16, hidden=32, dropout=0.0, label_smoothing=0.0,
        latlong_grid_n=4, input_vocab=60, output_vocab=60, name_len=5, pron_len=10,
        nneigh=3, use_neighbors=True, use_latlong=False, neighbor_dropout=0.0,
    )
    tcfg = TrainConfig(steps=700, batch_size=8, seed=4, eval_every=700, warmup_steps=150)
    res = train(cfg, data, tcfg)
    return res.model, data


def test_detect_no_discrepancies_when_model_agrees(memorizing_model):
    model, data = memorizing_model
    from nbrs.training import exact_match

    assert exact_match(model, data, beam=4) == 0.0
    assert detect_discrepancies(model, data, beam=4) == []


def test_detect_flags_constructed_database_error(memorizing_model):
    model, data = memorizing_model
    import dataclasses

    # the apartment-building case: reference says にほんばし, the area says otherwise
    broken = dataclasses.replace(
        data[0], target=dataclasses.replace(data[0].target, pron="にほんばし" + "ひがし")
    )
    dataset = [broken] + data[1:]
    reports = detect_discrepancies(model, dataset, beam=4)
    assert len(reports) == 1
    rep = reports[0]
    assert rep.feature_id == broken.target.id
    assert rep.hypothesis.startswith("にっぽんばし")
    assert rep.reference.startswith("にほんばし")
    assert len(rep.evidence) == len(broken.neighbors)
    assert all("日本橋" in e.shared_spelling or "日本橋" in e.neighbor_name for e in rep.evidence)
    assert rep.confidence_gap >= 0


def test_detect_requires_neighbor_support(memorizing_model):
    model, data = memorizing_model
    import dataclasses

    # same wrong reference, but neighbors share no kanji with the target
    lone = dataclasses.replace(
        data[0],
        target=dataclasses.replace(data[0].target, pron="にほんばしひがし"),
        neighbors=[Neighbor(name="まるまる", pron="まるまる", distance_km=1.0, interesting=False)],
    )
    reports = detect_discrepancies(model, [lone], beam=4)
    assert reports == []


def test_detect_requires_references(memorizing_model):
    model, _ = memorizing_model
    nb = Neighborhood(target=FeatureRecord(id="z", name="上野東", lat=35, lon=139, pron=None))
    with pytest.raises(DataError):
        detect_discrepancies(model, [nb])


def test_detect_min_gap_filter(memorizing_model):
    model, data = memorizing_model
    import dataclasses

    broken = dataclasses.replace(
        data[0], target=dataclasses.replace(data[0].target, pron="にほんばしひがし")
    )
    all_reports = detect_discrepancies(model, [broken], beam=4)
    assert all_reports
    assert detect_discrepancies(model, [broken], beam=4, min_gap=all_reports[0].confidence_gap + 1.0) == []
