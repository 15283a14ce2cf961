from collections import Counter, defaultdict

from nbrs.geodata import FeatureStore, build_neighborhoods, region_cell
from nbrs.synth import (
    AMBIGUOUS_READINGS,
    SOUND_RULES,
    cognate_family,
    inject_label_noise,
    neighbor_determined_corpus,
)


def test_corpus_size_and_balance():
    corpus = neighbor_determined_corpus(clusters_per_spelling=8, filler_fraction_clusters=4, seed=0)
    # per ambiguous spelling, both readings appear equally often per suffix
    per_name = defaultdict(Counter)
    for rec in corpus.features:
        if rec.id in corpus.ambiguous_ids:
            sp = corpus.spelling_of[rec.id]
            realized = next(p for p in AMBIGUOUS_READINGS[sp] if rec.pron.startswith(p))
            per_name[rec.name][realized] += 1
    for name, counts in per_name.items():
        assert len(counts) == 2, name
        a, b = counts.values()
        assert a == b, (name, counts)


def test_clusters_are_tight_and_neighbor_determined():
    corpus = neighbor_determined_corpus(clusters_per_spelling=4, filler_fraction_clusters=2, seed=1)
    store = FeatureStore(corpus.features)
    nbs = build_neighborhoods(store, radius_km=10.0, nneigh=5, max_plain=5)
    for nb in nbs:
        assert len(nb.neighbors) >= 3
        assert all(n.interesting for n in nb.neighbors)
        # every neighbor realizes the same reading of the shared spelling
        sp = corpus.spelling_of[nb.target.id]
        realized = nb.target.pron[: -2]
        for n in nb.neighbors:
            assert n.pron.startswith(realized)


def test_clusters_fit_in_region_cells():
    corpus = neighbor_determined_corpus(clusters_per_spelling=4, filler_fraction_clusters=2, seed=2, cell_deg=0.5)
    store = FeatureStore(corpus.features)
    nbs = build_neighborhoods(store, radius_km=10.0, nneigh=5, max_plain=5)
    for nb in nbs:
        cell = region_cell(nb.target.lat, nb.target.lon, 0.5)
        # a target's neighbors never cross a region-cell boundary
        for n in nb.neighbors:
            match = [f for f in corpus.features if f.name == n.name and f.pron == n.pron]
            assert any(region_cell(f.lat, f.lon, 0.5) == cell for f in match)


def test_corpus_deterministic():
    a = neighbor_determined_corpus(clusters_per_spelling=4, filler_fraction_clusters=1, seed=5)
    b = neighbor_determined_corpus(clusters_per_spelling=4, filler_fraction_clusters=1, seed=5)
    assert a.features == b.features


def test_inject_label_noise():
    corpus = neighbor_determined_corpus(clusters_per_spelling=4, filler_fraction_clusters=2, seed=3)
    noisy, flipped = inject_label_noise(corpus, rate=0.1, seed=7)
    assert len(noisy) == len(corpus.features)
    assert len(flipped) == round(0.1 * len(corpus.features))
    changed = {rec.id for rec, orig in zip(noisy, corpus.features) if rec.pron != orig.pron}
    assert changed == flipped
    for rec, orig in zip(noisy, corpus.features):
        if rec.id in flipped:
            assert rec.pron != corpus.true_pron[rec.id]
        else:
            assert rec.pron == corpus.true_pron[rec.id]
    # originals untouched
    assert all(corpus.features[i].pron == corpus.true_pron[corpus.features[i].id] for i in range(10))


def test_cognate_family_rules_applied_deterministically():
    fam1 = cognate_family(n_sets=40, seed=9)
    fam2 = cognate_family(n_sets=40, seed=9)
    assert fam1.forms == fam2.forms
    assert len(fam1.forms) == 40
    for proto, forms in zip(fam1.proto, fam1.forms):
        assert forms["lang1"] == proto
        for lang, reflex in forms.items():
            rules = SOUND_RULES[lang]
            assert reflex == [rules.get(seg, seg) for seg in proto]
