"""Synthetic corpora for exercising the pipeline at desk scale.

The geographic generator lays out clusters of named features ("districts")
on a coarse grid: every feature in a cluster realizes the same reading of an
ambiguous spelling, so neighbor pronunciations fully determine the target's
reading while the spelling alone leaves it at chance. The cognate generator
derives a small language family from a proto-lexicon by per-language sound
rules, so held-out reflexes are exactly recoverable from sister forms.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from nbrs.geodata import FeatureRecord

# spellings with two plausible readings; the realized one is a per-cluster
# coin flip, balanced exactly 50/50 per spelling
AMBIGUOUS_READINGS: dict[str, tuple[str, str]] = {
    "日本": ("にほん", "にっぽん"),
    "神戸": ("こうべ", "こうど"),
    "三郷": ("みさと", "さんごう"),
    "佐伯": ("さえき", "さいき"),
    "小平": ("こだいら", "おびら"),
    "渋谷": ("しぶや", "しぶたに"),
    "大和": ("やまと", "たいわ"),
    "上野": ("うえの", "かみの"),
}

UNAMBIGUOUS_READINGS: dict[str, str] = {
    "中村": "なかむら",
    "田口": "たぐち",
    "松本": "まつもと",
    "石井": "いしい",
    "長岡": "ながおか",
    "広瀬": "ひろせ",
}

SUFFIX_READINGS: dict[str, str] = {
    "町": "まち",
    "駅": "えき",
    "橋": "はし",
    "山": "やま",
    "川": "かわ",
    "寺": "てら",
    "園": "その",
    "丘": "おか",
    "浜": "はま",
    "森": "もり",
}

LAT_RANGE = (31.0, 45.0)
LON_RANGE = (129.0, 145.0)


@dataclass
class SynthCorpus:
    features: list[FeatureRecord]
    true_pron: dict[str, str]  # feature id -> reading before any noise
    ambiguous_ids: set[str]  # targets whose spelling has two readings
    spelling_of: dict[str, str]  # feature id -> its base spelling
    readings: dict[str, tuple[str, str]] = field(default_factory=dict)


def neighbor_determined_corpus(
    clusters_per_spelling: int = 24,
    members_per_cluster: int = 6,
    filler_fraction_clusters: int = 12,
    seed: int = 0,
    cell_deg: float = 0.5,
) -> SynthCorpus:
    """Clusters of co-located features sharing one realized reading.

    Cluster centers sit at the centers of distinct ``cell_deg`` grid cells
    (so an unshuffled region split never cuts a cluster in half) with member
    jitter small enough that every pair stays within a 10 km radius.
    """
    gen = np.random.default_rng(seed)
    suffixes = list(SUFFIX_READINGS)

    n_lat = int((LAT_RANGE[1] - LAT_RANGE[0]) / cell_deg)
    n_lon = int((LON_RANGE[1] - LON_RANGE[0]) / cell_deg)
    cells = [(i, j) for i in range(n_lat) for j in range(n_lon)]
    gen.shuffle(cells)
    n_clusters = len(AMBIGUOUS_READINGS) * clusters_per_spelling + len(UNAMBIGUOUS_READINGS) * filler_fraction_clusters
    if n_clusters > len(cells):
        raise ValueError("not enough grid cells for the requested cluster count")

    if clusters_per_spelling % 2 != 0:
        raise ValueError("clusters_per_spelling must be even to balance the two readings")

    features: list[FeatureRecord] = []
    true_pron: dict[str, str] = {}
    ambiguous_ids: set[str] = set()
    spelling_of: dict[str, str] = {}
    # paired clusters share a suffix window but realize opposite readings, so
    # every (spelling, suffix) name is split exactly 50/50 between readings
    # and the name alone stays uninformative
    cluster_specs: list[tuple[str, str, bool, int]] = []
    for spelling, (p1, p2) in AMBIGUOUS_READINGS.items():
        for c in range(clusters_per_spelling):
            start = ((c // 2) * members_per_cluster) % len(suffixes)
            cluster_specs.append((spelling, p1 if c % 2 == 0 else p2, True, start))
    for spelling, reading in UNAMBIGUOUS_READINGS.items():
        for c in range(filler_fraction_clusters):
            start = (c * members_per_cluster) % len(suffixes)
            cluster_specs.append((spelling, reading, False, start))

    fid = 0
    for cluster_idx, (spelling, reading, ambiguous, start) in enumerate(cluster_specs):
        ci, cj = cells[cluster_idx]
        lat0 = LAT_RANGE[0] + (ci + 0.5) * cell_deg
        lon0 = LON_RANGE[0] + (cj + 0.5) * cell_deg
        for m in range(members_per_cluster):
            suffix = suffixes[(start + m) % len(suffixes)]
            name = spelling + suffix
            pron = reading + SUFFIX_READINGS[suffix]
            lat = lat0 + float(gen.uniform(-0.02, 0.02))
            lon = lon0 + float(gen.uniform(-0.02, 0.02))
            rec = FeatureRecord(id=f"{fid:06x}", name=name, lat=lat, lon=lon, pron=pron, ftype="synthetic")
            features.append(rec)
            true_pron[rec.id] = pron
            spelling_of[rec.id] = spelling
            if ambiguous:
                ambiguous_ids.add(rec.id)
            fid += 1

    return SynthCorpus(
        features=features,
        true_pron=true_pron,
        ambiguous_ids=ambiguous_ids,
        spelling_of=spelling_of,
        readings=dict(AMBIGUOUS_READINGS),
    )


def inject_label_noise(corpus: SynthCorpus, rate: float, seed: int) -> tuple[list[FeatureRecord], set[str]]:
    """Corrupt the reference pronunciation of a uniform ``rate`` fraction of
    features, leaving ``corpus`` untouched. Ambiguous spellings flip to their
    other reading; fillers swap the suffix reading. Returns the new feature
    list and the ids whose references are now wrong."""
    gen = np.random.default_rng(seed)
    n = len(corpus.features)
    idx = gen.choice(n, size=max(1, round(rate * n)), replace=False)
    noisy = set()
    out = list(corpus.features)
    suffix_items = list(SUFFIX_READINGS.items())
    for i in idx:
        rec = out[i]
        spelling = corpus.spelling_of[rec.id]
        if rec.id in corpus.ambiguous_ids:
            p1, p2 = corpus.readings[spelling]
            realized = p1 if rec.pron.startswith(p1) else p2
            other = p2 if realized == p1 else p1
            new_pron = other + rec.pron[len(realized) :]
        else:
            suffix = rec.name[len(spelling) :]
            true_sfx = SUFFIX_READINGS[suffix]
            alt = next(r for s, r in suffix_items if r != true_sfx)
            new_pron = rec.pron[: -len(true_sfx)] + alt
        out[i] = dataclasses.replace(rec, pron=new_pron)
        noisy.add(rec.id)
    return out, noisy


# ---------------------------------------------------------------------------
# cognate family
# ---------------------------------------------------------------------------

_CONSONANTS = list("ptkbdgsmnrlwj")
_VOWELS = list("aeiou")

# per-language context-free segment substitutions
SOUND_RULES: dict[str, dict[str, str]] = {
    "lang1": {},
    "lang2": {"p": "f", "t": "θ", "k": "x"},
    "lang3": {"a": "o", "o": "u", "e": "i"},
    "lang4": {"s": "h", "r": "l", "w": "v"},
    "lang5": {"b": "p", "d": "t", "g": "k", "u": "o"},
}


@dataclass
class CognateFamily:
    languages: list[str]
    proto: list[list[str]]
    forms: list[dict[str, list[str]]]  # one dict per cognate set


def cognate_family(n_sets: int = 300, seed: int = 0, syllables=(2, 3)) -> CognateFamily:
    """A deterministic family: proto-words of CV syllables, one reflex per
    language via the context-free substitutions above."""
    gen = np.random.default_rng(seed)
    languages = list(SOUND_RULES)
    proto: list[list[str]] = []
    seen = set()
    while len(proto) < n_sets:
        k = int(gen.integers(syllables[0], syllables[1] + 1))
        word = []
        for _ in range(k):
            word.append(_CONSONANTS[int(gen.integers(0, len(_CONSONANTS)))])
            word.append(_VOWELS[int(gen.integers(0, len(_VOWELS)))])
        key = tuple(word)
        if key in seen:
            continue
        seen.add(key)
        proto.append(word)
    forms = []
    for word in proto:
        forms.append({lang: [SOUND_RULES[lang].get(seg, seg) for seg in word] for lang in languages})
    return CognateFamily(languages=languages, proto=proto, forms=forms)
