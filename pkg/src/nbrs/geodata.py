"""Feature ingestion, spatial bucketing, neighborhood construction, splits.

Features arrive as JSON lines; a lat/lon grid index finds every other feature
within a radius (10 km by default), and neighborhoods keep the nearest
bigram-sharing neighbors up to a cap, plus a small allowance of plain ones.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from nbrs.errors import DataError
from nbrs.numerics.rng import RngState
from nbrs.textdata import shares_kanji_bigram

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
DEFAULT_RADIUS_KM = 10.0
DEFAULT_NNEIGH = 30
DEFAULT_MAX_PLAIN = 5
DEFAULT_REGION_CELL_DEG = 0.5


@dataclass(frozen=True)
class FeatureRecord:
    id: str
    name: str
    lat: float
    lon: float
    pron: str | None = None
    ftype: str = "unknown"

    def has_pron(self) -> bool:
        return bool(self.pron)


@dataclass
class Neighbor:
    name: str
    pron: str
    distance_km: float
    interesting: bool


@dataclass
class Neighborhood:
    target: FeatureRecord
    neighbors: list[Neighbor] = field(default_factory=list)


@dataclass
class SplitSpec:
    mode: str  # "shuffled" | "unshuffled"
    test_frac: float
    region_cell_deg: float = DEFAULT_REGION_CELL_DEG
    seed: int = 0


@dataclass
class IngestStats:
    lines: int = 0
    kept: int = 0
    malformed: int = 0
    invalid: int = 0
    duplicate_id: int = 0
    missing_pron: int = 0


class FeatureStore:
    def __init__(self, features: Sequence[FeatureRecord], stats: IngestStats | None = None):
        self.features = list(features)
        self.by_id = {f.id: f for f in self.features}
        self.stats = stats or IngestStats(kept=len(self.features))

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)


def _parse_record(obj: dict) -> FeatureRecord:
    fid = obj["id"]
    name = obj["name"]
    lat = float(obj["lat"])
    lon = float(obj["lon"])
    if not isinstance(fid, str) or not fid:
        raise ValueError("bad id")
    if not isinstance(name, str) or not name:
        raise ValueError("empty name")
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise ValueError("coordinates out of range")
    pron = obj.get("pron") or None
    return FeatureRecord(id=fid, name=name, lat=lat, lon=lon, pron=pron, ftype=obj.get("ftype", "unknown"))


def ingest_records(objs: Iterable[dict]) -> FeatureStore:
    stats = IngestStats()
    features: list[FeatureRecord] = []
    seen: set[str] = set()
    for obj in objs:
        stats.lines += 1
        try:
            rec = _parse_record(obj)
        except (KeyError, TypeError, ValueError) as exc:
            stats.invalid += 1
            log.debug("skipping invalid record: %s", exc)
            continue
        if rec.id in seen:
            stats.duplicate_id += 1
            log.warning("duplicate feature id %s: keeping first", rec.id)
            continue
        seen.add(rec.id)
        if not rec.has_pron():
            stats.missing_pron += 1
        features.append(rec)
        stats.kept += 1
    return FeatureStore(features, stats)


def ingest(path) -> FeatureStore:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    objs: list[dict] = []
    malformed = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                objs.append(json.loads(line))
            except json.JSONDecodeError:
                malformed += 1
                log.debug("skipping malformed line in %s", path)
    store = ingest_records(objs)
    store.stats.malformed = malformed
    store.stats.lines += malformed
    return store


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


class GridIndex:
    """Fixed-degree lat/lon grid; query scans every cell intersecting the
    bounding box of the query circle, then filters by exact distance."""

    def __init__(self, store: FeatureStore, radius_km: float):
        if radius_km <= 0:
            raise DataError("radius must be positive")
        self.store = store
        self.radius_km = radius_km
        self.ang = radius_km / EARTH_RADIUS_KM
        self.cell_lat = max(math.degrees(self.ang), 1e-6)
        # longitude cells must tile 360 degrees exactly or the wrap-around
        # arithmetic at the dateline goes wrong
        self.n_lon = max(1, math.floor(360.0 / self.cell_lat))
        self.cell_lon = 360.0 / self.n_lon
        self.cells: dict[tuple[int, int], list[int]] = {}
        for i, f in enumerate(store.features):
            self.cells.setdefault(self._cell(f.lat, f.lon), []).append(i)

    def _lat_idx(self, lat: float) -> int:
        return int((lat + 90.0) / self.cell_lat)

    def _lon_idx(self, lon: float) -> int:
        return int((lon + 180.0) / self.cell_lon) % self.n_lon

    def _cell(self, lat: float, lon: float) -> tuple[int, int]:
        return (self._lat_idx(lat), self._lon_idx(lon))

    def candidates(self, idx: int) -> list[tuple[int, float]]:
        """Indices and distances of all other features within the radius."""
        f = self.store.features[idx]
        dlat = math.degrees(self.ang)
        lat_lo = self._lat_idx(max(-90.0, f.lat - dlat))
        lat_hi = self._lat_idx(min(90.0, f.lat + dlat))

        # max longitude deviation of a spherical cap centered at latitude phi:
        # asin(sin r / cos phi), or the whole band once a pole is inside
        sin_ratio = math.sin(self.ang) / max(math.cos(math.radians(abs(f.lat))), 1e-12)
        if abs(f.lat) + dlat >= 90.0 or sin_ratio >= 1.0:
            lon_cells: Iterable[int] = range(self.n_lon)
        else:
            dlon = math.degrees(math.asin(sin_ratio))
            lo = math.floor((f.lon - dlon + 180.0) / self.cell_lon)
            hi = math.floor((f.lon + dlon + 180.0) / self.cell_lon)
            lon_cells = {c % self.n_lon for c in range(lo, hi + 1)}

        out: list[tuple[int, float]] = []
        for la in range(lat_lo, lat_hi + 1):
            for lo_c in lon_cells:
                for j in self.cells.get((la, lo_c), ()):
                    if j == idx:
                        continue
                    g = self.store.features[j]
                    d = haversine_km(f.lat, f.lon, g.lat, g.lon)
                    if d <= self.radius_km:
                        out.append((j, d))
        return out


def bucket(store: FeatureStore, radius_km: float = DEFAULT_RADIUS_KM) -> dict[str, list[tuple[str, float]]]:
    """id -> [(candidate id, distance_km)] for all other features in range."""
    index = GridIndex(store, radius_km)
    out: dict[str, list[tuple[str, float]]] = {}
    for i, f in enumerate(store.features):
        cands = index.candidates(i)
        out[f.id] = sorted(
            ((store.features[j].id, d) for j, d in cands),
            key=lambda t: (t[1], t[0]),
        )
    return out


def build_neighborhood(
    target: FeatureRecord,
    candidates: Sequence[tuple[FeatureRecord, float]],
    nneigh: int = DEFAULT_NNEIGH,
    max_plain: int = DEFAULT_MAX_PLAIN,
) -> Neighborhood:
    """Admit bigram-sharing candidates nearest first up to ``nneigh``, then
    plain ones up to ``max_plain`` within the remaining capacity."""
    ranked = sorted(
        ((f, d) for f, d in candidates if f.has_pron()),
        key=lambda t: (t[1], t[0].id),
    )
    interesting = [(f, d) for f, d in ranked if shares_kanji_bigram(target.name, f.name)]
    plain = [(f, d) for f, d in ranked if not shares_kanji_bigram(target.name, f.name)]

    chosen = [(f, d, True) for f, d in interesting[:nneigh]]
    room = min(max_plain, nneigh - len(chosen))
    chosen += [(f, d, False) for f, d in plain[:room]]
    chosen.sort(key=lambda t: (t[1], t[0].id))
    return Neighborhood(
        target=target,
        neighbors=[Neighbor(name=f.name, pron=f.pron, distance_km=d, interesting=flag) for f, d, flag in chosen],
    )


_WORKER: dict = {}


def _build_range(args):
    lo, hi = args
    index: GridIndex = _WORKER["index"]
    nneigh, max_plain = _WORKER["caps"]
    store = index.store
    out = []
    for i in range(lo, hi):
        cands = [(store.features[j], d) for j, d in index.candidates(i)]
        out.append(build_neighborhood(store.features[i], cands, nneigh, max_plain))
    return out


def build_neighborhoods(
    store: FeatureStore,
    radius_km: float = DEFAULT_RADIUS_KM,
    nneigh: int = DEFAULT_NNEIGH,
    max_plain: int = DEFAULT_MAX_PLAIN,
    workers: int = 1,
) -> list[Neighborhood]:
    index = GridIndex(store, radius_km)
    _WORKER["index"] = index
    _WORKER["caps"] = (nneigh, max_plain)
    n = len(store.features)
    if workers > 1 and n > 64:
        chunk = max(32, n // (workers * 4))
        ranges = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
        try:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                parts = list(ex.map(_build_range, ranges))
            return [nb for part in parts for nb in part]
        except OSError as exc:  # pragma: no cover - platform dependent
            log.warning("parallel neighborhood build unavailable (%s); running serially", exc)
    return _build_range((0, n))


def region_cell(lat: float, lon: float, cell_deg: float = DEFAULT_REGION_CELL_DEG) -> tuple[int, int]:
    return (math.floor(lat / cell_deg), math.floor(lon / cell_deg))


def split(neighborhoods: Sequence[Neighborhood], spec: SplitSpec) -> tuple[list[Neighborhood], list[Neighborhood]]:
    """Shuffled mode samples targets uniformly; unshuffled mode assigns whole
    region cells to the test side until the fraction is met."""
    if not 0.0 < spec.test_frac < 1.0:
        raise DataError("test_frac must be in (0, 1)")
    if not neighborhoods:
        raise DataError("cannot split an empty dataset")
    n = len(neighborhoods)
    want = spec.test_frac * n
    rng = RngState(spec.seed)

    if spec.mode == "shuffled":
        n_test = max(1, round(want))
        picks = set(rng.choice(n, size=n_test, replace=False).tolist())
        test = [nb for i, nb in enumerate(neighborhoods) if i in picks]
        train = [nb for i, nb in enumerate(neighborhoods) if i not in picks]
        return train, test

    if spec.mode != "unshuffled":
        raise DataError(f"unknown split mode: {spec.mode}")

    cells: dict[tuple[int, int], list[int]] = {}
    for i, nb in enumerate(neighborhoods):
        cells.setdefault(region_cell(nb.target.lat, nb.target.lon, spec.region_cell_deg), []).append(i)
    order = sorted(cells)
    perm = rng.permutation(len(order))
    test_idx: set[int] = set()
    for k in perm:
        if len(test_idx) >= want:
            break
        test_idx.update(cells[order[k]])
    achieved = len(test_idx) / n
    if achieved > 2.0 * spec.test_frac or achieved < spec.test_frac / 2.0:
        raise DataError(
            f"unshuffled split cannot approximate test_frac={spec.test_frac}: "
            f"achieved {achieved:.3f} with {spec.region_cell_deg} degree cells"
        )
    test = [nb for i, nb in enumerate(neighborhoods) if i in test_idx]
    train = [nb for i, nb in enumerate(neighborhoods) if i not in test_idx]
    return train, test


# ---------------------------------------------------------------------------
# JSON-lines serialization
# ---------------------------------------------------------------------------


def feature_to_json(f: FeatureRecord) -> dict:
    return {"id": f.id, "name": f.name, "pron": f.pron, "lat": f.lat, "lon": f.lon, "ftype": f.ftype}


def save_features(path, features: Iterable[FeatureRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in features:
            fh.write(json.dumps(feature_to_json(f), ensure_ascii=False, sort_keys=True) + "\n")


def neighborhood_to_json(nb: Neighborhood) -> dict:
    return {
        "target": feature_to_json(nb.target),
        "neighbors": [
            {"name": n.name, "pron": n.pron, "distance_km": n.distance_km, "interesting": n.interesting}
            for n in nb.neighbors
        ],
    }


def neighborhood_from_json(obj: dict) -> Neighborhood:
    return Neighborhood(
        target=_parse_record(obj["target"]),
        neighbors=[
            Neighbor(
                name=n["name"],
                pron=n["pron"],
                distance_km=float(n["distance_km"]),
                interesting=bool(n["interesting"]),
            )
            for n in obj["neighbors"]
        ],
    )


def save_neighborhoods(path, neighborhoods: Iterable[Neighborhood]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for nb in neighborhoods:
            fh.write(json.dumps(neighborhood_to_json(nb), ensure_ascii=False, sort_keys=True) + "\n")


def load_neighborhoods(path) -> list[Neighborhood]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"neighborhood file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(neighborhood_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: bad neighborhood record: {exc}") from exc
    return out
