"""The with-neighbors encoder-decoder transformer.

Three unshared encoder stacks process the target spelling, neighbor
spellings, and neighbor pronunciations. Neighbor encodings are averaged to
one vector per sequence (or kept at token resolution in interleaved mode),
tagged with per-neighbor source-token embeddings, and concatenated with the
target encoding into an unordered memory that the decoder cross-attends to.
A lat/lon grid embedding can contribute one extra memory row.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nbrs.errors import DataError
from nbrs.geodata import Neighborhood
from nbrs.numerics import (
    ParamStore,
    RngState,
    Tensor,
    add,
    concat,
    dropout,
    feed_forward,
    index_rows,
    layer_norm,
    masked_mean,
    mul,
    multi_head_attention,
    positional_encoding,
    reshape,
    scale,
)
from nbrs.numerics.layers import linear
from nbrs.textdata import PAD_ID, Vocabulary, encode

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    layers: int = 4
    heads: int = 8
    emb_size: int = 256
    hidden: int = 256
    dropout: float = 0.1
    label_smoothing: float = 0.2
    latlong_grid_n: int = 100
    beam: int = 8
    input_vocab: int = 4710
    output_vocab: int = 427
    name_len: int = 20
    pron_len: int = 40
    nneigh: int = 30
    use_neighbors: bool = True
    use_latlong: bool = True
    neighbor_dropout: float = 0.10
    use_distance: bool = False
    token_mode: str = "char"  # "char" | "space"
    interleave_memory: bool = False
    lat_bounds: tuple[float, float] = (30.0, 46.0)
    lon_bounds: tuple[float, float] = (128.0, 146.0)
    max_memory_rows: int | None = None

    def __post_init__(self):
        if self.emb_size % self.heads != 0:
            raise DataError(f"emb_size {self.emb_size} not divisible by {self.heads} heads")
        if self.latlong_grid_n < 1:
            raise DataError("latlong_grid_n must be at least 1")
        if self.token_mode not in ("char", "space"):
            raise DataError(f"unknown token_mode: {self.token_mode}")

    @property
    def memory_cap(self) -> int:
        if self.max_memory_rows is not None:
            return self.max_memory_rows
        if self.interleave_memory:
            return self.name_len + self.nneigh * (self.name_len + self.pron_len) + 1
        return self.name_len + 2 * self.nneigh + 1

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["lat_bounds"] = list(self.lat_bounds)
        d["lon_bounds"] = list(self.lon_bounds)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["lat_bounds"] = tuple(d.get("lat_bounds", (30.0, 46.0)))
        d["lon_bounds"] = tuple(d.get("lon_bounds", (128.0, 146.0)))
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def symbols_of(text: str, mode: str) -> list[str]:
    return list(text) if mode == "char" else text.split()


def latlong_cells(lat, lon, bounds_lat, bounds_lon, grid_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map coordinates onto grid cells, clamping out-of-bounds points to the
    edge cells (with a warning, since those embeddings are shared)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)

    def cells(x, lo, hi):
        raw = np.floor((x - lo) / (hi - lo) * grid_n).astype(np.int64)
        return np.clip(raw, 0, grid_n - 1), ((raw < 0) | (raw > grid_n - 1)).sum()

    lat_cells_arr, out_lat = cells(lat, *bounds_lat)
    lon_cells_arr, out_lon = cells(lon, *bounds_lon)
    if out_lat or out_lon:
        log.warning("%d coordinates outside the lat/lon grid were clamped to edge cells", int(out_lat + out_lon))
    return lat_cells_arr, lon_cells_arr


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------


def _glorot(gen, shape, dtype):
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return gen.uniform(-limit, limit, size=shape).astype(dtype)


def _add_encoder_stack(store, prefix, cfg, gen, dtype, cross_attention=False):
    d, h = cfg.emb_size, cfg.hidden
    for i in range(cfg.layers):
        p = f"{prefix}.{i}"
        for tag in ("self_attn",) + (("cross_attn",) if cross_attention else ()):
            for w in ("wq", "wk", "wv", "wo"):
                store.add(f"{p}.{tag}.{w}", _glorot(gen, (d, d), dtype))
        n_ln = 3 if cross_attention else 2
        for j in range(1, n_ln + 1):
            store.add(f"{p}.ln{j}.g", np.ones(d, dtype=dtype))
            store.add(f"{p}.ln{j}.b", np.zeros(d, dtype=dtype))
        store.add(f"{p}.ffn.w1", _glorot(gen, (d, h), dtype))
        store.add(f"{p}.ffn.b1", np.zeros(h, dtype=dtype))
        store.add(f"{p}.ffn.w2", _glorot(gen, (h, d), dtype))
        store.add(f"{p}.ffn.b2", np.zeros(d, dtype=dtype))
    store.add(f"{prefix}.final_ln.g", np.ones(d, dtype=dtype))
    store.add(f"{prefix}.final_ln.b", np.zeros(d, dtype=dtype))


def _group_gen(seed: int, group: str) -> np.random.Generator:
    import zlib

    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(group.encode("utf-8"))]))


def init_params(cfg: ModelConfig, vocab_in_size: int, vocab_out_size: int, seed: int, dtype=np.float32) -> ParamStore:
    """Seeded initialization: Glorot-style uniform matrices, zero biases,
    normal(0, emb**-0.5) embedding tables. Each parameter group draws from its
    own derived stream, so shared groups (embeddings, target encoder, decoder)
    are identical between with- and without-neighbors variants of a seed."""
    store = ParamStore()
    d = cfg.emb_size
    emb_std = d**-0.5
    store.add("embed_name", _group_gen(seed, "embed_name").normal(0.0, emb_std, size=(vocab_in_size, d)).astype(dtype))
    store.add("embed_pron", _group_gen(seed, "embed_pron").normal(0.0, emb_std, size=(vocab_out_size, d)).astype(dtype))
    _add_encoder_stack(store, "enc_inp", cfg, _group_gen(seed, "enc_inp"), dtype)
    if cfg.use_neighbors:
        _add_encoder_stack(store, "enc_name", cfg, _group_gen(seed, "enc_name"), dtype)
        _add_encoder_stack(store, "enc_pron", cfg, _group_gen(seed, "enc_pron"), dtype)
        store.add("source_tok", _group_gen(seed, "source_tok").normal(0.0, emb_std, size=(cfg.nneigh, d)).astype(dtype))
        if cfg.use_distance:
            store.add("dist_vec", _group_gen(seed, "dist_vec").normal(0.0, emb_std, size=(d,)).astype(dtype))
    if cfg.use_latlong:
        half = d // 2
        store.add("lat_embed", _group_gen(seed, "lat_embed").normal(0.0, emb_std, size=(cfg.latlong_grid_n, half)).astype(dtype))
        store.add("lon_embed", _group_gen(seed, "lon_embed").normal(0.0, emb_std, size=(cfg.latlong_grid_n, half)).astype(dtype))
    _add_encoder_stack(store, "dec", cfg, _group_gen(seed, "dec"), dtype, cross_attention=True)
    gen_out = _group_gen(seed, "out_proj")
    store.add("out_proj.w", _glorot(gen_out, (d, vocab_out_size), dtype))
    store.add("out_proj.b", np.zeros(vocab_out_size, dtype=dtype))
    return store


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


@dataclass
class EncodedBatch:
    x_inp: np.ndarray
    flat_names: np.ndarray
    flat_prons: np.ndarray
    owner: np.ndarray
    source_ids: np.ndarray
    keep_name: np.ndarray
    keep_pron: np.ndarray
    distances: np.ndarray
    lat_cells: np.ndarray | None
    lon_cells: np.ndarray | None
    keep_latlong: np.ndarray | None
    y_in: np.ndarray
    y_out: np.ndarray
    refs: list[str]
    truncated: int = 0

    @property
    def size(self) -> int:
        return self.x_inp.shape[0]


def encode_batch(
    cfg: ModelConfig,
    vocab_in: Vocabulary,
    vocab_out: Vocabulary,
    neighborhoods: Sequence[Neighborhood],
    rng: RngState | None = None,
    train: bool = False,
) -> EncodedBatch:
    """Turn neighborhoods into padded id arrays.

    In training mode this also applies within-batch neighbor shuffling (the
    source-token ids are assigned in a random order per example) and the
    per-neighbor-half and lat/long dropout draws.
    """
    b = len(neighborhoods)
    x_inp = np.zeros((b, cfg.name_len), dtype=np.int64)
    y_in = np.zeros((b, cfg.pron_len), dtype=np.int64)
    y_out = np.zeros((b, cfg.pron_len), dtype=np.int64)
    refs: list[str] = []
    truncated = 0

    flat_names: list[list[int]] = []
    flat_prons: list[list[int]] = []
    owner: list[int] = []
    source_ids: list[int] = []
    distances: list[float] = []

    joiner = "" if cfg.token_mode == "char" else " "
    for i, nb in enumerate(neighborhoods):
        ts = encode(vocab_in, symbols_of(nb.target.name, cfg.token_mode), cfg.name_len)
        truncated += ts.truncated
        x_inp[i] = ts.ids
        pron_syms = symbols_of(nb.target.pron or "", cfg.token_mode)
        full = encode(vocab_out, pron_syms, cfg.pron_len + 1, add_bos_eos=True)
        truncated += full.truncated
        y_in[i] = full.ids[:-1]
        y_out[i] = full.ids[1:]
        refs.append(joiner.join(pron_syms))

        if cfg.use_neighbors:
            neigh = nb.neighbors[: cfg.nneigh]
            k = len(neigh)
            order = rng.permutation(k) if (train and rng is not None and k > 1) else np.arange(k)
            for j, n in enumerate(neigh):
                nt = encode(vocab_in, symbols_of(n.name, cfg.token_mode), cfg.name_len)
                pt = encode(vocab_out, symbols_of(n.pron, cfg.token_mode), cfg.pron_len)
                truncated += nt.truncated + pt.truncated
                flat_names.append(nt.ids)
                flat_prons.append(pt.ids)
                owner.append(i)
                source_ids.append(int(order[j]))
                distances.append(n.distance_km)

    np_total = len(owner)
    if train and rng is not None and cfg.neighbor_dropout > 0 and np_total:
        keep_name = rng.random(np_total) >= cfg.neighbor_dropout
        keep_pron = rng.random(np_total) >= cfg.neighbor_dropout
    else:
        keep_name = np.ones(np_total, dtype=bool)
        keep_pron = np.ones(np_total, dtype=bool)

    lat_cells = lon_cells = keep_latlong = None
    if cfg.use_latlong:
        lats = [nb.target.lat for nb in neighborhoods]
        lons = [nb.target.lon for nb in neighborhoods]
        lat_cells, lon_cells = latlong_cells(lats, lons, cfg.lat_bounds, cfg.lon_bounds, cfg.latlong_grid_n)
        if train and rng is not None and cfg.neighbor_dropout > 0:
            keep_latlong = rng.random(b) >= cfg.neighbor_dropout
        else:
            keep_latlong = np.ones(b, dtype=bool)

    return EncodedBatch(
        x_inp=x_inp,
        flat_names=np.asarray(flat_names, dtype=np.int64).reshape(np_total, cfg.name_len),
        flat_prons=np.asarray(flat_prons, dtype=np.int64).reshape(np_total, cfg.pron_len),
        owner=np.asarray(owner, dtype=np.int64),
        source_ids=np.asarray(source_ids, dtype=np.int64),
        keep_name=keep_name,
        keep_pron=keep_pron,
        distances=np.asarray(distances, dtype=np.float64),
        lat_cells=lat_cells,
        lon_cells=lon_cells,
        keep_latlong=keep_latlong,
        y_in=y_in,
        y_out=y_out,
        refs=refs,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


class NeighborModel:
    def __init__(self, cfg: ModelConfig, params: ParamStore, vocab_in: Vocabulary, vocab_out: Vocabulary):
        self.cfg = cfg
        self.params = params
        self.vocab_in = vocab_in
        self.vocab_out = vocab_out

    @classmethod
    def create(cls, cfg: ModelConfig, vocab_in: Vocabulary, vocab_out: Vocabulary, seed: int, dtype=np.float32):
        params = init_params(cfg, len(vocab_in), len(vocab_out), seed, dtype)
        return cls(cfg, params, vocab_in, vocab_out)

    def with_config(self, **changes) -> "NeighborModel":
        """Same parameters under a modified configuration (e.g. neighbors off)."""
        return NeighborModel(dataclasses.replace(self.cfg, **changes), self.params, self.vocab_in, self.vocab_out)

    @property
    def dtype(self):
        return self.params["embed_name"].data.dtype

    # -- building blocks ----------------------------------------------------

    def _embed(self, table: str, ids: np.ndarray, rng, train) -> Tensor:
        cfg = self.cfg
        x = index_rows(self.params[table], ids)
        x = scale(x, math.sqrt(cfg.emb_size))
        pe = positional_encoding(ids.shape[-1], cfg.emb_size, dtype=self.dtype)
        x = add(x, Tensor(pe))
        return dropout(x, cfg.dropout, rng, train, whole_last_dim=True)

    def _attn_sublayer(self, prefix: str, x: Tensor, kv: Tensor, mask, rng, train, capture=None) -> Tensor:
        p = self.params
        q = linear(x, p[f"{prefix}.wq"])
        k = linear(kv, p[f"{prefix}.wk"])
        v = linear(kv, p[f"{prefix}.wv"])
        a = multi_head_attention(q, k, v, mask, self.cfg.heads, capture=capture)
        a = linear(a, p[f"{prefix}.wo"])
        return dropout(a, self.cfg.dropout, rng, train)

    def _encoder(self, prefix: str, x: Tensor, key_mask: np.ndarray, rng, train) -> Tensor:
        p, cfg = self.params, self.cfg
        for i in range(cfg.layers):
            lp = f"{prefix}.{i}"
            h = layer_norm(x, p[f"{lp}.ln1.g"], p[f"{lp}.ln1.b"])
            x = add(x, self._attn_sublayer(f"{lp}.self_attn", h, h, key_mask, rng, train))
            h = layer_norm(x, p[f"{lp}.ln2.g"], p[f"{lp}.ln2.b"])
            x = add(x, feed_forward(h, p[f"{lp}.ffn.w1"], p[f"{lp}.ffn.b1"], p[f"{lp}.ffn.w2"], p[f"{lp}.ffn.b2"], cfg.dropout, rng, train))
        return layer_norm(x, p[f"{prefix}.final_ln.g"], p[f"{prefix}.final_ln.b"])

    def _decoder(self, x: Tensor, self_mask, memory: Tensor, mem_mask, rng, train, capture=None) -> Tensor:
        p, cfg = self.params, self.cfg
        for i in range(cfg.layers):
            lp = f"dec.{i}"
            h = layer_norm(x, p[f"{lp}.ln1.g"], p[f"{lp}.ln1.b"])
            x = add(x, self._attn_sublayer(f"{lp}.self_attn", h, h, self_mask, rng, train))
            h = layer_norm(x, p[f"{lp}.ln2.g"], p[f"{lp}.ln2.b"])
            x = add(x, self._attn_sublayer(f"{lp}.cross_attn", h, memory, mem_mask, rng, train, capture=capture))
            h = layer_norm(x, p[f"{lp}.ln3.g"], p[f"{lp}.ln3.b"])
            x = add(x, feed_forward(h, p[f"{lp}.ffn.w1"], p[f"{lp}.ffn.b1"], p[f"{lp}.ffn.w2"], p[f"{lp}.ffn.b2"], cfg.dropout, rng, train))
        return layer_norm(x, p["dec.final_ln.g"], p["dec.final_ln.b"])

    # -- spec operations -----------------------------------------------------

    def encode_target(self, x_inp: np.ndarray, rng=None, train: bool = False) -> tuple[Tensor, np.ndarray]:
        """Target spelling ids [B, name_len] -> contextual rows [B, name_len, emb]."""
        pad_mask = x_inp != PAD_ID
        if not pad_mask.any(axis=1).all():
            raise DataError("encode_target: an input row is entirely padding")
        x = self._embed("embed_name", x_inp, rng, train)
        return self._encoder("enc_inp", x, pad_mask, rng, train), pad_mask

    def encode_neighbors(self, batch: EncodedBatch, rng=None, train: bool = False) -> tuple[Tensor, Tensor]:
        """Per-neighbor summary vectors: masked mean over token positions of
        each encoder output, plus the shared source-token embedding."""
        name_mask = batch.flat_names != PAD_ID
        pron_mask = batch.flat_prons != PAD_ID
        h_name = self._encoder("enc_name", self._embed("embed_name", batch.flat_names, rng, train), name_mask, rng, train)
        h_pron = self._encoder("enc_pron", self._embed("embed_pron", batch.flat_prons, rng, train), pron_mask, rng, train)
        s_name = masked_mean(h_name, name_mask)
        s_pron = masked_mean(h_pron, pron_mask)
        src = index_rows(self.params["source_tok"], batch.source_ids)
        s_name = add(s_name, src)
        s_pron = add(s_pron, src)
        if self.cfg.use_distance:
            dist = Tensor((batch.distances / 10.0).astype(self.dtype)[:, None])
            dvec = reshape(self.params["dist_vec"], (1, self.cfg.emb_size))
            s_name = add(s_name, mul(dist, dvec))
            s_pron = add(s_pron, mul(dist, dvec))
        return s_name, s_pron

    def latlong_vector(self, lat_cells: np.ndarray, lon_cells: np.ndarray) -> Tensor:
        """Concatenated latitude-cell and longitude-cell embeddings [B, 2*(emb//2)]."""
        return concat(
            [index_rows(self.params["lat_embed"], lat_cells), index_rows(self.params["lon_embed"], lon_cells)],
            axis=1,
        )

    def encode_memory(self, batch: EncodedBatch, rng=None, train: bool = False) -> tuple[Tensor, np.ndarray]:
        """Assemble the decoder memory: target rows, neighbor rows, lat/long row.

        No positional information is added beyond what each encoder already
        saw, so the memory is unordered from the decoder's point of view.
        """
        cfg = self.cfg
        b, lin = batch.x_inp.shape
        h_inp, inp_mask = self.encode_target(batch.x_inp, rng, train)
        pool_parts = [reshape(h_inp, (b * lin, cfg.emb_size))]
        rows: list[list[tuple[int, bool]]] = [
            [(i * lin + t, bool(inp_mask[i, t])) for t in range(lin)] for i in range(b)
        ]
        offset = b * lin

        use_neigh = cfg.use_neighbors and batch.owner.size > 0
        if use_neigh and not (batch.keep_name.any() or batch.keep_pron.any()):
            use_neigh = False  # every neighbor half dropped: skip the encoders entirely
        if use_neigh:
            if cfg.interleave_memory:
                offset = self._interleaved_rows(batch, rows, pool_parts, offset, rng, train)
            else:
                s_name, s_pron = self.encode_neighbors(batch, rng, train)
                pool_parts += [s_name, s_pron]
                np_total = batch.owner.size
                for j in range(np_total):
                    i = int(batch.owner[j])
                    if batch.keep_name[j]:
                        rows[i].append((offset + j, True))
                    if batch.keep_pron[j]:
                        rows[i].append((offset + np_total + j, True))
                offset += 2 * np_total

        if cfg.use_latlong:
            ll = self.latlong_vector(batch.lat_cells, batch.lon_cells)
            pool_parts.append(ll)
            for i in range(b):
                if batch.keep_latlong is None or batch.keep_latlong[i]:
                    rows[i].append((offset + i, True))
            offset += b

        m_max = max(len(r) for r in rows)
        if m_max > cfg.memory_cap:
            raise DataError(f"assembled memory has {m_max} rows, above the configured cap of {cfg.memory_cap}")
        idx = np.zeros((b, m_max), dtype=np.int64)
        mask = np.zeros((b, m_max), dtype=bool)
        for i, r in enumerate(rows):
            for m, (row_idx, attendable) in enumerate(r):
                idx[i, m] = row_idx
                mask[i, m] = attendable
        pool = pool_parts[0] if len(pool_parts) == 1 else concat(pool_parts, axis=0)
        memory = index_rows(pool, idx)
        return memory, mask

    def _interleaved_rows(self, batch, rows, pool_parts, offset, rng, train) -> int:
        """Token-resolution neighbor memory: per cognate, its language-id token
        rows then its form token rows, each with the source embedding added."""
        cfg = self.cfg
        name_mask = batch.flat_names != PAD_ID
        pron_mask = batch.flat_prons != PAD_ID
        h_name = self._encoder("enc_name", self._embed("embed_name", batch.flat_names, rng, train), name_mask, rng, train)
        h_pron = self._encoder("enc_pron", self._embed("embed_pron", batch.flat_prons, rng, train), pron_mask, rng, train)
        src = index_rows(self.params["source_tok"], batch.source_ids)
        src3 = reshape(src, (batch.owner.size, 1, cfg.emb_size))
        h_name = add(h_name, src3)
        h_pron = add(h_pron, src3)
        np_total, ln = name_mask.shape
        lp = pron_mask.shape[1]
        pool_parts.append(reshape(h_name, (np_total * ln, cfg.emb_size)))
        pool_parts.append(reshape(h_pron, (np_total * lp, cfg.emb_size)))
        name_base, pron_base = offset, offset + np_total * ln
        for j in range(np_total):
            i = int(batch.owner[j])
            if batch.keep_name[j]:
                rows[i].extend((name_base + j * ln + t, True) for t in range(ln) if name_mask[j, t])
            if batch.keep_pron[j]:
                rows[i].extend((pron_base + j * lp + t, True) for t in range(lp) if pron_mask[j, t])
        return pron_base + np_total * lp

    def decode_logits(self, y_prefix: np.ndarray, memory: Tensor, mem_mask: np.ndarray, capture=None) -> Tensor:
        """Teacher-forced decoder logits [N, T, V] over an id prefix [N, T]."""
        n, t = y_prefix.shape
        x = self._embed("embed_pron", y_prefix, None, False)
        causal = np.broadcast_to(np.tril(np.ones((t, t), dtype=bool)), (n, t, t))
        x = self._decoder(x, causal, memory, mem_mask, None, False, capture=capture)
        return add(linear(x, self.params["out_proj.w"]), self.params["out_proj.b"])

    def forward_loss(self, batch: EncodedBatch, rng=None, train: bool = False) -> Tensor:
        """Label-smoothed teacher-forced loss over non-pad output positions."""
        from nbrs.numerics import smoothed_cross_entropy

        cfg = self.cfg
        memory, mem_mask = self.encode_memory(batch, rng, train)
        n, t = batch.y_in.shape
        x = self._embed("embed_pron", batch.y_in, rng, train)
        causal = np.broadcast_to(np.tril(np.ones((t, t), dtype=bool)), (n, t, t))
        x = self._decoder(x, causal, memory, mem_mask, rng, train)
        logits = add(linear(x, self.params["out_proj.w"]), self.params["out_proj.b"])
        return smoothed_cross_entropy(logits, batch.y_out, cfg.label_smoothing, PAD_ID)

    def memory_row_labels(self, batch: EncodedBatch, example: int = 0) -> list[str]:
        """Human-readable labels for one example's memory rows."""
        cfg = self.cfg
        labels = []
        inp_syms = [self.vocab_in.symbols[i] if i < len(self.vocab_in.symbols) else "?" for i in batch.x_inp[example]]
        for t, sym in enumerate(inp_syms):
            if batch.x_inp[example, t] != PAD_ID:
                labels.append(f"inp:{t}:{sym}")
            else:
                labels.append(f"inp:{t}:<pad>")
        if cfg.use_neighbors:
            for j in range(batch.owner.size):
                if batch.owner[j] != example:
                    continue
                if cfg.interleave_memory:
                    if batch.keep_name[j]:
                        labels.extend(f"neigh{j}:name:{t}" for t in range((batch.flat_names[j] != PAD_ID).sum()))
                    if batch.keep_pron[j]:
                        labels.extend(f"neigh{j}:pron:{t}" for t in range((batch.flat_prons[j] != PAD_ID).sum()))
                else:
                    if batch.keep_name[j]:
                        labels.append(f"neigh{j}:name")
                    if batch.keep_pron[j]:
                        labels.append(f"neigh{j}:pron")
        if cfg.use_latlong and (batch.keep_latlong is None or batch.keep_latlong[example]):
            labels.append("latlong")
        return labels

    def param_count(self) -> int:
        return self.params.n_values()
