"""Training loop: Adam with warmup, within-batch neighbor shuffling and
neighbor/lat-long dropout (those live in batch prep), label smoothing in the
loss, periodic golden-set monitoring, checkpointing. No early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from nbrs.errors import DataError, NumericsError
from nbrs.geodata import Neighborhood
from nbrs.model import ModelConfig, NeighborModel, encode_batch, symbols_of
from nbrs.numerics import (
    RngState,
    adam_step,
    backward,
    load_checkpoint,
    rsqrt_warmup_schedule,
    save_checkpoint,
)
from nbrs.textdata import UNK_ID, Vocabulary, build_vocab

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 20_000  # desk-scale default; the reference setting is 1M
    batch_size: int = 64
    seed: int = 0
    eval_every: int = 1000
    warmup_steps: int = 4000
    lr_base: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    golden_beam: int = 1

    def __post_init__(self):
        if self.steps <= 0:
            raise DataError("steps must be positive")


@dataclass
class TrainResult:
    model: NeighborModel
    metrics: list[tuple[int, float, float | None]]
    status: str  # "ok" | "aborted"
    steps_done: int
    checkpoint_path: Path | None = None


def build_vocabs(cfg: ModelConfig, neighborhoods: Sequence[Neighborhood]) -> tuple[Vocabulary, Vocabulary]:
    names = []
    prons = []
    for nb in neighborhoods:
        names.append(symbols_of(nb.target.name, cfg.token_mode))
        if nb.target.pron:
            prons.append(symbols_of(nb.target.pron, cfg.token_mode))
        for n in nb.neighbors:
            names.append(symbols_of(n.name, cfg.token_mode))
            prons.append(symbols_of(n.pron, cfg.token_mode))
    return build_vocab(names, cfg.input_vocab), build_vocab(prons, cfg.output_vocab)


def coverage_stats(vocab: Vocabulary, seqs: Sequence[Sequence[str]]) -> dict:
    total = unk = 0
    for s in seqs:
        for sym in s:
            total += 1
            unk += vocab.id_of(sym) == UNK_ID
    return {"symbols": total, "unk": unk, "unk_rate": (unk / total) if total else 0.0}


def checkpoint_config(model: NeighborModel, step: int, extra: dict | None = None) -> dict:
    cfg = {
        "model": model.cfg.to_json(),
        "vocab_in": model.vocab_in.symbols,
        "vocab_out": model.vocab_out.symbols,
        "step": step,
    }
    if extra:
        cfg.update(extra)
    return cfg


def save_model(path, model: NeighborModel, step: int = 0, extra: dict | None = None) -> None:
    save_checkpoint(path, checkpoint_config(model, step, extra), model.params)


def load_model(path) -> tuple[NeighborModel, dict]:
    config, store = load_checkpoint(path)
    try:
        cfg = ModelConfig.from_json(config["model"])
        vin = Vocabulary(config["vocab_in"])
        vout = Vocabulary(config["vocab_out"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint config missing model fields: {exc}") from exc
    return NeighborModel(cfg, store, vin, vout), config


def exact_match(decoder, dataset: Sequence[Neighborhood], beam: int = 1) -> float:
    """Fraction of targets whose top hypothesis differs from the reference.

    ``decoder`` is either a NeighborModel or a callable mapping a neighborhood
    to a predicted pronunciation string.
    """
    from nbrs.decoding import decode_batch

    refs = []
    for nb in dataset:
        if not nb.target.pron:
            raise DataError(f"target {nb.target.id} has no reference pronunciation")
        refs.append(nb.target.pron)

    if isinstance(decoder, NeighborModel):
        joiner = "" if decoder.cfg.token_mode == "char" else " "
        refs = [joiner.join(symbols_of(r, decoder.cfg.token_mode)) for r in refs]
        hyps = [h[0].text if h else "" for h in decode_batch(decoder, dataset, beam=beam)]
    else:
        hyps = [decoder(nb) for nb in dataset]
    wrong = sum(1 for h, r in zip(hyps, refs) if h != r)
    return wrong / len(dataset) if dataset else 0.0


def _metrics_lines(metrics) -> str:
    lines = ["step,loss,golden_err"]
    for step, loss, golden in metrics:
        g = "" if golden is None else f"{golden:.6f}"
        lines.append(f"{step},{loss:.6f},{g}")
    return "\n".join(lines) + "\n"


def train(
    cfg: ModelConfig,
    train_data: Sequence[Neighborhood],
    tcfg: TrainConfig,
    golden: Sequence[Neighborhood] | None = None,
    out_dir=None,
    vocabs: tuple[Vocabulary, Vocabulary] | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Run the optimization loop; returns the model plus the metrics log.

    Reruns with identical configuration and data reproduce the metrics log
    byte for byte. A non-finite loss or gradient aborts the run and keeps the
    last good checkpoint.
    """
    data = [nb for nb in train_data if nb.target.pron]
    if not data:
        raise DataError("no training targets with pronunciations")
    if len(data) < len(train_data):
        log.info("dropped %d targets without pronunciations", len(train_data) - len(data))

    vocab_in, vocab_out = vocabs if vocabs is not None else build_vocabs(cfg, data)
    model = NeighborModel.create(cfg, vocab_in, vocab_out, seed=tcfg.seed)
    log.info("model has %d parameters", model.param_count())

    # named streams: the with-neighbors and without-neighbors variants of a
    # seed then see identical batches and identical model-dropout draws
    root = RngState(tcfg.seed)
    rng_data = root.child("data")
    rng_prep = root.child("prep")
    rng_model = root.child("dropout")
    sched = rsqrt_warmup_schedule(cfg.emb_size, tcfg.warmup_steps, tcfg.lr_base)
    metrics: list[tuple[int, float, float | None]] = []
    snapshot = model.params.copy()
    snapshot_step = 0
    status = "ok"
    step = 0

    def golden_err() -> float | None:
        if not golden:
            return None
        return exact_match(model, golden, beam=tcfg.golden_beam)

    try:
        for step in range(1, tcfg.steps + 1):
            picks = rng_data.integers(0, len(data), size=tcfg.batch_size)
            batch = encode_batch(cfg, vocab_in, vocab_out, [data[i] for i in picks], rng=rng_prep, train=True)
            model.params.zero_grads()
            loss = model.forward_loss(batch, rng=rng_model, train=True)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise NumericsError(f"non-finite loss at step {step}")
            backward(loss)
            adam_step(model.params, model.params.grads(), sched, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
            if step % tcfg.eval_every == 0 or step == tcfg.steps:
                metrics.append((step, loss_val, golden_err()))
                snapshot = model.params.copy()
                snapshot_step = step
                if progress is not None:
                    progress(step, loss_val)
    except NumericsError as exc:
        log.error("training aborted at step %d: %s; keeping checkpoint from step %d", step, exc, snapshot_step)
        status = "aborted"
        model = NeighborModel(cfg, snapshot, vocab_in, vocab_out)
        step = snapshot_step

    ckpt_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = out_dir / "model.ckpt"
        save_model(ckpt_path, model, step=step, extra={"status": status})
        (out_dir / "metrics.csv").write_text(_metrics_lines(metrics), encoding="utf-8")
        vocab_in.save(out_dir / "vocab_in.txt")
        vocab_out.save(out_dir / "vocab_out.txt")
    return TrainResult(model=model, metrics=metrics, status=status, steps_done=step, checkpoint_path=ckpt_path)
