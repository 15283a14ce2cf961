"""Command-line entry point.

Configuration precedence per option: command-line flag, then config file
(--config, JSON), then NBRS_<OPTION> environment variable, then the built-in
default. Every run writes its fully resolved configuration next to its
outputs. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

from nbrs.errors import DataError, NbrsError, NumericsError

log = logging.getLogger("nbrs")


class UsageError(NbrsError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(raw: str, kind):
    if kind is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return kind(raw)


def resolve_options(ns, spec: dict[str, tuple[type, object]], config_path: str | None) -> dict:
    """flags > config file > NBRS_* environment > defaults."""
    file_cfg = {}
    if config_path:
        p = Path(config_path)
        if not p.exists():
            raise DataError(f"config file not found: {p}")
        try:
            file_cfg = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"config file is not valid JSON: {p}") from exc
    out = {}
    for key, (kind, default) in spec.items():
        flag = getattr(ns, key, None)
        if flag is not None:
            out[key] = flag
            continue
        if key in file_cfg:
            out[key] = _parse_value(str(file_cfg[key]), kind) if not isinstance(file_cfg[key], kind) else file_cfg[key]
            continue
        env = os.environ.get("NBRS_" + key.upper())
        if env is not None:
            out[key] = _parse_value(env, kind)
            continue
        out[key] = default
    return out


def write_run_config(out_dir: Path, command: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "options": {k: resolved[k] for k in sorted(resolved)}}
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


MODEL_OPTIONS: dict[str, tuple[type, object]] = {
    "layers": (int, 4),
    "heads": (int, 8),
    "emb_size": (int, 256),
    "hidden": (int, 256),
    "dropout": (float, 0.1),
    "label_smoothing": (float, 0.2),
    "latlong_grid_n": (int, 100),
    "beam": (int, 8),
    "input_vocab": (int, 4710),
    "output_vocab": (int, 427),
    "name_len": (int, 20),
    "pron_len": (int, 40),
    "nneigh": (int, 30),
    "use_neighbors": (bool, True),
    "use_latlong": (bool, True),
    "neighbor_dropout": (float, 0.10),
}

TRAIN_OPTIONS: dict[str, tuple[type, object]] = {
    "steps": (int, 20_000),
    "batch_size": (int, 64),
    "seed": (int, 0),
    "eval_every": (int, 1000),
    "warmup_steps": (int, 4000),
    "lr_base": (float, 1.0),
}


def _add_options(parser, spec):
    for key, (kind, _default) in spec.items():
        flag = "--" + key.replace("_", "-")
        if kind is bool:
            group = parser.add_mutually_exclusive_group()
            group.add_argument(flag, dest=key, action="store_true", default=None)
            group.add_argument("--no-" + key.replace("_", "-"), dest=key, action="store_false", default=None)
        else:
            parser.add_argument(flag, dest=key, type=kind, default=None)


def _model_config(resolved):
    from nbrs.model import ModelConfig

    kwargs = {k: resolved[k] for k in MODEL_OPTIONS if k in resolved}
    return ModelConfig(**kwargs)


def _train_config(resolved):
    from nbrs.training import TrainConfig

    return TrainConfig(
        steps=resolved["steps"],
        batch_size=resolved["batch_size"],
        seed=resolved["seed"],
        eval_every=resolved["eval_every"],
        warmup_steps=resolved["warmup_steps"],
        lr_base=resolved["lr_base"],
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_build_data(ns) -> int:
    from nbrs.geodata import SplitSpec, build_neighborhoods, ingest, save_neighborhoods, split

    spec = {
        "radius_km": (float, 10.0),
        "max_neighbors": (int, 30),
        "max_plain": (int, 5),
        "split": (str, "shuffled"),
        "test_frac": (float, 0.1),
        "seed": (int, 0),
        "workers": (int, os.cpu_count() or 1),
        "region_cell_deg": (float, 0.5),
    }
    opts = resolve_options(ns, spec, ns.config)
    store = ingest(ns.input)
    log.info("ingest: %s", store.stats)
    nbs = build_neighborhoods(
        store,
        radius_km=opts["radius_km"],
        nneigh=opts["max_neighbors"],
        max_plain=opts["max_plain"],
        workers=opts["workers"],
    )
    out = Path(ns.output)
    out.mkdir(parents=True, exist_ok=True)
    if opts["split"] == "none":
        save_neighborhoods(out / "data.jsonl", nbs)
        log.info("wrote %d neighborhoods", len(nbs))
    else:
        sp = SplitSpec(
            mode=opts["split"],
            test_frac=opts["test_frac"],
            region_cell_deg=opts["region_cell_deg"],
            seed=opts["seed"],
        )
        train_set, test_set = split(nbs, sp)
        save_neighborhoods(out / "train.jsonl", train_set)
        save_neighborhoods(out / "test.jsonl", test_set)
        log.info("wrote %d train / %d test neighborhoods", len(train_set), len(test_set))
    write_run_config(out, "build-data", {**opts, "input": str(ns.input)})
    return 0


def cmd_train(ns) -> int:
    from nbrs import plots
    from nbrs.geodata import load_neighborhoods
    from nbrs.training import train

    spec = {**MODEL_OPTIONS, **TRAIN_OPTIONS}
    opts = resolve_options(ns, spec, ns.config)
    data = load_neighborhoods(ns.data)
    golden = load_neighborhoods(ns.golden) if ns.golden else None
    out = Path(ns.out)
    result = train(
        _model_config(opts),
        data,
        _train_config(opts),
        golden=golden,
        out_dir=out,
        progress=lambda s, l: log.info("step %d loss %.4f", s, l),
    )
    plots.save_loss_curve(result.metrics, out / "loss.png")
    write_run_config(out, "train", {**opts, "data": str(ns.data)})
    log.info("training %s after %d steps", result.status, result.steps_done)
    return 0 if result.status == "ok" else 3


def _load_model(path):
    from nbrs.training import load_model

    return load_model(path)[0]


def cmd_decode(ns) -> int:
    from nbrs.decoding import confidence_gap, decode_batch
    from nbrs.geodata import load_neighborhoods

    opts = resolve_options(ns, {"beam": (int, 8)}, ns.config)
    model = _load_model(ns.checkpoint)
    data = load_neighborhoods(ns.data)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    hyps = decode_batch(model, data, beam=opts["beam"])
    with open(out / "decodes.tsv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "name", "reference", "hypothesis", "log_likelihood", "confidence_gap"])
        for nb, hyp_list in zip(data, hyps):
            top = hyp_list[0] if hyp_list else None
            gap = confidence_gap(hyp_list) if hyp_list else math.nan
            w.writerow(
                [
                    nb.target.id,
                    nb.target.name,
                    nb.target.pron or "",
                    top.text if top else "",
                    f"{top.log_likelihood:.6f}" if top else "",
                    "inf" if math.isinf(gap) else f"{gap:.6f}",
                ]
            )
    write_run_config(out, "decode", {**opts, "checkpoint": str(ns.checkpoint), "data": str(ns.data)})
    return 0


def _html_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def cmd_detect(ns) -> int:
    from nbrs import plots
    from nbrs.decoding import detect_discrepancies
    from nbrs.geodata import load_neighborhoods

    opts = resolve_options(ns, {"beam": (int, 8), "min_gap": (float, 0.0)}, ns.config)
    model = _load_model(ns.checkpoint)
    data = load_neighborhoods(ns.data)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = detect_discrepancies(model, data, beam=opts["beam"], min_gap=opts["min_gap"])
    with open(out / "discrepancies.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_id", "name", "reference", "hypothesis", "confidence_gap", "evidence"])
        for r in reports:
            ev = ";".join(f"{e.neighbor_index}:{e.neighbor_name}:{e.shared_spelling}:{e.shared_pron}" for e in r.evidence)
            w.writerow([r.feature_id, r.name, r.reference, r.hypothesis,
                        "inf" if math.isinf(r.confidence_gap) else f"{r.confidence_gap:.6f}", ev])
    rows_html = "\n".join(
        "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>".format(
            _html_escape(r.feature_id),
            _html_escape(r.name),
            _html_escape(r.reference),
            _html_escape(r.hypothesis),
            "inf" if math.isinf(r.confidence_gap) else f"{r.confidence_gap:.3f}",
            _html_escape("; ".join(f"{e.neighbor_name} ({e.shared_spelling}/{e.shared_pron})" for e in r.evidence)),
        )
        for r in reports
    )
    html = (
        "<!doctype html><meta charset='utf-8'><title>discrepancy report</title>"
        "<style>table{border-collapse:collapse}td,th{border:1px solid #999;padding:4px 8px}</style>"
        f"<h1>Discrepancy report</h1><p>{len(reports)} flagged of {len(data)} targets.</p>"
        "<table><tr><th>id</th><th>name</th><th>reference</th><th>hypothesis</th>"
        f"<th>gap</th><th>neighbor evidence</th></tr>{rows_html}</table>"
    )
    (out / "report.html").write_text(html, encoding="utf-8")
    plots.save_gap_histogram([r.confidence_gap for r in reports], out / "gap_histogram.png")
    write_run_config(out, "detect", {**opts, "checkpoint": str(ns.checkpoint), "data": str(ns.data)})
    log.info("flagged %d discrepancies", len(reports))
    return 0


def _read_pairs_tsv(path) -> list[tuple[str, str]]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"pair file not found: {p}")
    pairs = []
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) < 2:
            raise DataError(f"{p}:{line_no}: expected name<TAB>pron")
        pairs.append((cells[0], cells[1]))
    return pairs


def cmd_baseline(ns) -> int:
    from nbrs.baseline import train_baseline
    from nbrs.geodata import load_neighborhoods

    opts = resolve_options(ns, {"max_key_len": (int, 6)}, ns.config)
    pairs = _read_pairs_tsv(ns.train_pairs)
    system = train_baseline(pairs, max_key_len=opts["max_key_len"])
    data = load_neighborhoods(ns.data)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    n_wrong_base = n_wrong_sub = n_ref = 0
    with open(out / "predictions.tsv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["id", "name", "reference", "base_reading", "with_neighbors"])
        for nb in data:
            base = system.predict(nb, use_neighbors=False)
            sub = system.predict(nb, use_neighbors=True, max_key_len=opts["max_key_len"])
            ref = nb.target.pron or ""
            if ref:
                n_ref += 1
                n_wrong_base += base != ref
                n_wrong_sub += sub != ref
            w.writerow([nb.target.id, nb.target.name, ref, base, sub])
    with open(out / "lexicon.tsv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        for key, reading, count in system.base_lexicon.rows():
            w.writerow([key, reading, f"{count:g}"])
    if n_ref:
        log.info(
            "baseline error without neighbors %.4f, with neighbors %.4f (%d refs)",
            n_wrong_base / n_ref,
            n_wrong_sub / n_ref,
            n_ref,
        )
    write_run_config(out, "baseline", {**opts, "train_pairs": str(ns.train_pairs), "data": str(ns.data)})
    return 0


def _read_decodes(path) -> tuple[list[str], list[str]]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"decode file not found: {p}")
    refs, hyps = [], []
    with open(p, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        for row in reader:
            refs.append(row["reference"])
            hyps.append(row["hypothesis"])
    return refs, hyps


def cmd_eval(ns) -> int:
    from nbrs.evaluation import PairedOutcomes, normal_ci, paired_bootstrap, paired_permutation

    opts = resolve_options(ns, {"trials": (int, 10_000), "perms": (int, 5_000), "seed": (int, 0)}, ns.config)
    refs_a, hyps_a = _read_decodes(ns.preds_a)
    refs_b, hyps_b = _read_decodes(ns.preds_b)
    if refs_a != refs_b:
        raise DataError("the two decode files cover different references")
    outcomes = PairedOutcomes.from_predictions(refs_a, hyps_a, hyps_b)
    n = len(outcomes)
    err_a = 1.0 - outcomes.a.mean()
    err_b = 1.0 - outcomes.b.mean()
    boot = paired_bootstrap(outcomes, trials=opts["trials"], seed=opts["seed"])
    perm = paired_permutation(outcomes, perms=opts["perms"], seed=opts["seed"])
    stats = {
        "n": n,
        "err_a": err_a,
        "err_b": err_b,
        "normal_ci_a": normal_ci(err_a, n),
        "normal_ci_b": normal_ci(err_b, n),
        "bootstrap": {
            "p_value": boot.p_value,
            "ci_a": boot.ci_a,
            "ci_b": boot.ci_b,
            "better": boot.better,
            "trials": opts["trials"],
        },
        "permutation": {"p_value": perm, "perms": opts["perms"]},
    }
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "stats.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["n", n])
        w.writerow(["err_a", f"{err_a:.6f}"])
        w.writerow(["err_b", f"{err_b:.6f}"])
        w.writerow(["bootstrap_p", f"{boot.p_value:.6f}"])
        w.writerow(["permutation_p", f"{perm:.6f}"])
    write_run_config(out, "eval", {**opts, "preds_a": str(ns.preds_a), "preds_b": str(ns.preds_b)})
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_manipulate(ns) -> int:
    from nbrs import plots
    from nbrs.baseline import train_aligner
    from nbrs.evaluation import ManipulationSpec, manipulation_experiment
    from nbrs.geodata import load_neighborhoods

    opts = resolve_options(ns, {"beam": (int, 8), "max_targets": (int, 0)}, ns.config)
    model = _load_model(ns.checkpoint)
    data = load_neighborhoods(ns.data)
    spec_path = Path(ns.specs)
    if not spec_path.exists():
        raise DataError(f"spec file not found: {spec_path}")
    raw = json.loads(spec_path.read_text(encoding="utf-8"))
    specs = [ManipulationSpec(spelling=s["spelling"], p1=s["p1"], p2=s["p2"]) for s in raw]
    pairs = [(nb.target.name, nb.target.pron) for nb in data if nb.target.pron]
    aligner, _ = train_aligner(pairs)
    rows = manipulation_experiment(
        model, data, specs, aligner, beam=opts["beam"], max_targets=opts["max_targets"] or None
    )
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manipulation.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["spelling", "condition", "n_targets", "proportion_p1", "skipped_targets", "unlocatable_neighbors"])
        for r in rows:
            w.writerow([r.spelling, r.condition, r.n_targets, f"{r.proportion_p1:.6f}", r.skipped_targets, r.unlocatable_neighbors])
    plots.save_manipulation(rows, out / "manipulation.png")
    write_run_config(out, "manipulate", {**opts, "checkpoint": str(ns.checkpoint), "data": str(ns.data)})
    return 0


def cmd_ablate(ns) -> int:
    from nbrs import plots
    from nbrs.evaluation import ablation_sweep
    from nbrs.geodata import load_neighborhoods

    spec = {**MODEL_OPTIONS, **TRAIN_OPTIONS, "neighbor_counts": (str, "0,1,5,10,20,30"), "latlong": (str, "off,on")}
    opts = resolve_options(ns, spec, ns.config)
    train_set = load_neighborhoods(ns.train_data)
    test_set = load_neighborhoods(ns.test_data)
    counts = [int(x) for x in opts["neighbor_counts"].split(",") if x != ""]
    latlong = [x.strip() == "on" for x in opts["latlong"].split(",")]
    cells = ablation_sweep(train_set, test_set, _model_config(opts), _train_config(opts), counts, latlong)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["max_neighbors", "use_latlong", "error_rate", "steps"])
        for c in cells:
            w.writerow([c.max_neighbors, int(c.use_latlong), f"{c.error_rate:.6f}", c.steps])
    plots.save_ablation(cells, out / "ablation.png")
    write_run_config(out, "ablate", {**opts, "train_data": str(ns.train_data), "test_data": str(ns.test_data)})
    return 0


def cmd_attention(ns) -> int:
    from nbrs import plots
    from nbrs.evaluation import attention_export
    from nbrs.geodata import load_neighborhoods

    opts = resolve_options(ns, {"index": (int, 0)}, ns.config)
    model = _load_model(ns.checkpoint)
    data = load_neighborhoods(ns.data)
    if not 0 <= opts["index"] < len(data):
        raise DataError(f"--index {opts['index']} out of range for {len(data)} neighborhoods")
    exp = attention_export(model, data[opts["index"]])
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "matrix": [[float(x) for x in row] for row in exp.matrix],
        "row_labels": exp.row_labels,
        "col_labels": exp.col_labels,
    }
    (out / "attention.json").write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    plots.save_attention_heatmap(exp, out / "attention.png")
    write_run_config(out, "attention", {**opts, "checkpoint": str(ns.checkpoint), "data": str(ns.data)})
    return 0


# -- cognate ---------------------------------------------------------------


COGNATE_OPTIONS: dict[str, tuple[type, object]] = {
    "layers": (int, 2),
    "heads": (int, 4),
    "emb_size": (int, 64),
    "hidden": (int, 128),
    "dropout": (float, 0.1),
    "label_smoothing": (float, 0.1),
    "name_len": (int, 4),
    "pron_len": (int, 16),
    "nneigh": (int, 16),
    "steps": (int, 30_000),
    "batch_size": (int, 32),
    "seed": (int, 0),
    "eval_every": (int, 1000),
    "warmup_steps": (int, 2000),
    "lr_base": (float, 1.0),
    "beam": (int, 8),
}


def cmd_cognate(ns) -> int:
    from nbrs.cognate import (
        CognateModelConfig,
        augment_drop,
        augment_ngram,
        load_table,
        predict_reflexes,
        score,
        train_cognate,
        write_table,
    )
    from nbrs.training import TrainConfig

    opts = resolve_options(ns, COGNATE_OPTIONS, ns.config)
    out = Path(ns.out)
    if ns.cognate_command == "train":
        langs, sets = load_table(ns.data)
        cog_cfg = CognateModelConfig(
            layers=opts["layers"], heads=opts["heads"], emb_size=opts["emb_size"], hidden=opts["hidden"],
            dropout=opts["dropout"], label_smoothing=opts["label_smoothing"], name_len=opts["name_len"],
            pron_len=opts["pron_len"], nneigh=opts["nneigh"],
        )
        tcfg = TrainConfig(
            steps=opts["steps"], batch_size=opts["batch_size"], seed=opts["seed"],
            eval_every=opts["eval_every"], warmup_steps=opts["warmup_steps"], lr_base=opts["lr_base"],
        )
        result = train_cognate(sets, cog_cfg, tcfg, out_dir=out)
        write_run_config(out, "cognate train", {**opts, "data": str(ns.data)})
        return 0 if result.status == "ok" else 3
    if ns.cognate_command == "predict":
        from nbrs.training import load_model

        model, _ = load_model(ns.checkpoint)
        langs, sets = load_table(ns.data)
        preds = predict_reflexes(model, [cs for cs in sets if cs.target_lang], beam=opts["beam"])
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "predictions.tsv", langs, sets, predictions=preds)
        write_run_config(out, "cognate predict", {**opts, "data": str(ns.data), "checkpoint": str(ns.checkpoint)})
        return 0
    if ns.cognate_command == "score":
        _, pred_sets = load_table(ns.preds)
        _, gold_sets = load_table(ns.refs)
        gold = {cs.set_id: cs for cs in gold_sets}
        targets: dict[str, str] = {}
        if ns.test:
            _, test_sets = load_table(ns.test)
            targets = {cs.set_id: cs.target_lang for cs in test_sets if cs.target_lang}
        else:
            targets = {cs.set_id: cs.target_lang for cs in gold_sets if cs.target_lang}
        if not targets:
            raise DataError("no target cells: pass --test with the ?-marked table or mark targets in --refs")
        preds, refs = [], []
        for cs in pred_sets:
            lang = targets.get(cs.set_id)
            if lang is None:
                continue
            g = gold.get(cs.set_id)
            if g is None or lang not in g.forms:
                continue
            preds.append(cs.forms.get(lang, []))
            refs.append(g.forms[lang])
        s = score(preds, refs)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"ned": s.ned, "bcubed_f": s.bcubed_f, "bleu": s.bleu, "scored": s.scored, "skipped": s.skipped}
        (out / "scores.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(json.dumps(payload, sort_keys=True))
        write_run_config(out, "cognate score", {**opts, "preds": str(ns.preds), "refs": str(ns.refs)})
        return 0
    if ns.cognate_command == "augment":
        langs, sets = load_table(ns.data)
        extra = []
        if ns.drop_copies:
            extra.extend(augment_drop(sets, ns.drop_copies, seed=opts["seed"]))
        if ns.ngram_count:
            extra.extend(augment_ngram(sets, langs, ns.ngram_count, order=ns.ngram_order, seed=opts["seed"]))
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "augmented.tsv", langs, list(sets) + extra)
        write_run_config(out, "cognate augment", {**opts, "data": str(ns.data)})
        log.info("wrote %d original + %d augmented sets", len(sets), len(extra))
        return 0
    raise UsageError(f"unknown cognate subcommand: {ns.cognate_command}")


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="nbrs", description="Neighborhood-biased pronunciation modeling.")
    parser.add_argument("--verbose", action="store_true", default=None)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--config", default=None, help="JSON config file merged below flags")
        return p

    p = add("build-data", cmd_build_data, help="ingest features and build split neighborhood files")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_options(p, {
        "radius_km": (float, None), "max_neighbors": (int, None), "max_plain": (int, None),
        "test_frac": (float, None), "seed": (int, None), "workers": (int, None),
        "region_cell_deg": (float, None),
    })
    p.add_argument("--split", choices=("shuffled", "unshuffled", "none"), default=None)

    p = add("train", cmd_train, help="train the transformer on neighborhood data")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--golden", default=None)
    _add_options(p, {**MODEL_OPTIONS, **TRAIN_OPTIONS})

    p = add("decode", cmd_decode, help="beam-decode pronunciations to TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {"beam": (int, None)})

    p = add("detect", cmd_detect, help="flag likely database errors with neighbor evidence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {"beam": (int, None), "min_gap": (float, None)})

    p = add("baseline", cmd_baseline, help="train and run the non-neural substitution baseline")
    p.add_argument("--train-pairs", dest="train_pairs", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {"max_key_len": (int, None)})

    p = add("eval", cmd_eval, help="compare two decode files with CIs and paired tests")
    p.add_argument("--preds-a", dest="preds_a", required=True)
    p.add_argument("--preds-b", dest="preds_b", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {"trials": (int, None), "perms": (int, None), "seed": (int, None)})

    p = add("manipulate", cmd_manipulate, help="force neighbor readings and measure the decode shift")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--specs", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {"beam": (int, None), "max_targets": (int, None)})

    p = add("ablate", cmd_ablate, help="neighbor-count x lat-long ablation grid")
    p.add_argument("--train-data", dest="train_data", required=True)
    p.add_argument("--test-data", dest="test_data", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {**MODEL_OPTIONS, **TRAIN_OPTIONS})
    p.add_argument("--neighbor-counts", dest="neighbor_counts", default=None)
    p.add_argument("--latlong", default=None)

    p = add("attention", cmd_attention, help="export averaged decoder cross-attention")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, {"index": (int, None)})

    p = add("cognate", cmd_cognate, help="cognate reflex prediction adapter")
    cog = p.add_subparsers(dest="cognate_command", metavar="ACTION")
    for action in ("train", "predict", "score", "augment"):
        cp = cog.add_parser(action)
        cp.add_argument("--config", default=None)
        cp.add_argument("--out", required=True)
        if action in ("train", "predict", "augment"):
            cp.add_argument("--data", required=True)
        if action == "predict":
            cp.add_argument("--checkpoint", required=True)
        if action == "score":
            cp.add_argument("--preds", required=True)
            cp.add_argument("--refs", required=True)
            cp.add_argument("--test", default=None, help="the ?-marked table naming the predicted cells")
        if action == "augment":
            cp.add_argument("--drop-copies", dest="drop_copies", type=int, default=0)
            cp.add_argument("--ngram-count", dest="ngram_count", type=int, default=0)
            cp.add_argument("--ngram-order", dest="ngram_order", type=int, default=3)
        _add_options(cp, COGNATE_OPTIONS)
        cp.set_defaults(fn=cmd_cognate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not getattr(ns, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        if ns.command == "cognate" and not getattr(ns, "cognate_command", None):
            print("usage: nbrs cognate {train,predict,score,augment} ...", file=sys.stderr)
            return 1
        return ns.fn(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
