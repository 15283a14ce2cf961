import numpy as np
import pytest

from nbrs.errors import DataError
from nbrs.geodata import FeatureRecord, Neighbor, Neighborhood
from nbrs.model import ModelConfig
from nbrs.training import (
    TrainConfig,
    _metrics_lines,
    build_vocabs,
    coverage_stats,
    exact_match,
    load_model,
    train,
)


def micro_config(**kw):
    base = dict(
        layers=1, heads=2, emb_size=16, hidden=32, dropout=0.1, label_smoothing=0.2,
        latlong_grid_n=8, input_vocab=120, output_vocab=120, name_len=5, pron_len=9,
        nneigh=4, use_neighbors=True, use_latlong=False,
    )
    base.update(kw)
    return ModelConfig(**base)


def toy_dataset(n=10):
    suffixes = [("町", "まち"), ("駅", "えき"), ("山", "やま"), ("川", "かわ"), ("寺", "てら")]
    spells = [("反町", "たんまち"), ("上野", "うえの")]
    out = []
    for i in range(n):
        sp, rd = spells[i % 2]
        sfx, sfr = suffixes[i % 5]
        target = FeatureRecord(id=f"x{i}", name=sp + sfx, lat=35.0, lon=139.0, pron=rd + sfr)
        neigh = [Neighbor(name=sp, pron=rd, distance_km=0.5, interesting=True)]
        out.append(Neighborhood(target=target, neighbors=neigh))
    return out


def test_overfit_single_example():
    data = toy_dataset(1)
    cfg = micro_config(dropout=0.0, neighbor_dropout=0.0, label_smoothing=0.0)
    tcfg = TrainConfig(steps=500, batch_size=4, seed=0, eval_every=500, warmup_steps=100)
    res = train(cfg, data, tcfg)
    assert res.status == "ok"
    assert exact_match(res.model, data, beam=1) == 0.0


def test_metrics_log_reproducible_across_runs():
    data = toy_dataset(12)
    cfg = micro_config()
    tcfg = TrainConfig(steps=40, batch_size=8, seed=5, eval_every=10, warmup_steps=20)
    a = train(cfg, data, tcfg, golden=data[:4])
    b = train(cfg, data, tcfg, golden=data[:4])
    assert _metrics_lines(a.metrics) == _metrics_lines(b.metrics)
    for name, t in a.model.params.items():
        assert np.array_equal(t.data, b.model.params[name].data)


def test_neighbor_dropout_one_matches_without_neighbors_loss_curve():
    data = toy_dataset(12)
    tcfg = TrainConfig(steps=30, batch_size=6, seed=3, eval_every=5, warmup_steps=10)
    with_cfg = micro_config(neighbor_dropout=1.0)
    without_cfg = micro_config(use_neighbors=False)
    a = train(with_cfg, data, tcfg)
    b = train(without_cfg, data, tcfg)
    for (sa, la, _), (sb, lb, _) in zip(a.metrics, b.metrics):
        assert sa == sb
        assert la == pytest.approx(lb, rel=1e-6)


def test_golden_eval_is_dropout_free_and_repeatable():
    data = toy_dataset(10)
    cfg = micro_config(dropout=0.3)
    tcfg = TrainConfig(steps=20, batch_size=6, seed=1, eval_every=20, warmup_steps=10)
    res = train(cfg, data, tcfg)
    e1 = exact_match(res.model, data, beam=1)
    e2 = exact_match(res.model, data, beam=1)
    assert e1 == e2


def test_exact_match_with_callable_oracle_decoder():
    data = toy_dataset(8)
    assert exact_match(lambda nb: nb.target.pron, data) == 0.0


def test_exact_match_counts_mismatches():
    data = toy_dataset(4)
    answers = {nb.target.id: nb.target.pron for nb in data}
    wrong_id = data[2].target.id

    def decoder(nb):
        return "xxx" if nb.target.id == wrong_id else answers[nb.target.id]

    assert exact_match(decoder, data) == 0.25


def test_exact_match_requires_references():
    nb = Neighborhood(target=FeatureRecord(id="q", name="上野", lat=35, lon=139, pron=None))
    with pytest.raises(DataError):
        exact_match(lambda x: "", [nb])


def test_train_rejects_empty_and_drops_unpronounced():
    cfg = micro_config()
    tcfg = TrainConfig(steps=5, batch_size=2, seed=0, eval_every=5, warmup_steps=2)
    with pytest.raises(DataError):
        train(cfg, [], tcfg)
    data = toy_dataset(6)
    data.append(Neighborhood(target=FeatureRecord(id="un", name="上野", lat=35, lon=139, pron=None)))
    res = train(cfg, data, tcfg)
    assert res.status == "ok"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_last_good_checkpoint(tmp_path):
    data = toy_dataset(8)
    cfg = micro_config(dropout=0.0)
    tcfg = TrainConfig(steps=200, batch_size=4, seed=0, eval_every=10, warmup_steps=1, lr_base=1e30)
    res = train(cfg, data, tcfg, out_dir=tmp_path)
    assert res.status == "aborted"
    assert (tmp_path / "model.ckpt").exists()
    model, config = load_model(tmp_path / "model.ckpt")
    assert config["status"] == "aborted"
    assert all(np.isfinite(t.data).all() for _, t in model.params.items())


def test_checkpoint_round_trip_through_training(tmp_path):
    data = toy_dataset(10)
    cfg = micro_config()
    tcfg = TrainConfig(steps=15, batch_size=6, seed=2, eval_every=5, warmup_steps=5)
    res = train(cfg, data, tcfg, out_dir=tmp_path, golden=data[:3])
    assert (tmp_path / "metrics.csv").exists()
    assert (tmp_path / "vocab_in.txt").exists()
    model, config = load_model(res.checkpoint_path)
    assert config["step"] == 15
    assert exact_match(model, data[:3], beam=1) == exact_match(res.model, data[:3], beam=1)

    run2 = tmp_path / "again"
    res2 = train(cfg, data, tcfg, out_dir=run2, golden=data[:3])
    assert (run2 / "metrics.csv").read_bytes() == (tmp_path / "metrics.csv").read_bytes()
    assert (run2 / "model.ckpt").read_bytes() == res.checkpoint_path.read_bytes()


def test_build_vocabs_and_coverage():
    data = toy_dataset(6)
    cfg = micro_config()
    vin, vout = build_vocabs(cfg, data)
    assert "反" in vin.index and "ま" in vout.index
    stats = coverage_stats(vin, [list(nb.target.name) for nb in data])
    assert stats["unk"] == 0 and stats["symbols"] > 0
    stats2 = coverage_stats(vin, [["never-seen-symbol"]])
    assert stats2["unk"] == 1


def test_train_config_validation():
    with pytest.raises(DataError):
        TrainConfig(steps=0)
