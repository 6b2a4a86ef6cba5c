import json

import numpy as np
import pytest

from emap.experiments import (
    ConfigError,
    ExperimentConfig,
    RunFailure,
    TrialRecord,
    discriminator_rates,
    read_trials_csv,
    run_bottleneck_comparison,
    run_discriminator_test,
    run_experiment,
    run_explainer_eval,
    run_gh_validation,
    summarize,
    table_config,
    write_outputs,
)
from emap.experiments.cli import main
from emap.geometry import Seed, generate_synthetic, save_csv
from emap.models import LogisticModel


def small_bottleneck(**kw):
    doc = dict(kind="bottleneck", dataset={"shape": "circle", "n_points": 40, "data_noise": 0.05},
               radii=[0.05], n_trials=3, homology_dims=[0, 1], seed=7)
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def small_gh(**kw):
    doc = dict(kind="gh", dataset={"random_subspace": {"n_points": 5, "ambient_dim": 3}},
               radii=[0.5], n_trials=4, seed=3)
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def small_explain(**kw):
    doc = dict(kind="explain", dataset={"testbed": {"n_features": 10, "n_true": 3, "n_samples": 200}},
               radii=[1e-3], n_trials=2, k=60, p=1, k_train=30, epochs=200, top_k=[2, 3],
               infidelity_draws=50, seed=1)
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


def small_discriminate(**kw):
    doc = dict(kind="discriminate", dataset={"shape": "two_concentric_circles", "n_points": 200,
                                             "data_noise": 0.01},
               radii=[0.05], n_trials=2, k_train=30, discriminator_epochs=200, seed=2)
    doc.update(kw)
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------- config


@pytest.mark.parametrize("bad, match", [
    ({"kind": "nope"}, "kind"),
    ({"n_trials": 0}, "n_trials"),
    ({"radii": [-0.1]}, "radius"),
    ({"schemes": ["emap"]}, "not allowed"),
    ({"schemes": ["gaussian", "gaussian"]}, "duplicate"),
    ({"bogus": 1}, "unknown config keys"),
    ({"dataset": {"csv": "/no/such/file.csv"}}, "does not exist"),
    ({"dataset": {"shape": "circle", "n_points": 10, "params": {"width": 2}}}, "parameters"),
    ({"homology_dims": [2]}, "homology_dims"),
])
def test_config_rejects(bad, match):
    with pytest.raises(ConfigError, match=match):
        small_bottleneck(**bad)


def test_gh_config_needs_two_points():
    with pytest.raises(ConfigError, match="n ≥ 2"):
        small_gh(dataset={"random_subspace": {"n_points": 1}})
    with pytest.raises(ConfigError):
        small_gh(radii=[0.0])


def test_config_file_round_trip(tmp_path):
    cfg = small_bottleneck()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_relative_paths_resolve(tmp_path):
    save_csv(generate_synthetic("circle", None, 30, 0.0, 0), tmp_path / "pts.csv")
    (tmp_path / "c.json").write_text(json.dumps({"kind": "bottleneck", "dataset": {"csv": "pts.csv"}}))
    cfg = ExperimentConfig.load(tmp_path / "c.json")
    assert cfg.dataset["csv"] == str(tmp_path / "pts.csv")


def test_table_config():
    cfg = table_config("spiral")
    assert cfg.dataset["n_points"] == 1000 and cfg.radii == (0.05,) and cfg.n_trials == 100
    assert table_config("line").homology_dims == (0,)


def test_trial_record_rejects_nan():
    with pytest.raises(ValueError):
        TrialRecord(0, "0:0", "gaussian", 0.1, {"H1": float("nan")})


# ---------------------------------------------------------------- bottleneck


def test_zero_radius_gives_zero():
    res = run_bottleneck_comparison(small_bottleneck(radii=[0.0], n_trials=1, schemes=["gaussian"]))
    assert len(res.records) == 1
    assert all(v == 0.0 for v in res.records[0].metrics.values())


def test_bottleneck_rows_paired():
    res = run_bottleneck_comparison(small_bottleneck())
    assert len(res.records) == 3 * 3
    by_trial = {}
    for rec in res.records:
        by_trial.setdefault(rec.trial, set()).add(rec.noise_seed)
        assert {"H0", "H1", "H0_raw", "H1_raw"} <= set(rec.metrics)
    # one shared noise stream per trial across schemes
    assert all(len(s) == 1 for s in by_trial.values())
    assert any(row[2] == "H1" and row[0] == "orthogonal_vs_projection" for row in res.summary)


def test_budget_skip_is_recorded():
    res = run_bottleneck_comparison(small_bottleneck(simplex_budget=1000, n_trials=2))
    assert len(res.records) == 0
    assert len(res.skipped) == 2


def test_summary_recomputed_from_csv(tmp_path):
    res = run_bottleneck_comparison(small_bottleneck())
    write_outputs(res, tmp_path)
    back = read_trials_csv(tmp_path / "trials.csv")
    assert back == res.records
    rows = summarize(back, res.config.schemes)
    assert rows == res.summary[:len(rows)]


def test_determinism_and_workers(tmp_path):
    cfg = small_bottleneck()
    write_outputs(run_experiment(cfg), tmp_path / "a")
    write_outputs(run_experiment(cfg), tmp_path / "b")
    write_outputs(run_experiment(cfg, workers=2), tmp_path / "c")
    for name in ("trials.csv", "summary.csv", "meta.json"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    other = run_experiment(cfg.replace(seed=8))
    assert other.records != run_experiment(cfg).records


# ---------------------------------------------------------------- gh


def test_gh_validation():
    res = run_gh_validation(small_gh(radii=[0.5, 2.0]))
    inside = [r for r in res.records if r.radius == 0.5]
    outside = [r for r in res.records if r.radius == 2.0]
    assert [r.status for r in inside] == ["pass"] * 4
    assert [r.status for r in outside] == ["out_of_regime"] * 4
    for r in inside:
        m = r.metrics
        assert m["dj_orthogonal"] < m["r"] <= m["dj_witness"] + 1e-12
        assert m["dj_orthogonal"] == m["dj_orthogonal_fast"]


# ---------------------------------------------------------------- explain


def test_explainer_eval():
    res = run_explainer_eval(small_explain())
    assert {r.scheme for r in res.records} == {"emap", "zero_mask"}
    for r in res.records:
        assert 0 <= r.metrics["precision@2"] <= 1
        assert {"log_odds", "infidelity", "recall@3"} <= set(r.metrics)
    assert any("below paper default 1000" in f for f in res.flags)


def test_explainer_zero_inputs(tmp_path):
    res = run_explainer_eval(small_explain(n_trials=0))
    assert res.records == [] and res.summary == []
    write_outputs(res, tmp_path)
    assert (tmp_path / "trials.csv").read_text().startswith("trial,seed")


def test_explainer_dimension_mismatch(tmp_path):
    model = LogisticModel(np.zeros((3, 2)), np.zeros(2))
    (tmp_path / "m.json").write_text(model.to_json())
    data = generate_synthetic("two_concentric_circles", None, 30, 0.0, 0, ambient_dim=4)
    save_csv(data, tmp_path / "d.csv")
    cfg = small_explain(dataset={"csv": str(tmp_path / "d.csv")}, model=str(tmp_path / "m.json"))
    with pytest.raises(ConfigError, match="features"):
        run_explainer_eval(cfg)


# ---------------------------------------------------------------- discriminator


def test_discriminator_identical_pools():
    x = Seed(0).rng().normal(size=(200, 3))
    rates = discriminator_rates(x, x.copy(), Seed(1).rng(), epochs=300)
    assert abs(rates["accuracy"] - 50) <= 10


def test_discriminator_large_shift():
    rng = Seed(2).rng()
    x = rng.normal(size=(200, 3))
    rates = discriminator_rates(x, x + 10.0, Seed(3).rng(), epochs=300)
    assert rates["TP"] >= 95 and rates["TN"] >= 95


def test_discriminator_pool_too_small():
    with pytest.raises(RunFailure, match="40"):
        discriminator_rates(np.zeros((30, 2)), np.ones((30, 2)), Seed(0).rng())


def test_discriminate_run(tmp_path):
    res = run_discriminator_test(small_discriminate())
    assert {r.scheme for r in res.records} == {"gaussian", "emap"}
    for r in res.records:
        assert 0 <= r.metrics["TP"] <= 100 and 0 <= r.metrics["TN"] <= 100
    write_outputs(res, tmp_path)
    assert "logistic" in json.loads((tmp_path / "meta.json").read_text())["discriminator"]


# ---------------------------------------------------------------- CLI


def test_cli_synth_tda_gh(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "--shape", "circle", "--n", "30", "--noise", "0.01", "--out", str(a)]) == 0
    assert main(["synth", "--shape", "circle", "--n", "30", "--seed", "1", "--out", str(b)]) == 0
    assert main(["tda", "--in", str(a), "--out", str(tmp_path / "d.json")]) == 0
    assert any(row["dim"] == 1 for row in json.loads((tmp_path / "d.json").read_text()))
    capsys.readouterr()
    assert main(["tda", "--in", str(a), "--against", str(b)]) == 0
    assert set(json.loads(capsys.readouterr().out)) == {"H0", "H1"}
    c = tmp_path / "c.csv"
    assert main(["synth", "--shape", "line", "--n", "5", "--out", str(c)]) == 0
    assert main(["gh", "--x", str(c), "--y", str(c)]) == 0
    assert json.loads(capsys.readouterr().out)["distance"] == 0.0


def test_cli_perturb_and_explain(tmp_path, capsys):
    data = generate_synthetic("two_concentric_circles", None, 60, 0.01, 0)
    save_csv(data, tmp_path / "d.csv")
    model = LogisticModel(np.array([[1.0, -1.0], [0.5, 0.0], [0.0, 0.2]]), np.zeros(2))
    (tmp_path / "m.json").write_text(model.to_json())
    assert main(["perturb", "--in", str(tmp_path / "d.csv"), "--scheme", "orthogonal", "--radius", "0.1",
                 "--out", str(tmp_path / "p.csv")]) == 0
    assert main(["perturb", "--in", str(tmp_path / "d.csv"), "--scheme", "emap", "--radius", "0.1",
                 "--k", "20", "--out", str(tmp_path / "e.csv")]) == 0
    assert (tmp_path / "e.json").is_file()
    capsys.readouterr()
    assert main(["explain", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "d.csv"),
                 "--k", "100", "--radius", "0.05"]) == 0
    assert len(json.loads(capsys.readouterr().out)["weights"]) == 3


def test_cli_experiment_and_exit_codes(tmp_path):
    cfg = small_gh(n_trials=2)
    doc = cfg.to_dict()
    (tmp_path / "gh.json").write_text(json.dumps(doc))
    out = tmp_path / "out"
    assert main(["gh", "--config", str(tmp_path / "gh.json"), "--out", str(out)]) == 0
    assert (out / "summary.csv").is_file()
    # configuration errors
    assert main(["compare", "--config", str(tmp_path / "gh.json")]) == 1
    assert main(["compare"]) == 1
    assert main(["synth", "--shape", "blob", "--n", "3", "--out", "x.csv"]) == 1
    assert main(["tda", "--in", str(tmp_path / "missing.csv")]) == 1
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["eval", "--config", str(tmp_path / "bad.json")]) == 1
    # runtime failure: a model process that dies on the first request
    data = generate_synthetic("two_concentric_circles", None, 30, 0.0, 0)
    save_csv(data, tmp_path / "d.csv")
    bad = dict(kind="explain", dataset={"csv": str(tmp_path / "d.csv")}, model_command="exit 3",
               n_trials=1, k=20, p=1, k_train=10, infidelity_draws=10)
    (tmp_path / "ex.json").write_text(json.dumps(bad))
    assert main(["eval", "--config", str(tmp_path / "ex.json"), "--out", str(tmp_path / "o2")]) == 2
