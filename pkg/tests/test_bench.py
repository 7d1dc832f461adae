import json
import os

import numpy as np
import pytest

from ganbench import cli, report as R, runner, zoo
from ganbench import metrics as M
from ganbench.config import ConfigError, load_config, parse_config_text

TINY = """
seed = 3
variants = {variants}
dataset.mix.kind = mixture
dataset.mix.n = 120
dataset.mix.means = -2; 2
dataset.mix.stds = 0.3, 0.3
dataset.mix.weights = 0.5, 0.5
dataset.mix.labeled = true
train.epochs = 3
train.latent_dim = 4
train.batch_size = 16
metrics.sample_size = 80
arch.generator = 8:leaky_relu:0.2
arch.discriminator = 8:leaky_relu:0.2
arch.encoder = 8:leaky_relu:0.2
arch.aux = 8:leaky_relu:0.2
"""
ALL = ", ".join(zoo.SUPPORTED_VARIANTS)


def tiny(variants="VANILLA, WGAN", extra=""):
    return parse_config_text(TINY.format(variants=variants) + extra)


# --- config -------------------------------------------------------------------

def test_config_defaults_follow_variant_table():
    cfg = parse_config_text("variants = VANILLA, WGAN\ndataset.a.kind = kdd99_synth\n")
    w = cfg.train_config(zoo.GanVariant.WGAN, seed=1)
    assert (w.optimizer_d, w.lr_d, w.critic_steps, w.clip) == ("rmsprop", 5e-5, 5, 0.01)
    v = cfg.train_config(zoo.GanVariant.VANILLA, seed=1)
    assert (v.epochs, v.batch_size, v.latent_dim, v.lr_d, v.beta1) == (5000, 64, 100, 2e-4, 0.5)


def test_config_overrides_global_and_per_variant():
    cfg = tiny(extra="train.WGAN.critic_steps = 2\n")
    assert cfg.train_config(zoo.GanVariant.WGAN, 0).critic_steps == 2
    assert cfg.train_config(zoo.GanVariant.WGAN, 0).epochs == 3
    assert cfg.train_config(zoo.GanVariant.VANILLA, 0).critic_steps == 1


@pytest.mark.parametrize("text", [
    "variants = VANILLA\ndataset.a.kind = kdd99_synth\nbogus = 1\n",
    "variants = VANILLA\nvariants = WGAN\ndataset.a.kind = kdd99_synth\n",
    "dataset.a.kind = kdd99_synth\n",
    "variants = VANILLA\n",
    "variants = VANILLA\ndataset.a.kind = parquet\n",
    "variants = VANILLA\ndataset.a.kind = kdd99_synth\ntrain.epochs = many\n",
    "variants = VANILLA\ndataset.a.kind = kdd99_synth\nno equals sign\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_unknown_variant_lists_supported():
    with pytest.raises(ConfigError) as err:
        parse_config_text("variants = VANILLA, DCGAN\ndataset.a.kind = kdd99_synth\n")
    assert "DCGAN" in str(err.value) and "WGAN_GP" in str(err.value)


def test_bundled_demo_config_parses():
    here = os.path.dirname(__file__)
    cfg = load_config(os.path.join(here, "..", "configs", "demo.cfg"))
    assert [d.id for d in cfg.datasets] == ["mix1d", "kdd"]
    assert len(cfg.source_hash) == 64


# --- report -------------------------------------------------------------------

def _sample_report():
    rows = [R.ReportRow("a", "(10, 2)", "VANILLA", mmd=0.1 / 3, emd=1e-17, kl=2.5, jsd=0.1, noise_sha="ab"),
            R.ReportRow("a", "(10, 2)", "WGAN", "failed", error="TrainingError: boom,\nwith comma")]
    return R.MetricReport(rows, {"seed": "42", "config_sha256": "x" * 64})


def test_report_round_trip(tmp_path):
    rep = _sample_report()
    R.emit_report(rep, tmp_path)
    back = R.read_report(tmp_path / "report.csv")
    assert back.provenance == rep.provenance
    assert back.rows[0] == rep.rows[0]
    assert back.rows[1].error == "TrainingError: boom, with comma"
    assert "seed = 42" in (tmp_path / "report.txt").read_text()


def test_empty_report_is_header_only(tmp_path):
    R.emit_report(R.MetricReport([], {"seed": "1"}), tmp_path)
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines == ["# seed: 1", ",".join(R.REPORT_COLUMNS)]
    assert R.read_report(tmp_path / "report.csv").rows == []


def test_stable_payload_drops_wall_clock_only():
    text = "# seed: 1\n# wall_clock_seconds: 3.2\ndataset\n"
    assert R.stable_payload(text) == "# seed: 1\ndataset\n"


def test_plot_series_validation():
    with pytest.raises(ValueError):
        R.PlotSeries("kde-curve", "k.csv", "x", np.array([0.0, 0.0]), {"real": np.ones(2)}).validate()
    with pytest.raises(ValueError):
        R.PlotSeries("qq-points", "q.csv", "x", np.array([np.nan]), {"g": np.ones(1)}).validate()


def test_qq_file_identity(tmp_path, rng):
    x = rng.normal(size=300)
    pts = M.qq_points(x, x.copy(), 50)
    s = R.PlotSeries("qq-points", "qq_a_VANILLA.csv", "real", pts[:, 0], {"generated": pts[:, 1]},
                     [("reference", -1.0, -1.0), ("reference", 1.0, 1.0)])
    R.emit_plot_data([s], tmp_path)
    cols = R.read_plot_data(tmp_path / "qq_a_VANILLA.csv")
    assert cols["kind"].count("reference") == 2
    assert all(abs(a - b) <= 1e-12 for a, b in zip(cols["real"], cols["generated"]))


# --- runner -------------------------------------------------------------------

def test_every_variant_yields_one_row():
    result = runner.run_experiment(tiny(ALL))
    assert [r.variant for r in result.report.rows] == list(zoo.SUPPORTED_VARIANTS)
    assert all(r.status == "ok" for r in result.report.rows), [r.error for r in result.report.failed]
    assert all(np.isfinite([r.mmd, r.emd, r.kl, r.jsd]).all() for r in result.report.rows)
    assert len({r.noise_sha for r in result.report.rows}) == 1
    assert result.exit_code == 0


def test_five_variant_grid_matches_table_layout():
    result = runner.run_experiment(tiny("VANILLA, WGAN, WGAN_GP, LSGAN, BIGAN"))
    rows = result.report.rows
    assert len(rows) == 5
    assert {"variant", "mmd", "emd"} <= set(R.REPORT_COLUMNS)
    assert all(r.dataset == "mix" and r.shape == "120x1" for r in rows)


def test_run_is_deterministic_and_seed_sensitive(tmp_path):
    texts = []
    for i in range(2):
        runner.write_outputs(runner.run_experiment(tiny()), tmp_path / str(i))
        texts.append(R.stable_payload((tmp_path / str(i) / "report.csv").read_text()))
    assert texts[0] == texts[1]
    other = tiny()
    other.seed = 4
    rep = runner.run_experiment(other).report
    assert rep.provenance["seed"] == "4"
    assert rep.rows[0].mmd != R.parse_report(texts[0]).rows[0].mmd
    assert [r.variant for r in rep.rows] == ["VANILLA", "WGAN"]


def test_cell_seeds_are_disjoint():
    seeds = {runner.cell_seed(7, d, v) for d in ("a", "b") for v in zoo.SUPPORTED_VARIANTS}
    assert len(seeds) == 2 * len(zoo.SUPPORTED_VARIANTS)
    assert runner.cell_seed(7, "a", "WGAN") == runner.cell_seed(7, "a", "WGAN")


def test_output_files_and_kde_grid(tmp_path):
    cfg = tiny(extra="dataset.kdd.kind = kdd99_synth\ndataset.kdd.n = 150\n")
    result = runner.run_experiment(cfg)
    runner.write_outputs(result, tmp_path)
    names = set(os.listdir(tmp_path))
    for f in ("report.csv", "report.txt", "kde_mix_x0.csv", "kde_kdd_count.csv", "qq_mix_VANILLA.csv",
              "loss_kdd_WGAN.csv", "checkpoint_mix_WGAN.bin"):
        assert f in names
    kde = R.read_plot_data(tmp_path / "kde_mix_x0.csv")
    assert set(kde) == {"x", "real", "generated-VANILLA", "generated-WGAN"}
    x = np.array(kde["x"])
    assert np.all(np.diff(x) > 0)
    pooled = np.concatenate(_kde_sources(cfg))
    h = float(M.silverman_bandwidth(pooled)[0])
    assert x[0] == pytest.approx(pooled.min() - 3 * h) and x[-1] == pytest.approx(pooled.max() + 3 * h)
    assert "count" in R.read_report(tmp_path / "report.csv").provenance["kdd99_columns.kdd"]
    bundle, _ = zoo.load_checkpoint(tmp_path / "checkpoint_mix_WGAN.bin")
    assert bundle.variant == zoo.GanVariant.WGAN


def _kde_sources(cfg):
    """Rerun the first dataset's cells (deterministic) to get the samples behind its KDE file."""
    prep = runner.prepare_dataset(cfg.datasets[0], cfg)
    out = [prep.real_score[:, 0]]
    for v in cfg.variants:
        out.append(runner.run_cell(cfg, prep, v).generated[:, 0])
    return out


def test_unreadable_dataset_fails_its_rows_only(tmp_path):
    cfg = tiny(extra=f"dataset.gone.kind = csv\ndataset.gone.path = {tmp_path / 'missing.csv'}\n")
    result = runner.run_experiment(cfg)
    rows = {(r.dataset, r.variant): r for r in result.report.rows}
    assert len(rows) == 4
    assert rows[("gone", "VANILLA")].status == "failed" and rows[("gone", "WGAN")].error
    assert rows[("mix", "VANILLA")].status == "ok" and rows[("mix", "WGAN")].mmd is not None
    assert result.exit_code == 2


def test_labeled_variant_on_unlabeled_data_is_a_row_failure():
    text = TINY.format(variants="CGAN, VANILLA").replace("dataset.mix.labeled = true\n", "")
    rep = runner.run_experiment(parse_config_text(text)).report
    assert [r.status for r in rep.rows] == ["failed", "ok"]
    assert "labeled" in rep.rows[0].error


# --- CLI ----------------------------------------------------------------------

def _cfg_file(tmp_path, text):
    p = tmp_path / "exp.cfg"
    p.write_text(text)
    return str(p)


def test_cli_unknown_variant_exits_1(tmp_path, capsys):
    path = _cfg_file(tmp_path, TINY.format(variants="VANILLA, DCGAN"))
    assert cli.main(["run", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()
    assert "DCGAN" in capsys.readouterr().err


def test_cli_partial_failure_exits_2(tmp_path):
    text = TINY.format(variants="VANILLA") + f"dataset.gone.kind = csv\ndataset.gone.path = {tmp_path}/nope.csv\n"
    out = tmp_path / "o"
    assert cli.main(["run", "--config", _cfg_file(tmp_path, text), "--out", str(out), "--workers", "1"]) == 2
    rows = R.read_report(out / "report.csv").rows
    assert [(r.dataset, r.status) for r in rows] == [("mix", "ok"), ("gone", "failed")]


def test_cli_run_success_and_seed_override(tmp_path):
    out = tmp_path / "o"
    path = _cfg_file(tmp_path, TINY.format(variants="LSGAN"))
    assert cli.main(["run", "--config", path, "--out", str(out), "--seed", "11"]) == 0
    assert R.read_report(out / "report.csv").provenance["seed"] == "11"


def test_cli_usage_errors_exit_1(tmp_path):
    assert cli.main([]) == 1
    assert cli.main(["run"]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1  # unreadable config


def test_cli_metrics_verb(tmp_path, capsys, rng):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    np.savetxt(a, rng.normal(size=(60, 2)), delimiter=",")
    np.savetxt(b, rng.normal(1, 1, size=(60, 2)), delimiter=",")
    assert cli.main(["metrics", "--real", str(a), "--fake", str(b), "--bandwidth", "1.0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["mmd"] == pytest.approx(M.mmd_squared(np.loadtxt(a, delimiter=","),
                                                     np.loadtxt(b, delimiter=","), 1.0))
    assert cli.main(["metrics", "--real", str(a), "--fake", str(tmp_path / "none.csv")]) == 2
    assert cli.main(["metrics", "--real", str(a), "--fake", str(b), "--kernel", "laplace"]) == 1


def test_cli_inspect_verb(tmp_path, capsys):
    b = zoo.build_model("VANILLA", 2, latent_dim=3, arch=zoo.DESK_ARCHITECTURE)
    zoo.save_checkpoint(tmp_path / "c.bin", b, zoo.TrainConfig(latent_dim=3))
    assert cli.main(["inspect", "--checkpoint", str(tmp_path / "c.bin")]) == 0
    header = json.loads(capsys.readouterr().out)
    assert header["n_parameters"] == sum(p.size for p in b.all_params().values())
    (tmp_path / "junk.bin").write_bytes(b"junk")
    assert cli.main(["inspect", "--checkpoint", str(tmp_path / "junk.bin")]) == 1
