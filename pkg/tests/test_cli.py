import json

import pytest

from emofda.cli import main


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps({
        "n_grid": 31,
        "n_basis": 10,
        "n_permutations": 200,
        "registration": {"max_iter": 2},
        "synth": {
            "K": 3,
            "n_frames": 30,
            "effects": [{"au": "AU12", "emotion": "happy", "center": 0.5, "width": 0.1, "amplitude": 1.5}],
        },
    }))
    return str(path)


@pytest.fixture(scope="module")
def corpus(config_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--config", config_file, "--out", str(out), "--seed", "4"]) == 0
    return out


def test_synth_writes_corpus(corpus):
    assert len(list(corpus.glob("*.csv"))) == 24


def test_synth_seed_changes_corpus(config_file, corpus, tmp_path):
    main(["synth", "--config", config_file, "--out", str(tmp_path), "--seed", "5"])
    name = sorted(p.name for p in corpus.glob("*.csv"))[0]
    assert (tmp_path / name).read_bytes() != (corpus / name).read_bytes()


def test_stagewise_matches_run(config_file, corpus, tmp_path, capsys):
    s, r, f, full = (tmp_path / d for d in ("s", "r", "f", "full"))
    assert main(["smooth", "--config", config_file, "--input", str(corpus), "--out", str(s)]) == 0
    assert main(["register", "--config", config_file, "--input", str(s), "--out", str(r)]) == 0
    assert (r / "warps.csv").exists()
    assert main(["fanova", "--config", config_file, "--input", str(r), "--out", str(f)]) == 0
    assert main(["run", "--config", config_file, "--input", str(corpus), "--out", str(full)]) == 0
    assert "happy:" in capsys.readouterr().out
    a = json.loads((f / "report.json").read_text())
    b = json.loads((full / "report.json").read_text())
    # the curve files round-trip exactly, so the staged F-ratios match the single run
    for x, y in zip(a["analyses"], b["analyses"]):
        assert x["fratio"] == y["fratio"]


def test_report_subcommand(config_file, corpus, tmp_path):
    out = tmp_path / "run"
    main(["run", "--config", config_file, "--input", str(corpus), "--out", str(out)])
    plots = tmp_path / "plots"
    assert main(["report", "--input", str(out), "--out", str(plots), "--au", "AU12", "--emotion", "happy"]) == 0
    lines = (plots / "plot_AU12_happy.csv").read_text().splitlines()
    assert lines[0] == "t,mu0,mu0_plus_alpha,fratio,pointwise_crit,max_crit" and len(lines) == 32
    assert main(["report", "--input", str(out), "--out", str(plots), "--au", "AU99"]) == 1


def test_errors_are_reported(tmp_path, capsys):
    assert main(["run", "--input", str(tmp_path), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("emofda run: error: [ingest]") and "no CSV files" in err
    assert main(["fanova", "--input", str(tmp_path), "--alpha", "2"]) == 1
    assert "alpha" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--seed", "-1"])
    with pytest.raises(SystemExit):
        main(["bogus"])
