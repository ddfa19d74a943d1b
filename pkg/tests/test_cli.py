import csv
import json

import pytest

from nrgnn.cli import ConfigError, main, parse_config_text, parse_csbm, parse_seeds, train_config_from

DATA = "csbm:n=120,classes=3,feature_dim=8,p_intra=0.08,p_inter=0.01"
QUICK = ["--set", "epochs=6", "--set", "pretrain_epochs=2", "--set", "K=3"]


def test_config_text():
    vals = parse_config_text("# comment\ndataset = csbm\ntrain.alpha = 0.1  # inline\n\ntrain.thresholds.edge=0.2\n")
    assert vals == {"dataset": "csbm", "train.alpha": "0.1", "train.thresholds.edge": "0.2"}
    cfg = train_config_from(vals)
    assert cfg.alpha == 0.1 and cfg.thresholds.edge == 0.2
    with pytest.raises(ConfigError, match="<config>:1"):
        parse_config_text("no equals here")


def test_bad_train_field_is_named():
    with pytest.raises(ConfigError, match="train.lr"):
        train_config_from({"train.lr": "fast"})
    with pytest.raises(ConfigError, match="train.bogus"):
        train_config_from({"train.bogus": "1"})


def test_seed_and_csbm_parsing():
    assert parse_seeds("3") == [0, 1, 2]
    assert parse_seeds("4,7") == [4, 7]
    assert parse_csbm("csbm:n=50,classes=2")["n"] == 50
    with pytest.raises(ConfigError):
        parse_csbm("csbm:size=5")


def test_unknown_method(tmp_path, capsys):
    assert main(["train", "--dataset", DATA, "--method", "magic", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "magic" in err and "nrgnn" in err and "plain" in err


def test_train_writes_cells_and_aggregate(tmp_path):
    out = tmp_path / "runs"
    rc = main(["train", "--dataset", DATA, "--method", "nrgnn", "--seeds", "2", "--noise", "uniform:0.2", "--out", str(out)] + QUICK)
    assert rc == 0
    for s in (0, 1):
        cell = out / "nrgnn" / f"seed_{s}"
        m = json.loads((cell / "metrics.json").read_text())
        assert m["seed"] == s and m["noise"] == {"kind": "uniform", "rate": 0.2}
        assert 0 <= m["test_acc"] <= 1 and m["wall_seconds"] is None
        assert (cell / "manifest.json").is_file()
    agg = json.loads((out / "nrgnn" / "aggregate.json").read_text())
    assert agg["seeds"] == [0, 1] and agg["test_acc_std"] >= 0


def test_manifest_rerun_is_bit_identical(tmp_path):
    out = tmp_path / "runs"
    assert main(["train", "--dataset", DATA, "--method", "plain", "--seeds", "1", "--out", str(out)] + QUICK) == 0
    cell = out / "plain" / "seed_0"
    again = tmp_path / "again"
    assert main(["train", "--manifest", str(cell / "manifest.json"), "--out", str(again)]) == 0
    assert (again / "metrics.json").read_bytes() == (cell / "metrics.json").read_bytes()


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "exp.conf"
    conf.write_text(f"dataset = {DATA}\nmethod = plain\nseeds = 1\ntrain.epochs = 3\nout = {tmp_path / 'a'}\n")
    assert main(["train", "--config", str(conf), "--out", str(tmp_path / "b"), "--set", "pretrain_epochs=0"]) == 0
    assert not (tmp_path / "a").exists()
    m = json.loads((tmp_path / "b" / "plain" / "seed_0" / "manifest.json").read_text())
    assert m["train"]["epochs"] == 3


def test_sweep_rows(tmp_path):
    args = ["sweep", "--dataset", DATA, "--methods", "plain,link_VL", "--axis", "noise",
            "--values", "0,0.2", "--seeds", "1", "--out", str(tmp_path)] + QUICK
    assert main(args) == 0
    with open(tmp_path / "sweep_noise.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["axis", "value", "value2", "method", "mean", "std", "seeds"]
    assert [(r[1], r[3]) for r in rows[1:]] == [("0", "plain"), ("0", "link_VL"), ("0.2", "plain"), ("0.2", "link_VL")]


def test_sweep_empty_grid(tmp_path):
    assert main(["sweep", "--dataset", DATA, "--axis", "noise", "--out", str(tmp_path)]) == 1


def test_theory_check(tmp_path):
    assert main(["theory-check", "--points", "4", "--draws", "20000", "--out", str(tmp_path)]) == 0
    report = (tmp_path / "theory_report.csv").read_text()
    assert "FAIL" not in report
    grid = tmp_path / "theory_grid.csv"
    # the written grid drives a rerun
    assert main(["theory-check", "--grid", str(grid), "--draws", "20000"]) == 0


def test_theory_probe_point_still_passes(tmp_path):
    grid = tmp_path / "g.csv"
    # p_t=0.3 below the 0.4286 threshold: labeled links pull the expectation down
    grid.write_text("n,m,h,p_t,p_f,E_sac,E_sbc,E_sdc,E_spc\n3,2,0.8,0.3,0.1,0.4,0.8,0.1,\n")
    assert main(["theory-check", "--grid", str(grid), "--draws", "20000"]) == 0


def test_malformed_grid(tmp_path):
    grid = tmp_path / "bad.csv"
    grid.write_text("n,m,h\n1,2,x\n")
    assert main(["theory-check", "--grid", str(grid)]) == 1


def test_make_dataset_and_inject_noise(tmp_path):
    d = tmp_path / "data"
    assert main(["make-dataset", "--out", str(d), "--spec", "csbm:n=80,classes=2,feature_dim=5"]) == 0
    assert main(["inject-noise", "--dataset", str(d), "--noise", "pair:0.4", "--label-rate", "0.1", "--out", str(tmp_path / "nz")]) == 0
    split = json.loads((tmp_path / "nz" / "split.json").read_text())
    labels = (tmp_path / "nz" / "noisy_labels.txt").read_text().split()
    assert len(labels) == 80 and len(split["train"]) == 8
    assert all(labels[i] == "-1" for i in split["test"])
    rc = main(["train", "--dataset", str(d), "--method", "plain", "--seeds", "1", "--out", str(tmp_path / "r")] + QUICK)
    assert rc == 0


def test_missing_dataset_dir(tmp_path):
    assert main(["train", "--dataset", str(tmp_path / "nope"), "--method", "plain"]) == 1


def test_divergence_exit_code(tmp_path, capsys):
    rc = main(["train", "--dataset", DATA, "--method", "plain", "--seeds", "1", "--out", str(tmp_path),
               "--set", "lr=1e300"] + QUICK)
    assert rc == 2
    assert "epoch" in capsys.readouterr().err
