import json
import re
from importlib import resources
from pathlib import Path

import pytest

from labelgrain.cli import main
from labelgrain.hierarchy import builtin_hierarchy

DEMO = Path(str(resources.files("labelgrain.fixtures").joinpath("demo")))
FIXTURES = DEMO.parent
FAST = ["--epochs", "2", "--hidden", "8", "--lr", "0.05"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def usage_error(capsys, *argv):
    with pytest.raises(SystemExit) as info:
        main([str(a) for a in argv])
    _, err = capsys.readouterr()
    return info.value.code, err


def demo_pair(out_dir, *extra):
    return ["pair", "--train", DEMO / "train.csv", "--test", DEMO / "test.csv",
            "--hierarchy", DEMO / "hierarchy.json", "--out-dir", out_dir, *FAST, *extra]


@pytest.fixture(scope="module")
def cifar_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cifar")
    code = main(["gen-data", "--hierarchy", "cifar10", "--out", str(d / "train.csv"), "--test-out",
                 str(d / "test.csv"), "--test-fraction", "0.5", "--n-per-fine", "8", "--dim", "4",
                 "--coarse-sep", "2", "--fine-sep", "2", "--sigma", "1", "--seed", "1"])
    assert code == 0
    return d


# --- gen-data --------------------------------------------------------------------------

GEN = ["--hierarchy", DEMO / "hierarchy.json", "--n-per-fine", "5", "--dim", "3", "--coarse-sep", "2",
       "--fine-sep", "1", "--sigma", "0.5", "--seed", "7"]


def test_gen_data_writes_csv_and_manifest(tmp_path, capsys):
    code, out, _ = run(capsys, "gen-data", "--out", tmp_path / "d.csv", *GEN)
    assert code == 0 and "50 examples" in out
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "f0,f1,f2,fine_label" and len(lines) == 51
    manifest = json.loads((tmp_path / "d.manifest.json").read_text())
    assert manifest["n"] == 50 and manifest["generator"]["noise_sigma"] == 0.5


def test_gen_data_byte_identical(tmp_path, capsys):
    run(capsys, "gen-data", "--out", tmp_path / "a.csv", *GEN)
    run(capsys, "gen-data", "--out", tmp_path / "b.csv", *GEN)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_gen_data_rejects_zero_sigma(tmp_path, capsys):
    argv = [a if a != "0.5" else "0" for a in GEN]
    code, err = usage_error(capsys, "gen-data", "--out", tmp_path / "d.csv", *argv)
    assert code == 2 and "--sigma" in err


def test_gen_data_split_flags_together(tmp_path, capsys):
    code, _ = usage_error(capsys, "gen-data", "--out", tmp_path / "d.csv", "--test-fraction", "0.5", *GEN)
    assert code == 2


def test_gen_data_unknown_hierarchy(tmp_path, capsys):
    argv = list(GEN)
    argv[1] = "no-such-hierarchy"
    code, _, err = run(capsys, "gen-data", "--out", tmp_path / "d.csv", *argv)
    assert code == 1 and "no-such-hierarchy" in err


# --- pair ------------------------------------------------------------------------------

SUMMARY = re.compile(r"^A_CC=(\d\.\d{4}) A_FC=(\d\.\d{4}) dA=([+-]\d\.\d{4}) ACR=(\d+\.\d{4}|undefined)$")


def test_pair_on_demo(tmp_path, capsys):
    code, out, _ = run(capsys, *demo_pair(tmp_path, "--save-models"))
    assert code == 0
    assert SUMMARY.match(out.strip()), out
    doc = json.loads((tmp_path / "pair_result.json").read_text())
    assert doc["type"] == "PairResult"
    assert set(p.name for p in tmp_path.iterdir()) == {
        "pair_result.json", "curves_coarse.csv", "curves_fine.csv", "coarse_model.json", "fine_model.json"}


def test_pair_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, *demo_pair(tmp_path / name))
    for f in ("pair_result.json", "curves_coarse.csv", "curves_fine.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_pair_missing_hierarchy(tmp_path, capsys):
    argv = demo_pair(tmp_path)
    i = argv.index("--hierarchy")
    del argv[i:i + 2]
    code, err = usage_error(capsys, *argv)
    assert code == 2 and "usage:" in err and "--hierarchy" in err


def test_pair_missing_file(tmp_path, capsys):
    argv = demo_pair(tmp_path)
    argv[argv.index("--train") + 1] = tmp_path / "nope.csv"
    code, _, err = run(capsys, *argv)
    assert code == 1 and "nope.csv" in err


# --- sweep ---------------------------------------------------------------------------

def test_sweep_fraction(tmp_path, capsys):
    argv = demo_pair(tmp_path)
    argv[0:1] = ["sweep", "--kind", "fraction", "--fractions", "0.2,0.4,0.6,0.8,1.0"]
    code, out, _ = run(capsys, *argv)
    assert code == 0 and len(out.splitlines()) == 5
    assert len(list(tmp_path.glob("entry_*.json"))) == 5
    rows = (tmp_path / "fraction_plot.csv").read_text().splitlines()
    assert rows[0] == "fraction,a_cc_train,a_cc_test,a_fc_train,a_fc_test" and len(rows) == 6


def test_sweep_noise(tmp_path, capsys):
    argv = demo_pair(tmp_path)
    argv[0:1] = ["sweep", "--kind", "noise", "--factors", "0,0.01,0.03,0.1,0.3"]
    code, out, _ = run(capsys, *argv)
    assert code == 0 and len(list(tmp_path.glob("entry_*.json"))) == 5


def test_sweep_partition(tmp_path, capsys, cifar_data):
    code, out, _ = run(
        capsys, "sweep", "--kind", "partition", "--assignments-file", FIXTURES / "cifar10-partitions.txt",
        "--train", cifar_data / "train.csv", "--test", cifar_data / "test.csv", "--hierarchy", "cifar10",
        "--out-dir", tmp_path, *FAST)
    assert code == 0
    assert len(list(tmp_path.glob("entry_*.json"))) == 10
    assert out.splitlines()[0].startswith("(1): A_CC=")


def test_sweep_coarse_count(tmp_path, capsys, cifar_data):
    subsets = tmp_path / "subsets.txt"
    subsets.write_text("0\n0,1\n")
    code, out, _ = run(
        capsys, "sweep", "--kind", "coarse-count", "--subsets-file", subsets,
        "--train", cifar_data / "train.csv", "--test", cifar_data / "test.csv", "--hierarchy", "cifar10",
        "--out-dir", tmp_path / "out", *FAST)
    assert code == 0 and [ln.split(":")[0] for ln in out.splitlines()] == ["1", "2"]


def test_sweep_unknown_kind(tmp_path, capsys):
    argv = demo_pair(tmp_path)
    argv[0:1] = ["sweep", "--kind", "bogus"]
    code, err = usage_error(capsys, *argv)
    assert code == 2 and "bogus" in err


def test_sweep_requires_values(tmp_path, capsys):
    argv = demo_pair(tmp_path)
    argv[0:1] = ["sweep", "--kind", "noise"]
    code, err = usage_error(capsys, *argv)
    assert code == 2 and "--factors" in err


# --- acr -----------------------------------------------------------------------------

def write_log(path, pairs):
    path.write_text("true_fine,pred_fine\n" + "".join(f"{t},{p}\n" for t, p in pairs))
    return path


def test_acr_intra_only(tmp_path, capsys):
    log = write_log(tmp_path / "p.csv", [("cat", "dog"), ("dog", "cat"), ("car", "truck"), ("ship", "ship")])
    code, out, _ = run(capsys, "acr", "--predictions", log, "--hierarchy", "cifar10")
    assert code == 0 and json.loads(out)["acr"] < 1


def test_acr_symmetric(tmp_path, capsys):
    h = builtin_hierarchy("cifar10")
    pairs = [(a, b) for a in h.fine_names for b in h.fine_names if a != b]
    log = write_log(tmp_path / "p.csv", pairs)
    code, out, _ = run(capsys, "acr", "--predictions", log, "--hierarchy", "cifar10",
                       "--out", tmp_path / "r.json", "--confusion-out", tmp_path / "c.csv")
    assert code == 0 and json.loads(out)["acr"] == 1.0
    assert json.loads((tmp_path / "r.json").read_text())["acr"] == 1.0
    assert (tmp_path / "c.csv").read_text().splitlines()[0].split(",") == list(h.fine_names)


def test_acr_diagonal_only(tmp_path, capsys):
    log = write_log(tmp_path / "p.csv", [("cat", "cat"), ("ship", "ship")])
    code, out, _ = run(capsys, "acr", "--predictions", log, "--hierarchy", "cifar10")
    assert code == 0
    assert json.loads(out) == {"acr": "undefined", "reason": "zero intra-class confusion"}


def test_acr_unknown_label(tmp_path, capsys):
    log = write_log(tmp_path / "p.csv", [("cat", "griffin")])
    code, _, err = run(capsys, "acr", "--predictions", log, "--hierarchy", "cifar10")
    assert code == 1 and "griffin" in err


# --- report --------------------------------------------------------------------------

def test_report_seven_results(tmp_path, capsys):
    for seed in range(7):
        run(capsys, *demo_pair(tmp_path / "runs" / f"s{seed}", "--seed", seed))
    code, out, err = run(capsys, "report", "--results-dir", tmp_path / "runs")
    assert code == 0
    rows = (tmp_path / "runs" / "acr_delta.csv").read_text().splitlines()
    assert rows[0] == "label,acr,delta_a_test" and len(rows) == 8
    assert re.match(r"n=7 spearman=-?\d\.\d{4} csv=", out) and not err


def test_report_few_results_warns(tmp_path, capsys):
    run(capsys, *demo_pair(tmp_path / "runs" / "one"))
    code, out, err = run(capsys, "report", "--results-dir", tmp_path / "runs", "--out", tmp_path / "t.csv")
    assert code == 0 and "warning" in err and (tmp_path / "t.csv").exists()


def test_report_empty(tmp_path, capsys):
    code, _, err = run(capsys, "report", "--results-dir", tmp_path)
    assert code == 1 and "no pair results" in err
