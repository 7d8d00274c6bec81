import json

import pytest

from mvclust.cli import main
from mvclust.dataio import load_view


@pytest.fixture(scope="module")
def easy_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("easy")
    assert main(["synth", "--config", "easy", "--out", str(out)]) == 0
    return out / "manifest.json"


@pytest.fixture(scope="module")
def complementary_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("comp")
    assert main(["synth", "--config", "complementary", "--out", str(out)]) == 0
    return out / "manifest.json"


def read_report(out_dir):
    lines = (out_dir / "report.tsv").read_text().splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, ln.split("\t"))) for ln in lines[1:]]


def test_synth_preset_writes_files(tmp_path):
    out = tmp_path / "ds"
    assert main(["synth", "--config", "complementary", "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    assert (out / "labels.txt").exists()
    assert (out / "viewA.mvcv").exists()
    assert (out / "viewB.mvcv").exists()


def test_synth_same_seed_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", "easy", "--out", str(out1)]) == 0
    assert main(["synth", "--config", "easy", "--out", str(out2)]) == 0
    for name in ("viewA.mvcv", "viewB.mvcv", "labels.txt", "manifest.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_synth_invalid_union_exit_2(tmp_path, capsys):
    config = {
        "name": "broken",
        "n_classes": 4,
        "samples_per_class": 5,
        "seed": 0,
        "views": [{"name": "a", "resolved": [0, 1], "dim": 4}],
    }
    cfg_path = tmp_path / "broken.json"
    cfg_path.write_text(json.dumps(config))
    code = main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "classes [2, 3]" in capsys.readouterr().err


def test_synth_unknown_preset_exit_2(tmp_path):
    assert main(["synth", "--config", "nonexistent", "--out", str(tmp_path / "x")]) == 2


def test_cluster_km_separable_view(easy_dataset, tmp_path):
    out = tmp_path / "km"
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "km",
                 "--k", "4", "--seed", "0", "--nmi", "--out-dir", str(out)])
    assert code == 0
    rows = read_report(out)
    assert {r["scope"] for r in rows} == {"view:viewA", "view:viewB"}
    for r in rows:
        assert float(r["nmi"]) == 1.0
    labels = (out / "km_viewA.labels").read_text().splitlines()
    assert len(labels) == 200
    assert set(labels) <= {"0", "1", "2", "3"}


def test_cluster_view_flag_restricts(easy_dataset, tmp_path):
    out = tmp_path / "km_one"
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "km",
                 "--view", "viewB", "--k", "4", "--out-dir", str(out)])
    assert code == 0
    rows = read_report(out)
    assert [r["scope"] for r in rows] == ["view:viewB"]
    assert not (out / "km_viewA.labels").exists()


def test_cluster_unknown_method_exit_2(easy_dataset, tmp_path, capsys):
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "dbscan",
                 "--k", "4", "--out-dir", str(tmp_path / "x")])
    assert code == 2


def test_cluster_unknown_clusterer_exit_2(easy_dataset, tmp_path):
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "mvec",
                 "--clusterer", "spectral", "--k", "4", "--out-dir", str(tmp_path / "x")])
    assert code == 2


def test_cluster_k_too_large_exit_2(easy_dataset, tmp_path):
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "km",
                 "--k", "500", "--out-dir", str(tmp_path / "x")])
    assert code == 2


def test_cluster_unknown_view_exit_2(easy_dataset, tmp_path):
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "km",
                 "--view", "nope", "--k", "4", "--out-dir", str(tmp_path / "x")])
    assert code == 2


def test_cluster_multi_view_method_with_view_runs_single_branch(easy_dataset, tmp_path):
    out = tmp_path / "dmvc1"
    code = main(["cluster", "--manifest", str(easy_dataset), "--method", "dmvc-fix",
                 "--view", "viewA", "--k", "4", "--seed", "3",
                 "--epochs", "150", "--max-updates", "100", "--out-dir", str(out)])
    assert code == 0
    rows = read_report(out)
    assert [r["scope"] for r in rows] == ["stage:branch:viewA", "stage:head", "final"]


def test_cluster_nmi_without_labels_exit_2(tmp_path):
    src = tmp_path / "nolabels"
    assert main(["synth", "--config", "easy", "--out", str(src)]) == 0
    doc = json.loads((src / "manifest.json").read_text())
    del doc["labels_path"]
    (src / "manifest.json").write_text(json.dumps(doc))
    code = main(["cluster", "--manifest", str(src / "manifest.json"), "--method", "km",
                 "--k", "4", "--nmi", "--out-dir", str(tmp_path / "x")])
    assert code == 2


def test_cluster_reproducible_partition_bytes(complementary_dataset, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        code = main(["cluster", "--manifest", str(complementary_dataset), "--method", "mvec",
                     "--k", "4", "--seed", "7", "--out-dir", str(out)])
        assert code == 0
    assert (out1 / "mvec.labels").read_bytes() == (out2 / "mvec.labels").read_bytes()


def test_cluster_cc_runs(complementary_dataset, tmp_path):
    out = tmp_path / "cc"
    code = main(["cluster", "--manifest", str(complementary_dataset), "--method", "cc",
                 "--k", "4", "--seed", "1", "--out-dir", str(out)])
    assert code == 0
    rows = read_report(out)
    assert rows[-1]["scope"] == "final"
    assert float(rows[-1]["nmi"]) > 0.9


def test_cluster_dmvc_fix_report(complementary_dataset, tmp_path):
    out = tmp_path / "dmvcfix"
    code = main(["cluster", "--manifest", str(complementary_dataset), "--method", "dmvc-fix",
                 "--k", "4", "--seed", "2", "--epochs", "250", "--max-updates", "200",
                 "--out-dir", str(out)])
    assert code == 0
    rows = read_report(out)
    scopes = [r["scope"] for r in rows]
    assert scopes == ["stage:branch:viewA", "stage:branch:viewB", "stage:head", "final"]
    final = float(rows[-1]["nmi"])
    per_view = [float(r["nmi"]) for r in rows[:2]]
    assert final > max(per_view)
    emb = load_view(out / "dmvc-fix_embedding.mvcv")
    assert emb.n == 200
    assert (out / "dmvc-fix_head_log.tsv").exists()
    assert (out / "dmvc-fix_branch_viewA_log.tsv").exists()


def test_bench_single_cell(easy_dataset, tmp_path):
    out = tmp_path / "bench.tsv"
    code = main(["bench", "--manifests", str(easy_dataset), "--methods", "km",
                 "--seeds", "0", "--k", "4", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "method\teasy"
    assert lines[1].startswith("km\t1.0000±0.0000*")


def test_bench_empty_methods_exit_2(easy_dataset, tmp_path):
    code = main(["bench", "--manifests", str(easy_dataset), "--methods", "",
                 "--seeds", "0", "--k", "4"])
    assert code == 2


def test_bench_unknown_method_exit_2(easy_dataset):
    code = main(["bench", "--manifests", str(easy_dataset), "--methods", "km,foo",
                 "--seeds", "0", "--k", "4"])
    assert code == 2


def test_bench_grid(easy_dataset, complementary_dataset, tmp_path):
    out = tmp_path / "grid.tsv"
    code = main(["bench", "--manifests", f"{easy_dataset},{complementary_dataset}",
                 "--methods", "km-best-view,cc", "--seeds", "0,1", "--k", "4",
                 "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "method\teasy\tcomplementary"
    assert len(lines) == 3
    assert lines[1].split("\t")[0] == "km-best-view"


def test_missing_manifest_exit_1(tmp_path):
    code = main(["cluster", "--manifest", str(tmp_path / "nope.json"), "--method", "km",
                 "--k", "2", "--out-dir", str(tmp_path / "x")])
    assert code == 1


def test_help_exits_zero():
    assert main(["--help"]) == 0
