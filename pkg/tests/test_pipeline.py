import csv
import io
import logging
import pytest

from persistome.persistence import read_diagram_csv
from persistome.pipeline import (BenchReport, DatasetManifest, ManifestError, build_signatures,
                                 find_clouds, parse_method, run_bench, validate_manifest)
from persistome.pointcloud import distance_matrix, generate_shape, write_xyz
from persistome.rips import count_simplices


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    src = root / "in"
    for kind in ("circle", "sphere", "eyeglass"):
        (src / kind).mkdir(parents=True)
        for seed in range(2):
            write_xyz(generate_shape(kind, 50, noise=0.02, seed=seed), src / kind / f"{kind}{seed}.xyz")
    (src / "sphere" / "broken.xyz").write_text("1 2\n")
    manifest = build_signatures(src, root / "out", sample_size=40, seed=3)
    return root, manifest


def test_manifest_structure(dataset):
    root, m = dataset
    assert len(m.clouds) == 7
    ok = m.ok_clouds()
    assert len(ok) == 6
    assert {c.label for c in ok} == {"circle", "sphere", "eyeglass"}
    broken = [c for c in m.clouds if c.status != "ok"]
    assert broken[0].source == "sphere/broken.xyz" and broken[0].status == "skipped"
    for c in ok:
        assert c.sample_size == 40 and c.padded
        assert set(c.pd_paths) == {"1", "2"}
    assert validate_manifest(m, root / "out") == []


def test_padded_sizes_uniform(dataset):
    root, m = dataset
    for c in m.ok_clouds():
        for k, rel in c.padded_paths.items():
            assert len(read_diagram_csv(root / "out" / rel, int(k))) == m.padded_size[k]
    for k in ("1", "2"):
        assert m.padded_size[k] == max(c.original_pd_size[k] for c in m.ok_clouds())


def test_manifest_round_trip(dataset):
    root, m = dataset
    again = DatasetManifest.read(root / "out" / "manifest.json")
    assert again == m
    assert again.to_json() == (root / "out" / "manifest.json").read_text()
    assert "timestamp" not in m.to_json()


def test_manifest_validator_catches_tampering(dataset, tmp_path):
    root, m = dataset
    text = m.to_json()
    bad = DatasetManifest.from_json(text)
    bad.ok_clouds()[0].original_pd_size["1"] += 1
    assert validate_manifest(bad, root / "out")
    with pytest.raises(ManifestError):
        DatasetManifest.from_json(text.replace('"schema_version": "1"', '"schema_version": "9"'))


def test_find_clouds_sorted(dataset):
    root, _ = dataset
    rels = find_clouds(root / "in")
    assert rels == sorted(rels) and rels[0].startswith("circle/")


def test_cap_overflow_retries_at_920(tmp_path, caplog):
    src = tmp_path / "in" / "ball"
    src.mkdir(parents=True)
    pc = generate_shape("sphere", 1024)
    write_xyz(pc, src / "s.xyz")
    d = distance_matrix(pc).entries
    full = sum(count_simplices(d, 0.25, k, 10 ** 9) for k in range(3))
    with caplog.at_level(logging.WARNING):
        m = build_signatures(tmp_path / "in", tmp_path / "out", threshold=0.25, cap=full - 1)
    entry = m.clouds[0]
    assert entry.status == "ok"
    assert entry.sample_size == 920 and entry.requested_sample_size == 1024 and entry.retries == 1
    assert m.threshold_policy == "fixed:0.25"
    assert "reduced to 920" in caplog.text


def test_cap_overflow_after_last_retry_is_recorded(tmp_path):
    src = tmp_path / "in" / "c"
    src.mkdir(parents=True)
    write_xyz(generate_shape("circle", 30), src / "a.xyz")
    m = build_signatures(tmp_path / "in", tmp_path / "out", sample_size=30, cap=5)
    assert m.clouds[0].status == "failed" and "simplex cap" in m.clouds[0].error
    assert m.padded_size == {}


def test_parse_method():
    assert parse_method("delta:0.3") == ("delta", 0.3)
    assert parse_method("topk:4") == ("topk", 4)
    assert parse_method("method2") == ("method2", None)
    for bad in ("delta", "method1:3", "magic"):
        with pytest.raises(ValueError):
            parse_method(bad)


def test_bench_identity_selection_is_zero(dataset):
    root, _ = dataset
    (report,) = run_bench(root / "out" / "manifest.json", ["delta:0"])
    for row in report.rows:
        assert row.mean_wd == 0 and row.mean_bd == 0 and row.mean_pe_diff == 0


def test_bench_overall_is_weighted_class_mean(dataset, tmp_path):
    root, _ = dataset
    reports = run_bench(root / "out" / "manifest.json", ["topk:1", "method3"], output=tmp_path)
    for report in reports:
        for dim in (1, 2):
            rows = [r for r in report.rows if r.hom_dim == dim and r.cls != "ALL"]
            overall = report.overall(dim)
            assert overall.n == sum(r.n for r in rows)
            for attr in ("mean_wd", "mean_bd", "mean_pe_diff"):
                weighted = sum(getattr(r, attr) * r.n for r in rows) / overall.n
                assert getattr(overall, attr) == pytest.approx(weighted, abs=1e-9)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "bench_method3.csv", "bench_method3.txt", "bench_topk_1.csv", "bench_topk_1.txt"]
    rows = list(csv.reader(io.StringIO((tmp_path / "bench_topk_1.csv").read_text())))
    assert rows[0] == ["method", "hom_dim", "class", "n", "mean_wd", "mean_bd", "mean_pe_diff",
                       "runtime_s"]
    assert any(r[2] == "ALL" for r in rows[1:])


def test_bench_table_is_aligned(dataset):
    root, _ = dataset
    (report,) = run_bench(root / "out" / "manifest.json", ["topk:2"])
    lines = report.to_table().splitlines()
    assert len({len(line) for line in lines}) == 1
    assert isinstance(report, BenchReport) and report.missing == 0
