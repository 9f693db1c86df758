"""Manifest/config handling, pipeline commands and the radiomics CLI."""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from conftest import write_bare_manifest, write_feature_csv

import deepradiomics as dr
from deepradiomics.cli import main
from deepradiomics.errors import (
    BadMapIndex,
    DegenerateLabels,
    ManifestInvalid,
    MissingColumn,
    UnknownPatient,
    WeightsMissing,
)
from deepradiomics.manifest import FEATURE_SETS, RunConfig, load_config, load_manifest
from deepradiomics.pipeline import (
    _design_matrix,
    cmd_classify,
    cmd_extract,
    cmd_inspect,
    cmd_survive,
    load_features_csv,
    write_csv,
)


def parse_cell(cell: str):
    try:
        return int(cell)
    except ValueError:
        try:
            return float(cell)
        except ValueError:
            return cell


def assert_csv_roundtrips(path, tmp_path):
    lines = path.read_text().splitlines()
    rows = [[parse_cell(c) for c in ln.split(",")] for ln in lines[1:]]
    out = tmp_path / f"rt_{path.name}"
    write_csv(out, lines[0].split(","), rows)
    assert out.read_bytes() == path.read_bytes()


# --------------------------------------------------------------------------
# manifest and config
# --------------------------------------------------------------------------

class TestManifest:
    def test_loads_cohort(self, small_cohort):
        records = load_manifest(small_cohort)
        assert len(records) == 5
        assert records[0].patient_id == "S00"
        assert records[0].volumes["t1wi"].exists() or True  # paths resolved

    def test_duplicate_ids_rejected(self, tmp_path):
        rows = [
            {"patient_id": "A", "os_months": 5.0, "event": 1},
            {"patient_id": "A", "os_months": 6.0, "event": 1},
        ]
        path = write_bare_manifest(tmp_path / "m.csv", rows)
        with pytest.raises(ManifestInvalid, match="duplicate"):
            load_manifest(path, check_files=False)

    def test_missing_files_reported(self, tmp_path):
        path = write_bare_manifest(
            tmp_path / "m.csv", [{"patient_id": "A", "os_months": 5.0, "event": 1}]
        )
        with pytest.raises(ManifestInvalid, match="file missing"):
            load_manifest(path, check_files=True)

    @pytest.mark.parametrize(
        "field,value,match",
        [
            ("macrophage_m1", 1.5, "outside"),
            ("gender", 2, "gender"),
            ("os_months", -1.0, "os_months"),
            ("event", 3, "event"),
        ],
    )
    def test_bad_values_rejected(self, tmp_path, field, value, match):
        row = {"patient_id": "A", "os_months": 5.0, "event": 1}
        row[field] = value
        path = write_bare_manifest(tmp_path / "m.csv", [row])
        with pytest.raises(ManifestInvalid, match=match):
            load_manifest(path, check_files=False)

    def test_wrong_header_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text("patient,columns\nA,1\n")
        with pytest.raises(ManifestInvalid, match="header"):
            load_manifest(tmp_path / "m.csv")

    def test_empty_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text("")
        with pytest.raises(ManifestInvalid):
            load_manifest(tmp_path / "m.csv")


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.k == 2
        assert cfg.modality_reduction == "mean"
        assert cfg.feature_sets == FEATURE_SETS
        assert cfg.grid["n_trees"] == [100, 300, 500]

    def test_from_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"k": 3, "seed": 9, "feature_sets": ["R", "I+C"]}))
        cfg = load_config(p)
        assert cfg.k == 3
        assert cfg.seed == 9
        assert cfg.feature_sets == ("R", "I+C")

    @pytest.mark.parametrize(
        "raw",
        [
            {"k": 0},
            {"seed": -1},
            {"feature_sets": []},
            {"feature_sets": ["R", "X"]},
            {"modality_reduction": "median"},
            {"grid": {"n_trees": []}},
            {"bogus": 1},
        ],
    )
    def test_invalid_configs(self, tmp_path, raw):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(raw))
        with pytest.raises(ManifestInvalid):
            load_config(p)


# --------------------------------------------------------------------------
# extract
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def extracted(small_cohort, tmp_path_factory):
    out = tmp_path_factory.mktemp("extract_out")
    records = load_manifest(small_cohort)
    cfg = RunConfig(seed=3, grid={"n_trees": [25], "min_leaf": [1]}, feature_sets=("R",))
    result = cmd_extract(records, small_cohort.parent / "weights.bin", cfg, out)
    return small_cohort, cfg, result


class TestExtract:
    def test_shape_contract(self, extracted):
        _, _, result = extracted
        assert result.n_ok == 5
        assert not result.failures
        ids, names, matrix = load_features_csv(result.features_path)
        assert len(ids) == 5
        assert matrix.shape == (5, 126)
        assert names[0] == "f000_mu1"

    def test_rerun_is_byte_identical(self, extracted, tmp_path):
        manifest, cfg, result = extracted
        records = load_manifest(manifest)
        again = cmd_extract(records, manifest.parent / "weights.bin", cfg, tmp_path)
        assert again.features_path.read_bytes() == result.features_path.read_bytes()

    def test_thread_cap_does_not_change_output(self, extracted, tmp_path, monkeypatch):
        manifest, cfg, result = extracted
        records = load_manifest(manifest)
        monkeypatch.setenv("RADIOMICS_THREADS", "1")
        serial = cmd_extract(records, manifest.parent / "weights.bin", cfg, tmp_path)
        assert serial.features_path.read_bytes() == result.features_path.read_bytes()

    def test_broken_patient_skipped(self, extracted, tmp_path):
        manifest, cfg, _ = extracted
        text = manifest.read_text().splitlines()
        text[1] = text[1].replace("S00_mask.vol.json", "nonexistent.vol.json")
        # keep the broken manifest in the cohort dir so relative paths resolve
        broken = manifest.parent / "broken.csv"
        broken.write_text("\n".join(text) + "\n")
        records = load_manifest(broken, check_files=False)
        result = cmd_extract(records, manifest.parent / "weights.bin", cfg, tmp_path)
        assert result.n_ok == 4
        assert result.failures[0][0] == "S00"
        ids, _, _ = load_features_csv(result.features_path)
        assert "S00" not in ids

    def test_missing_weights(self, extracted, tmp_path):
        manifest, cfg, _ = extracted
        records = load_manifest(manifest)
        with pytest.raises(WeightsMissing):
            cmd_extract(records, tmp_path / "no_weights.bin", cfg, tmp_path)

    def test_features_csv_roundtrips(self, extracted, tmp_path):
        _, _, result = extracted
        assert_csv_roundtrips(result.features_path, tmp_path)


# --------------------------------------------------------------------------
# classify
# --------------------------------------------------------------------------

def planted_cohort(tmp_path, n=20, seed=0):
    """Synthetic feature matrix whose first column determines the m1 marker.

    The same pattern is echoed (with jitter) into every sixth column so the
    sqrt(d) feature subsampling cannot hide it from most trees.
    """
    rng = np.random.default_rng(seed)
    ids = [f"P{i:02d}" for i in range(n)]
    matrix = rng.standard_normal((n, 126))
    matrix[:, 0] = np.linspace(0.0, 1.0, n)
    for col in range(6, 126, 6):
        matrix[:, col] = matrix[:, 0] + rng.normal(0.0, 0.02, n)
    features = write_feature_csv(tmp_path / "features.csv", ids, matrix)
    rows = [
        {
            "patient_id": pid,
            "os_months": float(5 + i),
            "event": 1,
            "macrophage_m1": round(matrix[i, 0], 6),
        }
        for i, pid in enumerate(ids)
    ]
    manifest = write_bare_manifest(tmp_path / "manifest.csv", rows)
    return features, load_manifest(manifest, check_files=False)


class TestClassify:
    def test_planted_signal_gives_perfect_auc(self, tmp_path):
        features, records = planted_cohort(tmp_path)
        cfg = RunConfig(seed=1, grid={"n_trees": [25], "min_leaf": [1]}, feature_sets=("R",))
        reports = cmd_classify(features, records, "m1", cfg, tmp_path / "out")
        assert reports["R"].auc >= 0.99

    def test_emits_all_seven_feature_set_reports(self, tmp_path):
        features, records = planted_cohort(tmp_path, n=12, seed=1)
        cfg = RunConfig(seed=2, grid={"n_trees": [10], "min_leaf": [2]})
        out = tmp_path / "out"
        reports = cmd_classify(features, records, "m1", cfg, out)
        assert tuple(reports) == FEATURE_SETS
        for fs in FEATURE_SETS:
            assert (out / f"report_m1_{fs}.json").exists()
            assert (out / f"roc_m1_{fs}.csv").exists()
        payload = json.loads((out / "report_m1_R.json").read_text())
        assert set(payload) == {"auc", "accuracy", "confusion", "scores"}
        assert len(payload["scores"]) == 12

    def test_design_matrix_algebra(self, tmp_path):
        features, records = planted_cohort(tmp_path, n=6, seed=2)
        _, _, radiomic = load_features_csv(features)
        for fs, width in [
            ("R", 126),
            ("C", 2),
            ("I", 3),
            ("I+C", 5),
            ("R+C", 128),
            ("R+I", 129),
            ("R+C+I", 131),
        ]:
            X = _design_matrix(fs, radiomic, records)
            assert X.shape == (6, width)

    def test_degenerate_labels(self, tmp_path):
        rng = np.random.default_rng(3)
        ids = [f"P{i}" for i in range(6)]
        features = write_feature_csv(tmp_path / "f.csv", ids, rng.standard_normal((6, 126)))
        rows = [
            {"patient_id": pid, "os_months": 10.0, "event": 1, "neutrophils": 0.4}
            for pid in ids
        ]
        records = load_manifest(write_bare_manifest(tmp_path / "m.csv", rows), check_files=False)
        cfg = RunConfig(grid={"n_trees": [5], "min_leaf": [1]}, feature_sets=("R",))
        with pytest.raises(DegenerateLabels):
            cmd_classify(features, records, "neutrophils", cfg, tmp_path / "out")

    def test_unknown_target(self, tmp_path):
        features, records = planted_cohort(tmp_path, n=6, seed=4)
        cfg = RunConfig(grid={"n_trees": [5], "min_leaf": [1]}, feature_sets=("R",))
        with pytest.raises(MissingColumn):
            cmd_classify(features, records, "bogus", cfg, tmp_path / "out")

    def test_shuffled_labels_near_chance(self, tmp_path):
        rng = np.random.default_rng(12)
        n = 40
        ids = [f"P{i:02d}" for i in range(n)]
        features = write_feature_csv(tmp_path / "f.csv", ids, rng.standard_normal((n, 126)))
        rows = [
            {"patient_id": pid, "os_months": 5.0 + i, "event": 1, "tfh": float(rng.random())}
            for i, pid in enumerate(ids)
        ]
        records = load_manifest(write_bare_manifest(tmp_path / "m.csv", rows), check_files=False)
        cfg = RunConfig(seed=5, grid={"n_trees": [15], "min_leaf": [3]}, feature_sets=("R",))
        reports = cmd_classify(features, records, "tfh", cfg, tmp_path / "out")
        assert 0.2 <= reports["R"].auc <= 0.8


# --------------------------------------------------------------------------
# survive
# --------------------------------------------------------------------------

def survival_cohort(tmp_path, n=24, seed=6):
    rng = np.random.default_rng(seed)
    ids = [f"P{i:02d}" for i in range(n)]
    matrix = rng.standard_normal((n, 126))
    long_lived = np.arange(n) % 2 == 1
    for col in range(0, 126, 6):
        matrix[:, col] = long_lived * 2.0 + rng.normal(0, 0.1, n)
    features = write_feature_csv(tmp_path / "features.csv", ids, matrix)
    rows = []
    for i, pid in enumerate(ids):
        t = float(rng.uniform(25, 40)) if long_lived[i] else float(rng.uniform(3, 10))
        rows.append(
            {"patient_id": pid, "os_months": round(t, 3), "event": int(rng.random() > 0.15)}
        )
    manifest = write_bare_manifest(tmp_path / "manifest.csv", rows)
    return features, load_manifest(manifest, check_files=False)


class TestSurvive:
    def test_planted_hazard_detected(self, tmp_path):
        features, records = survival_cohort(tmp_path)
        cfg = RunConfig(seed=7, grid={"n_trees": [25], "min_leaf": [1]}, feature_sets=("R",))
        out = tmp_path / "out"
        table = cmd_survive(features, records, cfg, out)
        row = table[0]
        assert row.feature_set == "R"
        assert row.p_value is not None and row.p_value < 0.05
        assert row.median_short is not None and row.median_long is not None
        assert row.median_short < row.median_long
        for name in (
            "survival_report.csv",
            "km_R.svg",
            "km_short_R.csv",
            "km_long_R.csv",
            "logrank_R.json",
            "report_survival_R.json",
            "roc_survival_R.csv",
        ):
            assert (out / name).exists(), name
        payload = json.loads((out / "logrank_R.json").read_text())
        assert payload["p"] == row.p_value
        assert payload["hr"] is not None and payload["hr"] > 1.0

    def test_emitted_csvs_roundtrip(self, tmp_path):
        features, records = survival_cohort(tmp_path, seed=8)
        cfg = RunConfig(seed=8, grid={"n_trees": [10], "min_leaf": [2]}, feature_sets=("R",))
        out = tmp_path / "out"
        cmd_survive(features, records, cfg, out)
        for path in sorted(out.glob("*.csv")):
            assert_csv_roundtrips(path, tmp_path)

    def test_km_svg_is_valid_xml(self, tmp_path):
        features, records = survival_cohort(tmp_path, seed=9)
        cfg = RunConfig(seed=9, grid={"n_trees": [10], "min_leaf": [2]}, feature_sets=("R",))
        out = tmp_path / "out"
        cmd_survive(features, records, cfg, out)
        root = ET.fromstring((out / "km_R.svg").read_text())
        assert root.tag.endswith("svg")


# --------------------------------------------------------------------------
# inspect
# --------------------------------------------------------------------------

class TestInspect:
    def test_outputs(self, small_cohort, tmp_path):
        records = load_manifest(small_cohort)
        cfg = RunConfig(feature_sets=("R",))
        svg, pgm = cmd_inspect(
            records, "S01", 1, small_cohort.parent / "weights.bin", cfg, tmp_path
        )
        root = ET.fromstring(svg.read_text())
        assert root.tag.endswith("svg")
        raw = pgm.read_bytes()
        assert raw.startswith(b"P5\n32 32\n255\n")
        assert len(raw) == len(b"P5\n32 32\n255\n") + 32 * 32

    def test_map_zero_uses_input_resolution(self, small_cohort, tmp_path):
        records = load_manifest(small_cohort)
        cfg = RunConfig(feature_sets=("R",))
        _, pgm = cmd_inspect(
            records, "S02", 0, small_cohort.parent / "weights.bin", cfg, tmp_path
        )
        assert pgm.read_bytes().startswith(b"P5\n64 64\n255\n")

    def test_bad_map_index(self, small_cohort, tmp_path):
        records = load_manifest(small_cohort)
        cfg = RunConfig()
        for bad in (-1, 21, 99):
            with pytest.raises(BadMapIndex):
                cmd_inspect(records, "S00", bad, small_cohort.parent / "weights.bin", cfg, tmp_path)

    def test_unknown_patient(self, small_cohort, tmp_path):
        records = load_manifest(small_cohort)
        with pytest.raises(UnknownPatient):
            cmd_inspect(records, "NOPE", 0, small_cohort.parent / "weights.bin", RunConfig(), tmp_path)


# --------------------------------------------------------------------------
# command-line entry point
# --------------------------------------------------------------------------

class TestMain:
    def test_full_cli_session(self, small_cohort, tmp_path, capsys):
        out = tmp_path / "run"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {"seed": 3, "grid": {"n_trees": [25], "min_leaf": [1]}, "feature_sets": ["R"]}
            )
        )
        weights = str(small_cohort.parent / "weights.bin")
        manifest = str(small_cohort)
        assert main(["extract", "--manifest", manifest, "--weights", weights,
                     "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["classify", "--features", str(out / "features.csv"), "--manifest", manifest,
                     "--target", "neutrophils", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["survive", "--features", str(out / "features.csv"), "--manifest", manifest,
                     "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["inspect", "--manifest", manifest, "--weights", weights, "--patient", "S00",
                     "--map", "0", "--config", str(cfg), "--out", str(out)]) == 0
        captured = capsys.readouterr()
        assert "extracted 5/5" in captured.out
        assert (out / "survival_report.csv").exists()

    def test_gen_weights_roundtrip(self, tmp_path):
        target = tmp_path / "w.bin"
        assert main(["gen-weights", "--seed", "42", "--out", str(target)]) == 0
        loaded = dr.load_weights(target)
        expected = dr.generate_test_weights(42)
        np.testing.assert_array_equal(loaded.conv1, expected.conv1.astype(np.float32))

    def test_partial_failure_exit_code(self, small_cohort, tmp_path):
        text = small_cohort.read_text().splitlines()
        text[1] = text[1].replace("S00_mask.vol.json", "gone.vol.json")
        broken = small_cohort.parent / "broken_main.csv"
        broken.write_text("\n".join(text) + "\n")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"grid": {"n_trees": [5], "min_leaf": [1]}, "feature_sets": ["R"]}))
        code = main(["extract", "--manifest", str(broken), "--weights",
                     str(small_cohort.parent / "weights.bin"), "--config", str(cfg),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_fatal_error_exit_code(self, tmp_path):
        code = main(["extract", "--manifest", str(tmp_path / "none.csv"),
                     "--weights", "w.bin", "--out", str(tmp_path)])
        assert code == 1
