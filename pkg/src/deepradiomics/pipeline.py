"""End-to-end pipeline: extract features, classify, and analyse survival.

These functions back the CLI one-to-one but are importable on their own;
each writes its report files into an output directory and returns the
in-memory results.  All emitted CSV/JSON is canonical (floats via repr,
sorted JSON keys) so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cnn, gmm, volume
from .errors import (
    BadMapIndex,
    DegenerateLabels,
    ManifestInvalid,
    MissingColumn,
    RadiomicsError,
    ShapeMismatch,
    UnknownPatient,
    WeightsMissing,
)
from .forest import Dataset, EvalReport, loocv, roc_points
from .manifest import MODALITY_COLUMNS, TARGETS, PatientRecord, RunConfig
from .plots import histogram_svg, km_svg, write_pgm
from .survival import KmCurve, impute_censored, km_estimate, logrank_test, median_split

log = logging.getLogger("deepradiomics")


def thread_count() -> int:
    """Worker count for per-patient parallelism, capped by RADIOMICS_THREADS."""
    cap = os.environ.get("RADIOMICS_THREADS", "")
    if cap.strip():
        return max(1, int(cap))
    return min(8, os.cpu_count() or 1)


# --------------------------------------------------------------------------
# canonical serialization
# --------------------------------------------------------------------------

def csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(csv_cell(c) for c in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    return value


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# feature extraction
# --------------------------------------------------------------------------

def volume_features(
    vol_path, mask_path, weights: cnn.CnnWeights, k: int, seed: int
) -> gmm.FeatureVector:
    """Full single-volume pass: preprocess, run the network, fit mixtures."""
    acts = volume_activations(vol_path, mask_path, weights)
    return gmm.build_feature_vector(acts, k=k, seed=seed)


def volume_activations(vol_path, mask_path, weights: cnn.CnnWeights) -> cnn.ActivationSet:
    """Load, resample to 1 mm, standardise, crop to 64^3 and run the network."""
    vol = volume.load_volume(vol_path)
    mask_hdr = volume.read_header(mask_path)
    if tuple(mask_hdr["dims"]) != vol.dims:
        raise ShapeMismatch(
            f"mask dims {tuple(mask_hdr['dims'])} != volume dims {vol.dims}"
        )
    if not np.allclose(mask_hdr["spacing_mm"], vol.spacing, rtol=1e-9, atol=0):
        raise ShapeMismatch(
            f"mask spacing {mask_hdr['spacing_mm']} != volume spacing {list(vol.spacing)}"
        )
    mask = volume.load_mask(mask_path)

    iso = volume.resample_isotropic(vol, 1.0)
    iso_mask = volume.resample_mask(mask, vol.spacing, 1.0)
    std = volume.standardize_intensity(iso)
    input64, mask64 = volume.extract_cnn_input(std, iso_mask)
    return cnn.forward(input64, mask64, weights)


def patient_features(
    record: PatientRecord, weights: cnn.CnnWeights, config: RunConfig
) -> gmm.FeatureVector:
    """Per-modality feature vectors reduced to one vector per patient.

    Identical volume paths within a patient are computed once and reused.
    """
    cache: dict[str, gmm.FeatureVector] = {}
    vectors = []
    for col in MODALITY_COLUMNS:
        key = str(record.volumes[col])
        if key not in cache:
            cache[key] = volume_features(
                record.volumes[col], record.mask, weights, config.k, config.seed
            )
        vectors.append(cache[key])
    reduced = gmm.reduce_modalities(vectors, mode=config.modality_reduction)
    return gmm.FeatureVector(
        values=reduced.values,
        patient_id=record.patient_id,
        modality_reduction=reduced.modality_reduction,
    )


def feature_header(config: RunConfig) -> list[str]:
    if config.modality_reduction == "concat":
        names = []
        for col in MODALITY_COLUMNS:
            names += gmm.feature_names(config.k, prefix=f"{col}_")
        return names
    return gmm.feature_names(config.k)


@dataclass(frozen=True)
class ExtractResult:
    features_path: Path
    n_ok: int
    failures: tuple[tuple[str, str], ...]  # (patient_id, reason)


def cmd_extract(records, weights_path, config: RunConfig, out_dir) -> ExtractResult:
    """Compute the feature matrix for a cohort and write features.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wp = Path(weights_path)
    if not wp.exists():
        raise WeightsMissing(f"weights file not found: {wp}")
    weights = cnn.load_weights(wp)

    def one(record):
        try:
            return patient_features(record, weights, config), None
        except (RadiomicsError, ValueError) as e:
            return None, f"{type(e).__name__}: {e}"

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]

    rows = []
    failures = []
    for record, (fv, err) in zip(records, results):
        if fv is None:
            log.warning("skipping %s: %s", record.patient_id, err)
            failures.append((record.patient_id, err))
        else:
            rows.append([record.patient_id] + [float(v) for v in fv.values])

    features_path = out / "features.csv"
    write_csv(features_path, ["patient_id"] + feature_header(config), rows)
    return ExtractResult(
        features_path=features_path, n_ok=len(rows), failures=tuple(failures)
    )


def load_features_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Returns (patient_ids, column_names, matrix) from a features.csv."""
    p = Path(path)
    if not p.exists():
        raise ManifestInvalid(f"features file not found: {p}")
    lines = p.read_text().splitlines()
    if not lines or not lines[0].startswith("patient_id"):
        raise ManifestInvalid(f"{p}: not a feature matrix (missing header)")
    names = lines[0].split(",")[1:]
    ids, rows = [], []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        cells = ln.split(",")
        if len(cells) != len(names) + 1:
            raise ManifestInvalid(f"{p}: row for {cells[0]!r} has wrong column count")
        ids.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    matrix = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(names)))
    return ids, names, matrix


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------

def _target_values(records: list[PatientRecord], target: str) -> np.ndarray:
    if target == "m1":
        return np.array([r.macrophage_m1 for r in records])
    if target == "neutrophils":
        return np.array([r.neutrophils for r in records])
    if target == "tfh":
        return np.array([r.tfh for r in records])
    if target == "survival":
        times = np.array([r.os_months for r in records])
        events = np.array([r.event for r in records])
        return impute_censored(times, events)
    raise MissingColumn(f"unknown target {target!r}; valid: {', '.join(TARGETS)}")


def _design_matrix(
    feature_set: str, radiomic: np.ndarray, records: list[PatientRecord]
) -> np.ndarray:
    """Column-concatenated design matrix in canonical R, C, I block order."""
    blocks = []
    wanted = set(feature_set.split("+"))
    if "R" in wanted:
        blocks.append(radiomic)
    if "C" in wanted:
        blocks.append(np.array([[r.age, float(r.gender)] for r in records]))
    if "I" in wanted:
        blocks.append(np.array([list(r.immune()) for r in records]))
    return np.concatenate(blocks, axis=1)


def _aligned_records(ids, records) -> list[PatientRecord]:
    by_id = {r.patient_id: r for r in records}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ManifestInvalid(f"feature rows without manifest entries: {missing}")
    return [by_id[i] for i in ids]


def classify_feature_sets(
    features_path, records, target: str, config: RunConfig
) -> dict[str, EvalReport]:
    """LOOCV per configured feature set; returns reports keyed by set name."""
    if target not in TARGETS:
        raise MissingColumn(f"unknown target {target!r}; valid: {', '.join(TARGETS)}")
    ids, _, radiomic = load_features_csv(features_path)
    rows = _aligned_records(ids, records)
    if len(ids) < len(records):
        dropped = sorted(set(r.patient_id for r in records) - set(ids))
        log.warning("manifest patients absent from features.csv: %s", dropped)

    labels = median_split(_target_values(rows, target))
    if len(np.unique(labels)) < 2:
        raise DegenerateLabels(f"median split of {target} leaves a single class")

    reports = {}
    for fs in config.feature_sets:
        X = _design_matrix(fs, radiomic, rows)
        data = Dataset(ids=tuple(ids), X=X, y=labels)
        reports[fs] = loocv(data, config.grid, config.seed)
    return reports


def _report_json(report: EvalReport) -> dict:
    return {
        "auc": report.auc,
        "accuracy": report.accuracy,
        "confusion": report.confusion.tolist(),
        "scores": [[pid, score, label] for pid, score, label in report.per_patient_scores],
    }


def cmd_classify(
    features_path, records, target: str, config: RunConfig, out_dir
) -> dict[str, EvalReport]:
    """Write report_<target>_<set>.json and roc_<target>_<set>.csv per set."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = classify_feature_sets(features_path, records, target, config)
    for fs, report in reports.items():
        write_json(out / f"report_{target}_{fs}.json", _report_json(report))
        scores = [s for _, s, _ in report.per_patient_scores]
        labels = [l for _, _, l in report.per_patient_scores]
        write_csv(
            out / f"roc_{target}_{fs}.csv",
            ["fpr", "tpr"],
            [[float(a), float(b)] for a, b in roc_points(scores, labels)],
        )
    return reports


# --------------------------------------------------------------------------
# survival analysis of predicted groups
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SurvivalRow:
    feature_set: str
    median_short: float | None
    median_long: float | None
    hazard_ratio: float | None
    ci_low: float
    ci_high: float
    p_value: float | None
    auc: float


def _km_rows(curve: KmCurve):
    return [[s.time, s.at_risk, s.deaths, s.survival] for s in curve.steps]


def cmd_survive(features_path, records, config: RunConfig, out_dir) -> list[SurvivalRow]:
    """KM/log-rank analysis of RF-predicted survival groups per feature set.

    Runs the survival-target LOOCV (writing the same reports cmd_classify
    would), splits patients into predicted short/long groups at score 0.5,
    and compares the groups' observed survival.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = cmd_classify(features_path, records, "survival", config, out)

    ids, _, _ = load_features_csv(features_path)
    rows = _aligned_records(ids, records)
    times = np.array([r.os_months for r in rows])
    events = np.array([r.event for r in rows])

    table: list[SurvivalRow] = []
    for fs, report in reports.items():
        scores = np.array([s for _, s, _ in report.per_patient_scores])
        predicted_long = scores >= 0.5
        nan = float("nan")
        if predicted_long.all() or (~predicted_long).all():
            log.warning("feature set %s: all patients predicted in one group", fs)
            row = SurvivalRow(fs, None, None, None, nan, nan, None, report.auc)
            write_json(
                out / f"logrank_{fs}.json",
                {
                    "chi2": None,
                    "p": None,
                    "hr": None,
                    "ci_low": None,
                    "ci_high": None,
                    "median_short": None,
                    "median_long": None,
                },
            )
        else:
            short = ~predicted_long
            result = logrank_test(
                times[short], events[short], times[predicted_long], events[predicted_long]
            )
            km_short = km_estimate(times[short], events[short])
            km_long = km_estimate(times[predicted_long], events[predicted_long])
            write_csv(
                out / f"km_short_{fs}.csv",
                ["time", "at_risk", "deaths", "survival"],
                _km_rows(km_short),
            )
            write_csv(
                out / f"km_long_{fs}.csv",
                ["time", "at_risk", "deaths", "survival"],
                _km_rows(km_long),
            )
            (out / f"km_{fs}.svg").write_text(
                km_svg(
                    [
                        ("predicted short", list(km_short.steps)),
                        ("predicted long", list(km_long.steps)),
                    ],
                    f"Predicted survival groups ({fs})",
                )
            )
            write_json(
                out / f"logrank_{fs}.json",
                {
                    "chi2": _jsonable(result.chi2),
                    "p": _jsonable(result.p_value),
                    "hr": _jsonable(result.hazard_ratio),
                    "ci_low": _jsonable(result.ci95[0]),
                    "ci_high": _jsonable(result.ci95[1]),
                    "median_short": result.group_medians[0],
                    "median_long": result.group_medians[1],
                },
            )
            row = SurvivalRow(
                feature_set=fs,
                median_short=result.group_medians[0],
                median_long=result.group_medians[1],
                hazard_ratio=result.hazard_ratio,
                ci_low=result.ci95[0],
                ci_high=result.ci95[1],
                p_value=result.p_value,
                auc=report.auc,
            )
        table.append(row)

    def cell(v):
        return float("nan") if v is None else float(v)

    write_csv(
        out / "survival_report.csv",
        ["feature_set", "median_short", "median_long", "hr", "ci_low", "ci_high", "p_value", "auc"],
        [
            [
                r.feature_set,
                cell(r.median_short),
                cell(r.median_long),
                cell(r.hazard_ratio),
                cell(r.ci_low),
                cell(r.ci_high),
                cell(r.p_value),
                float(r.auc),
            ]
            for r in table
        ],
    )
    return table


# --------------------------------------------------------------------------
# single-map inspection
# --------------------------------------------------------------------------

def cmd_inspect(
    records,
    patient_id: str,
    map_index: int,
    weights_path,
    config: RunConfig,
    out_dir,
    modality: str = "t1ce",
) -> tuple[Path, Path]:
    """Histogram + fitted mixture (SVG) and central axial slice (PGM)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = next((r for r in records if r.patient_id == patient_id), None)
    if record is None:
        raise UnknownPatient(f"patient {patient_id!r} not in manifest")
    if not isinstance(map_index, int) or not (0 <= map_index < cnn.N_MAPS):
        raise BadMapIndex(f"map index must be in [0, {cnn.N_MAPS - 1}], got {map_index}")
    if modality not in MODALITY_COLUMNS:
        raise MissingColumn(f"modality must be one of {MODALITY_COLUMNS}, got {modality!r}")
    wp = Path(weights_path)
    if not wp.exists():
        raise WeightsMissing(f"weights file not found: {wp}")
    weights = cnn.load_weights(wp)

    acts = volume_activations(record.volumes[modality], record.mask, weights)
    vol, mask = acts.maps_with_masks()[map_index]
    samples = gmm.collect_samples(vol, mask)
    counts, edges = np.histogram(samples, bins=64)
    fit = gmm.em_fit(samples, config.k, config.seed)
    xs = np.linspace(edges[0], edges[-1], 256)
    bin_w = edges[1] - edges[0]
    curve = fit.density(xs) * samples.size * bin_w

    svg_path = out / f"inspect_{patient_id}_map{map_index:02d}.svg"
    svg_path.write_text(
        histogram_svg(
            counts,
            edges,
            list(xs),
            list(curve),
            f"{patient_id} map {map_index} ({modality}) in-ROI histogram",
        )
    )
    nz = vol.dims[2]
    pgm_path = out / f"slice_{patient_id}_map{map_index:02d}.pgm"
    write_pgm(pgm_path, np.asarray(vol.data)[:, :, nz // 2].T)
    return svg_path, pgm_path
