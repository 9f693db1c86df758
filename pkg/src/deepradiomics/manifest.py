"""Cohort manifest CSV and run configuration JSON.

The manifest has one row per patient with paths to the four MRI volumes
and the ROI mask plus clinical and immune-marker columns.  Paths are
resolved relative to the manifest file.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestInvalid
from .volume import volume_exists

MANIFEST_COLUMNS = (
    "patient_id",
    "t1wi",
    "t1ce",
    "t2wi",
    "flair",
    "mask",
    "age",
    "gender",
    "os_months",
    "event",
    "macrophage_m1",
    "neutrophils",
    "tfh",
)

MODALITY_COLUMNS = ("t1wi", "t1ce", "t2wi", "flair")

FEATURE_SETS = ("R", "C", "I", "I+C", "R+C", "R+I", "R+C+I")

TARGETS = ("m1", "neutrophils", "tfh", "survival")


@dataclass(frozen=True)
class PatientRecord:
    """One manifest row: imaging paths plus clinical/immune variables."""

    patient_id: str
    volumes: dict  # modality column -> resolved Path
    mask: Path
    age: float
    gender: int
    os_months: float
    event: int
    macrophage_m1: float
    neutrophils: float
    tfh: float

    def immune(self) -> tuple[float, float, float]:
        return (self.macrophage_m1, self.neutrophils, self.tfh)

    def clinical(self) -> tuple[float, float]:
        return (self.age, float(self.gender))


def _parse_float(row, col, problems, lo=None, hi=None):
    try:
        v = float(row[col])
    except ValueError:
        problems.append(f"{row['patient_id']}: {col}={row[col]!r} is not a number")
        return 0.0
    if not math.isfinite(v):
        problems.append(f"{row['patient_id']}: {col} must be finite")
    elif lo is not None and not (lo <= v <= (hi if hi is not None else math.inf)):
        problems.append(f"{row['patient_id']}: {col}={v} outside [{lo}, {hi}]")
    return v


def load_manifest(path, check_files: bool = True) -> list[PatientRecord]:
    """Parse and validate a cohort manifest CSV."""
    p = Path(path)
    if not p.exists():
        raise ManifestInvalid(f"manifest not found: {p}")
    base = p.parent
    problems: list[str] = []
    records: list[PatientRecord] = []
    seen: set[str] = set()

    with open(p, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestInvalid(f"{p}: empty manifest") from None
        if tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise ManifestInvalid(
                f"{p}: header must be exactly {','.join(MANIFEST_COLUMNS)}"
            )
        for line_no, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(MANIFEST_COLUMNS):
                problems.append(f"line {line_no}: expected {len(MANIFEST_COLUMNS)} columns")
                continue
            row = dict(zip(MANIFEST_COLUMNS, (c.strip() for c in raw)))
            pid = row["patient_id"]
            if not pid or "," in pid:
                problems.append(f"line {line_no}: bad patient_id {pid!r}")
                continue
            if pid in seen:
                problems.append(f"{pid}: duplicate patient_id")
                continue
            seen.add(pid)

            volumes = {}
            for col in MODALITY_COLUMNS + ("mask",):
                fp = base / row[col]
                if check_files and not volume_exists(fp):
                    problems.append(f"{pid}: {col} file missing: {fp}")
                if col != "mask":
                    volumes[col] = fp
            age = _parse_float(row, "age", problems, 0.0, 150.0)
            gender = _parse_float(row, "gender", problems)
            if gender not in (0.0, 1.0):
                problems.append(f"{pid}: gender must be 0 or 1, got {row['gender']}")
            os_months = _parse_float(row, "os_months", problems)
            if os_months <= 0:
                problems.append(f"{pid}: os_months must be > 0")
            event = _parse_float(row, "event", problems)
            if event not in (0.0, 1.0):
                problems.append(f"{pid}: event must be 0 or 1, got {row['event']}")
            m1 = _parse_float(row, "macrophage_m1", problems, 0.0, 1.0)
            neut = _parse_float(row, "neutrophils", problems, 0.0, 1.0)
            tfh = _parse_float(row, "tfh", problems, 0.0, 1.0)

            records.append(
                PatientRecord(
                    patient_id=pid,
                    volumes=volumes,
                    mask=base / row["mask"],
                    age=age,
                    gender=int(gender),
                    os_months=os_months,
                    event=int(event),
                    macrophage_m1=m1,
                    neutrophils=neut,
                    tfh=tfh,
                )
            )

    if not records:
        problems.append(f"{p}: no patient rows")
    if problems:
        raise ManifestInvalid("; ".join(problems))
    return records


@dataclass
class RunConfig:
    """Pipeline configuration with the defaults used throughout."""

    k: int = 2
    seed: int = 0
    grid: dict = field(
        default_factory=lambda: {"n_trees": [100, 300, 500], "min_leaf": [1, 3, 5]}
    )
    modality_reduction: str = "mean"
    feature_sets: tuple[str, ...] = FEATURE_SETS
    output_dir: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ManifestInvalid(f"config: k must be >= 1, got {self.k}")
        if self.seed < 0:
            raise ManifestInvalid(f"config: seed must be >= 0, got {self.seed}")
        if self.modality_reduction not in ("mean", "concat"):
            raise ManifestInvalid(
                f"config: modality_reduction must be 'mean' or 'concat', got {self.modality_reduction!r}"
            )
        if not self.feature_sets:
            raise ManifestInvalid("config: feature_sets must be nonempty")
        for fs in self.feature_sets:
            if fs not in FEATURE_SETS:
                raise ManifestInvalid(
                    f"config: unknown feature set {fs!r}; valid: {', '.join(FEATURE_SETS)}"
                )
        if not isinstance(self.grid, dict) or not self.grid.get("n_trees") or not self.grid.get("min_leaf"):
            raise ManifestInvalid("config: grid needs nonempty n_trees and min_leaf lists")


def load_config(path=None) -> RunConfig:
    """Read a RunConfig from JSON; None gives the defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ManifestInvalid(f"config not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except ValueError as e:
        raise ManifestInvalid(f"{p}: bad JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ManifestInvalid(f"{p}: config must be a JSON object")
    kwargs = {}
    for key in ("k", "seed", "grid", "modality_reduction", "output_dir"):
        if key in raw:
            kwargs[key] = raw[key]
    if "feature_sets" in raw:
        kwargs["feature_sets"] = tuple(raw["feature_sets"])
    unknown = set(raw) - {"k", "seed", "grid", "modality_reduction", "output_dir", "feature_sets"}
    if unknown:
        raise ManifestInvalid(f"{p}: unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**kwargs)
    except TypeError as e:
        raise ManifestInvalid(f"{p}: {e}") from e
