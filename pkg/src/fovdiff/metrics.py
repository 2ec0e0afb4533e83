"""Anatomical-consistency metrics and the SAT agreement report.

The subcutaneous-fat surrogate counts band-intensity pixels connected to
the body's outer boundary, so interior structures in the same band do not
inflate the measurement. Agreement between measurements on true,
truncated, and completed images is aggregated into truncation-severity
bins.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from .gridio import read_grid
from .phantom import load_manifest

__all__ = [
    "SatRecord",
    "BinAggregate",
    "AgreementReport",
    "sat_area",
    "region_error",
    "sample_moments",
    "compute_report",
    "report_to_json",
    "report_from_json",
    "records_to_csv",
    "records_from_csv",
    "evaluate_dataset",
    "render_report_svg",
]

DEFAULT_BIN_EDGES = (0.1, 0.2, 0.3)

_CROSS = ndimage.generate_binary_structure(2, 1)  # 4-neighborhood


def sat_area(
    image: np.ndarray,
    band: tuple[float, float],
    air_threshold: float = -0.5,
) -> float:
    """Area of band-intensity pixels connected to the body's outer boundary.

    Pixels below ``air_threshold`` count as air; the exterior is the air
    region touching the image border. Band pixels belong to the
    subcutaneous layer when their 4-connected component touches the first
    tissue layer adjacent to the exterior. Pixel area is 1.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"sat_area expects a 2-D image, got ndim={image.ndim}")
    low, high = band
    if not low < high:
        raise ValueError(f"band low must be below high, got {band}")

    in_band = (image >= low) & (image <= high)
    if not in_band.any():
        return 0.0

    air = image <= air_threshold
    air_labels, _ = ndimage.label(air, structure=_CROSS)
    border_ids = np.unique(
        np.concatenate(
            [air_labels[0, :], air_labels[-1, :], air_labels[:, 0], air_labels[:, -1]]
        )
    )
    border_ids = border_ids[border_ids > 0]
    exterior = np.isin(air_labels, border_ids)

    boundary = ndimage.binary_dilation(exterior, structure=_CROSS) & ~exterior
    components, _ = ndimage.label(in_band, structure=_CROSS)
    seed_ids = np.unique(components[boundary & in_band])
    seed_ids = seed_ids[seed_ids > 0]
    if seed_ids.size == 0:
        return 0.0
    return float(np.isin(components, seed_ids).sum())


def region_error(
    a: np.ndarray, b: np.ndarray, region: np.ndarray
) -> tuple[float, float]:
    """RMSE and MAE between two grids over the pixels where region is 1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    region = np.asarray(region)
    if not (a.shape == b.shape == region.shape):
        raise ValueError(
            f"shape mismatch: {a.shape}, {b.shape}, region {region.shape}"
        )
    sel = region > 0.5
    if not sel.any():
        raise ValueError("region is empty")
    diff = a[sel] - b[sel]
    rmse = float(np.sqrt(np.mean(diff**2)))
    mae = float(np.mean(np.abs(diff)))
    return rmse, mae


def sample_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased mean and spread of a collection of equally shaped grids.

    Returns per-element variance, except for two-element grids where the
    full 2x2 covariance matrix is returned instead.
    """
    arrays = [np.asarray(s, dtype=np.float64) for s in samples]
    if len(arrays) < 2:
        raise ValueError("need at least 2 samples")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("samples must share a shape")
    stack = np.stack(arrays)
    mean = stack.mean(axis=0)
    if arrays[0].size == 2:
        flat = stack.reshape(len(arrays), 2)
        return mean, np.cov(flat, rowvar=False, ddof=1)
    return mean, stack.var(axis=0, ddof=1)


@dataclass(frozen=True)
class SatRecord:
    """Per-sample SAT measurements on the three image versions."""

    sample_id: str
    tci: float
    sat_true: float
    sat_truncated: float
    sat_completed: float


@dataclass(frozen=True)
class BinAggregate:
    """Error summary over the records whose tci falls in [tci_low, tci_high).

    The last bin is closed on the right. Error fields are None when the
    bin is empty.
    """

    tci_low: float
    tci_high: float
    count: int
    truncated_mae: float | None
    truncated_mean_error: float | None
    completed_mae: float | None
    completed_mean_error: float | None


@dataclass(frozen=True)
class AgreementReport:
    records: tuple[SatRecord, ...]
    bin_edges: tuple[float, ...]
    bins: tuple[BinAggregate, ...]
    overall: BinAggregate
    missing: tuple[str, ...]


def _aggregate(records, lo: float, hi: float, closed_right: bool) -> BinAggregate:
    if closed_right:
        selected = [r for r in records if lo <= r.tci <= hi]
    else:
        selected = [r for r in records if lo <= r.tci < hi]
    if not selected:
        return BinAggregate(lo, hi, 0, None, None, None, None)
    n = len(selected)
    trunc = [r.sat_truncated - r.sat_true for r in selected]
    comp = [r.sat_completed - r.sat_true for r in selected]
    # fsum makes the aggregates independent of record order, exactly.
    return BinAggregate(
        tci_low=lo,
        tci_high=hi,
        count=n,
        truncated_mae=math.fsum(map(abs, trunc)) / n,
        truncated_mean_error=math.fsum(trunc) / n,
        completed_mae=math.fsum(map(abs, comp)) / n,
        completed_mean_error=math.fsum(comp) / n,
    )


def compute_report(
    records,
    bin_edges: tuple[float, ...] = DEFAULT_BIN_EDGES,
    missing=(),
) -> AgreementReport:
    """Bin records by truncation severity; bins partition [0, 1]."""
    records = tuple(sorted(records, key=lambda r: r.sample_id))
    edges = tuple(float(e) for e in bin_edges)
    if any(not 0.0 < e < 1.0 for e in edges) or list(edges) != sorted(set(edges)):
        raise ValueError(f"bin edges must be strictly increasing in (0, 1): {edges}")
    bounds = (0.0, *edges, 1.0)
    bins = tuple(
        _aggregate(records, bounds[i], bounds[i + 1], i == len(bounds) - 2)
        for i in range(len(bounds) - 1)
    )
    overall = _aggregate(records, 0.0, 1.0, True)
    return AgreementReport(
        records=records,
        bin_edges=edges,
        bins=bins,
        overall=overall,
        missing=tuple(sorted(missing)),
    )


def report_to_json(report: AgreementReport) -> str:
    doc = {
        "bin_edges": list(report.bin_edges),
        "missing": list(report.missing),
        "records": [asdict(r) for r in report.records],
        "bins": [asdict(b) for b in report.bins],
        "overall": asdict(report.overall),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def report_from_json(text: str) -> AgreementReport:
    doc = json.loads(text)
    return AgreementReport(
        records=tuple(SatRecord(**r) for r in doc["records"]),
        bin_edges=tuple(doc["bin_edges"]),
        bins=tuple(BinAggregate(**b) for b in doc["bins"]),
        overall=BinAggregate(**doc["overall"]),
        missing=tuple(doc["missing"]),
    )


_CSV_FIELDS = ("sample_id", "tci", "sat_true", "sat_truncated", "sat_completed")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for r in sorted(records, key=lambda r: r.sample_id):
        writer.writerow(
            [r.sample_id, repr(r.tci), repr(r.sat_true), repr(r.sat_truncated), repr(r.sat_completed)]
        )
    return buf.getvalue()


def records_from_csv(text: str) -> tuple[SatRecord, ...]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != _CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {header}")
    return tuple(
        SatRecord(
            sample_id=row[0],
            tci=float(row[1]),
            sat_true=float(row[2]),
            sat_truncated=float(row[3]),
            sat_completed=float(row[4]),
        )
        for row in reader
    )


def evaluate_dataset(
    dataset_dir,
    completed_dir,
    band: tuple[float, float] | None = None,
    bin_edges: tuple[float, ...] = DEFAULT_BIN_EDGES,
) -> AgreementReport:
    """Measure SAT agreement for every sample of a dataset split.

    Expects ``<id>_completed.difg`` files in completed_dir; samples whose
    completed image is missing are listed in the report and excluded from
    the aggregates.
    """
    dataset_dir = Path(dataset_dir)
    completed_dir = Path(completed_dir)
    manifest = load_manifest(dataset_dir)
    if band is None:
        band = tuple(manifest["fat_band"])

    records = []
    missing = []
    for entry in sorted(manifest["samples"], key=lambda s: s["id"]):
        sample_id = entry["id"]
        completed_path = completed_dir / f"{sample_id}_completed.difg"
        if not completed_path.exists():
            missing.append(sample_id)
            continue
        image = read_grid(dataset_dir / f"{sample_id}_image.difg")
        truncated = read_grid(dataset_dir / f"{sample_id}_truncated.difg")
        completed = read_grid(completed_path)
        records.append(
            SatRecord(
                sample_id=sample_id,
                tci=float(entry["tci"]),
                sat_true=sat_area(image, band),
                sat_truncated=sat_area(truncated, band),
                sat_completed=sat_area(completed, band),
            )
        )
    return compute_report(records, bin_edges=bin_edges, missing=missing)


def render_report_svg(report: AgreementReport, width: int = 640, height: int = 420) -> str:
    """Scatter of absolute SAT error against truncation severity.

    Text-emitted SVG with truncated-image errors as crosses, completed as
    dots, bin boundaries as dashed lines, and per-bin mean-error ticks.
    """
    margin = 54
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    xs = [r.tci for r in report.records]
    errs = [
        abs(r.sat_truncated - r.sat_true) for r in report.records
    ] + [abs(r.sat_completed - r.sat_true) for r in report.records]
    x_max = max([0.4, *xs]) * 1.05 if xs else 0.4
    y_max = max([1.0, *errs]) * 1.1 if errs else 1.0

    def px(x: float) -> float:
        return margin + plot_w * x / x_max

    def py(y: float) -> float:
        return height - margin - plot_h * y / y_max

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">tissue truncation index</text>',
        f'<text x="16" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {height / 2:.1f})">absolute SAT error</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv, yv = frac * x_max, frac * y_max
        parts.append(
            f'<text x="{px(xv):.1f}" y="{height - margin + 16}" text-anchor="middle" '
            f'font-size="10">{xv:.2f}</text>'
        )
        parts.append(
            f'<text x="{margin - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
            f'font-size="10">{yv:.1f}</text>'
        )
    for edge in report.bin_edges:
        if edge <= x_max:
            parts.append(
                f'<line x1="{px(edge):.1f}" y1="{margin}" x2="{px(edge):.1f}" '
                f'y2="{height - margin}" stroke="#999" stroke-dasharray="4 3"/>'
            )
    for r in report.records:
        cx = px(r.tci)
        ty = py(abs(r.sat_truncated - r.sat_true))
        parts.append(
            f'<path d="M {cx - 3:.1f} {ty - 3:.1f} l 6 6 m 0 -6 l -6 6" '
            f'stroke="#c0392b" stroke-width="1.2" fill="none"/>'
        )
        cy = py(abs(r.sat_completed - r.sat_true))
        parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="2.6" fill="#2471a3" '
            f'fill-opacity="0.75"/>'
        )
    for b in report.bins:
        if b.count == 0:
            continue
        mid = px((b.tci_low + min(b.tci_high, x_max)) / 2.0)
        for value, color in (
            (b.truncated_mae, "#c0392b"),
            (b.completed_mae, "#2471a3"),
        ):
            parts.append(
                f'<line x1="{mid - 10:.1f}" y1="{py(value):.1f}" x2="{mid + 10:.1f}" '
                f'y2="{py(value):.1f}" stroke="{color}" stroke-width="2.5"/>'
            )
    parts.append(
        f'<text x="{width - margin}" y="{margin - 8}" text-anchor="end" '
        f'font-size="11" fill="#c0392b">x truncated</text>'
    )
    parts.append(
        f'<text x="{width - margin - 90}" y="{margin - 8}" text-anchor="end" '
        f'font-size="11" fill="#2471a3">o completed</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)
