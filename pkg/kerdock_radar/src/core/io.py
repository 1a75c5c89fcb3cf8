"""
CSV and JSON readers and writers for waveforms, measurements, campaign
records and ROC tables
"""

import csv
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np

from .errors import DimensionError, WaveformError
from .models import FAMILY_TAGS, Measurement, RocCurve, TrialRecord, WaveformSet
from .waveforms import external_waveforms

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.csv"
DETECTIONS_FILE = "detections.csv"


def write_csv(filepath: str, headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Writes a header and rows to a CSV file, creating the parent directory"""
    Path(filepath).parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(headers)
        writer.writerows(rows)
    logger.info(f"Saved {filepath}")
    return filepath


def write_waveforms_csv(waveforms: WaveformSet, filepath: str) -> str:
    """
    Rows are time samples, two columns (real, imag) per waveform. The first
    row carries the p, n_tx and family_tag metadata.
    """
    Path(filepath).parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["p", waveforms.p, "n_tx", waveforms.n_tx, "family_tag", waveforms.family_tag])
        writer.writerow([f"s{k}_{part}" for k in range(waveforms.n_tx) for part in ("real", "imag")])
        for sample in waveforms.columns:
            writer.writerow([repr(float(v)) for value in sample for v in (value.real, value.imag)])
    return filepath


def read_waveforms_csv(filepath: str) -> WaveformSet:
    """Load a waveform file; the result is tagged external unless the file says otherwise"""
    with open(filepath, "r", newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 3:
        raise WaveformError(f"Waveform file {filepath} is too short")
    meta = dict(zip(rows[0][0::2], rows[0][1::2]))
    try:
        p = int(meta["p"])
        n_tx = int(meta["n_tx"])
    except (KeyError, ValueError) as e:
        raise WaveformError(f"Waveform file {filepath} has a malformed header row: {rows[0]}") from e
    family_tag = meta.get("family_tag", "external")
    values = np.asarray(rows[2:], dtype=float)
    if values.shape != (p, 2 * n_tx):
        raise DimensionError(f"Waveform file {filepath} holds {values.shape}, header says {(p, 2 * n_tx)}")
    columns = values[:, 0::2] + 1j * values[:, 1::2]
    loaded = external_waveforms(columns)
    if family_tag in FAMILY_TAGS and family_tag != "external":
        return WaveformSet(p=p, n_tx=n_tx, columns=np.array(loaded.columns), family_tag=family_tag)
    return loaded


def write_measurement_csv(measurement: Measurement, filepath: str) -> str:
    rows = ([i, repr(float(v.real)), repr(float(v.imag))] for i, v in enumerate(measurement.y))
    return write_csv(filepath, ["index", "real", "imag"], rows)


def write_records(records: List[TrialRecord], output_dir: str) -> Dict[str, str]:
    """records.csv (one row per trial) and detections.csv (nonzero lasso magnitudes)"""
    records = sorted(records, key=lambda r: r.trial)
    records_path = write_csv(
        os.path.join(output_dir, RECORDS_FILE),
        TrialRecord.CSV_FIELDS,
        (r.to_row() for r in records),
    )
    detection_rows = []
    for record in records:
        if record.magnitudes is None:
            continue
        for cell in np.flatnonzero(record.magnitudes):
            detection_rows.append([record.trial, int(cell), repr(float(record.magnitudes[cell]))])
    detections_path = write_csv(
        os.path.join(output_dir, DETECTIONS_FILE), ["trial", "cell", "magnitude"], detection_rows
    )
    return {"records": records_path, "detections": detections_path}


def read_records(records_path: str) -> List[TrialRecord]:
    """Load records.csv and attach magnitudes from the sibling detections.csv"""
    with open(records_path, "r", newline="") as f:
        records = [TrialRecord.from_row(row) for row in csv.DictReader(f)]
    detections_path = Path(records_path).with_name(DETECTIONS_FILE)
    if not detections_path.exists():
        logger.warning(f"No {DETECTIONS_FILE} next to {records_path}; magnitudes unavailable")
        return records

    by_trial = {r.trial: r for r in records}
    for record in records:
        if record.success:
            record.magnitudes = np.zeros(record.n_cells)
    with open(detections_path, "r", newline="") as f:
        for row in csv.DictReader(f):
            record = by_trial.get(int(row["trial"]))
            if record is not None and record.magnitudes is not None:
                record.magnitudes[int(row["cell"])] = float(row["magnitude"])
    return records


def write_roc(curve: RocCurve, filepath: str) -> str:
    rows = (
        [repr(float(t)), repr(float(pd)), repr(float(pfa))]
        for t, pd, pfa in zip(curve.thresholds, curve.pd, curve.pfa)
    )
    return write_csv(filepath, ["threshold", "pd", "pfa"], rows)


def write_roc_trials(rows: List[List[Any]], filepath: str) -> str:
    return write_csv(filepath, ["trial", "threshold", "pd", "pfa"], rows)
