"""Plain-text record files and the delineation result document."""

import json
from typing import Any, Dict

from python_keed.core import DelineationResult, IntervalDelineation, KeypointEstimate, KeypointKind, TimeSeriesRecord
from python_keed.errors import DataError
from python_keed.utils import str_to_json


def read_csv_record(text: str, fs: float, record_id: str = "record", lead: str = "") -> TimeSeriesRecord:
    """Parse one numeric value per line, optionally written as ``index,value``.

    Args:
        text: File contents
        fs: Sampling rate in Hz
        record_id: Provenance label for the record
        lead: Lead name

    Returns:
        The parsed record.
    """
    values = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) > 2:
            raise DataError(f"Line {number}: expected a value or 'index,value', got {line!r}")
        try:
            if len(fields) == 2:
                int(fields[0])
            values.append(float(fields[-1]))
        except ValueError as err:
            raise DataError(f"Line {number}: not numeric: {line!r}") from err
    if not values:
        raise DataError("CSV record is empty")
    return TimeSeriesRecord(values, fs, record_id=record_id, lead=lead)


def write_csv_record(record: TimeSeriesRecord) -> str:
    return "".join(f"{value!r}\n" for value in record.samples.tolist())


def result_to_dict(result: DelineationResult) -> Dict[str, Any]:
    return {
        "record_id": result.record_id,
        "fs": result.fs,
        "intervals": [
            {
                "r_start": interval.r_start,
                "r_end": interval.r_end,
                "keypoints": {
                    KeypointKind(kind).name: {
                        "present": estimate.present,
                        "location": estimate.location,
                        "confidence": estimate.confidence,
                    }
                    for kind, estimate in sorted(interval.keypoints.items())
                },
            }
            for interval in result.intervals
        ],
    }


def result_from_dict(document: Any) -> DelineationResult:
    try:
        intervals = []
        for item in document["intervals"]:
            keypoints = {}
            for name, estimate in item["keypoints"].items():
                if name not in KeypointKind.__members__:
                    raise DataError(f"Unknown keypoint kind {name!r}")
                keypoints[KeypointKind[name]] = KeypointEstimate(
                    present=bool(estimate["present"]),
                    location=int(estimate["location"]),
                    confidence=float(estimate["confidence"]),
                )
            intervals.append(IntervalDelineation(int(item["r_start"]), int(item["r_end"]), keypoints))
        return DelineationResult(str(document["record_id"]), float(document["fs"]), tuple(intervals))
    except (KeyError, TypeError) as err:
        raise DataError(f"Malformed delineation document: {err!r}") from err


def write_result(result: DelineationResult) -> str:
    return json.dumps(result_to_dict(result), indent=2) + "\n"


def read_result(text: str) -> DelineationResult:
    try:
        document = str_to_json(text)
    except Exception as err:
        raise DataError(f"Delineation document does not parse: {err}") from err
    return result_from_dict(document)
