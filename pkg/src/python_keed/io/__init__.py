from python_keed.io.text import read_csv_record, read_result, write_csv_record, write_result
from python_keed.io.wfdb import (
    WfdbAnnotation,
    WfdbHeader,
    annotations_to_reference,
    encode_wfdb_annotations,
    parse_header,
    read_wfdb_annotations,
    read_wfdb_record,
    write_wfdb_record,
)

__all__ = [
    "WfdbAnnotation",
    "WfdbHeader",
    "annotations_to_reference",
    "encode_wfdb_annotations",
    "parse_header",
    "read_csv_record",
    "read_result",
    "read_wfdb_annotations",
    "read_wfdb_record",
    "write_csv_record",
    "write_result",
    "write_wfdb_record",
]
