"""
CSV and JSON writers for experiment output.

CSV rows are deterministic: floats are written with repr (shortest round-trip
form), booleans as true/false, missing values as empty cells and lines end in LF.
"""

import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Iterable, List, Optional

from src.core.constants import CSV_COLUMNS, OutputFormat
from src.core.exceptions import ConfigurationError
from src.models.schemas import ExperimentSummary, SolveReport, TrialRecord


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


class ExportService:
    def __init__(self, record_timing: bool = False):
        self.record_timing = record_timing

    def to_csv(self, records: Iterable[TrialRecord]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in records:
            row = []
            for column in CSV_COLUMNS:
                value = getattr(record, column)
                if column == "time_ms" and not self.record_timing:
                    value = None
                row.append(_csv_cell(value))
            writer.writerow(row)
        return buffer.getvalue()

    def to_json(
        self, records: List[TrialRecord], summary: Optional[ExperimentSummary] = None
    ) -> str:
        exclude = None if self.record_timing else {"time_ms"}
        payload = {
            "records": [r.model_dump(mode="json", exclude=exclude) for r in records],
            "summary": summary.model_dump(mode="json") if summary is not None else None,
        }
        return json.dumps(payload, indent=2) + "\n"

    def report_to_json(self, report: SolveReport) -> str:
        exclude = None if self.record_timing else {"solution": {"wall_time_s"}}
        return report.model_dump_json(indent=2, exclude=exclude) + "\n"

    def render(
        self,
        records: List[TrialRecord],
        fmt: OutputFormat,
        summary: Optional[ExperimentSummary] = None,
    ) -> str:
        if fmt == OutputFormat.CSV:
            return self.to_csv(records)
        if fmt == OutputFormat.JSON:
            return self.to_json(records, summary)
        raise ConfigurationError(f"unsupported output format {fmt}")

    @staticmethod
    def write(text: str, path: Optional[str] = None) -> None:
        """Write to path, or to stdout when no path is given."""
        if path is None:
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        target = Path(path)
        if target.parent and not target.parent.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="") as f:
            f.write(text)
