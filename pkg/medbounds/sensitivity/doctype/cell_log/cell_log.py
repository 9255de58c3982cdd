"""
Cell Log Record Controller

Logs each relaxation-cell execution with timing and results.
"""

import os
from datetime import datetime

from medbounds.sensitivity.doctype.base_record import Record


class CellLog(Record):
    """Log entry for one cell execution."""

    record_dir = os.path.dirname(os.path.abspath(__file__))

    def complete(self, status, error=None, diagnostics=None):
        """Mark the log as complete with results."""
        self.completed_at = datetime.now()
        self.status = status
        self.duration_seconds = (self.completed_at - self.started_at).total_seconds()
        if error is not None:
            self.error_type = type(error).__name__
            self.error_message = str(error)
        if diagnostics:
            self.diagnostics = dict(diagnostics)
        self._check_meta()

    def as_dict(self):
        record = super().as_dict()
        for name in ("started_at", "completed_at"):
            if record[name] is not None:
                record[name] = record[name].isoformat(timespec="seconds")
        return record


def create_cell_log(cell):
    """Create a new cell log entry in Running state."""
    return CellLog(cell=cell, status="Running", started_at=datetime.now())
