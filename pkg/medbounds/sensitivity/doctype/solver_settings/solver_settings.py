"""
Solver Settings Record Controller

Numeric defaults for fitting, LP solving, the alternating solver and
subsampling. A run config may override any field.
"""

import os

from medbounds.exceptions import ConfigError, throw
from medbounds.sensitivity.doctype.base_record import Record


class SolverSettings(Record):
    """Tolerances and limits shared by every module."""

    record_dir = os.path.dirname(os.path.abspath(__file__))

    def validate(self):
        """Validate settings before use."""
        if not 0.0 < self.clip_floor < 0.5:
            throw("clip_floor must lie in (0, 0.5)", ConfigError)

        positive = (
            "irls_tolerance", "rank_tolerance", "lp_feasibility_tolerance",
            "lp_optimality_tolerance", "lp_equality_tolerance",
            "lp_pivot_tolerance", "sweep_tolerance",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                throw(f"{name} must be positive", ConfigError)

        for name in ("irls_max_iterations", "lp_max_iterations", "max_sweeps", "starts", "scout_sweeps"):
            if getattr(self, name) < 1:
                throw(f"{name} must be at least 1", ConfigError)

        if self.lp_dantzig_steps < 0:
            throw("lp_dantzig_steps must be nonnegative", ConfigError)
        if not 0.0 <= self.max_failed_share < 1.0:
            throw("max_failed_share must lie in [0, 1)", ConfigError)
        if self.threads == 0:
            throw("threads must be nonzero (-1 for all cores)", ConfigError)

    def replace(self, **overrides):
        """Return a copy with some fields overridden."""
        values = self.as_dict()
        values.update(overrides)
        return SolverSettings(**values)


_DEFAULTS = None


def get_settings(overrides=None):
    """
    Get solver settings.

    Args:
        overrides: Optional dict of field values

    Returns:
        SolverSettings: process defaults, or a copy with overrides applied
    """
    global _DEFAULTS
    if _DEFAULTS is None:
        _DEFAULTS = SolverSettings()
    if overrides:
        return _DEFAULTS.replace(**overrides)
    return _DEFAULTS
