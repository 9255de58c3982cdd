"""
medbounds Hooks

Hooks are configuration points resolved by dotted path at runtime.
This file defines app metadata, the LP backends and the relaxation rules.
"""

app_name = "medbounds"
app_title = "Mediation Bounds"
app_publisher = "medbounds developers"
app_description = "Entropy-ball bounds on natural direct and indirect effects"
app_license = "MIT"

# LP Backends
# -----------
# Every backend takes a LinearProgram and returns an LpSolution.
lp_backends = {
    "simplex": "medbounds.sensitivity.lpcore.solve",
    "highs": "medbounds.sensitivity.lpcore.solve_highs",
}

# Relaxation Rules
# ----------------
# Rule kind -> budget builder. Predictor-drop rules are X1..X3 / M1..M3.
relaxation_rules = {
    "drop": "medbounds.sensitivity.calibration.calibrate_by_predictor_drop",
    "probit": "medbounds.sensitivity.calibration.calibrate_by_link_swap",
}

# Report Writers
# --------------
# Output kind -> writer; each receives (report dict, path).
report_writers = {
    "json": "medbounds.sensitivity.report.write_json",
    "tables": "medbounds.sensitivity.report.write_tables",
    "csv": "medbounds.sensitivity.report.write_csv",
}


def resolve(path):
    """
    Import and return the object named by a dotted hook path.

    Args:
        path: "package.module.attribute"

    Returns:
        The resolved attribute
    """
    import importlib

    module_name, _, attr = path.rpartition(".")
    return getattr(importlib.import_module(module_name), attr)


def get_hook(group, key):
    """Resolve one entry of a hook group (e.g. lp_backends["highs"])."""
    from medbounds.exceptions import ConfigError, throw

    table = globals().get(group)
    if not isinstance(table, dict) or key not in table:
        throw(f"Unknown {group} entry: {key}", ConfigError)
    return resolve(table[key])
