"""
Base Record

Record types are described by a JSON field list stored next to their
controller (`<name>/<name>.json`). The base class applies defaults, coerces
field types and enforces required/select constraints before the controller's
own validate() runs.
"""

import json
import os
from functools import lru_cache

from medbounds.exceptions import ConfigError, throw


@lru_cache(maxsize=None)
def load_meta(record_dir):
    """
    Load the JSON field list of a record type.

    Args:
        record_dir: Directory holding `<basename>.json`

    Returns:
        dict: Parsed record definition
    """
    name = os.path.basename(record_dir)
    with open(os.path.join(record_dir, f"{name}.json"), encoding="utf-8") as f:
        return json.load(f)


def _coerce(field, value):
    fieldtype = field.get("fieldtype", "Data")
    if value is None:
        return None
    try:
        if fieldtype == "Float":
            return float(value)
        if fieldtype == "Int":
            return int(value)
        if fieldtype == "Check":
            return bool(value)
    except (TypeError, ValueError):
        throw(f"Field '{field['fieldname']}' expects {fieldtype}, got {value!r}", ConfigError)
    return value


class Record:
    """A typed record whose fields come from its JSON definition."""

    record_dir = None

    def __init__(self, **values):
        meta = self.meta()
        known = {f["fieldname"] for f in meta["fields"]}
        unknown = set(values) - known
        if unknown:
            throw(f"{meta['name']}: unknown field(s) {sorted(unknown)}", ConfigError)

        for field in meta["fields"]:
            name = field["fieldname"]
            value = values.get(name, field.get("default"))
            # JSON defaults are stored as literals; copy mutable ones
            if isinstance(value, (list, dict)):
                value = json.loads(json.dumps(value))
            setattr(self, name, _coerce(field, value))

        self._check_meta()
        self.validate()

    @classmethod
    def meta(cls):
        return load_meta(cls.record_dir)

    def _check_meta(self):
        for field in self.meta()["fields"]:
            name = field["fieldname"]
            value = getattr(self, name)
            if field.get("reqd") and value in (None, "", []):
                throw(f"{self.meta()['name']}: '{name}' is required", ConfigError)
            options = field.get("options")
            if field.get("fieldtype") == "Select" and options and value is not None:
                choices = options.split("\n")
                if value not in choices:
                    throw(f"{self.meta()['name']}: '{name}' must be one of {choices}", ConfigError)

    def validate(self):
        """Controller hook; subclasses add their own checks."""

    def as_dict(self):
        return {f["fieldname"]: getattr(self, f["fieldname"]) for f in self.meta()["fields"]}
