"""medbounds - bounds on natural direct and indirect effects under relaxed IPW assumptions"""

import logging

__version__ = "0.1.0"
MAJOR_VERSION = 0


def logger(name=None):
    """Return the package logger, or a child of it for `name`."""
    base = logging.getLogger("medbounds")
    return base.getChild(name) if name else base
