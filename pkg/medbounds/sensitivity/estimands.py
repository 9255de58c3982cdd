"""
Estimands

Names of the four mean potential outcomes and the five effects built from
them. Every effect is the difference first - second of two targets.
"""

# target -> (treatment arm whose rows are used, label)
TARGETS = {
    "y11": (1, "E[Y(1,M(1))]"),
    "y00": (0, "E[Y(0,M(0))]"),
    "y10": (1, "E[Y(1,M(0))]"),
    "y01": (0, "E[Y(0,M(1))]"),
}

# effect -> (minuend target, subtrahend target, label, sharp)
EFFECTS = {
    "ate": ("y11", "y00", "Delta", True),
    "theta1": ("y11", "y01", "theta(1)", True),
    "theta0": ("y10", "y00", "theta(0)", True),
    "delta1": ("y11", "y10", "delta(1)", False),
    "delta0": ("y01", "y00", "delta(0)", False),
}


def target_arm(target):
    return TARGETS[target][0]


def difference(values, effect):
    """Point value of an effect from a dict of target values."""
    first, second = EFFECTS[effect][:2]
    return values[first] - values[second]


def interval_difference(intervals, effect):
    """
    Interval of first - second from (lower, upper) target intervals.

    Lower uses the first's lower and the second's upper bound, and vice versa.
    """
    first, second = EFFECTS[effect][:2]
    lower = intervals[first][0] - intervals[second][1]
    upper = intervals[first][1] - intervals[second][0]
    return lower, upper
