"""
Analysis Sample

Loads, validates and indexes (Y, D, M, X, S) records. Only empty cells count
as missing; any other missing-value code must be recoded before loading.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from medbounds import logger
from medbounds.exceptions import (
    ConfigError,
    DataError,
    DimensionOverflow,
    EmptyArm,
    MissingColumn,
    MissingValues,
    NonBinarySelection,
    NonBinaryTreatment,
    OutcomeMissingWhileSelected,
    throw,
)

log = logger("dataset")

# Conditioning sets of the three propensity models
CONDITIONING_SETS = ("X", "MX", "DMX")


@dataclass(frozen=True)
class VariableRoles:
    """Column names for each role. Mediators and covariates keep their order."""

    outcome: str
    treatment: str
    selection: str
    mediators: tuple = ()
    covariates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mediators", tuple(self.mediators))
        object.__setattr__(self, "covariates", tuple(self.covariates))

        names = self.all_columns()
        if len(set(names)) != len(names):
            seen, dup = set(), []
            for name in names:
                if name in seen:
                    dup.append(name)
                seen.add(name)
            throw(f"Variable roles overlap: {sorted(set(dup))}", ConfigError)

    def all_columns(self):
        return [self.outcome, self.treatment, self.selection, *self.mediators, *self.covariates]

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                outcome=data["outcome"],
                treatment=data["treatment"],
                selection=data["selection"],
                mediators=data.get("mediators", ()),
                covariates=data.get("covariates", ()),
            )
        except KeyError as e:
            throw(f"Variable roles missing key {e}", ConfigError)

    def as_dict(self):
        return {
            "outcome": self.outcome,
            "treatment": self.treatment,
            "selection": self.selection,
            "mediators": list(self.mediators),
            "covariates": list(self.covariates),
        }


@dataclass(frozen=True)
class LoadOptions:
    """Ingestion options for delimited files."""

    delimiter: str = ","
    listwise_deletion: bool = False


@dataclass(frozen=True, eq=False)
class AnalysisSample:
    """A validated sample. Arrays are read-only after construction."""

    roles: VariableRoles
    y: np.ndarray
    d: np.ndarray
    s: np.ndarray
    m: np.ndarray
    x: np.ndarray
    dropped_rows: int = 0
    row_ids: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("y", "d", "s", "m", "x"):
            getattr(self, name).setflags(write=False)
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(self.n))

    @property
    def n(self):
        return self.d.shape[0]

    @property
    def subpop_masks(self):
        """Membership flags for {D=1,S=1} and {D=0,S=1}, keyed by arm."""
        selected = self.s == 1
        return {1: selected & (self.d == 1), 0: selected & (self.d == 0)}

    def arm_mask(self, arm):
        return self.subpop_masks[arm]

    @classmethod
    def from_frame(cls, frame, roles, options=None):
        """
        Validate a data frame against the roles and build a sample.

        Args:
            frame: pandas DataFrame with every role column
            roles: VariableRoles
            options: LoadOptions (listwise deletion of incomplete M/X rows)

        Returns:
            AnalysisSample
        """
        options = options or LoadOptions()

        missing = [c for c in roles.all_columns() if c not in frame.columns]
        if missing:
            throw(f"Column(s) not found in data: {missing}", MissingColumn)

        frame = frame[roles.all_columns()].copy()
        for column in frame.columns:
            try:
                frame[column] = pd.to_numeric(frame[column])
            except (TypeError, ValueError):
                throw(f"Column '{column}' is not numeric", DataError)

        # Missing D, S, M or X: hard error unless listwise deletion is on
        required = [roles.treatment, roles.selection, *roles.mediators, *roles.covariates]
        incomplete = frame[required].isna().any(axis=1)
        dropped = int(incomplete.sum())
        if dropped:
            if not options.listwise_deletion:
                throw(f"{dropped} row(s) have missing treatment/selection/mediator/covariate values", MissingValues)
            log.warning(f"Dataset: listwise deletion dropped {dropped} row(s)")
            frame = frame.loc[~incomplete]

        d = frame[roles.treatment].to_numpy(dtype=float)
        s = frame[roles.selection].to_numpy(dtype=float)
        if not np.isin(d, (0.0, 1.0)).all():
            throw(f"Treatment column '{roles.treatment}' must contain only 0/1", NonBinaryTreatment)
        if not np.isin(s, (0.0, 1.0)).all():
            throw(f"Selection column '{roles.selection}' must contain only 0/1", NonBinarySelection)

        y = frame[roles.outcome].to_numpy(dtype=float)
        bad_outcome = (s == 1) & ~np.isfinite(y)
        if bad_outcome.any():
            throw(f"{int(bad_outcome.sum())} selected row(s) have a missing or non-finite outcome",
                  OutcomeMissingWhileSelected)

        sample = cls(
            roles=roles,
            y=y,
            d=d.astype(np.int8),
            s=s.astype(np.int8),
            m=frame[list(roles.mediators)].to_numpy(dtype=float).reshape(len(frame), -1),
            x=frame[list(roles.covariates)].to_numpy(dtype=float).reshape(len(frame), -1),
            dropped_rows=dropped,
            row_ids=frame.index.to_numpy(),
        )
        sample.check_arms()
        return sample

    def check_arms(self):
        """Both arms, and both selected arms, must be non-empty."""
        if self.n < 2:
            throw(f"Sample has {self.n} row(s); at least 2 required", EmptyArm)
        for arm in (1, 0):
            if not (self.d == arm).any():
                throw(f"Treatment arm D={arm} is empty", EmptyArm)
            if not self.arm_mask(arm).any():
                throw(f"Subpopulation D={arm}, S=1 is empty", EmptyArm)

    def take(self, indices):
        """Subsample rows (no validation beyond arm checks)."""
        indices = np.asarray(indices)
        sample = AnalysisSample(
            roles=self.roles,
            y=self.y[indices].copy(),
            d=self.d[indices].copy(),
            s=self.s[indices].copy(),
            m=self.m[indices].copy(),
            x=self.x[indices].copy(),
            row_ids=self.row_ids[indices].copy(),
        )
        sample.check_arms()
        return sample

    def to_frame(self):
        roles = self.roles
        data = {roles.outcome: self.y, roles.treatment: self.d, roles.selection: self.s}
        for j, name in enumerate(roles.mediators):
            data[name] = self.m[:, j]
        for j, name in enumerate(roles.covariates):
            data[name] = self.x[:, j]
        return pd.DataFrame(data)[roles.all_columns()]

    def summary(self):
        masks = self.subpop_masks
        return {
            "n": self.n,
            "treated": int((self.d == 1).sum()),
            "controls": int((self.d == 0).sum()),
            "selected_treated": int(masks[1].sum()),
            "selected_controls": int(masks[0].sum()),
            "mediators": len(self.roles.mediators),
            "covariates": len(self.roles.covariates),
            "dropped_rows": self.dropped_rows,
        }


def load_sample(path, roles, options=None):
    """
    Read a delimited file and validate it into an AnalysisSample.

    Args:
        path: Delimited text file with a header row (UTF-8, '.' decimals)
        roles: VariableRoles
        options: LoadOptions

    Returns:
        AnalysisSample
    """
    options = options or LoadOptions()
    try:
        frame = pd.read_csv(
            path,
            sep=options.delimiter,
            encoding="utf-8",
            decimal=".",
            keep_default_na=False,
            na_values=[""],
        )
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        throw(f"Failed to read data file {path}: {e}", DataError)

    sample = AnalysisSample.from_frame(frame, roles, options)
    log.info(f"Dataset: loaded {sample.n} rows from {path}")
    return sample


def write_sample(sample, path, delimiter=","):
    """Write a sample back to disk; missing outcomes become empty cells."""
    sample.to_frame().to_csv(path, sep=delimiter, index=False, na_rep="")


@dataclass(frozen=True)
class DesignMatrix:
    """Intercept-first design with column names and the constant columns dropped."""

    values: np.ndarray
    columns: tuple
    dropped: tuple = ()

    @property
    def shape(self):
        return self.values.shape

    def index_of(self, name):
        return self.columns.index(name)

    def without(self, column_group):
        """Design with the given column indices removed."""
        keep = [j for j in range(len(self.columns)) if j not in set(column_group)]
        return DesignMatrix(
            values=self.values[:, keep],
            columns=tuple(self.columns[j] for j in keep),
            dropped=self.dropped,
        )


def design_matrix(sample, spec):
    """
    Build the design for one of the conditioning sets {X}, {M,X}, {D,M,X}.

    Column order is intercept, D (if present), M in role order, X in role
    order. Constant non-intercept columns are dropped with a warning.

    Args:
        sample: AnalysisSample
        spec: "X", "MX" or "DMX"

    Returns:
        DesignMatrix
    """
    if spec not in CONDITIONING_SETS:
        throw(f"Unknown conditioning set '{spec}'", ConfigError)

    roles = sample.roles
    blocks, names = [], []
    if "D" in spec:
        blocks.append(sample.d.reshape(-1, 1).astype(float))
        names.append(roles.treatment)
    if "M" in spec:
        blocks.append(sample.m)
        names.extend(roles.mediators)
    blocks.append(sample.x)
    names.extend(roles.covariates)

    body = np.hstack(blocks) if blocks else np.empty((sample.n, 0))
    constant = np.ptp(body, axis=0) == 0 if body.shape[1] else np.zeros(0, dtype=bool)
    dropped = tuple(name for name, flag in zip(names, constant) if flag)
    if dropped:
        log.warning(f"Dataset: dropped constant column(s) {list(dropped)} from the {spec} design")
        body = body[:, ~constant]
        names = [name for name, flag in zip(names, constant) if not flag]

    k = body.shape[1]
    if k >= sample.n:
        throw(f"{k} regressors for {sample.n} rows in the {spec} design", DimensionOverflow)

    values = np.hstack([np.ones((sample.n, 1)), body])
    return DesignMatrix(values=values, columns=("(Intercept)", *names), dropped=dropped)
