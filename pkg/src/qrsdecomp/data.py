"""Loading, validation and stratification of observational data.

A :class:`Dataset` is the immutable, numpy-backed sample shared by every
estimator: outcome ``y``, participation ``s``, group label ``d``, instrument
``z1`` and covariate matrix ``x`` (intercept auto-prepended as column 0).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataError, ParseError, SchemaError


@dataclass(frozen=True)
class Schema:
    """Column mapping from an input CSV header to model roles."""

    outcome_col: str
    selection_col: str
    group_col: str
    instrument_col: str
    covariate_cols: tuple
    stratify_col: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariate_cols", tuple(self.covariate_cols))
        names = self.all_cols()
        if len(set(names)) != len(names):
            raise SchemaError("schema column names must be distinct: %r" % (names,))

    def all_cols(self):
        cols = [self.outcome_col, self.selection_col, self.group_col,
                self.instrument_col, *self.covariate_cols]
        if self.stratify_col is not None:
            cols.append(self.stratify_col)
        return cols


@dataclass(frozen=True)
class Observation:
    """One row of the sample; ``x`` includes the leading intercept."""

    y: float
    s: int
    d: int
    z1: float
    x: tuple


@dataclass(frozen=True)
class Dataset:
    """Immutable sample. ``x`` has shape (n, 1 + #covariates), column 0 is 1."""

    y: np.ndarray
    s: np.ndarray
    d: np.ndarray
    z1: np.ndarray
    x: np.ndarray
    schema: Schema
    strata: np.ndarray | None = field(default=None)

    def __post_init__(self):
        for name in ("y", "s", "d", "z1", "x"):
            getattr(self, name).setflags(write=False)
        if self.strata is not None:
            self.strata.setflags(write=False)
        if self.x.ndim != 2 or not np.all(self.x[:, 0] == 1.0):
            raise SchemaError("covariate matrix must carry the intercept in column 0")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def n_by_group(self):
        return int(np.sum(self.d == 0)), int(np.sum(self.d == 1))

    @property
    def k(self):
        return self.x.shape[1]

    @property
    def observations(self):
        return [Observation(float(self.y[i]), int(self.s[i]), int(self.d[i]),
                            float(self.z1[i]), tuple(self.x[i]))
                for i in range(self.n)]

    def group_mask(self, d):
        return self.d == d

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return Dataset(
            y=self.y[mask].copy(), s=self.s[mask].copy(), d=self.d[mask].copy(),
            z1=self.z1[mask].copy(), x=self.x[mask].copy(), schema=self.schema,
            strata=None if self.strata is None else self.strata[mask].copy(),
        )

    def two_group_problems(self):
        """Invariant violations that make a two-group analysis degenerate."""
        problems = []
        for d in (0, 1):
            m = self.d == d
            if not np.any(m):
                problems.append("group %d is empty" % d)
                continue
            if not np.any(self.s[m] == 1):
                problems.append("group %d has no participants (s=1)" % d)
            if not np.any(self.s[m] == 0):
                problems.append("group %d has no non-participants (s=0)" % d)
        return problems

    def write(self, path):
        """Write back to CSV at full float precision (round-trips exactly)."""
        sch = self.schema
        header = [sch.outcome_col, sch.selection_col, sch.group_col,
                  sch.instrument_col, *sch.covariate_cols]
        if sch.stratify_col is not None and self.strata is not None:
            header.append(sch.stratify_col)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                row = ["" if math.isnan(self.y[i]) else repr(float(self.y[i])),
                       int(self.s[i]), int(self.d[i]), repr(float(self.z1[i]))]
                row += [repr(float(v)) for v in self.x[i, 1:]]
                if sch.stratify_col is not None and self.strata is not None:
                    row.append(self.strata[i])
                w.writerow(row)


def _parse_cell(raw, col, row_idx):
    try:
        return float(raw)
    except ValueError:
        raise ParseError("non-numeric value %r in column %r at row %d"
                         % (raw, col, row_idx), row=row_idx) from None


def _parse_binary(raw, col, row_idx):
    v = _parse_cell(raw, col, row_idx)
    if v not in (0.0, 1.0):
        raise ParseError("column %r must be 0 or 1, got %r at row %d"
                         % (col, raw, row_idx), row=row_idx)
    return int(v)


def load_dataset(path, schema: Schema) -> Dataset:
    """Load a comma-separated file with a header row into a Dataset.

    The intercept is always prepended to the covariates; input files must
    not contain one. Row indices in parse errors are 1-based data rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError("file %s is empty" % path) from None
        header = [h.strip() for h in header]
        missing = [c for c in schema.all_cols() if c not in header]
        if missing:
            raise SchemaError("missing column(s) %s in %s" % (", ".join(missing), path))
        idx = {c: header.index(c) for c in schema.all_cols()}

        ys, ss, ds, z1s, xs, strata = [], [], [], [], [], []
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(c.strip() == "" for c in row):
                continue
            s = _parse_binary(row[idx[schema.selection_col]], schema.selection_col, row_idx)
            d = _parse_binary(row[idx[schema.group_col]], schema.group_col, row_idx)
            raw_y = row[idx[schema.outcome_col]].strip()
            if s == 1:
                y = _parse_cell(raw_y, schema.outcome_col, row_idx)
                if not math.isfinite(y):
                    raise ParseError("outcome must be finite when s=1 at row %d"
                                     % row_idx, row=row_idx)
            else:
                # Non-participant outcomes carry no information downstream.
                y = float("nan") if raw_y == "" else _parse_cell(
                    raw_y, schema.outcome_col, row_idx)
            z1 = _parse_cell(row[idx[schema.instrument_col]], schema.instrument_col, row_idx)
            xrow = [1.0] + [_parse_cell(row[idx[c]], c, row_idx)
                            for c in schema.covariate_cols]
            ys.append(y)
            ss.append(s)
            ds.append(d)
            z1s.append(z1)
            xs.append(xrow)
            if schema.stratify_col is not None:
                strata.append(row[idx[schema.stratify_col]].strip())

    if not ys:
        raise EmptyDataError("file %s has a header but no data rows" % path)
    return Dataset(
        y=np.asarray(ys), s=np.asarray(ss, dtype=np.int8),
        d=np.asarray(ds, dtype=np.int8), z1=np.asarray(z1s),
        x=np.asarray(xs), schema=schema,
        strata=np.asarray(strata, dtype=object) if strata else None,
    )


@dataclass(frozen=True)
class Stratum:
    """One stratum of a partition; ``problems`` non-empty means unusable."""

    dataset: Dataset
    problems: tuple

    @property
    def usable(self):
        return not self.problems


def stratify(ds: Dataset, col: str | None = None) -> dict:
    """Partition ``ds`` by its stratification column.

    Every row lands in exactly one stratum. Strata violating the two-group
    invariants are flagged (``usable=False``), never silently dropped.
    """
    if ds.strata is None:
        raise SchemaError("dataset has no stratification column loaded")
    if col is not None and col != ds.schema.stratify_col:
        raise SchemaError("dataset was loaded with stratify column %r, not %r"
                          % (ds.schema.stratify_col, col))
    out = {}
    for value in sorted(set(ds.strata)):
        sub = ds.subset(ds.strata == value)
        out[value] = Stratum(dataset=sub, problems=tuple(sub.two_group_problems()))
    return out


def from_arrays(y, s, d, z1, x_no_intercept, schema=None, strata=None) -> Dataset:
    """Assemble a Dataset from plain arrays (covariates without intercept)."""
    x_no_intercept = np.atleast_2d(np.asarray(x_no_intercept, dtype=float))
    if x_no_intercept.shape[0] != len(y):
        x_no_intercept = x_no_intercept.T
    n = len(y)
    if schema is None:
        schema = Schema(
            outcome_col="y", selection_col="s", group_col="d", instrument_col="z1",
            covariate_cols=tuple("x%d" % (j + 1) for j in range(x_no_intercept.shape[1])),
            stratify_col=None if strata is None else "stratum",
        )
    x = np.column_stack([np.ones(n), x_no_intercept])
    return Dataset(
        y=np.asarray(y, dtype=float), s=np.asarray(s, dtype=np.int8),
        d=np.asarray(d, dtype=np.int8), z1=np.asarray(z1, dtype=float),
        x=x, schema=schema,
        strata=None if strata is None else np.asarray(strata, dtype=object),
    )
