"""Trial/historical data containers, CSV ingestion, imputation, design matrices.

All containers are immutable after construction (arrays are marked read-only),
so they can be shared freely across parallel simulation workers.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# Column role tags used in design-matrix layouts. Covariate tags carry the
# column name ("x:age"); interaction tags mirror their base column.
INTERCEPT = "intercept"
TREATMENT = "treatment"
SCORE = "score"
TREAT_X_SCORE = "treatment*score"


def covariate_tag(name: str) -> str:
    return f"x:{name}"


def interaction_tag(name: str) -> str:
    return f"treatment*x:{name}"


class CsvParseError(ValueError):
    """Malformed cell or missing column in an input CSV."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrialDataset:
    """A two-arm trial: covariates X (may contain NaN until imputed),
    binary treatment W, and outcome Y for n subjects."""

    covariates: np.ndarray  # (n, p), NaN marks a missing cell
    treatment: np.ndarray  # (n,) of {0, 1}
    outcome: np.ndarray  # (n,)
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        x = _readonly(np.asarray(self.covariates, dtype=float))
        w = _readonly(np.asarray(self.treatment, dtype=int))
        y = _readonly(np.asarray(self.outcome, dtype=float))
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "treatment", w)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        n = y.shape[0]
        if x.ndim != 2 or x.shape[0] != n or w.shape != (n,):
            raise ValueError("covariates, treatment, and outcome lengths disagree")
        if len(self.covariate_names) != x.shape[1]:
            raise ValueError("covariate_names length does not match covariates")
        if not np.isin(w, (0, 1)).all():
            raise ValueError("treatment entries must be exactly 0 or 1")
        if np.isnan(y).any():
            raise ValueError("outcome contains missing values")
        if n < 4:
            raise ValueError(f"need at least 4 subjects, got {n}")
        if self.n1 < 2:
            raise ValueError("treatment arm empty or too small (need >= 2)")
        if self.n0 < 2:
            raise ValueError("control arm empty or too small (need >= 2)")

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n1(self) -> int:
        return int(self.treatment.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def pi1_hat(self) -> float:
        return self.n1 / self.n

    def has_missing(self) -> bool:
        return bool(np.isnan(self.covariates).any())

    def imputed(self, means: np.ndarray | None = None) -> "TrialDataset":
        """Copy with missing covariate cells replaced by column means
        (the trial's own means unless `means` is supplied)."""
        if not self.has_missing() and means is None:
            return self
        filled, _ = impute_column_means(self.covariates, means)
        return TrialDataset(filled, self.treatment, self.outcome, self.covariate_names)


@dataclass(frozen=True)
class HistoricalDataset:
    """Historical controls: covariates X' and outcome Y' for n' subjects."""

    covariates: np.ndarray  # (n', p), NaN marks a missing cell
    outcome: np.ndarray  # (n',)
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        x = _readonly(np.asarray(self.covariates, dtype=float))
        y = _readonly(np.asarray(self.outcome, dtype=float))
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("covariates and outcome lengths disagree")
        if len(self.covariate_names) != x.shape[1]:
            raise ValueError("covariate_names length does not match covariates")
        if y.shape[0] < 2:
            raise ValueError("need at least 2 historical observations")
        if np.isnan(y).any():
            raise ValueError("historical outcome contains missing values")

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]


@dataclass(frozen=True)
class DesignMatrix:
    """Regression design: first column is the intercept, base columns are
    empirically centered, interaction columns are products of the centered
    treatment and centered base columns."""

    columns: np.ndarray  # (n, q)
    layout: tuple[str, ...]
    centering_means: np.ndarray  # (q,) means subtracted per column (0 where none)

    def __post_init__(self):
        object.__setattr__(self, "columns", _readonly(np.asarray(self.columns, dtype=float)))
        object.__setattr__(self, "layout", tuple(self.layout))
        object.__setattr__(
            self, "centering_means", _readonly(np.asarray(self.centering_means, dtype=float))
        )
        if self.columns.shape[1] != len(self.layout):
            raise ValueError("layout length does not match column count")

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def q(self) -> int:
        return self.columns.shape[1]

    def index(self, tag: str) -> int:
        try:
            return self.layout.index(tag)
        except ValueError:
            raise KeyError(f"no column tagged {tag!r} in design") from None


def impute_column_means(
    matrix: np.ndarray, means: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Replace NaN cells by the supplied column means, or by the observed
    column means when none are given. Returns (filled matrix, means used)
    so trial-time imputation can reuse training-time means."""
    x = np.array(matrix, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if means is None:
        observed = ~np.isnan(x)
        empty = ~observed.any(axis=0)
        if empty.any():
            cols = np.nonzero(empty)[0].tolist()
            raise ValueError(f"cannot impute columns with no observed values: {cols}")
        with np.errstate(invalid="ignore"):
            means = np.nanmean(x, axis=0)
    else:
        means = np.asarray(means, dtype=float)
        if means.shape != (x.shape[1],):
            raise ValueError("means length does not match column count")
    rows, cols = np.nonzero(np.isnan(x))
    x[rows, cols] = means[cols]
    return x, np.asarray(means, dtype=float)


def build_design(
    trial: TrialDataset,
    scores: np.ndarray | None = None,
    include_covariates: bool = True,
    include_interactions: bool = True,
) -> DesignMatrix:
    """Assemble the centered regression design for `trial`.

    Columns are [1, W~] then, per flags, the centered covariates, the centered
    prognostic score, and the interactions of centered treatment with each
    centered base column. Centering always uses the trial sample means.
    """
    n = trial.n
    if scores is not None:
        scores = np.asarray(scores, dtype=float).reshape(-1)
        if scores.shape[0] != n:
            raise ValueError(f"scores length {scores.shape[0]} != n {n}")
        if np.isnan(scores).any():
            raise ValueError("scores contain missing values")

    cols = [np.ones(n)]
    means = [0.0]
    layout = [INTERCEPT]

    w = trial.treatment.astype(float)
    w_mean = w.mean()
    w_c = w - w_mean
    cols.append(w_c)
    means.append(w_mean)
    layout.append(TREATMENT)

    base_c: list[np.ndarray] = []
    base_tags: list[str] = []
    if include_covariates and trial.p > 0:
        x = trial.covariates
        if np.isnan(x).any():
            raise ValueError("covariates contain missing values; impute first")
        x_means = x.mean(axis=0)
        x_c = x - x_means
        for j, name in enumerate(trial.covariate_names):
            cols.append(x_c[:, j])
            means.append(float(x_means[j]))
            layout.append(covariate_tag(name))
            base_c.append(x_c[:, j])
            base_tags.append(interaction_tag(name))
    if scores is not None:
        m_mean = scores.mean()
        m_c = scores - m_mean
        cols.append(m_c)
        means.append(float(m_mean))
        layout.append(SCORE)
        base_c.append(m_c)
        base_tags.append(TREAT_X_SCORE)

    if include_interactions:
        for col, tag in zip(base_c, base_tags):
            cols.append(w_c * col)
            means.append(0.0)
            layout.append(tag)

    design = DesignMatrix(np.column_stack(cols), tuple(layout), np.array(means))
    centered = design.columns[:, 1 : 2 + len(base_c)]
    if centered.size and np.abs(centered.mean(axis=0)).max() > 1e-10:
        raise AssertionError("centering failed to zero the base-column means")
    return design


def _parse_cell(raw: str, row: int, col: str) -> float:
    text = raw.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise CsvParseError(f"row {row}, column {col!r}: cannot parse {raw!r} as a number") from None


def _read_table(path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for i, record in enumerate(reader, start=2):  # 1-based, row 1 is the header
            if not record or all(c.strip() == "" for c in record):
                continue
            if len(record) != len(header):
                raise CsvParseError(f"row {i}: expected {len(header)} cells, got {len(record)}")
            rows.append([_parse_cell(c, i, header[j]) for j, c in enumerate(record)])
    return header, rows


def load_trial_csv(path, outcome_col: str, treatment_col: str) -> TrialDataset:
    """Read a trial CSV (UTF-8, header row, '.' decimals, empty cell = missing).

    Every column other than `outcome_col` and `treatment_col` becomes a
    covariate, in file order. Rows with a missing outcome or treatment are
    dropped with a logged count; missing covariate cells stay NaN for later
    imputation.
    """
    header, rows = _read_table(path)
    for col in (outcome_col, treatment_col):
        if col not in header:
            raise CsvParseError(f"{path}: no column named {col!r}")
    y_idx = header.index(outcome_col)
    w_idx = header.index(treatment_col)
    cov_idx = [j for j in range(len(header)) if j not in (y_idx, w_idx)]
    names = tuple(header[j] for j in cov_idx)

    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    keep = ~(np.isnan(data[:, y_idx]) | np.isnan(data[:, w_idx]))
    dropped = int((~keep).sum())
    if dropped:
        logger.info("dropped %d row(s) with missing outcome or treatment", dropped)
    data = data[keep]

    w = data[:, w_idx]
    bad = ~np.isin(w, (0.0, 1.0))
    if bad.any():
        raise CsvParseError(
            f"treatment column {treatment_col!r} contains values other than 0/1: "
            f"{sorted(set(w[bad].tolist()))}"
        )
    return TrialDataset(data[:, cov_idx], w.astype(int), data[:, y_idx], names)


def load_historical_csv(path, outcome_col: str) -> HistoricalDataset:
    """Read a historical-control CSV; all non-outcome columns are covariates.
    Rows with a missing outcome are dropped with a logged count."""
    header, rows = _read_table(path)
    if outcome_col not in header:
        raise CsvParseError(f"{path}: no column named {outcome_col!r}")
    y_idx = header.index(outcome_col)
    cov_idx = [j for j in range(len(header)) if j != y_idx]
    names = tuple(header[j] for j in cov_idx)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    keep = ~np.isnan(data[:, y_idx])
    dropped = int((~keep).sum())
    if dropped:
        logger.info("dropped %d historical row(s) with missing outcome", dropped)
    data = data[keep]
    return HistoricalDataset(data[:, cov_idx], data[:, y_idx], names)


def write_trial_csv(
    trial: TrialDataset, path, outcome_col: str = "outcome", treatment_col: str = "treatment"
) -> None:
    """Write a TrialDataset back to CSV. Floats are written with repr so a
    reload reproduces the dataset bit for bit."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(trial.covariate_names) + [treatment_col, outcome_col])
        for i in range(trial.n):
            row = [("" if np.isnan(v) else repr(float(v))) for v in trial.covariates[i]]
            row.append(str(int(trial.treatment[i])))
            row.append(repr(float(trial.outcome[i])))
            writer.writerow(row)
