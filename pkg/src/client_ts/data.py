"""Dataset ingestion, scaling, chronological splitting, sliding windows,
and the input-masking transform used by the robustness experiment.

Benchmark CSVs are expected in the standard layout: a header row, an
optional leading "date" column, then one float column per variable
(Electricity 321, Traffic 862, Weather 21, ETT 7, Exchange 8, ILI 7).
A deterministic synthetic fixture with the same layout backs the tests.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

SPLIT_PROFILES = ("ett_hourly", "ett_minute", "ratio")

# 12/4/4 months of 30 days at the dataset cadence
_ETT_BORDERS = {
    "ett_hourly": (12 * 30 * 24, 4 * 30 * 24, 4 * 30 * 24),
    "ett_minute": (12 * 30 * 24 * 4, 4 * 30 * 24 * 4, 4 * 30 * 24 * 4),
}


@dataclass
class MultivariateSeries:
    """A named multivariate series: values is (N, C) row-major."""

    names: list
    values: np.ndarray
    timestamps: list | None = None

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_variables(self):
        return self.values.shape[1]


def load_csv(path):
    """Parse a benchmark CSV into a MultivariateSeries.

    First row is the header; a leading column whose (stripped, lowercased)
    name is "date" is split off as timestamps. Every other cell must parse
    as a finite float; failures report 1-based (row, column) coordinates.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header:
            raise DataError(f"{path}: empty header row")
        has_date = header[0].strip().lower() == "date"
        names = [h.strip() for h in (header[1:] if has_date else header)]
        if not names:
            raise DataError(f"{path}: no variable columns")

        timestamps = [] if has_date else None
        rows = []
        width = len(header)
        for r, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != width:
                raise DataError(
                    f"{path}: row {r} has {len(cells)} cells, expected {width}")
            if has_date:
                timestamps.append(cells[0])
                cells = cells[1:]
            parsed = np.empty(len(cells))
            for c, cell in enumerate(cells):
                try:
                    parsed[c] = float(cell)
                except ValueError:
                    col = c + (2 if has_date else 1)
                    raise DataError(
                        f"{path}: unparseable cell {cell!r} at row {r}, "
                        f"column {col}") from None
            if not np.all(np.isfinite(parsed)):
                bad = int(np.flatnonzero(~np.isfinite(parsed))[0])
                col = bad + (2 if has_date else 1)
                raise DataError(
                    f"{path}: non-finite value at row {r}, column {col}")
            rows.append(parsed)

    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(rows)}")
    return MultivariateSeries(names=names, values=np.vstack(rows),
                              timestamps=timestamps)


class ZScoreScaler:
    """Per-variable standardization fitted on the train split only
    (population std, clamped below by eps)."""

    def __init__(self, eps=1e-8):
        self.eps = eps
        self.mean = None
        self.std = None

    def fit(self, values):
        values = np.asarray(values, dtype=np.float64)
        self.mean = values.mean(axis=0)
        self.std = np.maximum(values.std(axis=0), self.eps)
        return self

    def transform(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def chrono_split(series, profile, lookback, ratios=(0.7, 0.1, 0.2)):
    """Contiguous chronological (train, val, test) value arrays.

    ETT profiles use fixed 12/4/4-month row borders; "ratio" splits by row
    count. Val and test are prefixed with the final `lookback` rows of the
    preceding segment so their first forecastable window aligns with the
    segment boundary.
    """
    values = series.values if isinstance(series, MultivariateSeries) else np.asarray(series)
    n = values.shape[0]
    if profile in _ETT_BORDERS:
        n_train, n_val, n_test = _ETT_BORDERS[profile]
        if n < n_train + n_val + n_test:
            raise DataError(
                f"series of {n} rows is too short for the {profile} borders "
                f"{_ETT_BORDERS[profile]}")
    elif profile == "ratio":
        n_train = int(n * ratios[0])
        n_test = int(n * ratios[2])
        n_val = n - n_train - n_test
    else:
        raise DataError(f"unknown split profile {profile!r}; expected one of {SPLIT_PROFILES}")

    b1 = n_train
    b2 = n_train + n_val
    b3 = n_train + n_val + n_test
    train = values[:b1]
    val = values[max(0, b1 - lookback):b2]
    test = values[max(0, b2 - lookback):b3]
    for name, seg in (("train", train), ("val", val), ("test", test)):
        if seg.shape[0] <= lookback:
            raise DataError(
                f"{name} split has {seg.shape[0]} rows, not enough for "
                f"lookback {lookback}")
    return train, val, test


@dataclass
class WindowedDataset:
    """Sliding (lookback, horizon) pairs over one split, in ascending start
    order. Window s yields input rows [s, s+L) and target rows [s+L, s+L+T).
    Shuffling is the trainer's job."""

    values: np.ndarray
    lookback: int
    horizon: int
    starts: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.values.shape[0]
        count = n - self.lookback - self.horizon + 1
        if count < 1:
            raise DataError(
                f"split of {n} rows cannot fit lookback {self.lookback} + "
                f"horizon {self.horizon}")
        self.starts = np.arange(count)

    def __len__(self):
        return len(self.starts)

    def __getitem__(self, i):
        s = int(self.starts[i])
        L, T = self.lookback, self.horizon
        return self.values[s:s + L], self.values[s + L:s + L + T]

    @property
    def n_variables(self):
        return self.values.shape[1]

    def batches(self, batch_size, order=None):
        """Yield (inputs (B,L,C), targets (B,T,C)); the incomplete final
        batch is kept."""
        idx = np.arange(len(self)) if order is None else np.asarray(order)
        for lo in range(0, len(idx), batch_size):
            chunk = idx[lo:lo + batch_size]
            xs = np.stack([self[i][0] for i in chunk])
            ys = np.stack([self[i][1] for i in chunk])
            yield xs, ys


def make_windows(split_values, lookback, horizon):
    return WindowedDataset(np.asarray(split_values, dtype=np.float64),
                           lookback, horizon)


def prepare_windows(series, profile, lookback, horizon, ratios=(0.7, 0.1, 0.2)):
    """Full ingestion pipeline: chronological split, z-score scaler fitted
    on the raw train segment only, then sliding windows per split.

    Returns (scaler, train_windows, val_windows, test_windows).
    """
    train, val, test = chrono_split(series, profile, lookback, ratios)
    scaler = ZScoreScaler().fit(train)
    return scaler, tuple(
        make_windows(scaler.transform(seg), lookback, horizon)
        for seg in (train, val, test))


def mask_series(x, fraction, rng):
    """Independently zero each element of x with probability `fraction`
    under the given generator. Bitwise reproducible for a fixed generator
    state; the target is never masked."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"mask fraction must be in [0, 1], got {fraction}")
    x = np.asarray(x, dtype=np.float64)
    if fraction == 0.0:
        return x.copy()
    keep = rng.random(size=x.shape) >= fraction
    return x * keep


# ---------------------------------------------------------------------------
# synthetic fixture


FIXTURE_NAMES = ["v0", "v1", "v2", "v3", "v4", "noise", "dup0"]


def synthetic_fixture(n_rows=1600, seed=7):
    """Deterministic 7-variable test series with cross-variable structure.

    v0 is a multi-periodic driver with trend; v1..v3 are lagged/scaled
    responses to it plus small independent noise; v4 is an AR(1) process;
    "noise" is white; "dup0" duplicates v0 exactly (used by the correlation
    checks).
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    t = np.arange(n_rows, dtype=np.float64)
    v0 = (np.sin(2 * math.pi * t / 24) + 0.5 * np.sin(2 * math.pi * t / 96)
          + 0.001 * t)
    lagged = lambda lag: np.concatenate([np.full(lag, v0[0]), v0[:-lag]])
    v1 = 0.8 * lagged(3) + 0.05 * rng.standard_normal(n_rows)
    v2 = -0.6 * lagged(7) + 0.3 + 0.05 * rng.standard_normal(n_rows)
    v3 = 0.5 * v0 + 0.3 * np.sin(2 * math.pi * t / 48) + 0.05 * rng.standard_normal(n_rows)
    v4 = np.empty(n_rows)
    v4[0] = 0.0
    eps = 0.1 * rng.standard_normal(n_rows)
    for i in range(1, n_rows):
        v4[i] = 0.9 * v4[i - 1] + eps[i]
    noise = rng.standard_normal(n_rows)
    values = np.column_stack([v0, v1, v2, v3, v4, noise, v0])
    timestamps = [f"2020-01-01 {i:05d}" for i in range(n_rows)]
    return MultivariateSeries(names=list(FIXTURE_NAMES), values=values,
                              timestamps=timestamps)


def write_csv(series, path, float_fmt="%.17g"):
    """Write a MultivariateSeries in the benchmark CSV layout (with a date
    column when timestamps exist)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        has_date = series.timestamps is not None
        writer.writerow((["date"] if has_date else []) + list(series.names))
        for i in range(series.n_rows):
            row = [float_fmt % v for v in series.values[i]]
            if has_date:
                row = [series.timestamps[i]] + row
            writer.writerow(row)
