"""Time series ingestion, standardization and tabular persistence."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from air_gsr.errors import DataError, DimensionMismatchError


TIMESTAMP_COLUMN = 'timestamp'


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """P x N observations: rows are instants, columns are nodes.

    Missing cells hold NaN in ``values`` and False in ``mask``; NaN is never read
    as data.

    Attributes:
        timestamps (pd.DatetimeIndex): Strictly increasing instants.
        node_ids (tuple[str, ...]): Column labels.
        values (np.ndarray): P x N readings.
        mask (np.ndarray): P x N booleans, True where present.
        row_index (np.ndarray): Row positions in the originally loaded matrix.
    """

    timestamps: pd.DatetimeIndex
    node_ids: Tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray = field(default=None)
    row_index: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatchError(f'Expected a P x N matrix, got shape {values.shape}')
        mask = ~np.isnan(values) if self.mask is None else np.array(self.mask, dtype=bool)
        timestamps = pd.DatetimeIndex(self.timestamps)
        node_ids = tuple(str(n) for n in self.node_ids)
        row_index = np.arange(values.shape[0]) if self.row_index is None else np.array(self.row_index, dtype=int)
        if mask.shape != values.shape or len(timestamps) != values.shape[0] or len(node_ids) != values.shape[1]:
            raise DimensionMismatchError(
                f'Inconsistent shapes: values {values.shape}, mask {mask.shape}, '
                f'{len(timestamps)} timestamps, {len(node_ids)} node ids')
        if len(set(node_ids)) != len(node_ids):
            raise DataError('Duplicate node ids')
        if len(timestamps) > 1 and not (np.diff(timestamps.asi8) > 0).all():
            raise DataError('Timestamps must be strictly increasing')
        values[~mask] = np.nan
        for name, a in (('values', values), ('mask', mask), ('row_index', row_index)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, 'timestamps', timestamps)
        object.__setattr__(self, 'node_ids', node_ids)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    def take_rows(self, rows) -> 'TimeSeriesMatrix':
        rows = np.asarray(rows, dtype=int)
        return TimeSeriesMatrix(self.timestamps[rows], self.node_ids, self.values[rows],
                                self.mask[rows], self.row_index[rows])

    def take_nodes(self, nodes) -> 'TimeSeriesMatrix':
        nodes = np.asarray(nodes, dtype=int)
        return TimeSeriesMatrix(self.timestamps, [self.node_ids[i] for i in nodes], self.values[:, nodes],
                                self.mask[:, nodes], self.row_index)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.node_ids))
        frame.insert(0, TIMESTAMP_COLUMN, self.timestamps)
        return frame


@dataclass(frozen=True)
class StandardizationParams:
    """Per-node means and standard deviations from a designated row subset."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        stds = np.array(self.stds, dtype=float)
        if means.shape != stds.shape or means.ndim != 1:
            raise DimensionMismatchError('Means and stds must be vectors of equal length')
        bad = np.flatnonzero(~(stds > 0))
        if bad.size:
            raise DataError(f'Zero-variance columns {bad.tolist()} cannot be standardized')
        means.setflags(write=False)
        stds.setflags(write=False)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'stds', stds)

    @property
    def n(self) -> int:
        return self.means.shape[0]

    def subset(self, nodes) -> 'StandardizationParams':
        nodes = np.asarray(nodes, dtype=int)
        return StandardizationParams(self.means[nodes], self.stds[nodes])

    def to_dict(self) -> dict:
        return {'means': self.means.tolist(), 'stds': self.stds.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> 'StandardizationParams':
        try:
            return cls(payload['means'], payload['stds'])
        except (KeyError, TypeError) as e:
            raise DataError(f'Malformed standardization document: {e}') from e


def load_csv(path) -> TimeSeriesMatrix:
    """Read a ``timestamp,<node>,<node>...`` CSV; empty cells become missing.

    Raises:
        DataError: Malformed cell (with line and column), duplicate node id,
            duplicate or decreasing timestamps.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, encoding='utf-8-sig')
    except pd.errors.EmptyDataError as e:
        raise DataError(f'{path} is empty') from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f'Cannot parse {path}: {e}') from e

    header = [str(h).strip() for h in raw.iloc[0].tolist()]
    if not header or header[0] != TIMESTAMP_COLUMN:
        raise DataError(f'First column must be "{TIMESTAMP_COLUMN}"', line=1, column=1)
    node_ids = header[1:]
    seen = set()
    for col, node in enumerate(node_ids, start=2):
        if node in seen or not node:
            raise DataError(f'Duplicate or empty node id "{node}"', line=1, column=col)
        seen.add(node)

    body = raw.iloc[1:].reset_index(drop=True)
    if body.empty:
        logger.warning(f'{path} has a header but no rows')
        return TimeSeriesMatrix(pd.DatetimeIndex([]), node_ids, np.empty((0, len(node_ids))))

    ragged = body.isna().to_numpy()
    if ragged.any():
        row, col = np.argwhere(ragged)[0]
        raise DataError('Row has fewer fields than the header', line=int(row) + 2, column=int(col) + 1)

    stamps = pd.to_datetime(body.iloc[:, 0].str.strip(), errors='coerce', format='ISO8601')
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if bad.size:
        raise DataError(f'Invalid timestamp "{body.iloc[bad[0], 0]}"', line=int(bad[0]) + 2, column=1)
    stamps = pd.DatetimeIndex(stamps)
    steps = np.diff(stamps.asi8)
    if (steps == 0).any():
        row = int(np.flatnonzero(steps == 0)[0]) + 1
        raise DataError(f'Duplicate timestamp {stamps[row]}', line=row + 2, column=1)
    if (steps < 0).any():
        row = int(np.flatnonzero(steps < 0)[0]) + 1
        raise DataError(f'Timestamps are not increasing at {stamps[row]}', line=row + 2, column=1)

    cells = body.iloc[:, 1:].apply(lambda c: c.str.strip())
    empty = (cells == '').to_numpy()
    values = cells.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    invalid = np.isnan(values) & ~empty
    if invalid.any():
        row, col = np.argwhere(invalid)[0]
        raise DataError(f'Invalid number "{cells.iat[row, col]}"', line=int(row) + 2, column=int(col) + 2)

    x = TimeSeriesMatrix(stamps, node_ids, values, ~empty)
    logger.info(f'Loaded {path}: P={x.p}, N={x.n}, {int((~x.mask).sum())} missing cells')
    return x


def save_csv(x: TimeSeriesMatrix, path):
    """Write ``x`` in the format read by :func:`load_csv`; floats round-trip exactly."""
    frame = x.to_frame()
    frame[TIMESTAMP_COLUMN] = [t.isoformat() for t in x.timestamps]
    frame.to_csv(path, index=False, na_rep='', float_format='%.17g', encoding='utf-8')


def complete_rows(x: TimeSeriesMatrix) -> TimeSeriesMatrix:
    """Listwise deletion: keep rows without missing cells."""
    keep = np.flatnonzero(x.mask.all(axis=1))
    if keep.size == 0:
        raise DataError('No complete rows')
    if keep.size < x.p:
        logger.debug(f'Dropped {x.p - keep.size} incomplete rows of {x.p}')
    return x.take_rows(keep)


def fit_standardization(values, rows: Optional[Sequence[int]] = None) -> StandardizationParams:
    """Column means and standard deviations (ddof=1) over ``rows`` only."""
    values = np.asarray(getattr(values, 'values', values), dtype=float)
    if rows is not None:
        values = values[np.asarray(rows, dtype=int)]
    if values.shape[0] < 2:
        raise DataError(f'Standardization needs at least 2 rows, got {values.shape[0]}')
    means = np.nanmean(values, axis=0)
    stds = np.nanstd(values, axis=0, ddof=1)
    return StandardizationParams(means, stds)


def standardize(values, params: StandardizationParams) -> np.ndarray:
    """``z = (v - mean) / std`` per column."""
    values = np.asarray(getattr(values, 'values', values), dtype=float)
    if values.shape[-1] != params.n:
        raise DimensionMismatchError(f'{values.shape[-1]} columns but {params.n} standardization entries')
    return (values - params.means) / params.stds


def unstandardize(z, params: StandardizationParams) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != params.n:
        raise DimensionMismatchError(f'{z.shape[-1]} columns but {params.n} standardization entries')
    return z * params.stds + params.means


def pooled_std(x) -> float:
    """Across-station spread: square root of the mean per-node variance."""
    values = np.asarray(getattr(x, 'values', x), dtype=float)
    return float(np.sqrt(np.nanmean(np.nanvar(values, axis=0, ddof=1))))


def summarize_dataset(x: TimeSeriesMatrix) -> dict:
    """Dataset summary: shape, period, mean concentration and pooled std."""
    return {
        'nodes': x.n,
        'samples': x.p,
        'complete_samples': int(x.mask.all(axis=1).sum()),
        'missing_cells': int((~x.mask).sum()),
        'period': [x.timestamps[0].isoformat(), x.timestamps[-1].isoformat()] if x.p else [],
        'mean': float(np.nanmean(x.values)) if x.mask.any() else None,
        'pooled_std': pooled_std(x) if x.p > 1 else None,
    }


def write_json(path, payload):
    """JSON output; Python floats serialize with round-trip precision."""
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default), encoding='utf-8')
    logger.debug(f'Wrote {path}')


def read_json(path) -> dict:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f'Invalid JSON {path}: {e}') from e


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f'{type(value).__name__} is not JSON serializable')
