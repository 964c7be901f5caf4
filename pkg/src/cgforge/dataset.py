"""Categorical datasets: CSV ingestion, column removal, discretization and
bootstrap resampling.

A :class:`Dataset` stores every variable as a row of small integer state
indices in a ``(n_vars, n_rows)`` array, so that a single variable's column is
contiguous in memory.  Labels live on the :class:`Variable` and are only
needed at the boundaries (ingestion, export).
"""

from __future__ import annotations

import csv
import io
import os
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CsvParseError,
    DiscretizationError,
    EmptyDatasetError,
    EncodingError,
    UnknownColumnError,
    ValidationError,
)

logger = logging.getLogger(__name__)

MISSING_VALUES = frozenset({""})


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]
    tier: int = 1

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if len(set(self.states)) != len(self.states):
            raise ValidationError(f"variable {self.name!r} has duplicate state labels")
        if self.tier < 1:
            raise ValidationError(f"variable {self.name!r} has tier {self.tier} < 1")

    @property
    def arity(self) -> int:
        return len(self.states)


class Dataset:
    """Immutable table of categorical observations.

    ``codes[i, n]`` is the state index of variable ``i`` in row ``n``.
    """

    __slots__ = ("variables", "codes", "_index")

    def __init__(self, variables: Sequence[Variable], codes: np.ndarray):
        variables = tuple(variables)
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[0] != len(variables):
            codes = codes.reshape(len(variables), -1)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate variable names")
        for i, var in enumerate(variables):
            col = codes[i]
            if col.size and (col.min() < 0 or col.max() >= var.arity):
                raise ValidationError(f"state index out of range for variable {var.name!r}")
        codes = np.ascontiguousarray(codes, dtype=_code_dtype(variables))
        codes.flags.writeable = False
        self.variables = variables
        self.codes = codes
        self._index = {name: i for i, name in enumerate(names)}

    @property
    def row_count(self) -> int:
        return self.codes.shape[1]

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(v.arity for v in self.variables)

    @property
    def tiers(self) -> dict[int, int]:
        return {i: v.tier for i, v in enumerate(self.variables)}

    def __len__(self) -> int:
        return self.row_count

    def __repr__(self) -> str:
        return f"Dataset({len(self.variables)} variables, {self.row_count} rows)"

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownColumnError([name]) from None

    def column(self, name: str) -> np.ndarray:
        return self.codes[self.index(name)]

    def decode(self, name: str) -> list[str]:
        var = self.variables[self.index(name)]
        states = np.asarray(var.states, dtype=object)
        return states[self.column(name)].tolist()

    def rows(self) -> Iterable[tuple[str, ...]]:
        decoded = [self.decode(v.name) for v in self.variables]
        return zip(*decoded)

    def replace_variable(self, name: str, variable: Variable, codes: np.ndarray) -> Dataset:
        i = self.index(name)
        if len(codes) != self.row_count:
            raise ValidationError("replacement column has the wrong length")
        variables = list(self.variables)
        variables[i] = variable
        new_codes = self.codes.astype(np.int64)
        new_codes[i] = codes
        return Dataset(variables, new_codes)

    def with_tiers(self, tiers: Mapping[str, int]) -> Dataset:
        unknown = set(tiers) - set(self._index)
        if unknown:
            raise UnknownColumnError(unknown)
        variables = [replace(v, tier=tiers.get(v.name, v.tier)) for v in self.variables]
        return Dataset(variables, self.codes)

    def take(self, rows: np.ndarray) -> Dataset:
        return Dataset(self.variables, self.codes[:, rows])


def _code_dtype(variables: Sequence[Variable]):
    top = max((v.arity for v in variables), default=1)
    if top <= np.iinfo(np.uint8).max:
        return np.uint8
    if top <= np.iinfo(np.uint16).max:
        return np.uint16
    return np.int32


def read_raw_csv(source: IO[bytes] | IO[str] | bytes | str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    """Parse a header plus rectangular records; returns (header, columns).

    A ``str`` is CSV text; pass a ``pathlib.Path`` to read a file.
    """
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_raw_csv(fh)
    if isinstance(source, bytes):
        text = io.StringIO(source.decode("utf-8"), newline="")
    elif isinstance(source, str):
        text = io.StringIO(source, newline="")
    elif isinstance(source, io.TextIOBase):
        text = source
    else:
        text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("missing header") from None
    except csv.Error as exc:
        raise CsvParseError(str(exc), row=0) from None
    if len(set(header)) != len(header):
        dupes = sorted(k for k, n in Counter(header).items() if n > 1)
        raise CsvParseError(f"duplicate column names in header: {dupes}", row=0)
    columns: list[list[str]] = [[] for _ in header]
    row_no = 0
    try:
        for row_no, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise CsvParseError(
                    f"expected {len(header)} fields, found {len(record)}", row=row_no
                )
            for col, value in zip(columns, record):
                col.append(value)
    except csv.Error as exc:
        raise CsvParseError(str(exc), row=row_no + 1) from None
    return header, columns


def encode_column(name: str, values: Sequence[str], variable: Variable | None = None,
                  tier: int = 1) -> tuple[Variable, np.ndarray]:
    """Map raw labels to state indices; infers sorted states when no variable is given."""
    values = np.asarray(values, dtype=object)
    missing = [m for m in MISSING_VALUES if np.any(values == m)]
    if missing:
        row = int(np.flatnonzero(values == missing[0])[0]) + 1
        raise CsvParseError(f"missing value in column {name!r}", row=row)
    labels, inverse = np.unique(values.astype(str), return_inverse=True)
    if variable is None:
        variable = Variable(name, tuple(labels.tolist()), tier)
        return variable, inverse.astype(np.int64)
    lookup = {s: i for i, s in enumerate(variable.states)}
    mapping = np.empty(len(labels), dtype=np.int64)
    for j, label in enumerate(labels.tolist()):
        if label not in lookup:
            raise EncodingError(variable.name, label)
        mapping[j] = lookup[label]
    return variable, mapping[inverse]


def load_csv(source, schema: Sequence[Variable] | None = None) -> Dataset:
    """Read a CSV (bytes, text, stream or Path) into a :class:`Dataset`.

    Without a schema, each column's states are its sorted distinct values.
    With a schema, columns are matched by name and every value must be a
    declared state.
    """
    header, columns = read_raw_csv(source)
    if schema is None:
        pairs = [encode_column(name, col) for name, col in zip(header, columns)]
    else:
        by_name = {v.name: v for v in schema}
        unknown = set(header) - set(by_name)
        if unknown:
            raise UnknownColumnError(unknown)
        absent = set(by_name) - set(header)
        if absent:
            raise CsvParseError(f"schema column(s) missing from header: {sorted(absent)}", row=0)
        pairs = [encode_column(name, col, by_name[name]) for name, col in zip(header, columns)]
    variables = [v for v, _ in pairs]
    codes = np.array([c for _, c in pairs], dtype=np.int64).reshape(len(variables), -1)
    return Dataset(variables, codes)


def drop_columns(d: Dataset, names: Iterable[str]) -> Dataset:
    names = set(names)
    unknown = names - set(d.names)
    if unknown:
        raise UnknownColumnError(unknown)
    if not names:
        return d
    keep = [i for i, v in enumerate(d.variables) if v.name not in names]
    return Dataset([d.variables[i] for i in keep], d.codes[keep])


def drop_constant(d: Dataset) -> tuple[Dataset, list[str]]:
    """Remove arity-1 variables, which cannot take part in learning."""
    constant = [v.name for v in d.variables if v.arity < 2]
    for name in constant:
        logger.warning("variable %r has a single state and is excluded from learning", name)
    return drop_columns(d, constant), constant


@dataclass(frozen=True)
class DiscretizationRule:
    """How to turn one raw column into categories.

    ``kind`` is one of ``"cuts"``, ``"quantile"``, ``"map"`` or ``"rare"``.
    """

    variable: str
    kind: str
    cuts: tuple[float, ...] = ()
    bins: int = 0
    mapping: Mapping[str, str] = field(default_factory=dict)
    default: str | None = None
    min_count: int = 1
    merged_label: str = "other"

    def __post_init__(self):
        object.__setattr__(self, "cuts", tuple(float(c) for c in self.cuts))
        if self.kind == "cuts":
            if not self.cuts:
                raise DiscretizationError(f"{self.variable}: explicit cuts need at least one threshold")
            if any(b <= a for a, b in zip(self.cuts, self.cuts[1:])):
                raise DiscretizationError(f"{self.variable}: cuts must be strictly increasing")
        elif self.kind == "quantile":
            if self.bins < 2:
                raise DiscretizationError(f"{self.variable}: quantile bin count must be >= 2")
        elif self.kind == "rare":
            if self.min_count < 1:
                raise DiscretizationError(f"{self.variable}: rare-merge minimum count must be >= 1")
        elif self.kind == "map":
            if not self.mapping:
                raise DiscretizationError(f"{self.variable}: value map is empty")
        else:
            raise DiscretizationError(f"{self.variable}: unknown discretization kind {self.kind!r}")

    @classmethod
    def from_mapping(cls, entry: Mapping) -> DiscretizationRule:
        entry = dict(entry)
        try:
            variable = entry.pop("variable")
            kind = entry.pop("kind")
        except KeyError as exc:
            raise DiscretizationError(f"discretization rule lacks {exc.args[0]!r}") from None
        allowed = {"cuts", "bins", "mapping", "default", "min_count", "merged_label"}
        extra = set(entry) - allowed
        if extra:
            raise DiscretizationError(f"{variable}: unknown rule field(s) {sorted(extra)}")
        if "mapping" in entry:
            entry["mapping"] = {str(k): str(v) for k, v in entry["mapping"].items()}
        return cls(variable=variable, kind=kind, **entry)


def _numeric(name: str, values: Sequence) -> np.ndarray:
    out = np.empty(len(values), dtype=float)
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise DiscretizationError(f"{name}: non-numeric value {v!r}") from None
        if np.isnan(out[i]):
            raise DiscretizationError(f"{name}: non-numeric value {v!r}")
    return out


def _fmt(x: float) -> str:
    return format(x, "g")


def _interval_labels(cuts: Sequence[float]) -> list[str]:
    labels = [f"<{_fmt(cuts[0])}"]
    labels += [f"[{_fmt(a)},{_fmt(b)})" for a, b in zip(cuts, cuts[1:])]
    labels.append(f">={_fmt(cuts[-1])}")
    return labels


def discretize(values: Sequence, rule: DiscretizationRule, tier: int = 1) -> tuple[Variable, np.ndarray]:
    """Apply ``rule`` to a raw column, returning the new variable and its codes.

    States of binned variables are ordered by bin, not alphabetically.
    """
    name = rule.variable
    if rule.kind == "cuts":
        x = _numeric(name, values)
        # half-open bins: cut_{i-1} <= v < cut_i
        codes = np.searchsorted(np.asarray(rule.cuts), x, side="right")
        return Variable(name, tuple(_interval_labels(rule.cuts)), tier), codes.astype(np.int64)

    if rule.kind == "quantile":
        x = _numeric(name, values)
        if x.size == 0:
            raise DiscretizationError(f"{name}: cannot take quantiles of an empty column")
        qs = np.quantile(x, np.arange(1, rule.bins) / rule.bins)
        cuts = np.unique(qs)
        # ties go to the lower bin: v <= cut_i lands in bin i
        codes = np.searchsorted(cuts, x, side="left")
        labels = [f"q{i + 1}" for i in range(len(cuts) + 1)]
        return Variable(name, tuple(labels), tier), codes.astype(np.int64)

    raw = [str(v) for v in values]
    if rule.kind == "map":
        mapped = []
        for v in raw:
            if v in rule.mapping:
                mapped.append(rule.mapping[v])
            elif rule.default is not None:
                mapped.append(rule.default)
            else:
                raise DiscretizationError(f"{name}: value {v!r} has no mapping and no default")
        var, codes = encode_column(name, mapped, tier=tier)
        return var, codes

    counts = Counter(raw)
    rare = {label for label, n in counts.items() if n < rule.min_count}
    merged = [rule.merged_label if v in rare else v for v in raw]
    return encode_column(name, merged, tier=tier)


def apply_discretization(d: Dataset, rule: DiscretizationRule) -> Dataset:
    var = d.variables[d.index(rule.variable)]
    new_var, codes = discretize(d.decode(rule.variable), rule, tier=var.tier)
    return d.replace_variable(rule.variable, new_var, codes)


def bootstrap_sample(d: Dataset, seed: int) -> Dataset:
    """Draw ``row_count`` rows uniformly with replacement."""
    n = d.row_count
    if n == 0:
        raise EmptyDatasetError("cannot bootstrap an empty dataset")
    rng = np.random.default_rng(seed)
    return d.take(rng.integers(0, n, size=n))
