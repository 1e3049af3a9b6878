"""Comparison data between two datafiles.

Every record pair (i, j) gets a vector of discretized disagreement levels,
one per field, where level 1 is exact agreement. Per-field comparisons are
computed once per unique pair of field values and broadcast, and the
per-pair vectors are stored only as integer ids into a table of unique
patterns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numba
import numpy as np

STRING = "string"
NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (STRING, NUMERIC, CATEGORICAL)

MAX_COMMON_VALUES = 10


class ConfigurationError(ValueError):
    """Raised for inconsistent schemas, specs or run configuration."""


@dataclass(frozen=True)
class FieldSpec:
    """How one field is compared and discretized.

    ``cutpoints`` are distance thresholds for string fields and absolute
    difference thresholds for numeric fields; categorical fields take none.
    When ``common_values`` is non-empty, pairs agreeing exactly on one of
    those values get an extra level, stored last (index ``n_levels``).
    """

    name: str
    kind: str = STRING
    cutpoints: tuple[float, ...] = ()
    common_values: tuple = ()
    prefix_weight: float = 0.1
    allow_many_common: bool = False

    def __post_init__(self):
        object.__setattr__(self, "cutpoints", tuple(float(c) for c in self.cutpoints))
        object.__setattr__(self, "common_values", tuple(self.common_values))
        if self.kind not in KINDS:
            raise ConfigurationError(f"field {self.name!r}: unknown kind {self.kind!r}")
        cuts = np.asarray(self.cutpoints)
        if np.any(np.diff(cuts) <= 0):
            raise ConfigurationError(f"field {self.name!r}: cutpoints must be strictly increasing")
        if self.kind == CATEGORICAL:
            if self.cutpoints:
                raise ConfigurationError(f"field {self.name!r}: categorical fields take no cutpoints")
        elif not self.cutpoints:
            raise ConfigurationError(f"field {self.name!r}: at least one cutpoint is required")
        if self.kind == STRING:
            if cuts[0] <= 0 or cuts[-1] >= 1:
                raise ConfigurationError(f"field {self.name!r}: string cutpoints must lie in (0, 1)")
            if not 0 <= self.prefix_weight <= 0.25:
                raise ConfigurationError(f"field {self.name!r}: prefix_weight must be in [0, 0.25]")
        if self.kind == NUMERIC and cuts[0] <= 0:
            raise ConfigurationError(f"field {self.name!r}: numeric cutpoints must be positive")
        if len(self.common_values) > MAX_COMMON_VALUES and not self.allow_many_common:
            raise ConfigurationError(
                f"field {self.name!r}: {len(self.common_values)} common values "
                f"(limit {MAX_COMMON_VALUES}; set allow_many_common to override)"
            )

    @property
    def n_base_levels(self) -> int:
        return 2 if self.kind == CATEGORICAL else len(self.cutpoints) + 1

    @property
    def n_levels(self) -> int:
        return self.n_base_levels + (1 if self.common_values else 0)

    @property
    def common_level(self) -> int | None:
        return self.n_levels if self.common_values else None

    def level_label(self, level: int) -> str:
        if self.common_values and level == self.n_levels:
            return "C"
        return str(level)


@dataclass
class DataFile:
    """Columnar datafile: record ids plus one array per field."""

    record_ids: list
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        self.record_ids = list(self.record_ids)
        n = len(self.record_ids)
        if n < 1:
            raise ConfigurationError("a datafile needs at least one record")
        for name, col in list(self.columns.items()):
            col = np.asarray(col)
            if col.ndim != 1 or len(col) != n:
                raise ConfigurationError(f"column {name!r} has length {len(col)}, expected {n}")
            self.columns[name] = col

    def __len__(self) -> int:
        return len(self.record_ids)

    @classmethod
    def from_records(cls, rows: Sequence[Sequence], names: Sequence[str], record_ids=None) -> DataFile:
        rows = list(rows)
        if record_ids is None:
            record_ids = list(range(1, len(rows) + 1))
        columns = {}
        for k, name in enumerate(names):
            values = [r[k] for r in rows]
            columns[name] = np.array(values, dtype=object if isinstance(values[0], str) else None)
        return cls(record_ids, columns)

    def subset(self, index) -> DataFile:
        index = np.asarray(index, dtype=np.int64)
        return DataFile([self.record_ids[k] for k in index], {n: c[index] for n, c in self.columns.items()})

    def check_schema(self, specs: Sequence[FieldSpec]) -> None:
        missing = [s.name for s in specs if s.name not in self.columns]
        if missing:
            raise ConfigurationError(f"datafile lacks fields {missing}")


# -- string distance ---------------------------------------------------------


@numba.njit(cache=True)
def _jaro_winkler_codes(a, b, prefix_weight):
    la = a.shape[0]
    lb = b.shape[0]
    if la == 0 and lb == 0:
        return 0.0
    if la == 0 or lb == 0:
        return 1.0
    if la == lb:
        same = True
        for k in range(la):
            if a[k] != b[k]:
                same = False
                break
        if same:
            return 0.0
    window = max(la, lb) // 2 - 1
    if window < 0:
        window = 0
    a_hit = np.zeros(la, dtype=np.bool_)
    b_hit = np.zeros(lb, dtype=np.bool_)
    matches = 0
    for k in range(la):
        lo = max(0, k - window)
        hi = min(lb, k + window + 1)
        for m in range(lo, hi):
            if not b_hit[m] and a[k] == b[m]:
                a_hit[k] = True
                b_hit[m] = True
                matches += 1
                break
    if matches == 0:
        return 1.0
    half_transpositions = 0
    m = 0
    for k in range(la):
        if a_hit[k]:
            while not b_hit[m]:
                m += 1
            if a[k] != b[m]:
                half_transpositions += 1
            m += 1
    t = half_transpositions // 2
    sim = (matches / la + matches / lb + (matches - t) / matches) / 3.0
    if prefix_weight > 0.0 and sim > 0.7:
        prefix = 0
        for k in range(min(4, la, lb)):
            if a[k] != b[k]:
                break
            prefix += 1
        sim = sim + prefix * prefix_weight * (1.0 - sim)
    if sim > 1.0:
        sim = 1.0
    return 1.0 - sim


def _codes(s: str) -> np.ndarray:
    return np.array([ord(c) for c in s], dtype=np.int32)


def jaro_winkler_distance(a: str, b: str, prefix_weight: float = 0.1) -> float:
    """One minus the Jaro-Winkler similarity of two strings.

    ``prefix_weight=0`` gives the plain Jaro distance. The prefix boost
    applies to pairs whose Jaro similarity exceeds 0.7, over a common
    prefix of at most four characters.
    """
    if not 0 <= prefix_weight <= 0.25:
        raise ValueError("prefix_weight must be in [0, 0.25]")
    return float(_jaro_winkler_codes(_codes(a), _codes(b), float(prefix_weight)))


def _pack_strings(values) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(values) + 1, dtype=np.int64)
    parts = []
    for k, v in enumerate(values):
        c = _codes(v)
        parts.append(c)
        offsets[k + 1] = offsets[k] + len(c)
    flat = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int32)
    return flat.astype(np.int32), offsets


@numba.njit(cache=True)
def _jw_matrix(fa, oa, fb, ob, prefix_weight):
    na = oa.shape[0] - 1
    nb = ob.shape[0] - 1
    out = np.empty((na, nb))
    for x in range(na):
        a = fa[oa[x]:oa[x + 1]]
        for y in range(nb):
            out[x, y] = _jaro_winkler_codes(a, fb[ob[y]:ob[y + 1]], prefix_weight)
    return out


def jaro_winkler_matrix(values_a: Sequence[str], values_b: Sequence[str], prefix_weight: float = 0.1) -> np.ndarray:
    """Distances between every string in ``values_a`` and every one in ``values_b``."""
    fa, oa = _pack_strings(values_a)
    fb, ob = _pack_strings(values_b)
    return _jw_matrix(fa, oa, fb, ob, float(prefix_weight))


# -- per-field levels ----------------------------------------------------------


def discretize_distance(d, cutpoints) -> np.ndarray | int:
    """Level = 1 + number of cutpoints strictly below ``d``."""
    levels = np.searchsorted(np.asarray(cutpoints, dtype=float), d, side="left") + 1
    return int(levels) if np.ndim(levels) == 0 else levels


def compare_numeric(a, b, cutpoints) -> np.ndarray | int:
    return discretize_distance(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), cutpoints)


def compare_categorical(a, b) -> int:
    return 1 if a == b else 2


def relabel_common(level: int, value_a, value_b, common_values, common_level: int) -> int:
    """Move an exact agreement on a listed very common value to ``common_level``."""
    if value_a == value_b and value_a in set(common_values):
        return common_level
    return level


def field_distances(spec: FieldSpec, values_a, values_b) -> np.ndarray:
    """Undiscretized comparison for every pair of values: Jaro-Winkler distance,
    absolute difference, or 0/1 disagreement, shape (len(values_a), len(values_b))."""
    if spec.kind == STRING:
        return jaro_winkler_matrix([str(v) for v in values_a], [str(v) for v in values_b], spec.prefix_weight)
    if spec.kind == NUMERIC:
        va = np.asarray(values_a, dtype=float)[:, None]
        return np.abs(va - np.asarray(values_b, dtype=float)[None, :])
    va = np.asarray(values_a, dtype=object)[:, None]
    return (va != np.asarray(values_b, dtype=object)[None, :]).astype(float)


def field_level_table(spec: FieldSpec, values_a, values_b) -> np.ndarray:
    """Levels for every pair of (unique) values, shape (len(values_a), len(values_b))."""
    dist = field_distances(spec, values_a, values_b)
    if spec.kind == CATEGORICAL:
        table = dist + 1
    else:
        table = discretize_distance(dist, spec.cutpoints)
    table = np.asarray(table, dtype=np.int8)
    if spec.common_values:
        common = set(spec.common_values)
        in_a = np.array([v in common for v in values_a], dtype=bool)
        same = np.asarray(values_a, dtype=object)[:, None] == np.asarray(values_b, dtype=object)[None, :]
        table[same & in_a[:, None]] = spec.common_level
    return table


def _unique(column: np.ndarray):
    uniq, inverse, counts = np.unique(column, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(-1), counts


def field_levels(spec: FieldSpec, col_a, col_b) -> np.ndarray:
    """Per-pair levels for one field via unique value pairs, shape (n_A, n_B)."""
    ua, inv_a, _ = _unique(np.asarray(col_a))
    ub, inv_b, _ = _unique(np.asarray(col_b))
    table = field_level_table(spec, list(ua), list(ub))
    return table[inv_a[:, None], inv_b[None, :]]


# -- comparison data -----------------------------------------------------------


@dataclass
class ComparisonData:
    """Hashed comparison data for one block.

    ``patterns`` holds each unique comparison vector once (levels are
    1-based). ``pair_patterns[i, j]`` is the pattern id of pair (i, j) and
    ``counts[i, p]`` the number of records in B whose pair with i has
    pattern p.
    """

    specs: tuple[FieldSpec, ...]
    patterns: np.ndarray
    pair_patterns: np.ndarray
    counts: np.ndarray
    keys: np.ndarray = field(repr=False)

    @property
    def n_a(self) -> int:
        return self.pair_patterns.shape[0]

    @property
    def n_b(self) -> int:
        return self.pair_patterns.shape[1]

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    @property
    def n_levels(self) -> tuple[int, ...]:
        return tuple(s.n_levels for s in self.specs)

    @property
    def level_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.n_levels)])

    @cached_property
    def level_matrix(self) -> np.ndarray:
        """Binary (pattern x field-level) indicator matrix."""
        offsets = self.level_offsets
        out = np.zeros((self.n_patterns, offsets[-1]), dtype=np.int64)
        rows = np.arange(self.n_patterns)
        for f in range(len(self.specs)):
            out[rows, offsets[f] + self.patterns[:, f] - 1] = 1
        return out

    def pattern_of(self, i: int, j: int) -> int:
        return int(self.pair_patterns[i, j])

    def comparison_vector(self, i: int, j: int) -> np.ndarray:
        return self.patterns[self.pair_patterns[i, j]]

    @cached_property
    def field_counts(self) -> np.ndarray:
        """Per-record tabulation over (field, level): counts @ level_matrix."""
        return self.counts @ self.level_matrix


def encode_patterns(levels: np.ndarray, n_levels: Sequence[int]) -> np.ndarray:
    """Mixed-radix key for level vectors (last axis = fields)."""
    key = np.zeros(levels.shape[:-1], dtype=np.int64)
    for f, base in enumerate(n_levels):
        key = key * base + (levels[..., f].astype(np.int64) - 1)
    return key


def decode_patterns(keys: np.ndarray, n_levels: Sequence[int]) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64).copy()
    out = np.empty(keys.shape + (len(n_levels),), dtype=np.int64)
    for f in range(len(n_levels) - 1, -1, -1):
        out[..., f] = keys % n_levels[f] + 1
        keys //= n_levels[f]
    return out


def build_comparison_data(a: DataFile, b: DataFile, specs: Sequence[FieldSpec]) -> ComparisonData:
    """Construct hashed comparison data for all pairs of records in ``a`` x ``b``."""
    specs = tuple(specs)
    if not specs:
        raise ConfigurationError("no comparison fields configured")
    a.check_schema(specs)
    b.check_schema(specs)
    n_levels = [s.n_levels for s in specs]
    if np.prod(np.asarray(n_levels, dtype=float)) > 2**62:
        raise ConfigurationError("too many disagreement levels to hash")
    key = np.zeros((len(a), len(b)), dtype=np.int64)
    for spec, base in zip(specs, n_levels):
        key *= base
        key += field_levels(spec, a.columns[spec.name], b.columns[spec.name]) - 1
    keys, inverse = np.unique(key, return_inverse=True)
    pair_patterns = inverse.reshape(key.shape).astype(np.int32)
    n_pat = len(keys)
    offsets = np.arange(len(a), dtype=np.int64)[:, None] * n_pat
    counts = np.bincount((offsets + pair_patterns).ravel(), minlength=len(a) * n_pat).reshape(len(a), n_pat)
    return ComparisonData(
        specs=specs,
        patterns=decode_patterns(keys, n_levels),
        pair_patterns=pair_patterns,
        counts=counts,
        keys=keys,
    )


def naive_comparison_vector(a: DataFile, b: DataFile, specs: Sequence[FieldSpec], i: int, j: int) -> np.ndarray:
    """Comparison vector for one pair computed directly from the field values."""
    out = []
    for spec in specs:
        va, vb = a.columns[spec.name][i], b.columns[spec.name][j]
        if spec.kind == STRING:
            level = discretize_distance(jaro_winkler_distance(str(va), str(vb), spec.prefix_weight), spec.cutpoints)
        elif spec.kind == NUMERIC:
            level = compare_numeric(va, vb, spec.cutpoints)
        else:
            level = compare_categorical(va, vb)
        if spec.common_values:
            level = relabel_common(level, va, vb, spec.common_values, spec.common_level)
        out.append(int(level))
    return np.array(out)
