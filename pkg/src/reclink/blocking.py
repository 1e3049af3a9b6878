"""Initial-letter blocking and all-pairs disagreement margins."""

from __future__ import annotations

import csv
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from string import ascii_uppercase
from typing import Mapping, Sequence

import numpy as np

from .comparison import ConfigurationError, DataFile, FieldSpec, _unique, field_level_table

MARGINS_FORMAT = "reclink-margins-v1"

DEFAULT_FIRST_GROUPS = ("AEIOUY", "BFP", "CKQSXZ", "DT", "GJ", "HMN", "LR", "VW")
DEFAULT_FIRST_PREFIXES = ("Jo",)
DEFAULT_LAST_GROUPS = ("AEIOUY", "B", "CKQX", "DT", "FP", "GJ", "H", "LNR", "M", "SZ", "VW")


@dataclass(frozen=True)
class FieldBlocking:
    """Letter groups for one blocked field.

    ``prefixes`` are multi-character groups (e.g. ``"Jo"``) that win over
    the single-initial groups; the longest matching prefix is used.
    """

    field: str
    groups: tuple[str, ...]
    prefixes: tuple[str, ...] = ()
    fallback: str = "OTHER"

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(g.upper() for g in self.groups))
        object.__setattr__(self, "prefixes", tuple(sorted(self.prefixes, key=len, reverse=True)))
        covered = set("".join(self.groups))
        missing = sorted(set(ascii_uppercase) - covered)
        if missing:
            raise ConfigurationError(f"blocking on {self.field!r}: letters {''.join(missing)} belong to no group")
        seen: dict[str, str] = {}
        for g in self.groups:
            for ch in g:
                if ch in seen:
                    raise ConfigurationError(f"blocking on {self.field!r}: {ch} is in both {seen[ch]} and {g}")
                seen[ch] = g
        object.__setattr__(self, "_letter_group", seen)

    def label(self, value) -> str | None:
        """Group label for a field value, or None if the value is empty."""
        text = "" if value is None else str(value).strip()
        if not text:
            return None
        upper = text.upper()
        for prefix in self.prefixes:
            if upper.startswith(prefix.upper()):
                return prefix
        initial = unicodedata.normalize("NFKD", upper[0]).encode("ascii", "ignore").decode()
        return self._letter_group.get(initial[:1], self.fallback)


@dataclass(frozen=True)
class BlockScheme:
    fields: tuple[FieldBlocking, ...]

    @classmethod
    def default(cls, first: str = "first", last: str = "last") -> BlockScheme:
        return cls((
            FieldBlocking(first, DEFAULT_FIRST_GROUPS, DEFAULT_FIRST_PREFIXES),
            FieldBlocking(last, DEFAULT_LAST_GROUPS),
        ))

    @classmethod
    def single(cls) -> BlockScheme:
        """Degenerate scheme: every record in one block."""
        return cls(())


def block_key(record: Mapping, scheme: BlockScheme) -> str | None:
    """Concatenated group labels, e.g. ``"Jo|SZ"``; None routes the record to rejects."""
    if not scheme.fields:
        return "ALL"
    labels = []
    for fb in scheme.fields:
        lab = fb.label(record.get(fb.field))
        if lab is None:
            return None
        labels.append(lab)
    return "|".join(labels)


def block_keys(data: DataFile, scheme: BlockScheme) -> list[str | None]:
    cols = {fb.field: data.columns[fb.field] for fb in scheme.fields}
    return [block_key({k: c[r] for k, c in cols.items()}, scheme) for r in range(len(data))]


@dataclass
class Block:
    """One block. ``a_index``/``b_index`` index the original files.

    When ``swapped`` is set the block's B side is smaller, so the model runs
    with the original B records in the role of A.
    """

    key: str
    a_index: np.ndarray
    b_index: np.ndarray
    swapped: bool = False

    @property
    def skip(self) -> bool:
        return len(self.a_index) == 0 or len(self.b_index) == 0

    @property
    def model_sides(self) -> tuple[np.ndarray, np.ndarray]:
        """(smaller side, larger side) record indices."""
        if self.swapped:
            return self.b_index, self.a_index
        return self.a_index, self.b_index


@dataclass
class Partition:
    blocks: list[Block]
    rejected_a: list[int] = field(default_factory=list)
    rejected_b: list[int] = field(default_factory=list)

    def active(self) -> list[Block]:
        return [b for b in self.blocks if not b.skip]


def partition(a: DataFile, b: DataFile, scheme: BlockScheme) -> Partition:
    """Split both files into blocks keyed by :func:`block_key`, sorted by key."""
    keys_a = block_keys(a, scheme)
    keys_b = block_keys(b, scheme)
    members_a: dict[str, list[int]] = {}
    members_b: dict[str, list[int]] = {}
    rejected_a = [r for r, k in enumerate(keys_a) if k is None]
    rejected_b = [r for r, k in enumerate(keys_b) if k is None]
    for r, k in enumerate(keys_a):
        if k is not None:
            members_a.setdefault(k, []).append(r)
    for r, k in enumerate(keys_b):
        if k is not None:
            members_b.setdefault(k, []).append(r)
    blocks = []
    for key in sorted(set(members_a) | set(members_b)):
        ia = np.asarray(members_a.get(key, []), dtype=np.int64)
        ib = np.asarray(members_b.get(key, []), dtype=np.int64)
        blocks.append(Block(key, ia, ib, swapped=len(ia) > len(ib)))
    return Partition(blocks, rejected_a, rejected_b)


# -- margins -------------------------------------------------------------------


@dataclass
class MarginTable:
    """All-pairs level distributions per field.

    ``pooled[name]`` has shape (L_f,). ``per_record[name]``, when present,
    has shape (n_A, L_f) with rows ordered like ``record_ids``.
    """

    pooled: dict[str, np.ndarray]
    per_record: dict[str, np.ndarray] | None = None
    record_ids: list | None = None

    def for_records(self, ids: Sequence) -> dict[str, np.ndarray]:
        """Per-record margins for the given record ids."""
        if self.per_record is None:
            raise ConfigurationError("margin table has no per-record margins")
        pos = {str(rid): k for k, rid in enumerate(self.record_ids)}
        try:
            rows = np.array([pos[str(r)] for r in ids], dtype=np.int64)
        except KeyError as exc:
            raise ConfigurationError(f"no per-record margin for record {exc.args[0]!r}") from None
        return {name: m[rows] for name, m in self.per_record.items()}

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {MARGINS_FORMAT}\n")
            w = csv.writer(fh)
            w.writerow(["field", "record_id", "level", "probability"])
            for name, vec in self.pooled.items():
                for lvl, prob in enumerate(vec, start=1):
                    w.writerow([name, "", lvl, repr(float(prob))])
            for name, mat in (self.per_record or {}).items():
                for rid, row in zip(self.record_ids, mat):
                    for lvl, prob in enumerate(row, start=1):
                        w.writerow([name, rid, lvl, repr(float(prob))])

    @classmethod
    def load(cls, path: str | Path) -> MarginTable:
        with open(path, newline="", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != f"# {MARGINS_FORMAT}":
                raise ConfigurationError(f"{path}: not a {MARGINS_FORMAT} file")
            rows = list(csv.DictReader(fh))
        pooled: dict[str, dict[int, float]] = {}
        per: dict[str, dict[str, dict[int, float]]] = {}
        ids: list[str] = []
        per_seen: dict[str, bool] = {}
        for row in rows:
            lvl, prob = int(row["level"]), float(row["probability"])
            if row["record_id"] == "":
                pooled.setdefault(row["field"], {})[lvl] = prob
            else:
                rid = row["record_id"]
                bucket = per.setdefault(row["field"], {})
                if not per_seen.get(rid):
                    per_seen[rid] = True
                    ids.append(rid)
                bucket.setdefault(rid, {})[lvl] = prob
        pooled_arr = {f: np.array([v[k] for k in sorted(v)]) for f, v in pooled.items()}
        if not per:
            return cls(pooled_arr)
        per_arr = {
            f: np.array([[v[rid][k] for k in sorted(v[rid])] for rid in ids]) for f, v in per.items()
        }
        return cls(pooled_arr, per_arr, ids)


def global_margins(a: DataFile, b: DataFile, specs: Sequence[FieldSpec], per_record: bool = False) -> MarginTable:
    """Distribution of disagreement levels over all n_A x n_B pairs, per field.

    Works on unique value pairs weighted by their frequencies; pairs are
    never enumerated.
    """
    n_a, n_b = len(a), len(b)
    pooled = {}
    records = {} if per_record else None
    for spec in specs:
        ua, inv_a, ca = _unique(np.asarray(a.columns[spec.name]))
        ub, _, cb = _unique(np.asarray(b.columns[spec.name]))
        table = field_level_table(spec, list(ua), list(ub))
        L = spec.n_levels
        # (unique a, level): frequency-weighted counts over unique b values
        by_value = np.zeros((len(ua), L))
        for lvl in range(1, L + 1):
            by_value[:, lvl - 1] = (table == lvl) @ cb
        pooled[spec.name] = (ca @ by_value) / (n_a * n_b)
        if per_record:
            records[spec.name] = by_value[inv_a] / n_b
    return MarginTable(pooled, records, list(a.record_ids) if per_record else None)
