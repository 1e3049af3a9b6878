"""Delimited-file ingestion and the match / truth table formats."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .comparison import NUMERIC, ConfigurationError, DataFile
from .evaluation import TruthLabels

NONE_ID = "NONE"
MATCH_COLUMNS = ("record_id_A", "record_id_B", "probability", "block")


@dataclass
class Reject:
    path: str
    line: int
    reason: str


@dataclass
class RejectReport:
    rejects: list[Reject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rejects)

    def extend(self, other: RejectReport) -> None:
        self.rejects.extend(other.rejects)

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["file", "line", "reason"])
            for r in self.rejects:
                w.writerow([r.path, r.line, r.reason])


def _coerce(value: str, kind: str):
    if kind == NUMERIC:
        return float(value)
    return value


def ingest(path: str | Path, mapping: Mapping[str, str], kinds: Mapping[str, str] | None = None,
           id_column: str | None = None, delimiter: str = ",") -> tuple[DataFile, RejectReport]:
    """Read a delimited UTF-8 file with a header into a DataFile.

    ``mapping`` sends field names to column names. Rows with an empty value
    or a value that fails numeric coercion go to the reject report, keyed by
    their line number (the header is line 1). Without ``id_column`` the
    record id is the 1-based data row number.
    """
    kinds = dict(kinds or {})
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    report = RejectReport()
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: file is empty") from None
        except UnicodeDecodeError:
            raise ConfigurationError(f"{path}: not valid UTF-8") from None
        header = [h.strip().lstrip("﻿") for h in header]
        wanted = dict(mapping)
        missing = [c for c in list(wanted.values()) + ([id_column] if id_column else []) if c not in header]
        if missing:
            raise ConfigurationError(f"{path}: missing columns {missing}")
        pos = {h: k for k, h in enumerate(header)}
        ids, values = [], {f: [] for f in wanted}
        row_no = 0
        try:
            for row in reader:
                if not any(cell.strip() for cell in row):
                    continue
                row_no += 1
                line = reader.line_num
                if len(row) != len(header):
                    report.rejects.append(Reject(str(path), line, f"expected {len(header)} columns, found {len(row)}"))
                    continue
                parsed, reason = {}, None
                for f, col in wanted.items():
                    cell = row[pos[col]].strip()
                    if cell == "":
                        reason = f"empty value in column {col!r}"
                        break
                    try:
                        parsed[f] = _coerce(cell, kinds.get(f, "string"))
                    except ValueError:
                        reason = f"cannot parse {cell!r} in column {col!r} as a number"
                        break
                if reason:
                    report.rejects.append(Reject(str(path), line, reason))
                    continue
                ids.append(row[pos[id_column]].strip() if id_column else str(row_no))
                for f, v in parsed.items():
                    values[f].append(v)
        except UnicodeDecodeError:
            raise ConfigurationError(f"{path}: not valid UTF-8") from None
    if not ids:
        raise ConfigurationError(f"{path}: no usable records")
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"{path}: duplicate record ids")
    columns = {}
    for f, vals in values.items():
        kind = kinds.get(f, "string")
        columns[f] = np.array(vals, dtype=float) if kind == NUMERIC else np.array(vals, dtype=object)
    return DataFile(ids, columns), report


def write_datafile(data: DataFile, path: str | Path, id_column: str = "id") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        names = list(data.columns)
        w.writerow([id_column] + names)
        for r, rid in enumerate(data.record_ids):
            w.writerow([rid] + [_plain(data.columns[n][r]) for n in names])


def _plain(v):
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


@dataclass
class MatchRow:
    record_id_a: str
    record_id_b: str | None
    probability: float
    block: str


def write_matches(rows: Sequence[MatchRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCH_COLUMNS)
        for r in rows:
            w.writerow([r.record_id_a, NONE_ID if r.record_id_b is None else r.record_id_b,
                        f"{r.probability:.6f}", r.block])


def read_pairs(path: str | Path) -> tuple[dict[str, str | None], set[str]]:
    """(A id -> B id or None, uncertain A ids) from a match or truth table.

    Needs ``record_id_A`` and ``record_id_B`` columns; ``NONE`` or an empty
    cell means no partner. An optional ``uncertain`` column (1/true/yes)
    flags records to leave out of scoring.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"record_id_A", "record_id_B"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{path}: needs record_id_A and record_id_B columns")
        pairs: dict[str, str | None] = {}
        uncertain = set()
        for row in reader:
            a = row["record_id_A"].strip()
            b = (row["record_id_B"] or "").strip()
            if a in pairs:
                raise ConfigurationError(f"{path}: record {a!r} appears twice")
            pairs[a] = None if b in ("", NONE_ID) else b
            if str(row.get("uncertain") or "").strip().lower() in ("1", "true", "yes"):
                uncertain.add(a)
    return pairs, uncertain


def write_truth(truth: TruthLabels, ids_a: Sequence, ids_b: Sequence, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id_A", "record_id_B", "uncertain"])
        for rid, j, unc in zip(ids_a, truth.partner, truth.uncertain):
            w.writerow([rid, ids_b[j - 1] if j > 0 else NONE_ID, int(unc)])


def align_pairs(estimate: Mapping[str, str | None], truth: Mapping[str, str | None],
                uncertain: set[str] = frozenset()) -> tuple[np.ndarray, TruthLabels]:
    """Index-encode an estimate and truth over the union of their A ids.

    A records missing from one table count as unmatched there.
    """
    ids_a = sorted(set(estimate) | set(truth))
    ids_b = sorted({b for b in list(estimate.values()) + list(truth.values()) if b is not None})
    pos_b = {b: k + 1 for k, b in enumerate(ids_b)}
    z_hat = np.array([pos_b.get(estimate.get(a)) or 0 for a in ids_a], dtype=np.int64)
    partner = np.array([pos_b.get(truth.get(a)) or 0 for a in ids_a], dtype=np.int64)
    unc = np.array([a in uncertain for a in ids_a], dtype=bool)
    return z_hat, TruthLabels(partner, unc)


def truth_from_pairs(pairs: Mapping[str, str | None], uncertain: set[str], ids_a: Sequence,
                     ids_b: Sequence) -> TruthLabels:
    """Truth labels laid out along the given A and B record orders."""
    pos_b = {str(b): k + 1 for k, b in enumerate(ids_b)}
    partner = np.zeros(len(ids_a), dtype=np.int64)
    for k, a in enumerate(ids_a):
        b = pairs.get(str(a))
        if b is not None:
            if b not in pos_b:
                raise ConfigurationError(f"truth partner {b!r} of record {a!r} is not in file B")
            partner[k] = pos_b[b]
    unc = np.array([str(a) in uncertain for a in ids_a], dtype=bool)
    return TruthLabels(partner, unc)

