"""CSV ingestion and train/test splitting.

Raw result files differ per sport; a small schema descriptor maps their
columns onto the canonical (date, home, away, outcome) row and, where the
raw file carries scores instead of an outcome token, names the rule that
reduces scores to the ternary alphabet.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path

from .core import MatchRecord, MatchStream, Outcome

CANONICAL_HEADER = ("date", "home", "away", "outcome")


@dataclass
class SchemaDescriptor:
    """Column mapping plus the sport rule turning raw rows into outcomes.

    rule:
      - "token":     ``outcome`` column holds H/A/D tokens (canonical files).
      - "goals":     H iff home score > away score, D iff equal.
      - "home_wins": every row is a win for the row's home side (winner/loser
                     style files, e.g. tennis results).
    """

    date: str = "date"
    home: str = "home"
    away: str = "away"
    outcome: str = "outcome"
    home_score: str = ""
    away_score: str = ""
    rule: str = "token"
    date_format: str = ""  # strptime format; empty = ISO date or day number

    @classmethod
    def load(cls, path: str | Path) -> "SchemaDescriptor":
        fields = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(fields) - known
        if unknown:
            raise ValueError(f"{path}: unknown descriptor keys {sorted(unknown)}")
        return cls(**fields)


def _parse_date(token: str, fmt: str, row: int) -> float | _dt.date:
    """Return a date, or directly a fractional day number."""
    token = token.strip()
    if fmt:
        try:
            return _dt.datetime.strptime(token, fmt).date()
        except ValueError:
            raise ValueError(f"row {row}: unparseable date {token!r} for format {fmt!r}")
    try:
        return float(token)
    except ValueError:
        pass
    try:
        return _dt.date.fromisoformat(token)
    except ValueError:
        raise ValueError(f"row {row}: unparseable date {token!r} (ISO date or day number)")


def _row_outcome(row: dict, schema: SchemaDescriptor, rownum: int) -> Outcome:
    if schema.rule == "token":
        token = row[schema.outcome]
        try:
            return Outcome.from_token(token)
        except ValueError as exc:
            raise ValueError(f"row {rownum}: {exc}")
    if schema.rule == "goals":
        try:
            hs, as_ = float(row[schema.home_score]), float(row[schema.away_score])
        except ValueError:
            raise ValueError(f"row {rownum}: unparseable scores")
        if hs > as_:
            return Outcome.HOME_WIN
        if hs < as_:
            return Outcome.AWAY_WIN
        return Outcome.DRAW
    if schema.rule == "home_wins":
        return Outcome.HOME_WIN
    raise ValueError(f"unknown sport rule {schema.rule!r}")


def load_csv(path: str | Path, schema: SchemaDescriptor | None = None) -> MatchStream:
    """Parse a result CSV into a time-sorted MatchStream.

    Times become fractional days since the earliest date in the file.
    Duplicate rows are preserved; same-day rows keep file order.
    """
    schema = schema or SchemaDescriptor()
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.date, schema.home, schema.away]
        if schema.rule == "token":
            needed.append(schema.outcome)
        elif schema.rule == "goals":
            needed += [schema.home_score, schema.away_score]
        missing = [c for c in needed if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing} (header: {header})")
        rows = []
        for rownum, row in enumerate(reader, start=2):  # header is row 1
            date = _parse_date(row[schema.date], schema.date_format, rownum)
            home, away = row[schema.home].strip(), row[schema.away].strip()
            if not home or not away:
                raise ValueError(f"row {rownum}: empty player id")
            rows.append((date, home, away, _row_outcome(row, schema, rownum), rownum))
    if not rows:
        stream = MatchStream([])
        stream.origin = None
        return stream
    dates = [r[0] for r in rows]
    if all(isinstance(d, float) for d in dates):
        origin = min(dates)
        days = [d - origin for d in dates]
    elif all(isinstance(d, _dt.date) for d in dates):
        origin = min(dates)
        days = [float((d - origin).days) for d in dates]
    else:
        raise ValueError(f"{path}: mixed date formats (day numbers and calendar dates)")
    order = sorted(range(len(rows)), key=lambda i: (days[i], rows[i][4]))
    records = [
        MatchRecord(pos + 1, days[i], rows[i][1], rows[i][2], rows[i][3])
        for pos, i in enumerate(order)
    ]
    stream = MatchStream(records)
    # remembered so external timestamps (split cutoffs, fixtures) can be
    # converted onto the same day axis
    stream.origin = origin
    return stream


def write_csv(stream: MatchStream, path: str | Path) -> None:
    """Emit the canonical CSV (date column holds fractional day numbers)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_HEADER)
        for r in stream.records:
            writer.writerow([repr(float(r.t)), r.home, r.away, r.outcome.value])


def split_by_date(stream: MatchStream, cutoff: float) -> tuple[MatchStream, MatchStream]:
    """Split into (strictly before cutoff, at-or-after cutoff).

    Both halves share the full player registry so dense indices agree and a
    test sweep can continue from train-terminal state.
    """
    train = [r for r in stream.records if r.t < cutoff]
    test = [r for r in stream.records if r.t >= cutoff]
    return (
        MatchStream(train, players=stream.players),
        MatchStream(test, players=stream.players),
    )
