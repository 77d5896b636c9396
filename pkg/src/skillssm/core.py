"""Canonical data model for competitions.

Players, matches, outcomes and matchtimes, plus the per-player match index
that lets every downstream pass touch only O(N + K) (player, matchtime)
pairs instead of O(N * K).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence


class Outcome(Enum):
    HOME_WIN = "H"
    AWAY_WIN = "A"
    DRAW = "D"

    @classmethod
    def from_token(cls, token: str) -> "Outcome":
        try:
            return cls(token.strip().upper())
        except ValueError:
            raise ValueError(f"unknown outcome token {token!r}, expected one of H, A, D")


OUTCOMES = (Outcome.HOME_WIN, Outcome.AWAY_WIN, Outcome.DRAW)


@dataclass(frozen=True)
class MatchRecord:
    """A single pairwise comparison.

    k is the 1-based position in the time-sorted stream, t the matchtime in
    (fractional) days.
    """

    k: int
    t: float
    home: str
    away: str
    outcome: Outcome

    def __post_init__(self):
        if self.home == self.away:
            raise ValueError(f"match {self.k}: home and away player are both {self.home!r}")
        if not self.t >= 0.0:
            raise ValueError(f"match {self.k}: matchtime must be nonnegative, got {self.t}")


class MatchStream:
    """A time-sorted sequence of matches plus the player registry.

    Player ids are opaque strings externally; internally each id is mapped
    to a dense index in order of first appearance so per-player state lives
    in flat arrays.
    """

    def __init__(self, records: Sequence[MatchRecord], players: Sequence[str] | None = None):
        records = list(records)
        for pos in range(1, len(records)):
            if records[pos].t < records[pos - 1].t:
                raise ValueError(
                    f"stream not sorted by time: record {pos + 1} has t={records[pos].t} "
                    f"< t={records[pos - 1].t} of record {pos}"
                )
        # renumber so k always equals the stream position
        self.records: list[MatchRecord] = [
            MatchRecord(pos + 1, r.t, r.home, r.away, r.outcome) for pos, r in enumerate(records)
        ]
        index: dict[str, int] = {}
        if players is not None:
            for pid in players:
                index.setdefault(pid, len(index))
        for r in self.records:
            index.setdefault(r.home, len(index))
            index.setdefault(r.away, len(index))
        self.players: tuple[str, ...] = tuple(index)
        self.player_index: dict[str, int] = index

    @property
    def num_matches(self) -> int:
        return len(self.records)

    @property
    def num_players(self) -> int:
        return len(self.players)

    def has_draws(self) -> bool:
        return any(r.outcome is Outcome.DRAW for r in self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MatchStream)
            and self.records == other.records
            and self.players == other.players
        )


@dataclass
class SparseIndex:
    """Per-player ordered match indices L^i with predecessor lookup.

    ``per_player[i]`` is the strictly increasing list of 1-based match
    indices involving player i; the predecessor of the first match of each
    player is the distinguished time-zero anchor, index 0.
    """

    per_player: list[list[int]]
    _position: dict[tuple[int, int], int] = field(repr=False, default_factory=dict)

    def predecessor(self, player: int, k: int) -> int:
        """Previous match index of ``player`` before match ``k`` (0 = anchor)."""
        pos = self._position[(player, k)]
        return self.per_player[player][pos - 1] if pos > 0 else 0

    @property
    def num_entries(self) -> int:
        """Stored (player, matchtime) slots: 2K match slots + N anchors."""
        return len(self.per_player) + sum(len(l) for l in self.per_player)


def build_sparse_index(stream: MatchStream) -> SparseIndex:
    """Assemble the per-player match lists realising the O(N + K) posterior."""
    per_player: list[list[int]] = [[] for _ in range(stream.num_players)]
    position: dict[tuple[int, int], int] = {}
    for r in stream.records:
        for pid in (r.home, r.away):
            i = stream.player_index[pid]
            position[(i, r.k)] = len(per_player[i])
            per_player[i].append(r.k)
    return SparseIndex(per_player, position)


def simultaneous_blocks(stream: MatchStream) -> list[list[int]]:
    """Partition match indices into blocks safe to assimilate in parallel.

    Matches sharing a matchtime and with pairwise-disjoint player sets form
    one block. At a shared timestamp, a match involving a player seen in an
    earlier same-time match is pushed to a later block, preserving input
    order per player.
    """
    blocks: list[list[int]] = []
    pos = 0
    records = stream.records
    while pos < len(records):
        end = pos
        t = records[pos].t
        while end < len(records) and records[end].t == t:
            end += 1
        sub_blocks: list[list[int]] = []
        last_block: dict[str, int] = {}  # player -> sub-block holding their latest match
        for r in records[pos:end]:
            b = max(last_block.get(r.home, -1), last_block.get(r.away, -1)) + 1
            if b == len(sub_blocks):
                sub_blocks.append([])
            sub_blocks[b].append(r.k)
            last_block[r.home] = b
            last_block[r.away] = b
        blocks.extend(sub_blocks)
        pos = end
    return blocks


@dataclass(frozen=True)
class PredictiveProbs:
    """Normalised probabilities over the ternary outcome alphabet."""

    home: float
    away: float
    draw: float = 0.0

    def __post_init__(self):
        total = self.home + self.away + self.draw
        if min(self.home, self.away, self.draw) < 0.0:
            raise ValueError(f"negative outcome probability in {self}")
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"outcome probabilities sum to {total}, not 1")

    @classmethod
    def normalised(cls, home: float, away: float, draw: float = 0.0) -> "PredictiveProbs":
        total = home + away + draw
        if total <= 0.0:
            raise ValueError("cannot normalise nonpositive outcome weights")
        return cls(home / total, away / total, draw / total)

    def of(self, y: Outcome) -> float:
        if y is Outcome.HOME_WIN:
            return self.home
        if y is Outcome.AWAY_WIN:
            return self.away
        return self.draw

    def as_dict(self) -> dict[Outcome, float]:
        return {Outcome.HOME_WIN: self.home, Outcome.AWAY_WIN: self.away, Outcome.DRAW: self.draw}
