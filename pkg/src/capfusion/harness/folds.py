"""Leave-one-session-out fold plans."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Fold:
    index: int
    test: str
    val: str
    train: tuple


@dataclass(frozen=True)
class FoldPlan:
    sessions: tuple
    folds: tuple

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def make_loso_folds(sessions) -> FoldPlan:
    """Fold i tests session i, validates on session (i+1) mod n, trains on the rest."""
    sessions = tuple(sessions)
    if len(set(sessions)) != len(sessions):
        raise ValueError(f"duplicate sessions in {list(sessions)}")
    n = len(sessions)
    if n < 3:
        raise ValueError(f"leave-one-session-out needs at least 3 sessions, got {n}")
    folds = []
    for i, test in enumerate(sessions):
        val = sessions[(i + 1) % n]
        train = tuple(s for s in sessions if s not in (test, val))
        folds.append(Fold(i, test, val, train))
    return FoldPlan(sessions, tuple(folds))
