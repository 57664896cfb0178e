"""Conditional visibility distributions p(v | antenna, context)."""
from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Protocol

import numpy as np

from ..errors import DomainError, SchemaError
from .grid import N_CELLS, cell_row


class VisibilityState(IntEnum):
    CLEAR = 0
    TRUNCATED = 1
    HIDDEN = 2

    @classmethod
    def parse(cls, s: str | int | "VisibilityState") -> "VisibilityState":
        if isinstance(s, (int, np.integer)):
            return cls(int(s))
        try:
            return cls[str(s).strip().upper()]
        except KeyError:
            raise DomainError(f"unknown visibility state {s!r}") from None


class VisibilityModel(Protocol):
    def probabilities(self, cell: int, context: tuple[int, ...]) -> np.ndarray:
        """Length-3 array over (Clear, Truncated, Hidden) summing to one."""


def _key(cell: int, context: tuple[int, ...], key_by: str) -> str:
    loc = cell_row(cell) if key_by == "row" else int(cell)
    return f"{loc}|" + ",".join(str(int(c)) for c in context)


class FrequencyTableVisibility:
    """Laplace-smoothed counts of visibility keyed by (row or cell, context).

    Unseen keys fall back to the (equally smoothed) marginal over all samples.
    """

    kind = "frequency"

    def __init__(self, counts: dict[str, np.ndarray], marginal: np.ndarray,
                 alpha: float = 1.0, key_by: str = "row"):
        if key_by not in ("row", "cell"):
            raise DomainError(f"key_by must be 'row' or 'cell', got {key_by!r}")
        if alpha <= 0:
            raise DomainError("alpha must be positive")
        self.counts = {k: np.asarray(v, dtype=float) for k, v in counts.items()}
        self.marginal = np.asarray(marginal, dtype=float)
        self.alpha = float(alpha)
        self.key_by = key_by
        self._cache: dict[str, np.ndarray] = {}

    def _smooth(self, n: np.ndarray) -> np.ndarray:
        return (n + self.alpha) / (n.sum() + 3 * self.alpha)

    def probabilities(self, cell: int, context: tuple[int, ...]) -> np.ndarray:
        k = _key(cell, context, self.key_by)
        p = self._cache.get(k)
        if p is None:
            n = self.counts.get(k)
            p = self._smooth(self.marginal if n is None else n)
            p.setflags(write=False)
            self._cache[k] = p
        return p

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "key_by": self.key_by,
            "marginal": self.marginal.tolist(),
            "counts": {k: self.counts[k].tolist() for k in sorted(self.counts)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyTableVisibility":
        return cls(d["counts"], d["marginal"], d.get("alpha", 1.0), d.get("key_by", "row"))


class ProbabilityTableVisibility:
    """Explicit probability table, e.g. exported from an external classifier."""

    kind = "table"

    def __init__(self, table: dict[str, Iterable[float]], default: Iterable[float],
                 key_by: str = "row"):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.default = np.asarray(default, dtype=float)
        self.key_by = key_by
        for k, v in [*self.table.items(), ("default", self.default)]:
            if v.shape != (3,) or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
                raise SchemaError(f"visibility row {k!r} is not a distribution: {v}")

    def probabilities(self, cell: int, context: tuple[int, ...]) -> np.ndarray:
        return self.table.get(_key(cell, context, self.key_by), self.default)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "key_by": self.key_by,
            "default": self.default.tolist(),
            "table": {k: self.table[k].tolist() for k in sorted(self.table)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProbabilityTableVisibility":
        return cls(d["table"], d["default"], d.get("key_by", "row"))


def visibility_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "frequency":
        return FrequencyTableVisibility.from_dict(d)
    if kind == "table":
        return ProbabilityTableVisibility.from_dict(d)
    raise SchemaError(f"unknown visibility model kind {kind!r}")


def fit_visibility(samples: Iterable[tuple[int, tuple[int, ...], VisibilityState]],
                   alpha: float = 1.0, key_by: str = "row") -> FrequencyTableVisibility:
    """Fit from (cell, context, observed state) triples."""
    counts: dict[str, np.ndarray] = {}
    marginal = np.zeros(3)
    n = 0
    for cell, ctx, v in samples:
        if not 1 <= cell <= N_CELLS:
            raise DomainError(f"bad antenna cell {cell}")
        k = _key(cell, tuple(ctx), key_by)
        counts.setdefault(k, np.zeros(3))[int(v)] += 1
        marginal[int(v)] += 1
        n += 1
    if n == 0:
        raise DomainError("fit_visibility needs at least one sample")
    return FrequencyTableVisibility(counts, marginal, alpha, key_by)
