"""The 3 x 6 antenna grid and the permutation-invariant context vector."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import DomainError
from ..geometry import Point2

ROWS = 3
COLS = 6
N_CELLS = ROWS * COLS


def _check(cell: int) -> int:
    if not (isinstance(cell, (int, np.integer)) and 1 <= cell <= N_CELLS):
        raise DomainError(f"antenna cell must be an integer in 1..{N_CELLS}, got {cell!r}")
    return int(cell)


# Cells are numbered down each column first: 1, 4, 7, ... share a row (depth).
def cell_row(cell: int) -> int:
    return (_check(cell) - 1) % ROWS


def cell_col(cell: int) -> int:
    return (_check(cell) - 1) // ROWS


def cell_at(row: int, col: int) -> int:
    if not (0 <= row < ROWS and 0 <= col < COLS):
        raise DomainError(f"(row={row}, col={col}) is off the grid")
    return col * ROWS + row + 1


@dataclass(frozen=True)
class AntennaGrid:
    """Antenna centres on the base-plate in millimetres."""

    pitch_x: float = 80.0
    pitch_y: float = 80.0
    origin_x: float = 40.0
    origin_y: float = 40.0

    rows: int = ROWS
    cols: int = COLS

    def world(self, cell: int) -> Point2:
        return Point2(self.origin_x + cell_col(cell) * self.pitch_x,
                      self.origin_y + cell_row(cell) * self.pitch_y)

    def world_coords(self) -> np.ndarray:
        """(18, 2) array; row k holds cell k + 1."""
        return np.array([self.world(c) for c in range(1, N_CELLS + 1)])


def context_vector(p: int, others: Iterable[int]) -> tuple[int, ...]:
    """Counts of other identities in the 3 x 3 neighbourhood of ``p``.

    Neighbourhood index is ``(d_row + 1) * 3 + (d_col + 1)`` so ``p`` itself is
    index 4. Identities outside the neighbourhood are not counted.
    """
    pr, pc = cell_row(p), cell_col(p)
    counts = [0] * 9
    for o in others:
        dr = cell_row(o) - pr
        dc = cell_col(o) - pc
        if abs(dr) <= 1 and abs(dc) <= 1:
            counts[(dr + 1) * 3 + (dc + 1)] += 1
    return tuple(counts)
