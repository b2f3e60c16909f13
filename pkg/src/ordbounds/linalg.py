"""Small exact linear-algebra helpers over ``Fraction``."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def row_echelon(rows: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form and pivot columns."""
    M = [[Fraction(v) for v in r] for r in rows]
    if not M:
        return M, []
    ncols = len(M[0])
    pivots = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(M)) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        inv = 1 / M[r][c]
        M[r] = [v * inv for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == len(M):
            break
    return M, pivots


def rank(rows: Sequence[Sequence]) -> int:
    return len(row_echelon(rows)[1])


def independent_rows(rows: Sequence[Sequence], limit: int | None = None) -> list[int]:
    """Greedy indices of a maximal linearly independent subset of ``rows`` (in order)."""
    basis: list[tuple[int, list[Fraction]]] = []  # (pivot col, reduced row)
    chosen = []
    for idx, row in enumerate(rows):
        v = [Fraction(a) for a in row]
        for col, b in basis:
            if v[col] != 0:
                f = v[col] / b[col]
                v = [a - f * bb for a, bb in zip(v, b)]
        col = next((j for j, a in enumerate(v) if a != 0), None)
        if col is not None:
            basis.append((col, v))
            chosen.append(idx)
            if limit is not None and len(chosen) == limit:
                break
    return chosen


def solve(matrix: Sequence[Sequence], rhs: Sequence) -> list[Fraction]:
    """Solve a square nonsingular system exactly."""
    n = len(matrix)
    aug = [list(map(Fraction, row)) + [Fraction(b)] for row, b in zip(matrix, rhs)]
    R, piv = row_echelon(aug)
    if piv[:n] != list(range(n)):
        raise ZeroDivisionError("singular system")
    return [R[i][n] for i in range(n)]


def inverse(matrix: Sequence[Sequence]) -> list[list[Fraction]]:
    n = len(matrix)
    aug = [list(map(Fraction, row)) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    R, piv = row_echelon(aug)
    if piv[:n] != list(range(n)):
        raise ZeroDivisionError("singular matrix")
    return [r[n:] for r in R]
