"""Vertex enumeration of ``{y : G y <= h}`` by the double description method.

The polyhedron is homogenised to the cone ``{(y, t) : G y - h t <= 0, t >= 0}``
whose extreme rays with ``t > 0`` are the vertices and with ``t = 0`` the
recession directions.  Rays are kept as gcd-normalised integer vectors and
adjacency is decided combinatorially on packed zero sets, so the result is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import NotPointed
from .linalg import independent_rows, inverse

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)
_SAFE = 2**20


@dataclass(frozen=True)
class DualPolytope:
    """Inequality system ``G y <= h`` (one row per inequality)."""

    G: tuple
    h: tuple

    @property
    def dimension(self) -> int:
        return len(self.G[0])

    @classmethod
    def from_constraints(cls, A: Sequence[Sequence], c: Sequence, maximize: bool) -> "DualPolytope":
        """Dual feasible region of ``min c.q`` (``A^T y <= c``) or ``max c.q`` (``A^T y >= c``)."""
        m, n = len(A), len(A[0])
        s = -1 if maximize else 1
        G = tuple(tuple(s * A[i][j] for i in range(m)) for j in range(n))
        return cls(G, tuple(s * v for v in c))


@dataclass(frozen=True)
class VertexSet:
    vertices: tuple  # tuples of Fraction
    rays: tuple


def _integer_row(row) -> list[int]:
    fr = [Fraction(v) for v in row]
    den = math.lcm(*(f.denominator for f in fr)) if fr else 1
    return [int(f * den) for f in fr]


def _normalize(R: np.ndarray) -> np.ndarray:
    g = np.gcd.reduce(np.abs(R), axis=1) if R.dtype != object else np.array(
        [math.gcd(*map(int, r)) for r in R], dtype=object)
    g = np.where(g == 0, 1, g)
    return R // g[:, None]


def _guard(R: np.ndarray) -> np.ndarray:
    if R.dtype != object and R.size and np.abs(R).max() > _SAFE:
        return R.astype(object)
    return R


def _insertion_order(rows: list[list[int]], rule: str = "reverse") -> list[int]:
    """``reverse``: last row first (the homogenising row, then the inequalities
    backwards); ``nnz``: ascending count of nonzeros."""
    if rule == "nnz":
        return sorted(range(len(rows)), key=lambda i: (sum(1 for v in rows[i] if v), i))
    if rule == "reverse":
        return list(range(len(rows)))[::-1]
    raise ValueError(f"unknown insertion rule {rule!r}")


def enumerate_extreme_rays(rows: Sequence[Sequence[int]], order: Sequence[int] | None = None):
    """Extreme rays of the pointed cone ``{x : row . x <= 0 for all rows}``.

    Returns ``(rays, zero_sets)`` with integer rays and boolean incidence.
    """
    rows = [list(map(int, r)) for r in rows]
    nrows, d = len(rows), len(rows[0])
    order = list(order) if order is not None else list(range(nrows))
    basis = [order[i] for i in independent_rows([rows[i] for i in order], limit=d)]
    if len(basis) < d:
        raise NotPointed(f"inequality system has rank {len(basis)} < {d}")
    inv = inverse([rows[i] for i in basis])
    # column k of -B^{-1} is tight on every basis row except k
    R = _normalize(np.array([_integer_row([-inv[r][k] for r in range(d)]) for k in range(d)], dtype=object))
    if np.abs(R).max() <= _SAFE:
        R = R.astype(np.int64)
    nbytes = (nrows + 7) // 8
    Z = np.zeros((d, nbytes), dtype=np.uint8)
    for k in range(d):
        for j, r in enumerate(basis):
            if j != k:
                Z[k, r // 8] |= np.uint8(1 << (7 - r % 8))
    M = np.array(rows, dtype=np.int64)
    done = set(basis)
    for r in order:
        if r in done:
            continue
        done.add(r)
        s = R @ (M[r] if R.dtype != object else M[r].astype(object))
        pos, neg, zer = np.flatnonzero(s > 0), np.flatnonzero(s < 0), np.flatnonzero(s == 0)
        bit = np.uint8(1 << (7 - r % 8))
        if len(pos) == 0:
            Z[zer, r // 8] |= bit
            continue
        new_rays, new_z = _combine(R, Z, s, pos, neg, d)
        keep = np.concatenate([neg, zer])
        Zk = Z[keep].copy()
        Zk[len(neg):, r // 8] |= bit
        if len(new_rays):
            new_z[:, r // 8] |= bit
            R = _guard(np.concatenate([R[keep], new_rays.astype(R.dtype) if R.dtype != object else new_rays]))
            Z = np.concatenate([Zk, new_z])
        else:
            R, Z = R[keep], Zk
    incidence = np.unpackbits(Z, axis=1)[:, :nrows].astype(bool)
    return R, incidence


def _combine(R, Z, s, pos, neg, d):
    """New rays from adjacent (positive, negative) pairs."""
    need = d - 2
    out_rays, out_z = [], []
    Zp, Zn = Z[pos], Z[neg]
    chunk = max(1, 4_000_000 // max(1, len(neg) * Z.shape[1]))
    for start in range(0, len(pos), chunk):
        block = Zp[start:start + chunk]
        inter = block[:, None, :] & Zn[None, :, :]
        counts = _POPCOUNT[inter].sum(axis=2)
        ii, jj = np.nonzero(counts >= need)
        if len(ii) == 0:
            continue
        cand = inter[ii, jj]
        # adjacency: only the two parents contain the common zero set
        sub = max(1, 2_000_000 // max(1, len(Z) * Z.shape[1]))
        for cs in range(0, len(cand), sub):
            C = cand[cs:cs + sub]
            contained = ((Z[None, :, :] & C[:, None, :]) == C[:, None, :]).all(axis=2).sum(axis=1)
            ok = np.flatnonzero(contained == 2)
            if len(ok) == 0:
                continue
            p = pos[start + ii[cs + ok]]
            n = neg[jj[cs + ok]]
            sp, sn = s[p], s[n]
            rays = R[n] * sp[:, None] - R[p] * sn[:, None]
            out_rays.append(_normalize(rays))
            out_z.append(C[ok])
    if not out_rays:
        return np.zeros((0, R.shape[1]), dtype=R.dtype), np.zeros((0, Z.shape[1]), dtype=np.uint8)
    return np.concatenate(out_rays), np.concatenate(out_z)


def enumerate_vertices(poly: DualPolytope, with_rays: bool = False, order: str = "reverse"):
    """Exact, duplicate-free vertex list of a pointed polyhedron ``G y <= h``."""
    G = [_integer_row(list(g) + [-hv]) for g, hv in zip(poly.G, poly.h)]
    d = poly.dimension + 1
    cone = G + [[0] * (d - 1) + [-1]]
    R, _ = enumerate_extreme_rays(cone, _insertion_order(cone, order))
    verts, rays = [], []
    for r in R:
        r = [int(v) for v in r]
        t = r[-1]
        if t > 0:
            verts.append(tuple(Fraction(v, t) for v in r[:-1]))
        else:
            rays.append(tuple(Fraction(v) for v in r[:-1]))
    verts.sort()
    rays.sort()
    if with_rays:
        return VertexSet(tuple(verts), tuple(rays))
    return verts
