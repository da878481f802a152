"""Exact shortest-vector oracle: Schnorr-Euchner enumeration on an LLL basis."""

from __future__ import annotations

import numpy as np

from .._accel import njit
from .basis import LatticeBasis, LatticeVector, exact_sq_norm
from .lll import gso, lll_reduce

MAX_ENUM_DIM = 24


@njit
def _se_enum(mu, bn, radius_sq):
    n = bn.shape[0]
    x = np.zeros(n, dtype=np.int64)
    best = np.zeros(n, dtype=np.int64)
    c = np.zeros(n)
    part = np.zeros(n + 1)
    dx = np.zeros(n, dtype=np.int64)
    ddx = np.zeros(n, dtype=np.int64)
    found = False
    k = n - 1
    dx[k] = 1
    ddx[k] = 1
    while True:
        diff = x[k] - c[k]
        part[k] = part[k + 1] + diff * diff * bn[k]
        if part[k] < radius_sq:
            if k > 0:
                k -= 1
                s = 0.0
                for j in range(k + 1, n):
                    s -= x[j] * mu[j, k]
                c[k] = s
                x[k] = np.int64(np.rint(s))
                if s >= x[k]:
                    dx[k] = 1
                    ddx[k] = 1
                else:
                    dx[k] = -1
                    ddx[k] = -1
                continue
            if part[0] > 0.0:
                radius_sq = part[0] * (1.0 - 1e-12)
                best[:] = x
                found = True
        else:
            k += 1
            if k == n:
                break
        # next sibling at level k
        if part[k + 1] == 0.0:
            x[k] += 1
        else:
            x[k] += dx[k]
            ddx[k] = -ddx[k]
            dx[k] = ddx[k] - dx[k]
    return best, found


def enumerate_lambda1(basis: LatticeBasis, max_dim: int = MAX_ENUM_DIM) -> tuple[float, LatticeVector]:
    """(lambda_1, witness) with the witness expressed in ``basis`` coordinates."""
    if basis.d > max_dim:
        raise ValueError(f"enumeration is limited to d <= {max_dim}")
    red = lll_reduce(LatticeBasis(basis.rows))
    mu, bn = gso(red.rows)
    first = exact_sq_norm(red.rows[0])
    coeffs, found = _se_enum(mu, bn, first * (1.0 + 1e-9))
    if not found:
        coeffs = np.zeros(basis.d, dtype=np.int64)
        coeffs[0] = 1
    # back to the caller's basis: red = U @ basis
    orig = np.asarray(coeffs, dtype=np.int64) @ red.transform
    vec = basis.vector(orig)
    if exact_sq_norm(vec.embedding.astype(np.int64)) > first:
        vec = basis.vector(red.transform[0])
    return vec.norm, vec
