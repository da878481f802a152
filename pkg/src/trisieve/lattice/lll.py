"""LLL reduction on integer row bases with floating-point Gram-Schmidt data."""

from __future__ import annotations

import numpy as np

from .basis import LatticeBasis


def gso(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(mu, squared GS norms) of the rows, computed afresh in float64."""
    b = np.asarray(rows, dtype=float)
    d = b.shape[0]
    bstar = np.zeros_like(b)
    mu = np.eye(d)
    bn = np.zeros(d)
    for i in range(d):
        v = b[i].copy()
        for j in range(i):
            mu[i, j] = b[i] @ bstar[j] / bn[j]
            v -= mu[i, j] * bstar[j]
        bstar[i] = v
        bn[i] = v @ v
    return mu, bn


def is_lll_reduced(basis: LatticeBasis, delta: float = 0.99, eta: float = 0.51) -> bool:
    mu, bn = gso(basis.rows)
    d = basis.d
    if np.any(np.abs(np.tril(mu, -1)) > eta):
        return False
    return all(bn[k] >= (delta - mu[k, k - 1] ** 2) * bn[k - 1] * (1 - 1e-12) for k in range(1, d))


def lll_reduce(basis: LatticeBasis, delta: float = 0.99) -> LatticeBasis:
    """LLL-reduced basis of the same lattice; ``transform`` maps old rows to new."""
    if not 0.25 < delta < 1.0:
        raise ValueError("delta must lie in (0.25, 1)")
    b = basis.rows.copy()
    d = b.shape[0]
    u = np.eye(d, dtype=np.int64)
    for _attempt in range(4):
        mu, bn = gso(b)
        k = 1
        while k < d:
            for j in range(k - 1, -1, -1):
                r = int(round(mu[k, j]))
                if r:
                    b[k] -= r * b[j]
                    u[k] -= r * u[j]
                    mu[k, : j + 1] -= r * mu[j, : j + 1]
            if bn[k] >= (delta - mu[k, k - 1] ** 2) * bn[k - 1]:
                k += 1
                continue
            # swap rows k-1 and k and update the GS data in place
            b[[k - 1, k]] = b[[k, k - 1]]
            u[[k - 1, k]] = u[[k, k - 1]]
            m = mu[k, k - 1]
            new_prev = bn[k] + m * m * bn[k - 1]
            mu[k, k - 1] = m * bn[k - 1] / new_prev
            bn[k] = bn[k - 1] * bn[k] / new_prev
            bn[k - 1] = new_prev
            mu[[k - 1, k], : k - 1] = mu[[k, k - 1], : k - 1]
            for i in range(k + 1, d):
                t = mu[i, k]
                mu[i, k] = mu[i, k - 1] - m * t
                mu[i, k - 1] = t + mu[k, k - 1] * mu[i, k]
            k = max(k - 1, 1)
        out = LatticeBasis(b, transform=u @ basis.transform if basis.transform is not None else u)
        if is_lll_reduced(out, delta):
            return out
    return out
