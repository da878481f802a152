"""Brute-force reference distributions for the search emulation.

Everything here is computed from materialized codewords and dense inner
products, sharing no code with the decoder or the search context, so the
emulated samplers can be tested against it.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
from scipy import stats

from .rpc import materialize


def _relation(points, code, cos, eps):
    words = materialize(code)
    return np.abs(points @ words.T - cos) <= eps


def tuple_distribution(points, code, code_prime, params) -> dict:
    """P[(x, c, y, c', z) | flag = 1] from the squared-amplitude closed form.

    Weight of a first-stage triple is 1/(m |R(x)| |R^-1(c)|) restricted to
    the theta band; c' is uniform over the truncated decoding of u and z
    uniform over the valid part of its bucket.
    """
    points = np.asarray(points, dtype=float)
    m = len(points)
    eps = params.epsilon
    rel = _relation(points, code, params.cos_alpha, eps)
    rel_p = _relation(points, code_prime, params.cos_alpha_prime, eps)
    words_p = materialize(code_prime)
    r_size = rel.sum(axis=1)
    inv_size = rel.sum(axis=0)
    gram = points @ points.T
    cap = params.truncation_cap
    out = {}
    total = 0.0
    for x in range(m):
        for c in np.nonzero(rel[x])[0]:
            for y in np.nonzero(rel[:, c])[0]:
                if y == x or abs(gram[x, y] - params.cos_theta) > eps:
                    continue
                w = 1.0 / (m * r_size[x] * inv_size[c])
                u = points[x] - points[y]
                u = u / np.linalg.norm(u)
                ru = np.nonzero(np.abs(words_p @ u - params.cos_alpha_prime) <= eps)[0][:cap]
                total += w
                if ru.size == 0:
                    continue
                t = points @ u
                for cp in ru:
                    zs = [z for z in np.nonzero(rel_p[:, cp])[0]
                          if z != x and z != y and abs(t[z] - params.cos_theta_prime) <= eps]
                    for z in zs:
                        key = (x, int(c), y, int(cp), int(z))
                        out[key] = out.get(key, 0.0) + w / ru.size / len(zs)
    flagged = sum(out.values())
    return {k: v / flagged for k, v in out.items()} if flagged else {}


def solution_distribution(points, code, code_prime, params) -> dict:
    """Per-triple output probability of the conditioned search."""
    out = {}
    for (x, _, y, _, z), p in tuple_distribution(points, code, code_prime, params).items():
        out[(x, y, z)] = out.get((x, y, z), 0.0) + p
    return out


def chi_square(samples, expected: dict, min_expected: float = 5.0) -> dict:
    """Pearson test of sampled keys against a probability table.

    Bins whose expected count is below ``min_expected`` are pooled. A sample
    outside the support makes the test fail outright.
    """
    counts = Counter(samples)
    n = sum(counts.values())
    outside = sum(v for k, v in counts.items() if k not in expected)
    if n == 0:
        raise ValueError("no samples")
    keys = sorted(expected, key=lambda k: expected[k])
    exp = np.array([expected[k] * n for k in keys])
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    small = exp < min_expected
    exp_b = list(exp[~small])
    obs_b = list(obs[~small])
    if small.any():
        exp_b.append(exp[small].sum())
        obs_b.append(obs[small].sum())
    exp_b = np.array(exp_b)
    obs_b = np.array(obs_b)
    exp_b *= obs_b.sum() / exp_b.sum()
    if len(exp_b) < 2:
        stat, p = 0.0, 1.0
    else:
        stat, p = stats.chisquare(obs_b, exp_b)
    if outside:
        p = 0.0
    return {"n": int(n), "bins": int(len(exp_b)), "statistic": float(stat), "p_value": float(p),
            "outside_support": int(outside), "support": len(expected)}
