"""Classical 3-tuple lattice sieve driven by the two-level product-code filter.

Each iteration shrinks the working radius by ``1 - mu``. Candidates come
from three sources: list vectors already inside the new radius, short pair
differences found while scanning first-code buckets, and triples
``x - y - z`` whose pair lies in the theta band and whose ``z`` shares a
second-code bucket with ``(x - y)/|x - y|`` and lies in the theta' band.
The list is closed under negation during the scan, so the four sign
patterns ``x +- y +- z`` are all reachable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..rpc import decode_ids, sample_rpc
from ..sieve import SieveParams, min_list_size
from .basis import LatticeBasis, LatticeVector, exact_sq_norm
from .enum import enumerate_lambda1
from .lll import gso, lll_reduce

DEFAULT_RHO = 0.9


class SamplingError(RuntimeError):
    pass


class SampleList(list):
    """List of sampled vectors with the sampler's bookkeeping attached."""

    radius: float
    sigma: float
    acceptance_rate: float
    retunes: int


def _canonical(coeffs: np.ndarray) -> np.ndarray:
    """Flip each row so its first nonzero entry is positive."""
    nz = coeffs != 0
    first = np.argmax(nz, axis=1)
    sign = np.sign(coeffs[np.arange(len(coeffs)), first])
    sign[sign == 0] = 1
    return coeffs * sign[:, None]


def _dedupe(coeffs: np.ndarray) -> np.ndarray:
    if len(coeffs) == 0:
        return coeffs.reshape(0, coeffs.shape[1] if coeffs.ndim == 2 else 0)
    c = _canonical(coeffs)
    c = c[c.any(axis=1)]
    _, idx = np.unique(c, axis=0, return_index=True)
    return c[np.sort(idx)]


def _klein_coeffs(mu, gs_norms, sigma, n, rng):
    d = len(gs_norms)
    x = np.zeros((n, d), dtype=np.int64)
    scale = sigma / np.sqrt(gs_norms)
    for i in range(d - 1, -1, -1):
        centre = -(x[:, i + 1 :] @ mu[i + 1 :, i]) if i + 1 < d else np.zeros(n)
        x[:, i] = np.rint(centre + scale[i] * rng.standard_normal(n)).astype(np.int64)
    return x


def sample_annulus_vectors(
    basis: LatticeBasis,
    n: int,
    rho: float = DEFAULT_RHO,
    rng=None,
    radius: float | None = None,
    sigma: float | None = None,
    floor: float = 0.02,
    max_retunes: int = 12,
    allow_short: bool = False,
    patience: int = 8,
) -> SampleList:
    """``n`` distinct lattice vectors with norms in [rho * radius, radius].

    Coefficients come from randomized rounding along the Gram-Schmidt
    directions (a Klein-style sampler). Without ``radius`` the radius is set
    to the 90th percentile of a pilot batch. The width is retuned whenever
    the acceptance rate drops below ``floor``. Small lattices may hold fewer
    than ``n`` vectors in the annulus: after ``patience`` batches with no new
    vector the partial list is returned if ``allow_short``, else an error.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    out = SampleList()
    mu, bn = gso(basis.rows)
    if sigma is None:
        sigma = float(np.sqrt(bn.max()))
    rows = basis.rows.astype(float)
    if radius is None:
        pilot = _klein_coeffs(mu, bn, sigma, 256, rng) @ rows
        radius = float(np.quantile(np.linalg.norm(pilot, axis=1), 0.9))
    out.radius, out.sigma, out.retunes = radius, sigma, 0
    out.acceptance_rate = 1.0
    if n == 0:
        return out
    kept = np.zeros((0, basis.d), dtype=np.int64)
    drawn = accepted = 0
    batch = max(64, 4 * n)
    stale = 0
    while len(kept) < n:
        c = _klein_coeffs(mu, bn, sigma, batch, rng)
        norms = np.linalg.norm(c @ rows, axis=1)
        ok = (norms >= rho * radius) & (norms <= radius) & c.any(axis=1)
        drawn += batch
        accepted += int(ok.sum())
        before = len(kept)
        kept = _dedupe(np.concatenate([kept, c[ok]]))
        stale = stale + 1 if len(kept) == before else 0
        if stale >= patience and len(kept) < n:
            if not allow_short:
                raise SamplingError(f"annulus yielded only {len(kept)} distinct vectors")
            break
        rate = accepted / drawn
        if rate < floor and len(kept) < n:
            if out.retunes >= max_retunes:
                raise SamplingError(f"acceptance rate {rate:.3g} below floor after {out.retunes} retunes")
            med = float(np.median(norms[norms > 0])) if np.any(norms > 0) else radius
            sigma *= (0.5 * (1.0 + rho) * radius) / med
            out.retunes += 1
            drawn = accepted = 0
    out.sigma = sigma
    out.acceptance_rate = accepted / drawn if drawn else 1.0
    out.extend(basis.vector(row) for row in kept[:n])
    return out


@dataclass
class SieveState:
    basis: LatticeBasis
    radius: float
    vectors: list
    iteration: int = 0
    history: list = field(default_factory=list)
    best: LatticeVector | None = None

    def coeff_array(self) -> np.ndarray:
        if not self.vectors:
            return np.zeros((0, self.basis.d), dtype=np.int64)
        return np.stack([v.coeffs for v in self.vectors])


@dataclass(frozen=True)
class LatticeSieveConfig:
    """Knobs for the lattice sieve; loop counts and band widths are desk-scale choices."""

    list_size: int = 0  # 0: list_factor * min_list_size(3, d), at least min_list
    list_factor: float = 2.0
    min_list: int = 400
    codes_per_iteration: int = 4
    epsilon: float = 0.0  # 0: 1/(log2 d)^2
    rho: float = DEFAULT_RHO
    mu: float = 0.0  # 0: 1/d
    max_iterations: int = 200
    min_keep: int = 8
    lll_delta: float = 0.99
    max_dim: int = 40
    time_budget: float = 120.0

    def resolve(self, d: int) -> dict:
        m = self.list_size or max(self.min_list, math.ceil(self.list_factor * min_list_size(3, d)[0]))
        # below d = 9 the default width leaves the band-angle domain (0, 0.1)
        eps = self.epsilon or min(1.0 / math.log2(d) ** 2, 0.099)
        mu = self.mu or 1.0 / d
        return {"m": int(m), "epsilon": eps, "mu": mu}


def lattice_sieve_params(d: int, m: int, epsilon: float, mu: float, codes: int) -> SieveParams:
    return SieveParams.for_dimension(d, m, epsilon=epsilon, mu=mu, ell1=codes, ell2=1)


def _bucket_lists(code, units, cos, eps):
    buckets: dict[int, list[int]] = {}
    for i, u in enumerate(units):
        for c in decode_ids(code, u, cos, eps):
            buckets.setdefault(int(c), []).append(i)
    return buckets


def sieve_iteration(state: SieveState, params: SieveParams, rng) -> SieveState:
    """One sieve step at radius (1 - mu) * R; see the module docstring."""
    t0 = time.perf_counter()
    basis = state.basis
    d = basis.d
    rows = basis.rows.astype(float)
    m = params.m
    new_r = (1.0 - params.mu) * state.radius
    coeffs = state.coeff_array()
    emb = coeffs @ rows
    # scan list closed under negation
    s_coef = np.concatenate([coeffs, -coeffs])
    s_emb = np.concatenate([emb, -emb])
    norms = np.linalg.norm(s_emb, axis=1)
    units = s_emb / norms[:, None]
    eps = params.epsilon
    lim2 = new_r * new_r * (1.0 + 1e-12)

    old = coeffs[np.linalg.norm(emb, axis=1) <= new_r] if len(coeffs) else coeffs
    found = [old]
    n_pairs = n_band_pairs = n_triples = 0
    bucket_sizes = []
    for _ in range(params.ell1):
        code = sample_rpc(d, params.blocks, params.code_size, params.t_rotations, rng)
        code_p = sample_rpc(d, params.blocks, params.code_size_prime, params.t_rotations, rng)
        first = _bucket_lists(code, units, params.cos_alpha, eps)
        second = _bucket_lists(code_p, units, params.cos_alpha_prime, eps)
        for members in first.values():
            idx = np.asarray(members)
            bucket_sizes.append(idx.size)
            if idx.size < 2:
                continue
            g = units[idx] @ units[idx].T
            e = s_emb[idx]
            sq = (e * e).sum(axis=1)
            dist = sq[:, None] + sq[None, :] - 2.0 * (e @ e.T)
            iu, ju = np.triu_indices(idx.size, 1)
            short = dist[iu, ju] <= lim2
            n_pairs += iu.size
            if short.any():
                found.append(s_coef[idx[iu[short]]] - s_coef[idx[ju[short]]])
            band = np.abs(g[iu, ju] - params.cos_theta) <= eps
            for a, b in zip(idx[iu[band]], idx[ju[band]]):
                n_band_pairs += 1
                diff = units[a] - units[b]
                u = diff / np.linalg.norm(diff)
                zs = set()
                for cp in decode_ids(code_p, u, params.cos_alpha_prime, eps):
                    zs.update(second.get(int(cp), ()))
                if not zs:
                    continue
                z = np.fromiter(zs, dtype=np.int64)
                z = z[np.abs(units[z] @ u - params.cos_theta_prime) <= eps]
                if z.size == 0:
                    continue
                cand = s_emb[a] - s_emb[b] - s_emb[z]
                ok = (cand * cand).sum(axis=1) <= lim2
                n_triples += int(z.size)
                if ok.any():
                    found.append(s_coef[a] - s_coef[b] - s_coef[z[ok]])
    cand = _dedupe(np.concatenate(found)) if found else np.zeros((0, d), dtype=np.int64)
    # exact norms decide the final membership
    cemb = cand @ basis.rows
    sqn = np.array([exact_sq_norm(r) for r in cemb], dtype=float)
    keep = sqn <= new_r * new_r * (1.0 + 1e-12)
    cand, sqn = cand[keep], sqn[keep]
    order = np.argsort(sqn, kind="stable")[:m]
    cand = cand[order]
    vectors = [basis.vector(c) for c in cand]
    best = state.best
    if vectors and (best is None or vectors[0].norm < best.norm):
        best = vectors[0]
    shortfall = len(vectors) < m
    history = state.history + [
        {
            "iteration": state.iteration + 1,
            "radius": new_r,
            "list_size": len(vectors),
            "yield": int(len(order)),
            "shortfall": shortfall,
            "pairs_scanned": n_pairs,
            "band_pairs": n_band_pairs,
            "triples_checked": n_triples,
            "mean_bucket": float(np.mean(bucket_sizes)) if bucket_sizes else 0.0,
            "max_bucket": int(max(bucket_sizes)) if bucket_sizes else 0,
            "best_norm": best.norm if best else None,
            "wall_time": time.perf_counter() - t0,
        }
    ]
    return SieveState(basis, new_r, vectors, state.iteration + 1, history, best)


@dataclass
class SvpResult:
    vector: LatticeVector  # in the caller's basis coordinates
    trace: list
    incomplete: bool
    lll_norm: float
    sieve_best_norm: float | None
    config: dict


def solve_svp(basis: LatticeBasis, config: LatticeSieveConfig | None = None, rng=None) -> SvpResult:
    """LLL, annulus sampling, then sieve iterations until the list dies out."""
    config = config or LatticeSieveConfig()
    d = basis.d
    if d > config.max_dim:
        raise ValueError(f"dimension {d} exceeds the configured maximum {config.max_dim}")
    t0 = time.perf_counter()
    red = lll_reduce(LatticeBasis(basis.rows), config.lll_delta)
    work = LatticeBasis(red.rows)
    lll_best = min((work.vector(np.eye(d, dtype=np.int64)[i]) for i in range(d)), key=lambda v: v.norm)
    if d <= 2:
        # LLL alone reaches the minimum in dimension 2
        best = lll_best
        trace, incomplete, sieve_best = [], False, None
    else:
        res = config.resolve(d)
        params = lattice_sieve_params(d, res["m"], res["epsilon"], res["mu"], config.codes_per_iteration)
        sample = sample_annulus_vectors(work, res["m"], config.rho, rng, allow_short=True)
        state = SieveState(work, sample.radius, list(sample), 0, [], None)
        state.best = min(state.vectors, key=lambda v: v.norm) if state.vectors else None
        trace = [{"iteration": 0, "radius": sample.radius, "list_size": len(sample),
                  "acceptance_rate": sample.acceptance_rate, "sigma": sample.sigma}]
        incomplete = False
        while len(state.vectors) >= config.min_keep:
            if state.iteration >= config.max_iterations or time.perf_counter() - t0 > config.time_budget:
                incomplete = True
                break
            state = sieve_iteration(state, params, rng)
            trace.append(state.history[-1])
        sieve_best = state.best.norm if state.best else None
        best = lll_best if state.best is None or lll_best.norm <= state.best.norm else state.best
    out = basis.vector(best.coeffs @ red.transform)
    return SvpResult(out, trace, incomplete, lll_best.norm, sieve_best, {"lll_delta": config.lll_delta, **config.__dict__})


def svp_oracle_ratio(basis: LatticeBasis, result: SvpResult) -> float:
    lam, _ = enumerate_lambda1(basis)
    return result.vector.norm / lam
