"""Classical emulation of the quantum triple search, with brute-force oracles.

The search looks for ordered triples ``(x, y, z)`` of distinct list vectors
with ``<x, y>`` near ``cos_theta`` and ``<u, z>`` near ``cos_theta_prime``,
where ``u = (x - y) / |x - y|``. Two random product codes filter the search:
``x`` and ``y`` must share a codeword of the first code (angle alpha), and
``u`` and ``z`` a codeword of the second (angle alpha').

Amplitude amplification is emulated by its ideal contract. The first stage
samples ``(x, c, y)`` from the collision distribution restricted to pairs in
the theta band; the second draws ``c'`` from the decoding of ``u`` and then
``z`` from the matching sub-bucket. Both conditioned draws are exact, either
by enumeration or by rejection, and costs are charged to a ledger.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .aasim import (
    DEFAULT_DELTA,
    DEFAULT_ETA,
    AmplifiableState,
    QueryLedger,
    ideal_amplify,
    rounds_needed,
)
from .relstore import BACKWARD, FORWARD, RelationStore
from .rpc import RpcDescription, choose_blocks, decode_ids, sample_rpc
from .sphere import AngleSpec, band_probability, cap_exponent, epsilon_for, wedge_band_probability

DEFAULT_SLACK = 0.04
MAX_ENUM_M = 2000


class EmptySearchError(RuntimeError):
    """No pair passes the first-stage filter."""


class NoSolutionError(RuntimeError):
    """The filtered triple set is empty for this pair of codes."""


# ------------------------------------------------------------- parameters


def min_list_size_exponent(k: int) -> float:
    """log2 of the minimal k-list size divided by d."""
    if k < 2:
        raise ValueError("k must be at least 2")
    return 0.5 * math.log2(k ** (k / (k - 1)) / (k + 1))


def min_list_size(k: int, d: int) -> tuple[float, float]:
    """(list size, per-dimension exponent) for k-tuple sieving in dimension d."""
    e = min_list_size_exponent(k)
    return 2.0 ** (e * d), e


def choose_theta(epsilon: float, formula: str = "corrected") -> tuple[float, float]:
    """Solution angles for the pair and the third vector.

    ``corrected`` uses eps + sqrt((1 - 1/3 + eps)/2) = eps + sqrt(1/3 + eps/2),
    the smallest band centre that still forces |x - y - z| <= 1 for every
    triple in the bands. ``stated`` uses eps + sqrt(1/3 - eps/2), which
    misses that guarantee near the band edges.
    """
    if not 0.0 < epsilon < 0.1:
        raise ValueError("epsilon must lie in (0, 0.1)")
    if formula == "corrected":
        return 1.0 / 3.0, epsilon + math.sqrt(1.0 / 3.0 + epsilon / 2.0)
    if formula == "stated":
        return 1.0 / 3.0, epsilon + math.sqrt(1.0 / 3.0 - epsilon / 2.0)
    raise ValueError(f"unknown formula {formula!r}")


@dataclass(frozen=True)
class CostModel:
    """Unit costs of the building blocks, in abstract steps."""

    sample: float = 1.0  # one collision sample from D
    check_pair: float = 1.0  # theta-band test on (x, y)
    decode: float = 1.0  # decoding (x - y)/|x - y| with the second code
    sample_z: float = 1.0  # one draw from a second-code bucket
    check_z: float = 1.0  # theta'-band test on z
    check_triple: float = 1.0  # outer flag test


@dataclass(frozen=True)
class SieveParams:
    d: int
    m: int
    cos_theta: float
    cos_theta_prime: float
    cos_alpha: float
    cos_alpha_prime: float
    epsilon: float
    ell1: int = 1
    ell2: int = 1
    r1: int | None = None  # None: derive from measured masses
    r2: int | None = None
    r3: int | None = None
    mu: float | None = None
    code_size: float = 1.0
    code_size_prime: float = 1.0
    blocks: int | None = None
    t_rotations: int = 1
    truncation_cap: int | None = None
    delta: float = DEFAULT_DELTA
    eta: float = DEFAULT_ETA
    round_multiplier: float = 1.0
    costs: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        for name in ("ell1", "ell2", "r1", "r2", "r3"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")
        if self.m < 0 or self.d < 2:
            raise ValueError("bad list size or dimension")
        if self.mu is None:
            object.__setattr__(self, "mu", 1.0 / self.d)
        if self.blocks is None:
            object.__setattr__(self, "blocks", choose_blocks(self.d))
        if self.truncation_cap is None:
            object.__setattr__(self, "truncation_cap", default_truncation_cap(self.d))

    @classmethod
    def for_dimension(
        cls,
        d: int,
        m: int,
        cos_alpha: float = 0.347606,
        cos_alpha_prime: float = 0.427124,
        epsilon: float | None = None,
        theta_formula: str = "corrected",
        **overrides,
    ) -> "SieveParams":
        """Parameters with code sizes 1/p_alpha, 1/p_alpha' and desk-scale loop counts."""
        eps = epsilon_for(d) if epsilon is None else epsilon
        ct, ctp = choose_theta(eps, theta_formula)
        base = dict(
            d=d,
            m=m,
            cos_theta=ct,
            cos_theta_prime=ctp,
            cos_alpha=cos_alpha,
            cos_alpha_prime=cos_alpha_prime,
            epsilon=eps,
            code_size=2.0 ** (-cap_exponent(cos_alpha) * d),
            code_size_prime=2.0 ** (-cap_exponent(cos_alpha_prime) * d),
        )
        base.update(overrides)
        params = cls(**base)
        if "ell1" not in overrides or "ell2" not in overrides:
            pred = desk_predictions(params)
            ell1 = overrides.get("ell1", max(1, math.ceil(1.0 / max(pred["ratio_T_over_Tsol"], 1e-300))))
            ell2 = overrides.get("ell2", max(1, math.ceil(pred["T"])))
            params = cls(**{**base, "ell1": int(ell1), "ell2": int(ell2)})
        return params

    def to_dict(self) -> dict:
        return asdict(self)


def default_truncation_cap(d: int) -> int:
    return int(math.floor(2.0 ** (d / math.log2(d))))


def desk_predictions(params: SieveParams, realized: bool = True) -> dict:
    """Finite-d expectations from exact band probabilities.

    Code sizes are the realized ones (per-block size rounded up) unless
    ``realized`` is false.
    """
    d, m, eps = params.d, params.m, params.epsilon
    b = params.blocks
    if realized:
        from .rpc import block_size

        size = params.t_rotations * block_size(params.code_size, b) ** b
        size_p = params.t_rotations * block_size(params.code_size_prime, b) ** b
    else:
        size, size_p = params.code_size, params.code_size_prime
    pa = band_probability(d, params.cos_alpha, eps)
    pap = band_probability(d, params.cos_alpha_prime, eps)
    pt = band_probability(d, params.cos_theta, eps)
    ptp = band_probability(d, params.cos_theta_prime, eps)
    w_aat = wedge_band_probability(d, AngleSpec(params.cos_alpha, params.cos_alpha, params.cos_theta, eps))
    w_apapt = wedge_band_probability(
        d, AngleSpec(params.cos_alpha_prime, params.cos_alpha_prime, params.cos_theta_prime, eps)
    )
    coll = min(1.0, size * w_aat)
    coll_p = min(1.0, size_p * w_apapt)
    n_ordered = m * (m - 1)
    return {
        "code_size": size,
        "code_size_prime": size_p,
        "p_alpha": pa,
        "p_alpha_prime": pap,
        "p_theta": pt,
        "p_theta_prime": ptp,
        "collision": coll,
        "collision_prime": coll_p,
        "bucket": m * pa,
        "bucket_prime": m * pap,
        "z_bound": max(1.0, m * ptp * coll_p),
        "M1": n_ordered * pt * coll,
        "T_sol": n_ordered * (m - 2) * pt * ptp,
        "T": n_ordered * (m - 2) * pt * ptp * coll * coll_p,
        "ratio_T_over_Tsol": coll * coll_p,
    }


# ------------------------------------------------------------- solutions


@dataclass(frozen=True)
class TripleSolution:
    x_id: int
    y_id: int
    z_id: int
    inner_xy: float
    inner_diff_z: float
    witness_c: object = None
    witness_c_prime: object = None

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.x_id, self.y_id, self.z_id)


def _diff_inner(points, x, y, z):
    u = points[x] - points[y]
    return float(u @ points[z] / np.linalg.norm(u))


def make_solution(points, x, y, z, witness_c=None, witness_c_prime=None) -> TripleSolution:
    return TripleSolution(
        int(x),
        int(y),
        int(z),
        float(points[x] @ points[y]),
        _diff_inner(points, x, y, z),
        witness_c,
        witness_c_prime,
    )


def in_T_sol(points, params: SieveParams, x, y, z) -> bool:
    if len({int(x), int(y), int(z)}) < 3:
        return False
    g = float(points[x] @ points[y])
    if abs(g - params.cos_theta) > params.epsilon:
        return False
    return abs(_diff_inner(points, x, y, z) - params.cos_theta_prime) <= params.epsilon


def _bands(params):
    e = params.epsilon
    return (params.cos_theta - e, params.cos_theta + e, params.cos_theta_prime - e, params.cos_theta_prime + e)


def T_sol_array(points: np.ndarray, params: SieveParams, scan=None) -> np.ndarray:
    """(k, 3) array of all ordered distinct solution triples, lexicographic."""
    points = np.ascontiguousarray(points, dtype=float)
    if len(points) > MAX_ENUM_M:
        raise ValueError(f"list too large for exhaustive enumeration ({len(points)} > {MAX_ENUM_M})")
    scan = scan or kernels.tsol_scan
    lo1, hi1, lo2, hi2 = _bands(params)
    _, total = scan(points, lo1, hi1, lo2, hi2, True, 0)
    out, _ = scan(points, lo1, hi1, lo2, hi2, False, max(int(total), 1))
    return np.asarray(out, dtype=np.int64)[:total]


def count_T_sol(points: np.ndarray, params: SieveParams, scan=None) -> int:
    points = np.ascontiguousarray(points, dtype=float)
    if len(points) > MAX_ENUM_M:
        raise ValueError(f"list too large for exhaustive enumeration ({len(points)} > {MAX_ENUM_M})")
    scan = scan or kernels.tsol_scan
    lo1, hi1, lo2, hi2 = _bands(params)
    _, total = scan(points, lo1, hi1, lo2, hi2, True, 0)
    return int(total)


def enumerate_T_sol(points, params: SieveParams) -> list[TripleSolution]:
    points = np.asarray(points, dtype=float)
    return [make_solution(points, *t) for t in T_sol_array(points, params)]


# ------------------------------------------------------------- preprocessing


def preprocess(points, rpc: RpcDescription, rpc_prime: RpcDescription, params: SieveParams):
    """Stores of the two list-to-code relations, both frozen."""
    D, Dp = RelationStore(), RelationStore()
    for i, x in enumerate(np.asarray(points, dtype=float).reshape(-1, params.d)):
        D.insert_many(i, decode_ids(rpc, x, params.cos_alpha, params.epsilon))
        Dp.insert_many(i, decode_ids(rpc_prime, x, params.cos_alpha_prime, params.epsilon))
    return D.freeze(), Dp.freeze()


def _incidence(store: RelationStore, m: int, n_codes: int) -> np.ndarray:
    ptr, members, _ = store.csr(FORWARD, m)
    inc = np.zeros((m, n_codes), dtype=bool)
    rows = np.repeat(np.arange(m), np.diff(ptr))
    inc[rows, members] = True
    return inc


# ------------------------------------------------------------- collision sampling


def r_collision_sample(D: RelationStore, L, rng):
    """(x, c, y) with x uniform, c uniform in R(x), y uniform in R^-1(c).

    ``L`` is the list or its size. ``c`` and ``y`` are None when R(x) is empty.
    """
    m = L if isinstance(L, (int, np.integer)) else len(L)
    x = int(rng.integers(m))
    c = D.sample_bucket(x, FORWARD, rng)
    if c is None:
        return x, None, None
    return x, c, D.sample_bucket(c, BACKWARD, rng)


@dataclass
class _Csr:
    fptr: np.ndarray
    fmem: np.ndarray
    bptr: np.ndarray
    bmem: np.ndarray
    bkeys: np.ndarray

    @classmethod
    def of(cls, store: RelationStore, m: int) -> "_Csr":
        fptr, fmem, _ = store.csr(FORWARD, m)
        bptr, bmem, bkeys = store.csr(BACKWARD)
        return cls(fptr, fmem, bptr, bmem, bkeys)

    def fsize(self, x):
        return self.fptr[x + 1] - self.fptr[x]

    def bslot(self, c):
        return np.searchsorted(self.bkeys, c)

    def bsize_slot(self, k):
        return self.bptr[k + 1] - self.bptr[k]


def r_collision_batch(csr: _Csr, m: int, n: int, rng):
    """Vectorized collision sampling; -1 marks the empty-bucket branch."""
    x = rng.integers(m, size=n)
    nx = csr.fsize(x)
    c = np.full(n, -1, dtype=np.int64)
    y = np.full(n, -1, dtype=np.int64)
    ok = nx > 0
    pick = csr.fptr[x[ok]] + (rng.random(ok.sum()) * nx[ok]).astype(np.int64)
    c[ok] = csr.fmem[pick]
    slot = csr.bslot(c[ok])
    nb = csr.bsize_slot(slot)
    y[ok] = csr.bmem[csr.bptr[slot] + (rng.random(ok.sum()) * nb).astype(np.int64)]
    return x, c, y


# ------------------------------------------------------------- search context


@dataclass
class TupleBatch:
    x: np.ndarray
    c: np.ndarray
    y: np.ndarray
    c_prime: np.ndarray  # -1 for none
    z: np.ndarray  # -1 for none
    flag: np.ndarray
    truncated: np.ndarray


@dataclass
class TupleDraw:
    x: int
    c: int
    y: int
    c_prime: int | None
    z: int | None
    flag: int
    truncated: bool


class SearchContext:
    """Everything the search needs for one list and one pair of codes.

    Built once per (L, C, C'); holds the first-stage triple table with its
    exact weights and, for every first-stage pair, the truncated decoding of
    the normalized difference and the z sub-buckets.
    """

    def __init__(self, points, D: RelationStore, Dp: RelationStore, rpc_prime: RpcDescription, params: SieveParams):
        self.points = np.ascontiguousarray(points, dtype=float)
        self.params = params
        self.m = m = len(self.points)
        self.D, self.Dp = D, Dp
        self.csr = _Csr.of(D, m)
        self.csr_p = _Csr.of(Dp, m)
        eps = params.epsilon
        gram = self.points @ self.points.T

        # first stage: all (x, c, y) with y in the theta band of x
        tx, tc, ty = [], [], []
        f = self.csr
        for k, c in enumerate(f.bkeys):
            members = f.bmem[f.bptr[k] : f.bptr[k + 1]]
            if members.size == 0:
                continue
            xs = np.repeat(members, members.size)
            ys = np.tile(members, members.size)
            keep = (np.abs(gram[xs, ys] - params.cos_theta) <= eps) & (xs != ys)
            tx.append(xs[keep])
            ty.append(ys[keep])
            tc.append(np.full(int(keep.sum()), c, dtype=np.int64))
        cat = lambda parts: np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)  # noqa: E731
        tx, tc, ty = cat(tx), cat(tc), cat(ty)
        order = np.lexsort((ty, tc, tx))
        self.tx, self.tc, self.ty = tx[order], tc[order], ty[order]
        nb = f.bsize_slot(f.bslot(self.tc)) if self.tc.size else np.empty(0)
        self.t_weight = 1.0 / (m * f.fsize(self.tx) * nb) if self.tc.size else np.empty(0)
        self.good_mass = float(self.t_weight.sum())

        # distinct first-stage pairs and their second-stage tables
        pair_key = self.tx * m + self.ty
        self.pairs, self.t_pair = np.unique(pair_key, return_inverse=True)
        self.in_M1 = np.zeros((m, m), dtype=bool)
        self.in_M1[self.pairs // m, self.pairs % m] = True
        cap = params.truncation_cap
        cp_ptr = [0]
        cp_ids, cpz_ptr, cpz = [], [0], []
        self.pair_truncated = np.zeros(self.pairs.size, dtype=bool)
        self.pair_full_size = np.zeros(self.pairs.size, dtype=np.int64)
        g = self.csr_p
        for p, key in enumerate(self.pairs):
            x, y = divmod(int(key), m)
            u = self.points[x] - self.points[y]
            u /= np.linalg.norm(u)
            full = decode_ids(rpc_prime, u, params.cos_alpha_prime, eps)
            self.pair_full_size[p] = full.size
            if full.size > cap:
                self.pair_truncated[p] = True
            kept = full[:cap]
            for cp in kept:
                slot = g.bslot(cp)
                if slot < g.bkeys.size and g.bkeys[slot] == cp:
                    zs = g.bmem[g.bptr[slot] : g.bptr[slot + 1]]
                else:
                    zs = np.empty(0, dtype=np.int64)
                if zs.size:
                    t = self.points[zs] @ u
                    zs = zs[(np.abs(t - params.cos_theta_prime) <= eps) & (zs != x) & (zs != y)]
                cp_ids.append(int(cp))
                cpz.extend(int(z) for z in zs)
                cpz_ptr.append(len(cpz))
            cp_ptr.append(len(cp_ids))
        self.cp_ptr = np.asarray(cp_ptr, dtype=np.int64)
        self.cp_ids = np.asarray(cp_ids, dtype=np.int64)
        self.cpz_ptr = np.asarray(cpz_ptr, dtype=np.int64)
        self.cpz = np.asarray(cpz, dtype=np.int64)
        self.cp_zcount = np.diff(self.cpz_ptr)
        n_cp = np.diff(self.cp_ptr)
        # fraction of c' choices with a non-empty z list, per pair
        ok_cp = np.zeros(self.pairs.size)
        np.add.at(ok_cp, np.repeat(np.arange(self.pairs.size), n_cp), self.cp_zcount > 0)
        self.pair_success = np.where(n_cp > 0, ok_cp / np.maximum(n_cp, 1), 0.0)
        if self.good_mass > 0:
            self.flag_mass = float((self.t_weight * self.pair_success[self.t_pair]).sum() / self.good_mass)
        else:
            self.flag_mass = 0.0
        sizes_p = g.bsize_slot(np.arange(g.bkeys.size))
        self.max_bucket_prime = int(sizes_p.max()) if sizes_p.size else 0

    # -- round counts and costs

    def rounds(self) -> tuple[int, int, int]:
        p = self.params
        k = p.round_multiplier
        r1 = p.r1 or (math.ceil(k * rounds_needed(self.good_mass, p.delta, p.eta)) if self.good_mass > 0 else 1)
        r2 = p.r2 or max(1, math.ceil(k * p.eta * math.log2(1.0 / p.delta) * math.sqrt(max(self.max_bucket_prime, 1))))
        r3 = p.r3 or (math.ceil(k * rounds_needed(self.flag_mass, p.delta, p.eta)) if self.flag_mass > 0 else 1)
        return int(r1), int(r2), int(r3)

    def tuple_cost(self) -> float:
        c = self.params.costs
        r1, r2, _ = self.rounds()
        return r1 * (c.sample + c.check_pair) + c.decode + r2 * (c.sample_z + c.check_z)

    # -- exact distributions (enumeration path)

    def tuple_probabilities(self) -> dict:
        """Probability of every flagged (x, c, y, c', z) outcome."""
        out = {}
        if self.good_mass <= 0:
            return out
        for t in range(self.tx.size):
            p = self.t_pair[t]
            lo, hi = self.cp_ptr[p], self.cp_ptr[p + 1]
            n_cp = hi - lo
            for e in range(lo, hi):
                zs = self.cpz[self.cpz_ptr[e] : self.cpz_ptr[e + 1]]
                for z in zs:
                    key = (int(self.tx[t]), int(self.tc[t]), int(self.ty[t]), int(self.cp_ids[e]), int(z))
                    out[key] = out.get(key, 0.0) + self.t_weight[t] / self.good_mass / n_cp / zs.size
        return out

    def solution_probabilities(self) -> dict:
        if self.flag_mass <= 0:
            return {}
        out = {}
        for (x, _, y, _, z), p in self.tuple_probabilities().items():
            out[(x, y, z)] = out.get((x, y, z), 0.0) + p / self.flag_mass
        return out

    # -- sampling

    def _first_stage(self, n, rng, method):
        if self.good_mass <= 0:
            raise EmptySearchError("no collision pair lies in the theta band")
        if method == "enumerate":
            cdf = np.cumsum(self.t_weight)
            idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
            return np.minimum(idx, self.tx.size - 1)
        if method != "reject":
            raise ValueError(f"unknown method {method!r}")
        # ancestral collision samples kept only inside the band
        out = np.empty(n, dtype=np.int64)
        filled = 0
        batch = max(64, int(1.5 * n / max(self.good_mass, 1e-9)))
        batch = min(batch, 1 << 22)
        while filled < n:
            x, c, y = r_collision_batch(self.csr, self.m, batch, rng)
            ok = c >= 0
            x, c, y = x[ok], c[ok], y[ok]
            ok = self.in_M1[x, y] if x.size else np.zeros(0, dtype=bool)
            x, c, y = x[ok], c[ok], y[ok]
            if x.size == 0:
                continue
            idx = self._triple_index(x, c, y)
            take = min(idx.size, n - filled)
            out[filled : filled + take] = idx[:take]
            filled += take
        return out

    def _triple_index(self, x, c, y):
        # rows are sorted by (x, c, y); locate exact matches
        keys = np.stack([self.tx, self.tc, self.ty], axis=1)
        flat = np.ravel_multi_index(
            (keys[:, 0], np.searchsorted(self._codes(), keys[:, 1]), keys[:, 2]),
            (self.m, self._codes().size, self.m),
        )
        q = np.ravel_multi_index((x, np.searchsorted(self._codes(), c), y), (self.m, self._codes().size, self.m))
        return np.searchsorted(flat, q)

    def _codes(self):
        return self.csr.bkeys

    def sample_tuples(self, n: int, rng, method: str = "enumerate") -> TupleBatch:
        t = self._first_stage(n, rng, method)
        p = self.t_pair[t]
        lo = self.cp_ptr[p]
        n_cp = self.cp_ptr[p + 1] - lo
        cprime = np.full(n, -1, dtype=np.int64)
        z = np.full(n, -1, dtype=np.int64)
        has = n_cp > 0
        e = lo[has] + (rng.random(has.sum()) * n_cp[has]).astype(np.int64)
        cprime[has] = self.cp_ids[e]
        nz = self.cp_zcount[e]
        zsel = nz > 0
        zi = self.cpz_ptr[e[zsel]] + (rng.random(zsel.sum()) * nz[zsel]).astype(np.int64)
        tmp = np.full(e.size, -1, dtype=np.int64)
        tmp[zsel] = self.cpz[zi]
        z[has] = tmp
        flag = (z >= 0).astype(np.int8)
        return TupleBatch(self.tx[t], self.tc[t], self.ty[t], cprime, z, flag, self.pair_truncated[p])

    def sample_solutions(self, n: int, rng, method: str = "enumerate") -> np.ndarray:
        """(n, 3) triples from repeated tuple sampling until the flag is set."""
        if self.flag_mass <= 0:
            raise NoSolutionError("no flagged tuple exists for this pair of codes")
        out = np.empty((n, 3), dtype=np.int64)
        filled = 0
        while filled < n:
            want = max(16, int(1.3 * (n - filled) / self.flag_mass))
            b = self.sample_tuples(want, rng, method)
            ok = b.flag == 1
            got = np.stack([b.x[ok], b.y[ok], b.z[ok]], axis=1)
            take = min(len(got), n - filled)
            out[filled : filled + take] = got[:take]
            filled += take
        return out


_CONTEXTS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def search_context(D, Dp, rpc_prime, points, params) -> SearchContext:
    """Cached context for a frozen store pair (rebuilt if inputs differ)."""
    key_extra = (id(Dp), id(rpc_prime), id(points), params)
    hit = _CONTEXTS.get(D)
    if hit is not None and hit[0] == key_extra:
        return hit[1]
    ctx = SearchContext(points, D, Dp, rpc_prime, params)
    _CONTEXTS[D] = (key_extra, ctx)
    return ctx


def tuple_sample(D, D_prime, rpc_prime, points, params, rng, ledger: QueryLedger, method="enumerate") -> TupleDraw:
    """One run of the tuple sampler; the ledger is charged its full cost."""
    ctx = search_context(D, D_prime, rpc_prime, points, params)
    if ctx.good_mass <= 0:
        raise EmptySearchError("no collision pair lies in the theta band")
    c = params.costs
    r1, r2, _ = ctx.rounds()
    first = ideal_amplify(
        AmplifiableState(ctx.good_mass, c.sample, c.check_pair), r1, params.delta, ledger, rng, params.eta, "pairs"
    )
    assert first.flag == 1
    ledger.add_steps(c.decode, "decode")
    b = ctx.sample_tuples(1, rng, method)
    cp, z = int(b.c_prime[0]), int(b.z[0])
    # the bucket mass seen by the inner amplification, for the ledger
    if cp >= 0:
        slot = ctx.csr_p.bslot(cp)
        bucket = int(ctx.csr_p.bsize_slot(slot))
        p = int(np.searchsorted(ctx.pairs, b.x[0] * ctx.m + b.y[0]))
        e = ctx.cp_ptr[p] + int(np.nonzero(ctx.cp_ids[ctx.cp_ptr[p] : ctx.cp_ptr[p + 1]] == cp)[0][0])
        mass = ctx.cp_zcount[e] / bucket if bucket else 0.0
    else:
        mass = 0.0
    second = ideal_amplify(AmplifiableState(mass, c.sample_z, c.check_z), r2, params.delta, ledger, rng, params.eta, "z")
    flag = int(second.flag)
    return TupleDraw(
        int(b.x[0]), int(b.c[0]), int(b.y[0]), cp if cp >= 0 else None, z if flag else None, flag, bool(b.truncated[0])
    )


def solution_search(D, D_prime, rpc_prime, points, params, rng, ledger: QueryLedger, method="enumerate") -> TripleSolution:
    """One flagged triple; the ledger is charged r3 * (tuple cost + outer check).

    The tuple cost is the total accumulated by one run of the tuple sampler.
    ``witness_c`` is a flat first-code id (the first code itself is not
    passed in); ``witness_c_prime`` is a structured id.
    """
    ctx = search_context(D, D_prime, rpc_prime, points, params)
    if ctx.good_mass <= 0 or ctx.flag_mass <= 0:
        raise NoSolutionError("the filtered triple set is empty")
    inner = None
    while True:
        trial = QueryLedger()
        draw = tuple_sample(D, D_prime, rpc_prime, points, params, rng, trial, method)
        if inner is None:
            inner = trial
        if draw.flag:
            break
    _, _, r3 = ctx.rounds()
    state = AmplifiableState(ctx.flag_mass, inner.total_steps, params.costs.check_triple)
    outer = ideal_amplify(state, r3, params.delta, ledger, rng, params.eta, "outer")
    assert outer.flag == 1
    ledger.levels[-1]["inner"] = inner.levels
    return make_solution(ctx.points, draw.x, draw.y, draw.z, draw.c, rpc_prime.codeword_id(draw.c_prime))


def ledger_closed_form(ctx: SearchContext) -> float:
    c = ctx.params.costs
    r1, r2, r3 = ctx.rounds()
    return r3 * (r1 * (c.sample + c.check_pair) + c.decode + r2 * (c.sample_z + c.check_z) + c.check_triple)


# ------------------------------------------------------------- filtered triple sets


@dataclass
class FilteredTriples:
    """Solution triples with their code-collision status."""

    triples: np.ndarray  # (k, 3) T_sol
    in_T: np.ndarray  # mask: member of T(R, R')
    in_T_star: np.ndarray  # mask: additionally |R(x)|, |R'(u)| <= cap
    witness_c: np.ndarray  # smallest shared first-code id or -1
    witness_c_prime: np.ndarray
    R_sizes: np.ndarray
    pair_list: np.ndarray  # distinct (x, y) pairs of T_sol
    pair_R_prime_size: np.ndarray


def _first_common(a_rows: np.ndarray, b_rows: np.ndarray) -> np.ndarray:
    both = a_rows & b_rows
    any_ = both.any(axis=1)
    return np.where(any_, np.argmax(both, axis=1), -1)


def filtered_triples(points, rpc, rpc_prime, params, triples=None) -> FilteredTriples:
    points = np.ascontiguousarray(points, dtype=float)
    m = len(points)
    if triples is None:
        triples = T_sol_array(points, params)
    inc = np.zeros((m, rpc.size), dtype=bool)
    inc_p = np.zeros((m, rpc_prime.size), dtype=bool)
    for i, x in enumerate(points):
        inc[i, decode_ids(rpc, x, params.cos_alpha, params.epsilon)] = True
        inc_p[i, decode_ids(rpc_prime, x, params.cos_alpha_prime, params.epsilon)] = True
    pairs, inv = np.unique(triples[:, 0] * m + triples[:, 1], return_inverse=True) if len(triples) else (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
    )
    inc_u = np.zeros((pairs.size, rpc_prime.size), dtype=bool)
    for p, key in enumerate(pairs):
        x, y = divmod(int(key), m)
        u = points[x] - points[y]
        inc_u[p, decode_ids(rpc_prime, u / np.linalg.norm(u), params.cos_alpha_prime, params.epsilon)] = True
    x, y, z = triples[:, 0], triples[:, 1], triples[:, 2]
    wc = _first_common(inc[x], inc[y])
    wcp = _first_common(inc_u[inv], inc_p[z])
    in_T = (wc >= 0) & (wcp >= 0)
    cap = params.truncation_cap
    r_sizes = inc.sum(axis=1)
    ru = inc_u.sum(axis=1)
    in_star = in_T & (r_sizes[x] <= cap) & (ru[inv] <= cap)
    return FilteredTriples(triples, in_T, in_star, wc, wcp, r_sizes, pairs, ru)


def enumerate_T_RRprime(points, rpc, rpc_prime, params) -> list[TripleSolution]:
    ft = filtered_triples(points, rpc, rpc_prime, params)
    points = np.asarray(points, dtype=float)
    out = []
    for k in np.nonzero(ft.in_T)[0]:
        x, y, z = ft.triples[k]
        out.append(
            make_solution(points, x, y, z, rpc.codeword_id(ft.witness_c[k]), rpc_prime.codeword_id(ft.witness_c_prime[k]))
        )
    return out


# ------------------------------------------------------------- goodness


@dataclass
class GoodnessReport:
    good: bool
    conditions: dict  # name -> {"pass": bool, "measured": ..., "predicted": ..., "log2_gap_per_dim": ...}
    slack: float

    def to_dict(self) -> dict:
        return {"good": self.good, "slack": self.slack, "conditions": self.conditions}


def _gap(measured, predicted, d):
    if measured <= 0 or predicted <= 0:
        return -math.inf if measured <= 0 < predicted else math.inf
    return math.log2(measured / predicted) / d


def goodness_check(points, rpc, rpc_prime, params, slack: float = DEFAULT_SLACK, z_policy: str = "chernoff") -> GoodnessReport:
    """Evaluate the four concentration conditions against desk-scale predictions.

    The two-sided conditions (i), (iii), (iv) pass when every |log2(measured /
    predicted)| / d is at most ``slack``. The one-sided z-count condition
    (ii) uses a multiplicative Chernoff bound by default, or the same
    per-dimension slack with ``z_policy="slack"``.
    """
    points = np.ascontiguousarray(points, dtype=float)
    d, m, eps = params.d, len(points), params.epsilon
    pred = desk_predictions(params)
    pred_bucket = m * pred["p_alpha"]
    pred_bucket_p = m * pred["p_alpha_prime"]
    conds = {}

    inc = np.zeros((m, rpc.size), dtype=bool)
    inc_p = np.zeros((m, rpc_prime.size), dtype=bool)
    for i, x in enumerate(points):
        inc[i, decode_ids(rpc, x, params.cos_alpha, eps)] = True
        inc_p[i, decode_ids(rpc_prime, x, params.cos_alpha_prime, eps)] = True

    # (i) bucket concentration, both codes, every codeword
    b1 = inc.sum(axis=0)
    b2 = inc_p.sum(axis=0)
    gaps = [_gap(v, pred_bucket, d) for v in b1] + [_gap(v, pred_bucket_p, d) for v in b2]
    worst = max(gaps, key=abs)
    conds["i"] = {
        "pass": abs(worst) <= slack,
        "measured": {"min": int(min(b1.min(), b2.min())), "max": int(max(b1.max(), b2.max()))},
        "predicted": {"bucket": pred_bucket, "bucket_prime": pred_bucket_p},
        "log2_gap_per_dim": worst,
    }

    # (ii) z-count bound for every ordered pair; only pairs whose band count
    # exceeds the running maximum need a decode
    gram = points @ points.T
    z_bound = pred["z_bound"]
    ctp = params.cos_theta_prime
    band_counts = np.zeros((m, m), dtype=np.int64)
    for x in range(m):
        nrm = np.sqrt(np.maximum(2.0 - 2.0 * gram[x], 1e-300))
        t = (gram[x][None, :] - gram) / nrm[:, None]  # row y, column z
        ok = np.abs(t - ctp) <= eps
        ok[:, x] = False
        ok[np.arange(m), np.arange(m)] = False
        band_counts[x] = ok.sum(axis=1)
    band_counts[np.arange(m), np.arange(m)] = 0
    order = np.argsort(-band_counts, axis=None, kind="stable")
    best = 0
    for flat in order:
        if band_counts.flat[flat] <= best:
            break
        x, y = divmod(int(flat), m)
        u = points[x] - points[y]
        u /= np.linalg.norm(u)
        ru = np.zeros(rpc_prime.size, dtype=bool)
        ru[decode_ids(rpc_prime, u, params.cos_alpha_prime, eps)] = True
        zs = np.nonzero(np.abs(points @ u - ctp) <= eps)[0]
        zs = zs[(zs != x) & (zs != y)]
        cnt = int((inc_p[zs] & ru).any(axis=1).sum()) if zs.size else 0
        best = max(best, cnt)
    g2 = _gap(best, z_bound, d) if best > 0 else -math.inf
    if z_policy == "chernoff":
        # one-sided multiplicative Chernoff bound:
        # X <= (1 + delta) mu with delta = d^2 max(1, 1/mu)
        mu = m * pred["p_theta_prime"] * pred["collision_prime"]
        limit = (1.0 + d * d * max(1.0, 1.0 / mu)) * mu if mu > 0 else 0.0
        ok2 = best <= limit
    elif z_policy == "slack":
        limit = z_bound * 2.0 ** (slack * d)
        ok2 = g2 <= slack
    else:
        raise ValueError(f"unknown z_policy {z_policy!r}")
    conds["ii"] = {"pass": bool(ok2), "measured": best, "predicted": z_bound, "limit": limit, "log2_gap_per_dim": g2}

    # (iii) first-stage pair counts
    shared = (inc.astype(np.int32) @ inc.T.astype(np.int32)) > 0
    band = np.abs(gram - params.cos_theta) <= eps
    np.fill_diagonal(band, False)
    m1 = band & shared
    r_sizes = inc.sum(axis=1)
    cap = params.truncation_cap
    n_m1 = int(m1.sum())
    n_m1_star = int((m1 & (r_sizes <= cap)[:, None]).sum())
    g3 = max((_gap(n_m1, pred["M1"], d), _gap(n_m1_star, pred["M1"], d)), key=abs)
    conds["iii"] = {
        "pass": abs(g3) <= slack,
        "measured": {"M1": n_m1, "M1_star": n_m1_star},
        "predicted": pred["M1"],
        "log2_gap_per_dim": g3,
    }

    # (iv) filtered triple counts
    ft = filtered_triples(points, rpc, rpc_prime, params)
    n_t = int(ft.in_T.sum())
    n_ts = int(ft.in_T_star.sum())
    g4 = max((_gap(n_t, pred["T"], d), _gap(n_ts, pred["T"], d)), key=abs)
    conds["iv"] = {
        "pass": abs(g4) <= slack,
        "measured": {"T": n_t, "T_star": n_ts, "T_sol": int(len(ft.triples))},
        "predicted": pred["T"],
        "log2_gap_per_dim": g4,
    }
    good = all(c["pass"] for c in conds.values())
    return GoodnessReport(good, conds, slack)


# ------------------------------------------------------------- outer loop


@dataclass
class ThreeListResult:
    solutions: list
    draws_skipped: int
    ledger: QueryLedger
    per_draw: list


def three_list(points, params: SieveParams, rng, method: str = "enumerate") -> ThreeListResult:
    """Outer loop: fresh code pairs, preprocessing, repeated solution search."""
    points = np.ascontiguousarray(points, dtype=float)
    found: dict = {}
    ledger = QueryLedger()
    skipped = 0
    per_draw = []
    for _ in range(params.ell1):
        code = sample_rpc(params.d, params.blocks, params.code_size, params.t_rotations, rng)
        code_p = sample_rpc(params.d, params.blocks, params.code_size_prime, params.t_rotations, rng)
        D, Dp = preprocess(points, code, code_p, params)
        ledger.add_steps(len(points), "preprocess")
        ctx = SearchContext(points, D, Dp, code_p, params)
        if ctx.good_mass <= 0 or ctx.flag_mass <= 0:
            skipped += 1
            per_draw.append({"skipped": True})
            continue
        sols = ctx.sample_solutions(params.ell2, rng, method)
        _, _, r3 = ctx.rounds()
        c = params.costs
        for _ in range(params.ell2):
            ledger.charge(r3, ctx.tuple_cost(), c.check_triple, "outer")
        new = 0
        for x, y, z in sols:
            key = (int(x), int(y), int(z))
            if key not in found and in_T_sol(points, params, x, y, z):
                found[key] = make_solution(points, x, y, z)
                new += 1
        per_draw.append({"skipped": False, "good_mass": ctx.good_mass, "flag_mass": ctx.flag_mass, "new": new})
    return ThreeListResult([found[k] for k in sorted(found)], skipped, ledger, per_draw)
