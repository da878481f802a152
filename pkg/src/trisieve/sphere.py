"""Points on the unit sphere, cap and wedge exponents, band probabilities.

Exponents are per-dimension binary logs: a region whose measure behaves like
``2^(e*d)`` has exponent ``e``. Band probabilities are the finite-d
quantities the algorithms actually see: the chance that an inner product
lands within ``epsilon`` of a target cosine. They are computed two ways, by
Monte Carlo and by quadrature of the exact marginal densities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from . import kernels

NORM_TOL = 1e-12
CI_LEVEL = 1e-4
MC_CHUNK = 1 << 16


class GeometryError(ValueError):
    """Raised for degenerate or ill-posed angle configurations."""


def epsilon_for(d: int) -> float:
    """Band half-width 1/(log2 d)^2 used throughout."""
    if d < 4:
        raise ValueError(f"dimension must be at least 4, got {d}")
    return 1.0 / math.log2(d) ** 2


@dataclass(frozen=True)
class UnitVector:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coords must be a non-empty 1-D array")
        if abs(np.linalg.norm(c) - 1.0) > NORM_TOL:
            raise ValueError("coords are not unit norm")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size

    @classmethod
    def normalized(cls, v) -> "UnitVector":
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))


def sample_unit_vectors(n: int, d: int, rng) -> np.ndarray:
    """(n, d) array of i.i.d. uniform unit vectors (normalized Gaussians)."""
    if d < 1:
        raise ValueError("dimension must be positive")
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0.0):  # probability zero, kept for safety
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def sample_unit_vector(d: int, rng) -> UnitVector:
    return UnitVector(sample_unit_vectors(1, d, rng)[0])


@dataclass(frozen=True)
class AngleSpec:
    """Two caps (cosines ``cos_alpha``, ``cos_beta``) around centres that are
    ``cos_theta`` apart, plus the band half-width ``epsilon``.

    ``cos_theta == 1`` is accepted so the coincident-centre wedge can be
    expressed; only the equal-angle formula handles it.
    """

    cos_alpha: float
    cos_beta: float
    cos_theta: float
    epsilon: float = 0.0

    def __post_init__(self):
        for name in ("cos_alpha", "cos_beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.cos_theta <= 1.0:
            raise ValueError(f"cos_theta must lie in [0, 1], got {self.cos_theta}")
        lim = min(self.cos_alpha, 1 - self.cos_alpha, self.cos_beta, 1 - self.cos_beta)
        if self.epsilon < 0 or self.epsilon >= lim:
            raise ValueError(f"epsilon must lie in [0, {lim:.6g}), got {self.epsilon}")

    @property
    def equal_angles(self) -> bool:
        return self.cos_alpha == self.cos_beta


def cap_exponent(cos_alpha: float) -> float:
    if not 0.0 <= cos_alpha < 1.0:
        raise GeometryError(f"cap cosine must lie in [0, 1), got {cos_alpha}")
    return 0.5 * math.log2(1.0 - cos_alpha * cos_alpha)


def wedge_gamma_sq(spec: AngleSpec) -> float:
    ca, cb, ct = spec.cos_alpha, spec.cos_beta, spec.cos_theta
    if spec.equal_angles:
        return 2.0 * ca * ca / (1.0 + ct)
    sin2 = 1.0 - ct * ct
    if sin2 <= 0.0:
        raise GeometryError("coincident centres with different cap angles")
    return (ca * ca + cb * cb - 2.0 * ca * cb * ct) / sin2


def wedge_gamma_sq_general(spec: AngleSpec) -> float:
    """The two-angle formula even when the angles coincide (needs theta > 0)."""
    ca, cb, ct = spec.cos_alpha, spec.cos_beta, spec.cos_theta
    sin2 = 1.0 - ct * ct
    if sin2 <= 0.0:
        raise GeometryError("coincident centres have no general wedge formula")
    return (ca * ca + cb * cb - 2.0 * ca * cb * ct) / sin2


def wedge_exponent(spec: AngleSpec) -> float:
    g2 = wedge_gamma_sq(spec)
    if not 0.0 < g2 < 1.0:
        raise GeometryError(f"wedge not well defined: gamma^2 = {g2:.6g}")
    return 0.5 * math.log2(1.0 - g2)


def is_well_defined(spec: AngleSpec, kappa_prime: float) -> bool:
    if not 0.0 < kappa_prime < 0.5:
        raise ValueError("kappa_prime must lie in (0, 1/2)")
    ca, cb, ct = spec.cos_alpha, spec.cos_beta, spec.cos_theta
    if ct < 1.0:
        g2 = (ca * ca + cb * cb - 2.0 * ca * cb * ct) / (1.0 - ct * ct)
        if kappa_prime <= g2 <= 1.0 - kappa_prime:
            return True
    if spec.equal_angles:
        return 2.0 * ca * ca / (1.0 + ct) <= 1.0 - kappa_prime
    return False


# ------------------------------------------------------------- quadrature


def inner_product_cdf(d: int, t) -> np.ndarray:
    """P[<x, c> <= t] for fixed unit x and uniform c on S^(d-1), d >= 2."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    half = 0.5 * special.betainc(0.5, 0.5 * (d - 1), t * t)
    return np.where(t >= 0, 0.5 + half, 0.5 - half)


def band_probability(d: int, cos_alpha: float, epsilon: float) -> float:
    """Exact P[|<x, c> - cos_alpha| <= epsilon] from the marginal CDF."""
    if epsilon <= 0:
        return 0.0
    hi = inner_product_cdf(d, cos_alpha + epsilon)
    lo = inner_product_cdf(d, cos_alpha - epsilon)
    return float(hi - lo)


def band_probability_quad(d: int, cos_alpha: float, epsilon: float) -> float:
    """Same quantity by numerically integrating (1 - t^2)^((d-3)/2)."""
    if epsilon <= 0:
        return 0.0
    a = max(-1.0, cos_alpha - epsilon)
    b = min(1.0, cos_alpha + epsilon)
    k = 0.5 * (d - 3)
    val, _ = integrate.quad(lambda t: (1.0 - t * t) ** k, a, b, epsabs=0.0, epsrel=1e-11, limit=200)
    return val / special.beta(0.5, 0.5 * (d - 1))


def _chord_integral(d: int, s):
    """Integral over [0, s] of (1 - v^2)^((d-4)/2), odd in s, |s| <= 1."""
    s = np.clip(s, -1.0, 1.0)
    a, b = 0.5, 0.5 * (d - 2)
    return np.sign(s) * 0.5 * special.beta(a, b) * special.betainc(a, b, s * s)


def wedge_band_probability(d: int, spec: AngleSpec) -> float:
    """Exact P[c in both epsilon-bands] for centres at separation cos_theta.

    With x = e1 and y = ct*e1 + st*e2, the pair (c1, c2) of a uniform point
    has density proportional to (1 - u^2 - v^2)^((d-4)/2) on the unit disk.
    The inner integral over v is closed form, leaving a 1-D quadrature in u.
    """
    if d < 4:
        raise ValueError("wedge quadrature needs d >= 4")
    eps = spec.epsilon
    if eps <= 0:
        return 0.0
    ca, cb, ct = spec.cos_alpha, spec.cos_beta, spec.cos_theta
    if ct >= 1.0:
        lo = max(ca - eps, cb - eps)
        hi = min(ca + eps, cb + eps)
        if hi <= lo:
            return 0.0
        return float(inner_product_cdf(d, hi) - inner_product_cdf(d, lo))
    st = math.sqrt(1.0 - ct * ct)
    norm = math.exp(math.lgamma(0.5 * d) - math.lgamma(0.5 * (d - 2))) / math.pi

    def inner(u):
        r2 = 1.0 - u * u
        if r2 <= 0.0:
            return 0.0
        r = math.sqrt(r2)
        v_lo = (cb - eps - ct * u) / st
        v_hi = (cb + eps - ct * u) / st
        if v_hi <= -r or v_lo >= r:
            return 0.0
        g = _chord_integral(d, min(v_hi / r, 1.0)) - _chord_integral(d, max(v_lo / r, -1.0))
        return r ** (d - 3) * g

    a = max(-1.0, ca - eps)
    b = min(1.0, ca + eps)
    val, _ = integrate.quad(inner, a, b, epsabs=0.0, epsrel=1e-10, limit=400)
    return norm * float(val)


def wedge_band_probability_dblquad(d: int, spec: AngleSpec) -> float:
    """Slow two-dimensional quadrature of the same probability (cross-check)."""
    eps = spec.epsilon
    ca, cb, ct = spec.cos_alpha, spec.cos_beta, spec.cos_theta
    st = math.sqrt(1.0 - ct * ct)
    norm = math.gamma(0.5 * d) / (math.pi * math.gamma(0.5 * (d - 2)))
    k = 0.5 * (d - 4)

    def f(v, u):
        r = 1.0 - u * u - v * v
        return r**k if r > 0 else 0.0

    def v_lo(u):
        return max(-math.sqrt(max(0.0, 1 - u * u)), (cb - eps - ct * u) / st)

    def v_hi(u):
        return max(v_lo(u), min(math.sqrt(max(0.0, 1 - u * u)), (cb + eps - ct * u) / st))

    val, _ = integrate.dblquad(f, ca - eps, ca + eps, v_lo, v_hi, epsabs=0.0, epsrel=1e-9)
    return norm * val


# ------------------------------------------------------------- Monte Carlo


def wilson_interval(hits: int, n: int, level: float = CI_LEVEL) -> tuple[float, float]:
    """Two-sided Wilson score interval at significance ``level``."""
    if n <= 0:
        return 0.0, 1.0
    z = stats.norm.isf(level / 2)
    p = hits / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class BandEstimate:
    hits: int
    n_samples: int
    estimate: float
    ci_low: float
    ci_high: float
    zero_hits: bool

    def log2_per_dim(self, d: int) -> float:
        return math.log2(self.estimate) / d if self.hits else -math.inf

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _estimate(hits: int, n: int) -> BandEstimate:
    lo, hi = wilson_interval(hits, n)
    return BandEstimate(hits, n, hits / n, lo, hi, hits == 0)


def _chunked_hits(n_samples, d, rng, count, workers):
    n_chunks = -(-n_samples // MC_CHUNK)
    subs = rng.spawn(n_chunks)
    sizes = [min(MC_CHUNK, n_samples - i * MC_CHUNK) for i in range(n_chunks)]

    def job(i):
        return count(sample_unit_vectors(sizes[i], d, subs[i]))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(job, range(n_chunks)))
    return sum(job(i) for i in range(n_chunks))


def mc_cap_probability(d, cos_alpha, epsilon, n_samples, rng, workers=1) -> BandEstimate:
    """Fraction of uniform c with |<x, c> - cos_alpha| <= epsilon, x random but fixed.

    Sampling is split into fixed-size chunks with spawned child streams, so
    the result does not depend on ``workers``.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    x = sample_unit_vectors(1, d, rng)[0]
    if epsilon <= 0:
        return _estimate(0, n_samples)
    lo, hi = cos_alpha - epsilon, cos_alpha + epsilon
    hits = _chunked_hits(n_samples, d, rng, lambda pts: kernels.band_hits(pts, x, lo, hi), workers)
    return _estimate(int(hits), n_samples)


def pair_at_separation(d: int, cos_theta: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Random unit x and y with <x, y> = cos_theta exactly (up to rounding)."""
    x, w = sample_unit_vectors(2, d, rng)
    w = w - (w @ x) * x
    w /= np.linalg.norm(w)
    st = math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    y = cos_theta * x + st * w
    return x, y / np.linalg.norm(y)


def mc_wedge_probability(d, spec: AngleSpec, n_samples, rng, workers=1) -> BandEstimate:
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    if spec.cos_theta >= 1.0 and not spec.equal_angles:
        raise GeometryError("coincident centres with different cap angles")
    x, y = pair_at_separation(d, spec.cos_theta, rng)
    eps = spec.epsilon
    if eps <= 0:
        return _estimate(0, n_samples)
    ca, cb = spec.cos_alpha, spec.cos_beta

    def count(pts):
        return kernels.wedge_hits(pts, x, y, ca - eps, ca + eps, cb - eps, cb + eps)

    hits = _chunked_hits(n_samples, d, rng, count, workers)
    return _estimate(int(hits), n_samples)
