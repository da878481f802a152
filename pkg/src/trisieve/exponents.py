"""Asymptotic cost model of the quantum triple sieve and its optimizer.

Everything is in per-dimension log2 units. The list size exponent is
``m_exp``; the solution angles are fixed (cos 1/3 for the pair, 1/sqrt(3) for
the normalized difference against the third vector) and the free variables
are the two filter cosines.

The time exponent is a maximum of a handful of smooth pieces and the optimum
sits where several of them meet, so the refinement step minimizes the
epigraph form (min t subject to t >= piece_i) and the certificate is the
generalized one: some convex combination of the active piece gradients
vanishes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .sieve import min_list_size_exponent
from .sphere import AngleSpec, cap_exponent, is_well_defined, wedge_exponent

COS_THETA = 1.0 / 3.0
COS_THETA_PRIME = 1.0 / math.sqrt(3.0)
KAPPA = 1e-6
DEFAULT_M_EXP = min_list_size_exponent(3)
DEFAULT_BOX = ((0.05, 0.95), (0.05, 0.95))
GRID_STEP = 1e-3

# time exponents from the literature, (classical, quantum) per tuple size
LITERATURE_TIME = {2: (0.2925, 0.2563), 3: (0.3383, 0.3098), 4: (0.3766, 0.3178)}


@dataclass(frozen=True)
class ExponentPoint:
    cos_alpha: float
    cos_alpha_prime: float
    m_exp: float
    feasible: bool
    e_p_alpha: float = math.nan
    e_p_alpha_prime: float = math.nan
    e_W_theta_alpha: float = math.nan
    e_W_thetaP_alphaP: float = math.nan
    e_W_alpha_alpha_theta: float = math.nan
    e_W_alphaP_alphaP_thetaP: float = math.nan
    e_m_W_thetaP_alphaP: float = math.nan
    e_ell1: float = math.nan
    e_search: float = math.nan
    e_total: float = math.inf
    constraint_margins: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return asdict(self)


def _wedges(ca: float, cap: float):
    specs = {
        "theta_alpha": AngleSpec(COS_THETA, ca, ca),
        "thetaP_alphaP": AngleSpec(COS_THETA_PRIME, cap, cap),
        "alpha_alpha_theta": AngleSpec(ca, ca, COS_THETA),
        "alphaP_alphaP_thetaP": AngleSpec(cap, cap, COS_THETA_PRIME),
    }
    return specs


def time_exponent(cos_alpha: float, cos_alpha_prime: float, m_exp: float = DEFAULT_M_EXP) -> ExponentPoint:
    """Exponent breakdown at one pair of filter cosines.

    Infeasible points (ill-defined wedges or a violated size constraint)
    come back with ``feasible=False`` and ``e_total=inf``.
    """
    ca, cap = float(cos_alpha), float(cos_alpha_prime)
    if not (0 < ca < 1 and 0 < cap < 1):
        return ExponentPoint(ca, cap, m_exp, False)
    specs = _wedges(ca, cap)
    if not all(is_well_defined(s, KAPPA) for s in specs.values()):
        return ExponentPoint(ca, cap, m_exp, False)
    pa = cap_exponent(ca)
    pap = cap_exponent(cap)
    w = {k: wedge_exponent(s) for k, s in specs.items()}
    margins = (m_exp + pa, m_exp + pap, m_exp + w["theta_alpha"], 2 * m_exp + w["thetaP_alphaP"])
    mw = m_exp + w["thetaP_alphaP"]
    ell1 = (pa - w["alpha_alpha_theta"]) + (pap - w["alphaP_alphaP_thetaP"])
    search = -0.5 * min(0.0, mw) + max(0.5 * (pa - w["theta_alpha"]), 0.5 * (m_exp + pap))
    feasible = all(g > 0 for g in margins)
    return ExponentPoint(
        ca,
        cap,
        m_exp,
        feasible,
        e_p_alpha=pa,
        e_p_alpha_prime=pap,
        e_W_theta_alpha=w["theta_alpha"],
        e_W_thetaP_alphaP=w["thetaP_alphaP"],
        e_W_alpha_alpha_theta=w["alpha_alpha_theta"],
        e_W_alphaP_alphaP_thetaP=w["alphaP_alphaP_thetaP"],
        e_m_W_thetaP_alphaP=mw,
        e_ell1=ell1,
        e_search=search,
        e_total=m_exp + max(ell1, search) if feasible else math.inf,
        constraint_margins=margins,
    )


# ------------------------------------------------------------ vectorized model


def _grid_pieces(ca, cap, m):
    """Smooth pieces and constraint margins on arrays (NaN where undefined)."""
    ca, cap = np.broadcast_arrays(np.asarray(ca, dtype=float), np.asarray(cap, dtype=float))
    t, tp = COS_THETA, COS_THETA_PRIME
    with np.errstate(all="ignore"):
        g_ta = (t * t + ca * ca - 2 * t * ca * ca) / (1 - ca * ca)
        g_tpap = (tp * tp + cap * cap - 2 * tp * cap * cap) / (1 - cap * cap)
        g_aat = 2 * ca * ca / (1 + t)
        g_apapt = 2 * cap * cap / (1 + tp)
        ok = np.ones(ca.shape, dtype=bool)
        for g in (g_ta, g_tpap):
            ok &= (g >= KAPPA) & (g <= 1 - KAPPA)
        # equal-angle wedges: either branch of the well-definedness test
        for g, c, ct in ((g_aat, ca, t), (g_apapt, cap, tp)):
            gen = 2 * c * c * (1 - ct) / (1 - ct * ct)
            ok &= ((gen >= KAPPA) & (gen <= 1 - KAPPA)) | (g <= 1 - KAPPA)
        pa = 0.5 * np.log2(1 - ca * ca)
        pap = 0.5 * np.log2(1 - cap * cap)
        w_ta = 0.5 * np.log2(1 - g_ta)
        w_tpap = 0.5 * np.log2(1 - g_tpap)
        w_aat = 0.5 * np.log2(1 - g_aat)
        w_apapt = 0.5 * np.log2(1 - g_apapt)
    ell1 = (pa - w_aat) + (pap - w_apapt)
    mw = m + w_tpap
    first = 0.5 * (pa - w_ta)
    second = 0.5 * (m + pap)
    pieces = np.stack(
        [
            m + ell1,
            m + first,
            m - 0.5 * mw + first,
            m + second,
            m - 0.5 * mw + second,
        ]
    )
    margins = np.stack([m + pa, m + pap, m + w_ta, 2 * m + w_tpap])
    return pieces, margins, ok


def _objective_grid(ca, cap, m):
    pieces, margins, ok = _grid_pieces(ca, cap, m)
    feas = ok & np.all(margins > 0, axis=0)
    val = np.max(pieces, axis=0)
    return np.where(feas & np.isfinite(val), val, np.inf)


@dataclass(frozen=True)
class OptimizationResult:
    cos_alpha: float
    cos_alpha_prime: float
    point: ExponentPoint
    boundary: bool
    active_pieces: tuple
    stationarity: float
    certified: bool
    central_differences: tuple
    balance_gap: float
    grid_best: tuple
    trace: tuple

    def to_dict(self) -> dict:
        out = asdict(self)
        out["point"] = self.point.to_dict()
        return out


class InfeasibleBoxError(ValueError):
    pass


def _piece_values(x, m):
    pieces, _, _ = _grid_pieces(x[0], x[1], m)
    return np.asarray(pieces, dtype=float)


def _piece_gradients(x, m, h=1e-6):
    grads = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        grads.append((_piece_values(x + e, m) - _piece_values(x - e, m)) / (2 * h))
    return np.stack(grads, axis=1)  # (pieces, 2)


def _min_norm_combination(grads):
    """min over the simplex of |sum lambda_i g_i| via penalized NNLS."""
    k = grads.shape[0]
    w = 1e4
    a = np.vstack([grads.T, w * np.ones((1, k))])
    b = np.concatenate([np.zeros(grads.shape[1]), [w]])
    lam, _ = optimize.nnls(a, b)
    lam = lam / lam.sum()
    return float(np.linalg.norm(grads.T @ lam)), lam


def optimize_exponent(
    m_exp: float = DEFAULT_M_EXP,
    search_box=DEFAULT_BOX,
    tolerance: float = 1e-10,
    grid_step: float = GRID_STEP,
) -> OptimizationResult:
    """Minimize the time exponent over a box of filter cosines.

    Deterministic: a full grid at ``grid_step``, then SLSQP on the epigraph
    form started from the best grid point.
    """
    (a0, a1), (b0, b1) = search_box
    if not (0 < a0 < a1 < 1 and 0 < b0 < b1 < 1):
        raise ValueError("search box must be a proper sub-box of (0, 1)^2")
    ga = np.arange(a0, a1 + 0.5 * grid_step, grid_step)
    gb = np.arange(b0, b1 + 0.5 * grid_step, grid_step)
    ga = np.clip(ga, a0, a1)
    gb = np.clip(gb, b0, b1)
    vals = _objective_grid(ga[:, None], gb[None, :], m_exp)
    if not np.isfinite(vals).any():
        raise InfeasibleBoxError("no feasible point in the search box")
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    x0 = np.array([ga[i], gb[j], vals[i, j]])
    trace = [("grid", float(ga[i]), float(gb[j]), float(vals[i, j]))]

    def pieces_con(z):
        return z[2] - _piece_values(z[:2], m_exp)

    def margin_con(z):
        _, margins, _ = _grid_pieces(z[0], z[1], m_exp)
        return np.asarray(margins, dtype=float) - 1e-9

    res = optimize.minimize(
        lambda z: z[2],
        x0,
        jac=lambda z: np.array([0.0, 0.0, 1.0]),
        method="SLSQP",
        bounds=[(a0, a1), (b0, b1), (None, None)],
        constraints=[{"type": "ineq", "fun": pieces_con}, {"type": "ineq", "fun": margin_con}],
        options={"ftol": tolerance, "maxiter": 500},
    )
    x = np.clip(res.x[:2], [a0, b0], [a1, b1])
    cand = time_exponent(x[0], x[1], m_exp)
    if not (cand.feasible and cand.e_total <= vals[i, j] + 1e-12):
        x = x0[:2]
        cand = time_exponent(x[0], x[1], m_exp)
    trace.append(("slsqp", float(x[0]), float(x[1]), float(cand.e_total)))

    span = max(a1 - a0, b1 - b0)
    edge = 1e-7 * span
    boundary = bool(
        min(x[0] - a0, a1 - x[0]) <= edge or min(x[1] - b0, b1 - x[1]) <= edge
    )
    vals_here = _piece_values(x, m_exp)
    top = float(np.max(vals_here))
    active = tuple(int(k) for k in np.nonzero(vals_here >= top - 1e-7)[0])
    if boundary:
        stationarity = math.nan
        certified = False
    else:
        grads = _piece_gradients(x, m_exp)[list(active)]
        stationarity, _ = _min_norm_combination(grads)
        certified = stationarity <= 1e-4
    h = 1e-6
    diffs = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        hi = time_exponent(*(x + e), m_exp).e_total
        lo = time_exponent(*(x - e), m_exp).e_total
        diffs.append((hi - lo) / (2 * h))
    return OptimizationResult(
        cos_alpha=float(x[0]),
        cos_alpha_prime=float(x[1]),
        point=cand,
        boundary=boundary,
        active_pieces=active,
        stationarity=stationarity,
        certified=certified,
        central_differences=tuple(diffs),
        balance_gap=abs(cand.e_ell1 - cand.e_search),
        grid_best=(float(ga[i]), float(gb[j]), float(vals[i, j])),
        trace=tuple(trace),
    )


def comparison_table(optimum: OptimizationResult | None = None) -> list[dict]:
    """Memory exponents computed here next to cited time exponents."""
    if optimum is None:
        optimum = optimize_exponent(DEFAULT_M_EXP)
    rows = []
    for k in (2, 3, 4):
        classical, quantum = LITERATURE_TIME[k]
        row = {
            "k": k,
            "memory_exponent": min_list_size_exponent(k),
            "classical_time_literature": classical,
            "quantum_time_literature": quantum,
            "quantum_time_this_model": None,
        }
        if k == 3:
            row["quantum_time_this_model"] = optimum.point.e_total
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    lines = [f"{'k':>2}  {'memory':>7}  {'time C (lit)':>12}  {'time Q (lit)':>12}  {'time Q (model)':>14}"]
    for r in rows:
        q = r["quantum_time_this_model"]
        q_txt = f"{q:.4f}" if q is not None else "-"
        lines.append(
            f"{r['k']:>2}  {r['memory_exponent']:>7.4f}  {r['classical_time_literature']:>12.4f}  "
            f"{r['quantum_time_literature']:>12.4f}  {q_txt:>14}"
        )
    return "\n".join(lines)
