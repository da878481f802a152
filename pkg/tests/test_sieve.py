import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trisieve import oracles, rpc, sieve
from trisieve.aasim import QueryLedger, nested_total
from trisieve.relstore import RelationStore
from trisieve.rng import stream
from trisieve.sphere import band_probability, sample_unit_vectors


def instance(d, m, name, *idx, **overrides):
    g = stream(9, name, *idx)
    params = sieve.SieveParams.for_dimension(d, m, **overrides)
    pts = sample_unit_vectors(m, d, g)
    code = rpc.sample_rpc(d, params.blocks, params.code_size, params.t_rotations, g)
    code_p = rpc.sample_rpc(d, params.blocks, params.code_size_prime, params.t_rotations, g)
    return pts, code, code_p, params, g


def satisfying_triple(d, ct, ctp, eps, g, corner=False):
    """x, y, z with <x,y> and <(x-y)/|x-y|, z> inside the bands."""
    s1, s2 = (-eps, -eps) if corner else g.uniform(-eps, eps, 2)
    x, w1, w2 = np.linalg.qr(g.standard_normal((d, 3)))[0].T
    gxy = ct + s1
    y = gxy * x + math.sqrt(1 - gxy * gxy) * w1
    u = (x - y) / np.linalg.norm(x - y)
    w2 = w2 - (w2 @ u) * u
    w2 /= np.linalg.norm(w2)
    t = ctp + s2
    z = t * u + math.sqrt(1 - t * t) * w2
    return x, y, z


# ---------------------------------------------------------------- angles


def test_choose_theta_small_eps_limit():
    ct, ctp = sieve.choose_theta(1e-12)
    assert ct == 1 / 3
    assert ctp == pytest.approx(1 / math.sqrt(3), abs=1e-9)
    assert sieve.choose_theta(1e-12, "stated")[1] == pytest.approx(0.57735, abs=1e-5)


def test_choose_theta_stated_example():
    assert sieve.choose_theta(0.04, "stated") == (1 / 3, 0.04 + math.sqrt(1 / 3 - 0.02))


def test_choose_theta_corrected_value():
    assert sieve.choose_theta(0.04) == (1 / 3, 0.04 + math.sqrt(1 / 3 + 0.02))


def test_choose_theta_rejects_bad_input():
    with pytest.raises(ValueError):
        sieve.choose_theta(0.2)
    with pytest.raises(ValueError):
        sieve.choose_theta(0.05, "other")


def test_norm_guarantee_on_random_satisfying_triples():
    g = stream(9, "norm")
    for eps in (0.02, 0.04, 0.0625, 0.09):
        ct, ctp = sieve.choose_theta(eps)
        for _ in range(250):
            x, y, z = satisfying_triple(16, ct, ctp, eps, g)
            assert np.linalg.norm(x - y - z) <= 1 + 1e-10
        x, y, z = satisfying_triple(16, ct, ctp, eps, g, corner=True)
        assert np.linalg.norm(x - y - z) <= 1 + 1e-10


def test_stated_formula_breaks_norm_guarantee():
    eps = 0.04
    ct, ctp = sieve.choose_theta(eps, "stated")
    x, y, z = satisfying_triple(16, ct, ctp, eps, stream(9, "counter"), corner=True)
    assert np.linalg.norm(x - y - z) > 1 + 1e-6


# ---------------------------------------------------------------- params


def test_params_defaults():
    p = sieve.SieveParams.for_dimension(16, 100)
    assert p.mu == 1 / 16 and p.blocks == 4
    assert p.truncation_cap == math.floor(2 ** (16 / 4))
    assert p.epsilon == 0.0625
    assert p.ell1 >= 1 and p.ell2 >= 1
    with pytest.raises(ValueError):
        sieve.SieveParams.for_dimension(16, 100, ell1=0)


# ---------------------------------------------------------------- T_sol


def test_orthogonal_list_has_no_solutions():
    p = sieve.SieveParams.for_dimension(16, 3)
    assert sieve.enumerate_T_sol(np.eye(16)[:3], p) == []


def test_planted_triple_is_found():
    d = 14
    p = sieve.SieveParams.for_dimension(d, 40)
    g = stream(9, "planted")
    x, y, z = satisfying_triple(d, p.cos_theta, p.cos_theta_prime, 0.0, g)
    pts = np.vstack([x, y, z, sample_unit_vectors(37, d, g)])
    keys = {s.key for s in sieve.enumerate_T_sol(pts, p)}
    assert (0, 1, 2) in keys
    assert sieve.in_T_sol(pts, p, 0, 1, 2)


def test_tsol_kernels_agree():
    from trisieve.kernels import _tsol_nb, _tsol_np

    pts, _, _, p, _ = instance(12, 150, "kern")
    a = sieve.T_sol_array(pts, p, _tsol_nb)
    b = sieve.T_sol_array(pts, p, _tsol_np)
    assert np.array_equal(a, b)


def test_tsol_matches_definition():
    pts, _, _, p, _ = instance(10, 40, "def")
    want = [(x, y, z) for x in range(40) for y in range(40) for z in range(40) if sieve.in_T_sol(pts, p, x, y, z)]
    assert [tuple(t) for t in sieve.T_sol_array(pts, p)] == want


def test_tsol_count_scale():
    d, m = 14, 400
    pts, _, _, p, _ = instance(d, m, "count")
    pred = m**3 * band_probability(d, p.cos_theta, p.epsilon) * band_probability(d, p.cos_theta_prime, p.epsilon)
    assert abs(math.log2(sieve.count_T_sol(pts, p) / pred)) / d <= 0.04


# ---------------------------------------------------------------- stores


def test_preprocess_empty_list():
    p = sieve.SieveParams.for_dimension(12, 0)
    code = rpc.sample_rpc(12, p.blocks, p.code_size, 1, stream(9, "e"))
    D, Dp = sieve.preprocess(np.empty((0, 12)), code, code, p)
    assert len(D) == 0 and len(Dp) == 0 and D.frozen and Dp.frozen


def test_bucket_mass_concentrates():
    d, m = 16, 512
    pts, code, code_p, p, _ = instance(d, m, "buckets")
    D, _ = sieve.preprocess(pts, code, code_p, p)
    total = sum(D.size_by_c(c) for c in range(code.size))
    ratio = total / (code.size * m * band_probability(d, p.cos_alpha, p.epsilon))
    assert abs(math.log2(ratio)) / d <= 0.04


def test_collision_sample_single_element():
    D = RelationStore()
    D.insert(0, 0)
    D.freeze()
    g = stream(9, "single")
    assert all(sieve.r_collision_sample(D, 1, g) == (0, 0, 0) for _ in range(20))


def test_collision_sample_empty_bucket():
    D = RelationStore()
    D.insert(1, 0)
    D.freeze()
    g = stream(9, "emptyb")
    for _ in range(50):
        x, c, y = sieve.r_collision_sample(D, 2, g)
        if x == 0:
            assert (c, y) == (None, None)


def test_collision_distribution_matches_closed_form():
    m = 32
    pts, code, code_p, p, g = instance(12, m, "coll32")
    D, _ = sieve.preprocess(pts, code, code_p, p)
    expected = {}
    for x in range(m):
        cs = D.lookup_by_x(x)
        if not cs:
            expected[(x, -1, -1)] = 1 / m
        for c in cs:
            ys = D.lookup_by_c(c)
            for y in ys:
                expected[(x, c, y)] = expected.get((x, c, y), 0) + 1 / (m * len(cs) * len(ys))
    x, c, y = sieve.r_collision_batch(sieve._Csr.of(D, m), m, 1_000_000, g)
    res = oracles.chi_square(list(zip(x.tolist(), c.tolist(), y.tolist())), expected)
    assert res["outside_support"] == 0 and res["p_value"] > 1e-4
    # scalar and batch samplers share the law
    scalar = [sieve.r_collision_sample(D, m, g) for _ in range(20_000)]
    scalar = [(a, -1 if b is None else b, -1 if e is None else e) for a, b, e in scalar]
    assert oracles.chi_square(scalar, expected)["p_value"] > 1e-4


# ---------------------------------------------------------------- search


@pytest.fixture(scope="module")
def toy():
    from trisieve.config import ExperimentConfig
    from trisieve.experiments import toy_instance

    return toy_instance(ExperimentConfig())


def covering_params(d, m, **kw):
    # bands wide enough that every pair, codeword and z qualifies
    return sieve.SieveParams(d=d, m=m, cos_theta=0.0, cos_theta_prime=0.0, cos_alpha=0.0, cos_alpha_prime=0.0,
                             epsilon=2.0, ell1=1, ell2=1, code_size=4, code_size_prime=4, blocks=1, **kw)


def test_flag_always_one_when_every_pair_has_z():
    d, m = 6, 5
    g = stream(9, "cover")
    p = covering_params(d, m)
    pts = sample_unit_vectors(m, d, g)
    code = rpc.sample_rpc(d, 1, 4, 1, g)
    D, Dp = sieve.preprocess(pts, code, code, p)
    for _ in range(200):
        draw = sieve.tuple_sample(D, Dp, code, pts, p, g, QueryLedger())
        assert draw.flag == 1 and draw.z not in (draw.x, draw.y)


def test_truncation_flag_raised():
    d, m = 6, 5
    g = stream(9, "trunc")
    p = covering_params(d, m, truncation_cap=1)
    pts = sample_unit_vectors(m, d, g)
    code = rpc.sample_rpc(d, 1, 4, 1, g)
    D, Dp = sieve.preprocess(pts, code, code, p)
    draw = sieve.tuple_sample(D, Dp, code, pts, p, g, QueryLedger())
    assert draw.truncated


def test_empty_first_stage_raises():
    d, m = 12, 6
    p = sieve.SieveParams.for_dimension(d, m)
    pts = np.eye(d)[:m]
    code = rpc.sample_rpc(d, p.blocks, p.code_size, 1, stream(9, "empty"))
    D, Dp = sieve.preprocess(pts, code, code, p)
    with pytest.raises(sieve.EmptySearchError):
        sieve.tuple_sample(D, Dp, code, pts, p, stream(9, "e2"), QueryLedger())
    with pytest.raises(sieve.NoSolutionError):
        sieve.solution_search(D, Dp, code, pts, p, stream(9, "e3"), QueryLedger())


def test_single_filtered_triple_always_returned():
    pts, code, code_p, p, _ = instance(12, 24, "t1", 24, 7, ell1=1, ell2=1)
    truth = [s.key for s in sieve.enumerate_T_RRprime(pts, code, code_p, p)]
    assert len(truth) == 1
    D, Dp = sieve.preprocess(pts, code, code_p, p)
    g = stream(9, "t1-search")
    for _ in range(50):
        assert sieve.solution_search(D, Dp, code_p, pts, p, g, QueryLedger()).key == truth[0]


@pytest.mark.parametrize("method", ["enumerate", "reject"])
def test_tuple_distribution(toy, method):
    pts, code, code_p, p, ctx = toy
    ref = oracles.tuple_distribution(pts, code, code_p, p)
    joint = ctx.tuple_probabilities()
    total = sum(joint.values())
    assert {k: v / total for k, v in joint.items()} == pytest.approx(ref, rel=1e-9)
    b = ctx.sample_tuples(60_000, stream(9, f"tuples-{method}"), method)
    keep = b.flag == 1
    keys = list(zip(*(a[keep].tolist() for a in (b.x, b.c, b.y, b.c_prime, b.z))))
    res = oracles.chi_square(keys, ref)
    assert res["outside_support"] == 0 and res["p_value"] > 1e-4


def test_solution_search_sound_and_distributed(toy):
    pts, code, code_p, p, ctx = toy
    D, Dp = ctx.D, ctx.Dp
    truth = {s.key for s in sieve.enumerate_T_RRprime(pts, code, code_p, p)}
    g = stream(9, "sols")
    outs = [sieve.solution_search(D, Dp, code_p, pts, p, g, QueryLedger()) for _ in range(300)]
    assert all(s.key in truth for s in outs)
    assert all(np.linalg.norm(pts[s.x_id] - pts[s.y_id] - pts[s.z_id]) <= 1 + 1e-10 for s in outs)
    ref = oracles.solution_distribution(pts, code, code_p, p)
    batch = ctx.sample_solutions(50_000, stream(9, "sols-batch"))
    res = oracles.chi_square([tuple(t) for t in batch.tolist()], ref)
    assert res["outside_support"] == 0 and res["p_value"] > 1e-4


def test_enumerate_and_reject_agree(toy):
    *_, ctx = toy
    a = ctx.sample_solutions(30_000, stream(9, "agree-e"), "enumerate")
    b = ctx.sample_solutions(30_000, stream(9, "agree-r"), "reject")
    keys = sorted({tuple(t) for t in np.vstack([a, b]).tolist()})
    idx = {k: i for i, k in enumerate(keys)}
    ca = np.bincount([idx[tuple(t)] for t in a.tolist()], minlength=len(keys))
    cb = np.bincount([idx[tuple(t)] for t in b.tolist()], minlength=len(keys))
    from scipy import stats

    assert stats.chi2_contingency(np.vstack([ca, cb]) + 0.0)[1] > 1e-4


def test_ledger_equals_closed_form(toy):
    pts, code, code_p, p, ctx = toy
    ledger = QueryLedger()
    sieve.solution_search(ctx.D, ctx.Dp, code_p, pts, p, stream(9, "ledger"), ledger)
    assert ledger.total_steps == sieve.ledger_closed_form(ctx)
    r1, r2, r3 = ctx.rounds()
    c = p.costs
    assert ledger.total_steps == nested_total(r1, c.sample, c.check_pair, c.decode, r2, c.sample_z, c.check_z, r3,
                                              c.check_triple)


# ---------------------------------------------------------------- filtered sets


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32), m=st.integers(10, 60), d=st.sampled_from([12, 16]))
def test_subset_chain(seed, m, d):
    g = np.random.default_rng(seed)
    p = sieve.SieveParams.for_dimension(d, m, ell1=1, ell2=1, truncation_cap=3)
    pts = sample_unit_vectors(m, d, g)
    code = rpc.sample_rpc(d, p.blocks, p.code_size, 1, g)
    code_p = rpc.sample_rpc(d, p.blocks, p.code_size_prime, 1, g)
    ft = sieve.filtered_triples(pts, code, code_p, p)
    assert np.all(ft.in_T[ft.in_T_star])
    tsol = {tuple(t) for t in ft.triples.tolist()}
    t_set = {s.key for s in sieve.enumerate_T_RRprime(pts, code, code_p, p)}
    assert t_set <= tsol
    assert all(len(set(t)) == 3 and all(0 <= i < m for i in t) for t in tsol)
    for s in sieve.enumerate_T_RRprime(pts, code, code_p, p):
        c = rpc.codeword_vector(code, s.witness_c)
        assert abs(pts[s.x_id] @ c - p.cos_alpha) <= p.epsilon and abs(pts[s.y_id] @ c - p.cos_alpha) <= p.epsilon


def test_covering_codes_keep_all_of_T_sol():
    d, m = 6, 8
    g = stream(9, "allcover")
    p = covering_params(d, m)
    pts = sample_unit_vectors(m, d, g)
    code = rpc.sample_rpc(d, 1, 4, 1, g)
    tsol = {tuple(t) for t in sieve.T_sol_array(pts, p).tolist()}
    assert len(tsol) == m * (m - 1) * (m - 2)
    assert {s.key for s in sieve.enumerate_T_RRprime(pts, code, code, p)} == tsol


def test_filtered_ratio_matches_collision_law():
    d, m = 14, 200
    pts, _, _, p, _ = instance(d, m, "ratio", d)
    tri = sieve.T_sol_array(pts, p)
    ratios = []
    for s in range(200):
        g = stream(9, "ratio-code", d, s)
        code = rpc.sample_rpc(d, p.blocks, p.code_size, 1, g)
        code_p = rpc.sample_rpc(d, p.blocks, p.code_size_prime, 1, g)
        ratios.append(sieve.filtered_triples(pts, code, code_p, p, tri).in_T.mean())
    pred = sieve.desk_predictions(p)["ratio_T_over_Tsol"]
    assert abs(math.log2(np.mean(ratios) / pred)) / d <= 0.04


# ---------------------------------------------------------------- goodness


def test_goodness_covering_code_buckets_equal_list():
    d, m = 12, 64
    p = sieve.SieveParams.for_dimension(d, m)
    g = stream(9, "goodcover")
    code = rpc.sample_rpc(d, 1, 1, 1, g)
    c = rpc.codeword_vector(code, 0)
    w = sample_unit_vectors(m, d, g)
    w -= np.outer(w @ c, c)
    w /= np.linalg.norm(w, axis=1)[:, None]
    pts = p.cos_alpha * c + math.sqrt(1 - p.cos_alpha**2) * w
    rep = sieve.goodness_check(pts, code, code, p)
    assert rep.conditions["i"]["measured"]["max"] == m
    assert set(rep.conditions) == {"i", "ii", "iii", "iv"}


def plant_cluster(pts, code_p, p, k, g):
    for x in range(len(pts)):
        u = pts[x] - pts[(x + 1) % len(pts)]
        u /= np.linalg.norm(u)
        ru = rpc.decode_ids(code_p, u, p.cos_alpha_prime, p.epsilon)
        if ru.size:
            break
    cp = rpc.codeword_vector(code_p, int(ru[0]))
    w = cp - (cp @ u) * u
    w /= np.linalg.norm(w)
    a = p.cos_theta_prime
    b = (p.cos_alpha_prime - a * (u @ cp)) / (w @ cp)
    r = g.standard_normal(len(u))
    r -= (r @ u) * u + (r @ w) * w
    r /= np.linalg.norm(r)
    z = a * u + b * w + math.sqrt(1 - a * a - b * b) * r
    return np.vstack([pts, np.repeat(z[None], k, axis=0)])


def test_dense_cluster_fails_only_z_condition():
    d, m = 16, 512
    g = stream(5, "plant")
    p = sieve.SieveParams.for_dimension(d, m)
    pts = sample_unit_vectors(m, d, g)
    code = rpc.sample_rpc(d, p.blocks, p.code_size, 1, g)
    code_p = rpc.sample_rpc(d, p.blocks, p.code_size_prime, 1, g)
    # generous slack isolates (ii); the planted points stay inside it for the other conditions
    base = sieve.goodness_check(pts, code, code_p, p, slack=0.5)
    assert base.good
    planted = plant_cluster(pts, code_p, p, 300, g)
    p2 = sieve.SieveParams.for_dimension(d, len(planted))
    rep = sieve.goodness_check(planted, code, code_p, p2, slack=0.5)
    verdicts = {k: v["pass"] for k, v in rep.conditions.items()}
    assert verdicts == {"i": True, "ii": False, "iii": True, "iv": True}


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="pilot: Pr[good] = 0.06 at d = 16; |T| runs ~2x under prediction")
def test_good_rate_at_desk_scale():
    from trisieve.config import ExperimentConfig
    from trisieve.experiments import run_goodness

    assert run_goodness(ExperimentConfig())["passed"]


# ---------------------------------------------------------------- outer loop


def test_three_list_dense_instance():
    pts, _, _, p, g = instance(12, 128, "dense", ell1=1, ell2=1)
    found = []
    for _ in range(20):
        found = sieve.three_list(pts, p, g).solutions
        if found:
            break
    assert found
    for s in found:
        assert sieve.in_T_sol(pts, p, s.x_id, s.y_id, s.z_id)
        assert np.linalg.norm(pts[s.x_id] - pts[s.y_id] - pts[s.z_id]) <= 1 + 1e-10


def test_three_list_recovers_quarter_of_list():
    d = 14
    size, _ = sieve.min_list_size(3, d)
    # 2x the floor min_list_size * 2^1.5: at the floor itself |T_sol| < m/4 for most lists
    m = 2 * math.ceil(size * 2**1.5)
    p = sieve.SieveParams.for_dimension(d, m)
    hits = 0
    for s in range(20):
        g = stream(9, "yield", m, s)
        pts = sample_unit_vectors(m, d, g)
        hits += len(sieve.three_list(pts, p, g).solutions) >= m / 4
    assert hits / 20 >= 0.5
