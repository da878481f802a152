import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trisieve import rpc as R
from trisieve.kernels import _decode_nb, _decode_np
from trisieve.rng import stream
from trisieve.sphere import AngleSpec, band_probability, sample_unit_vectors, wedge_band_probability


def rng(name, *i):
    return stream(11, name, *i)


def check_invariants(code):
    assert code.codebooks.shape == (code.b, code.q, code.d // code.b)
    norms = np.linalg.norm(code.codebooks, axis=2)
    assert np.allclose(norms, 1 / math.sqrt(code.b), atol=1e-12)
    for rot in code.rotations:
        assert np.allclose(rot @ rot.T, np.eye(code.d), atol=1e-10)
        assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-9)
    words = R.materialize(code)
    assert np.allclose(np.linalg.norm(words, axis=1), 1, atol=1e-10)


def test_single_block_is_plain_code():
    code = R.sample_rpc(8, 1, 50, 1, rng("b1"))
    assert code.q == 50 and code.M == 50 and code.size == 50
    check_invariants(code)


def test_d24_b3_block_size():
    # 4096^(1/3) = 16 codewords per block
    code = R.sample_rpc(24, 3, 4096, 1, rng("d24"))
    assert code.q == 16 and code.M == 4096
    check_invariants(code)


def test_realized_size_rounds_up():
    code = R.sample_rpc(12, 2, 200, 1, rng("up"))
    assert code.q == 15 and code.M == 225


def test_non_divisible_blocks_rejected():
    with pytest.raises(R.ConfigurationError):
        R.sample_rpc(10, 3, 64, 1, rng("nd"))


@pytest.mark.parametrize("d,b", [(16, 4), (20, 4), (24, 4), (12, 4), (7, 1)])
def test_choose_blocks_divides(d, b):
    assert R.choose_blocks(d) == b
    assert d % R.choose_blocks(d) == 0


@settings(max_examples=25, deadline=None)
@given(d=st.sampled_from([4, 8, 12, 16]), b=st.sampled_from([1, 2, 4]), M=st.integers(1, 300), t=st.integers(1, 3),
       seed=st.integers(0, 2**32))
def test_sampled_codes_satisfy_invariants(d, b, M, t, seed):
    code = R.sample_rpc(d, b, M, t, np.random.default_rng(seed))
    check_invariants(code)
    assert code.q == R.block_size(M, b)


def test_identity_rotation_returns_stored_codeword():
    code = R.sample_rpc(6, 1, 5, 1, rng("id"))
    code = R.RpcDescription(code.d, code.b, code.q, code.codebooks, np.eye(6)[None], code.M_nominal)
    for j in range(5):
        assert np.array_equal(R.codeword_vector(code, R.CodewordId(0, (j,))), code.codebooks[0, j])


def test_codeword_vector_matches_materialize_and_is_unit():
    code = R.sample_rpc(12, 3, 64, 2, rng("cv"))
    words = R.materialize(code)
    for flat in range(code.size):
        v = R.codeword_vector(code, code.codeword_id(flat))
        assert abs(np.linalg.norm(v) - 1) <= 1e-10
        assert np.allclose(v, words[flat])
        assert code.flat_id(code.codeword_id(flat)) == flat


def test_inner_product_block_expansion():
    code = R.sample_rpc(12, 3, 27, 1, rng("exp"))
    a, b = R.CodewordId(0, (0, 1, 2)), R.CodewordId(0, (0, 1, 1))
    books = code.codebooks
    expected = books[0, 0] @ books[0, 0] + books[1, 1] @ books[1, 1] + books[2, 2] @ books[2, 1]
    assert R.codeword_vector(code, a) @ R.codeword_vector(code, b) == pytest.approx(expected, abs=1e-12)


def test_out_of_range_ids():
    code = R.sample_rpc(8, 2, 9, 1, rng("oor"))
    with pytest.raises(IndexError):
        code.flat_id(R.CodewordId(0, (3, 0)))
    with pytest.raises(IndexError):
        code.codeword_id(code.size)


def test_json_round_trip():
    code = R.sample_rpc(8, 2, 16, 2, rng("json"))
    back = R.RpcDescription.from_json(code.to_json())
    assert np.array_equal(back.codebooks, code.codebooks) and np.array_equal(back.rotations, code.rotations)
    assert back.to_json() == code.to_json()


# ---------------------------------------------------------------- decoding


def test_decode_everything_with_huge_band():
    code = R.sample_rpc(8, 2, 25, 2, rng("all"))
    x = sample_unit_vectors(1, 8, rng("allx"))[0]
    assert len(R.decode(code, x, 0.0, 2.0)) == code.size


def test_decode_zero_band_is_empty():
    code = R.sample_rpc(12, 2, 256, 1, rng("zb"))
    x = sample_unit_vectors(1, 12, rng("zbx"))[0]
    assert R.decode(code, x, 0.3, 0.0) == []


def test_decode_matches_brute_force_d12():
    code = R.sample_rpc(12, 2, 256, 1, rng("bf12"))
    words = R.materialize(code)
    xs = sample_unit_vectors(100, 12, rng("bf12x"))
    for x in xs:
        got = R.decode_ids(code, x, 0.3, 0.1)
        assert np.array_equal(got, R.brute_force_decode(code, x, 0.3, 0.1, words))


@settings(max_examples=40, deadline=None)
@given(d=st.sampled_from([4, 8, 12, 16]), b=st.sampled_from([1, 2, 4]), logM=st.floats(0, 12),
       ca=st.floats(0.05, 0.6), eps=st.floats(0.01, 0.2), t=st.integers(1, 2), seed=st.integers(0, 2**32))
def test_decode_equals_brute_force_and_respects_node_bound(d, b, logM, ca, eps, t, seed):
    g = np.random.default_rng(seed)
    code = R.sample_rpc(d, b, 2**logM, t, g)
    x = sample_unit_vectors(1, d, g)[0]
    stats = R.DecodeStats(np.zeros(0))
    got = R.decode_ids(code, x, ca, eps, stats)
    want = R.brute_force_decode(code, x, ca, eps)
    assert np.array_equal(got, want)
    assert np.all(stats.nodes <= R.prefix_counts(code, want) + code.q)


def test_decode_deterministic():
    code = R.sample_rpc(16, 4, 4096, 1, rng("det"))
    x = sample_unit_vectors(1, 16, rng("detx"))[0]
    assert np.array_equal(R.decode_ids(code, x, 0.35, 0.06), R.decode_ids(code, x, 0.35, 0.06))


def test_numba_and_numpy_decoders_agree():
    code = R.sample_rpc(16, 4, 4096, 1, rng("kern"))
    for x in sample_unit_vectors(20, 16, rng("kernx")):
        a = R.decode_ids(code, x, 0.35, 0.06, search=_decode_nb)
        b = R.decode_ids(code, x, 0.35, 0.06, search=_decode_np)
        assert np.array_equal(a, b)


def test_expected_decode_size_concentrates():
    d, ca = 16, 0.347606
    eps = 1 / math.log2(d) ** 2
    x = sample_unit_vectors(1, d, rng("size-x"))[0]
    sizes = []
    for i in range(200):
        code = R.sample_rpc(d, 4, 1296, 1, rng("size", i))
        sizes.append(R.decode_ids(code, x, ca, eps).size)
    pred = code.size * band_probability(d, ca, eps)
    ratio = np.mean(sizes) / pred
    assert 2 ** (-0.04 * d) <= ratio <= 2 ** (0.04 * d)


# ---------------------------------------------------------------- collisions


def test_collision_saturates_for_huge_codes():
    spec = AngleSpec(0.35, 0.35, 1 / 3, 0.08)
    est = R.mc_collision_probability(12, 2, 4096, spec, 100, rng("sat"))
    assert est.estimate >= 0.5


def test_collision_single_codeword_matches_wedge():
    d = 8
    spec = AngleSpec(0.35, 0.35, 1 / 3, 0.1)
    est = R.mc_collision_probability(d, 1, 1, spec, 4000, rng("one"))
    assert est.contains(wedge_band_probability(d, spec))
