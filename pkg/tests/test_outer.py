import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccs_amp.outer import (
    TO_OPERAND,
    TO_PARITY,
    OuterGraph,
    bp_denoise,
    check_to_var,
    encode,
    encode_info,
    extrinsic_beliefs,
    index_map,
    LOCAL_MODES,
    local_beliefs,
    info_to_payload,
    payload_to_info,
    section_of,
    separable_prior,
    stitch,
    top_lists,
    value_of,
)

RING = OuterGraph.ring(16, 16)
TOY = OuterGraph.ring(16, 3)


def brute_to_parity(m1, m2):
    q = m1.size
    out = np.zeros(q)
    for i in range(q):
        for j in range(q):
            out[(i + j) % q] += m1[i] * m2[j]
    return out / out.sum()


def brute_to_operand(other, par):
    q = other.size
    out = np.zeros(q)
    for k in range(q):
        for j in range(q):
            out[k] += other[j] * par[(k + j) % q]
    return out / out.sum()


def delta(i, q):
    e = np.zeros(q)
    e[i] = 1.0
    return e


# --- graph and encoding -----------------------------------------------------


def test_ring_layout():
    assert RING.checks == ((0, 1, 8), (1, 2, 9), (2, 3, 10), (3, 4, 11),
                           (4, 5, 12), (5, 6, 13), (6, 7, 14), (7, 0, 15))
    for s in RING.info_sections:
        assert len(RING.checks_of(s)) == 2
    for s in RING.parity_sections:
        assert len(RING.checks_of(s)) == 1


def test_encode_zero_payload():
    assert not encode(0, RING).any()


def test_encode_known_parities():
    payload = info_to_payload([1, 2, 3, 4, 5, 6, 7, 8], RING)
    vals = encode(payload, RING)
    assert list(vals[:8]) == [1, 2, 3, 4, 5, 6, 7, 8]
    assert list(vals[8:]) == [3, 5, 7, 9, 11, 13, 15, 9]


def test_parity_wraps_modulo():
    vals = encode(info_to_payload([65535, 1, 0, 0, 0, 0, 0, 65535], RING), RING)
    assert vals[8] == 0 and vals[15] == 65534


def test_big_endian_chunks():
    payload = (0xABCD << 112) | 0x1234
    info = payload_to_info(payload, RING)
    assert info[0] == 0xABCD and info[7] == 0x1234
    assert info_to_payload(info, RING) == payload


def test_bit_sequence_payload():
    bits = [0] * 127 + [1]
    assert encode(bits, RING)[7] == 1


@pytest.mark.parametrize("bad", [-1, 1 << 128, [1, 0, 1]])
def test_bad_payload(bad):
    with pytest.raises(ValueError):
        encode(bad, RING)


def test_encode_consistency_many():
    rng = np.random.default_rng(0)
    info = rng.integers(0, 1 << 16, size=(10_000, 8))
    vals = encode_info(info, RING)
    for a, b, p in RING.checks:
        assert np.array_equal((vals[:, a] + vals[:, b]) % 65536, vals[:, p])


def test_index_map():
    idx = index_map(np.zeros(16, dtype=int), RING)
    assert list(idx) == [l * 65536 for l in range(16)]
    vals = np.zeros(16, dtype=int)
    vals[0] = 5
    assert index_map(vals, RING)[0] == 5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, (1 << 128) - 1))
def test_index_map_round_trip(payload):
    vals = encode(payload, RING)
    idx = index_map(vals, RING)
    assert np.array_equal(section_of(idx, RING), np.arange(16))
    assert np.array_equal(value_of(idx, RING), vals)
    # one index per section block
    assert np.array_equal(np.bincount(idx >> 16, minlength=16), np.ones(16))


# --- check messages ---------------------------------------------------------


def test_check_deltas():
    q = 1 << 16
    assert np.argmax(check_to_var(delta(3, q), delta(5, q), TO_PARITY)) == 8
    np.testing.assert_allclose(check_to_var(delta(3, q), delta(5, q), TO_PARITY), delta(8, q),
                               atol=1e-9)
    np.testing.assert_allclose(check_to_var(delta(5, q), delta(8, q), TO_OPERAND), delta(3, q),
                               atol=1e-9)


@pytest.mark.parametrize("q", [4, 8])
@pytest.mark.parametrize("seed", range(5))
def test_check_matches_double_sum(q, seed):
    rng = np.random.default_rng(seed)
    m1 = rng.random(q)
    m2 = rng.random(q)
    m1 /= m1.sum()
    m2 /= m2.sum()
    np.testing.assert_allclose(check_to_var(m1, m2, TO_PARITY), brute_to_parity(m1, m2),
                               rtol=0, atol=1e-10)
    np.testing.assert_allclose(check_to_var(m1, m2, TO_OPERAND), brute_to_operand(m1, m2),
                               rtol=0, atol=1e-10)


def test_check_rejects_unnormalized():
    with pytest.raises(ValueError):
        check_to_var(np.ones(4), np.full(4, 0.25), TO_PARITY)
    with pytest.raises(ValueError):
        check_to_var(np.full(4, 0.25), np.full(4, 0.25), "sideways")


# --- BP denoiser ------------------------------------------------------------


def test_uniform_beliefs_give_flat_prior():
    r = np.zeros(RING.L * RING.q)
    d = np.full(16, 5.0)
    q = bp_denoise(r, 1.3, d, 100, RING)
    assert np.all(q == min(1.0, 100 / 65536))


def test_uniform_beliefs_likelihood_mode():
    r = np.full(RING.L * RING.q, 0.7)
    q = bp_denoise(r, 1.3, np.full(16, 5.0), 100, RING, local="likelihood")
    assert np.all(q == 100 / 65536)


@pytest.mark.parametrize("mode", LOCAL_MODES)
def test_flat_observation_prior_is_exact(mode):
    rng = np.random.default_rng(12)
    for _ in range(5):
        level, tau, d = rng.normal() * 3, rng.uniform(0.1, 3), rng.uniform(0.5, 10)
        K = int(rng.integers(1, 2000))
        q = bp_denoise(np.full(RING.L * RING.q, level), tau, np.full(16, d), K, RING, local=mode)
        assert np.all(q == min(1.0, K / 65536))


def test_rejects_bad_tau():
    with pytest.raises(ValueError):
        bp_denoise(np.zeros(TOY.L * TOY.q), 0.0, np.ones(16), 1, TOY)
    with pytest.raises(ValueError):
        bp_denoise(np.zeros(TOY.L * TOY.q), 1.0, np.ones(16), 1, TOY, local="magic")


def test_edgeless_graph_keeps_separable_prior():
    g = OuterGraph.edgeless(16, 3)
    r = np.random.default_rng(0).standard_normal(16 * 8)
    q = bp_denoise(r, 1.0, np.ones(16), 3, g)
    assert np.all(q == separable_prior(3, 3))


def test_single_check_extrinsic_is_exact_posterior():
    # one check a + b = p: one-round BP extrinsic beliefs are the exact marginals
    g = OuterGraph(4, 3, ((0, 1, 2),))
    rng = np.random.default_rng(1)
    lam = rng.random((4, 8))
    lam /= lam.sum(axis=1, keepdims=True)
    beta = extrinsic_beliefs(lam, g)
    post_p = np.zeros(8)
    post_a = np.zeros(8)
    for a, b, p in itertools.product(range(8), repeat=3):
        if (a + b) % 8 == p:
            post_p[p] += lam[0, a] * lam[1, b]
            post_a[a] += lam[1, b] * lam[2, p]
    np.testing.assert_allclose(beta[2], post_p / post_p.sum(), atol=1e-12)
    np.testing.assert_allclose(beta[0], post_a / post_a.sum(), atol=1e-12)
    assert np.isnan(beta[3]).all()


@pytest.mark.parametrize("local", ["likelihood", "pme"])
def test_noiseless_single_user_matches_exhaustive_posterior(local):
    g = OuterGraph.ring(8, 3)
    vals = encode(info_to_payload([3, 6, 1, 7], g), g)
    d = np.full(g.L, 2.0)
    tau = 0.2
    r = np.zeros((g.L, g.q))
    r[np.arange(g.L), vals] = d
    q = bp_denoise(r.ravel(), tau, d, 1, g, local=local).reshape(g.L, g.q)
    # exhaustive codeword posterior under the Gaussian observation model
    loglik = (d[:, None] * r - 0.5 * d[:, None] ** 2) / tau**2
    post = np.zeros((g.L, g.q))
    for info in itertools.product(range(g.q), repeat=4):
        cw = encode_info(np.array(info), g)
        post[np.arange(g.L), cw] += np.exp(loglik[np.arange(g.L), cw].sum() - loglik.max() * g.L)
    post /= post.sum(axis=1, keepdims=True)
    for s in g.parity_sections:
        assert np.argmax(post[s]) == vals[s] == np.argmax(q[s])
        assert q[s, vals[s]] > 0.999
        assert np.delete(q[s], vals[s]).max() < 1e-3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(1, 40))
def test_prior_in_unit_interval(seed, K):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(TOY.L * TOY.q) * 3
    tau = rng.uniform(0.1, 2.0, TOY.L)
    q = bp_denoise(r, tau, rng.uniform(0.5, 4, TOY.L), K, TOY)
    assert np.all((q >= 0) & (q <= 1))


def test_local_beliefs_survive_underflow():
    r = np.zeros((TOY.L, TOY.q))
    r[3] = -2000.0 + np.arange(TOY.q)
    lam = local_beliefs(r.ravel(), 1.0, 1.0, TOY, K=2)
    assert np.all(np.isfinite(lam))
    np.testing.assert_allclose(lam.sum(axis=1), 1.0, atol=1e-12)
    # deep in the tail the PME is proportional to exp(r)
    soft = np.exp(np.arange(TOY.q) - TOY.q + 1.0)
    np.testing.assert_allclose(lam[3], soft / soft.sum(), rtol=1e-9)


def test_likelihood_mode_shift_invariance():
    rng = np.random.default_rng(7)
    r = rng.standard_normal(TOY.L * TOY.q)
    d = rng.uniform(1, 3, TOY.L)
    base = bp_denoise(r, 0.8, d, 5, TOY, local="likelihood")
    shifted = r.reshape(TOY.L, TOY.q) + rng.uniform(-2, 2, TOY.L)[:, None]
    moved = bp_denoise(shifted.ravel(), 0.8, d, 5, TOY, local="likelihood")
    np.testing.assert_allclose(moved, base, rtol=0, atol=1e-9)


@pytest.mark.parametrize("local", ["likelihood", "pme"])
def test_codeword_translation_equivariance(local):
    # rolling every section by the values of a codeword is a symmetry of the code
    rng = np.random.default_rng(3)
    r = rng.standard_normal((TOY.L, TOY.q))
    d = rng.uniform(1, 3, TOY.L)
    shift = encode(info_to_payload(rng.integers(0, 8, 8), TOY), TOY)
    base = bp_denoise(r.ravel(), 0.9, d, 4, TOY, local=local).reshape(TOY.L, TOY.q)
    rolled = np.stack([np.roll(r[l], shift[l]) for l in range(TOY.L)])
    moved = bp_denoise(rolled.ravel(), 0.9, d, 4, TOY, local=local).reshape(TOY.L, TOY.q)
    expect = np.stack([np.roll(base[l], shift[l]) for l in range(TOY.L)])
    np.testing.assert_allclose(moved, expect, rtol=0, atol=1e-9)


# --- stitching --------------------------------------------------------------


def indicator(vals_list, g):
    x = np.zeros(g.L * g.q)
    for vals in vals_list:
        x[index_map(vals, g)] += 1.0
    return x


def test_stitch_single_codeword():
    payload = 0x0123456789ABCDEF0011223344556677
    shat = indicator([encode(payload, RING)], RING)
    assert stitch(shat, RING, K=1) == [payload]


def distinct_pair(graph, start=0):
    """First seed whose two random codewords differ in every section."""
    seed = start
    while True:
        info = np.random.default_rng(seed).integers(0, graph.q, size=(2, graph.L // 2))
        vals = encode_info(info, graph)
        if np.all(vals[0] != vals[1]):
            return info, vals
        seed += 1


def test_stitch_two_codewords_toy():
    info, vals = distinct_pair(TOY)
    payloads = {info_to_payload(row, TOY) for row in info}
    # every per-section mix of the two users; only the genuine pair satisfies all checks
    picks = np.array(list(itertools.product((0, 1), repeat=TOY.L)))
    mixed = vals[picks, np.arange(TOY.L)]
    ok = np.ones(len(picks), dtype=bool)
    for a, b, par in TOY.checks:
        ok &= (mixed[:, a] + mixed[:, b]) % TOY.q == mixed[:, par]
    assert sorted(map(tuple, picks[ok])) == [(0,) * TOY.L, (1,) * TOY.L]
    out = stitch(indicator(vals, TOY), TOY, K=2)
    assert set(out) == payloads


def test_stitch_zero_gives_empty():
    assert stitch(np.zeros(RING.L * RING.q), RING, K=3) == []


def test_stitch_rejects_negative():
    with pytest.raises(ValueError):
        stitch(-np.ones(TOY.L * TOY.q), TOY, K=1)


def test_top_lists_tie_break():
    shat = np.zeros(TOY.L * TOY.q)
    shat[3] = 1.0
    tops = top_lists(shat, TOY, 3)
    assert list(tops[0]) == [3, 0, 1]
    assert list(tops[1]) == [0, 1, 2]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(1, 6), ls=st.integers(1, 8))
def test_stitch_soundness(seed, K, ls):
    rng = np.random.default_rng(seed)
    vals = encode_info(rng.integers(0, 8, size=(K, 8)), TOY)
    shat = indicator(vals, TOY) + rng.random(TOY.L * TOY.q) * 0.8
    out = stitch(shat, TOY, K=K, list_size=ls, beam_cap=4 * K)
    assert len(out) <= K and len(set(out)) == len(out)
    tops = top_lists(shat, TOY, ls)
    for msg in out:
        cw = encode(msg, TOY)
        assert all(cw[l] in tops[l] for l in range(TOY.L))
