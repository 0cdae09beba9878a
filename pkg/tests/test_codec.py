import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lqgrate.codec import (
    ESCAPE,
    CodebookCache,
    build_shannon_fano,
    cell_prob,
    conditional_pmf,
    decode,
    elias_gamma,
    encode,
    pmf_from_probabilities,
    read_elias_gamma,
    read_trace,
    shannon_fano_length,
    unzigzag,
    write_trace,
    zigzag,
)
from lqgrate.errors import DecodeFailure, DegenerateCovariance


def check_book(pmf, book):
    assert book.kraft_sum() <= 1.0
    assert book.is_prefix_free()
    words = [w.bits for w in book.words.values()]
    for a in words:
        for b in words:
            assert a == b or not b.startswith(a)
    H = pmf.entropy_bits()
    El = math.fsum(p * book.words[c].length for c, p in pmf.support)
    mass = math.fsum(pmf.probabilities())
    assert H <= El + 1e-12
    assert El <= H + mass + 1e-12
    for cell, p in pmf.support:
        assert book.words[cell].length == max(1, math.ceil(-math.log2(p)) if p < 1 else 1)


def test_hand_case():
    pmf = pmf_from_probabilities([0.5, 0.25, 0.125, 0.125])
    book = build_shannon_fano(pmf)
    assert [book.words[(i,)].bits for i in range(4)] == ["0", "10", "110", "111"]
    assert book.kraft_sum() == 1.0
    assert not book.has_escape
    check_book(pmf, book)
    for i in range(4):
        assert decode(encode((i,), book).bits, book) == (i,)


def test_single_symbol_gets_one_bit():
    book = build_shannon_fano(pmf_from_probabilities([1.0]))
    assert book.words[(0,)].bits == "0"
    assert book.is_prefix_free()


def test_pmf_examples():
    pmf = conditional_pmf([[1.0]], [0.0], [math.sqrt(12)])
    p0 = dict(pmf.support)[(0,)]
    assert p0 == pytest.approx(stats.norm.cdf(math.sqrt(3)) - stats.norm.cdf(-math.sqrt(3)), abs=1e-14)
    assert p0 == pytest.approx(0.9167, abs=5e-5)
    probs = dict(pmf.support)
    assert {(-k,) for (k,) in probs} == set(probs)
    for (k,), p in probs.items():
        assert p == pytest.approx(probs[(-k,)], abs=1e-12)
    tight = conditional_pmf([[1e-6]], [0.0], [1.0])
    assert dict(tight.support)[(0,)] == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(
    var=st.floats(0.05, 50.0),
    delta=st.floats(0.2, 10.0),
    u=st.floats(-0.5, 0.4999),
    eps=st.sampled_from([1e-6, 1e-9, 1e-12]),
)
def test_conditional_pmf_invariants(var, delta, u, eps):
    pmf = conditional_pmf([[var]], [u * delta], [delta], eps)
    probs = pmf.probabilities()
    assert all(p > 0 for p in probs)
    assert all(a >= b for a, b in zip(probs, probs[1:]))
    assert abs(math.fsum(probs) + pmf.tail_mass - 1.0) < 1e-12
    assert pmf.tail_mass <= eps
    book = build_shannon_fano(pmf)
    check_book(pmf, book)
    for cell, p in pmf.support:
        assert shannon_fano_length(p) == book.words[cell].length


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=40))
def test_theorem_bounds_on_random_pmfs(weights):
    total = math.fsum(weights)
    probs = sorted((w / total for w in weights), reverse=True)
    pmf = pmf_from_probabilities(probs)
    check_book(pmf, build_shannon_fano(pmf))


def test_two_component_book():
    cov = [[2.0, 0.4], [0.4, 1.0]]
    pmf = conditional_pmf(cov, [0.3, -0.2], [3.0, 2.0])
    book = build_shannon_fano(pmf)
    check_book(pmf, book)
    for cell, _ in pmf.support[:50]:
        assert book.decode(book.encode(cell).bits) == cell


def test_escape_round_trip():
    pmf = conditional_pmf([[1.0]], [0.1], [1.0])
    book = build_shannon_fano(pmf)
    assert book.has_escape
    for cell in [(40,), (-41,), (1000,)]:
        word = book.encode(cell)
        assert word.bits.startswith(book.words[ESCAPE].bits)
        assert book.decode(word.bits) == cell
    pmf2 = conditional_pmf([[1.0, 0.0], [0.0, 4.0]], [0.1, 0.0], [1.0, 2.0])
    book2 = build_shannon_fano(pmf2)
    assert book2.decode(book2.encode((0, -77)).bits) == (0, -77)


def test_decode_failures():
    book = build_shannon_fano(conditional_pmf([[1.0]], [0.0], [1.0]))
    with pytest.raises(DecodeFailure):
        book.decode("")
    with pytest.raises(DecodeFailure):
        book.decode(book.encode((0,)).bits + "0")
    with pytest.raises(DecodeFailure):
        book.decode(book.words[ESCAPE].bits + "000")
    with pytest.raises(DegenerateCovariance):
        conditional_pmf([[0.0]], [0.0], [1.0])
    with pytest.raises(ValueError):
        conditional_pmf([[1.0]], [0.0], [1.0], eps=1e-3)


@given(st.integers(-10**6, 10**6))
def test_integer_codes(k):
    assert unzigzag(zigzag(k)) == k
    bits = elias_gamma(zigzag(k) + 1)
    assert read_elias_gamma(bits + "1", 0) == (zigzag(k) + 1, len(bits))


def test_cell_prob_tails_keep_precision():
    p = cell_prob(12, 0.0, 1.0, 1.0)
    exact = stats.norm.sf(11.5) - stats.norm.sf(12.5)
    assert p == pytest.approx(exact, rel=1e-10)
    assert cell_prob(-12, 0.0, 1.0, 1.0) == pytest.approx(exact, rel=1e-10)


def test_cache_keys_on_snapped_dither():
    cache = CodebookCache([[2.0]], [1.5])
    a = cache.book([0.1])
    b = cache.book([0.1 + 1e-9])
    assert a is b and cache.hits == 1
    c = cache.book([0.2])
    assert c is not a and cache.misses == 2
    small = CodebookCache([[2.0]], [1.5], maxsize=2)
    for xi in (0.1, 0.2, 0.3):
        small.book([xi])
    assert len(small._books) == 2


def test_trace_round_trip(tmp_path):
    rows = [(0, "0"), (1, "1011"), (2, "111111110000000011"), (3, "1")]
    path = tmp_path / "trace.csv"
    write_trace(path, rows)
    assert read_trace(path) == rows
    assert path.read_text().splitlines()[0] == "step,l_t,bits_hex"
