import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lvcodec import tensor as T
from lvcodec.entropy import (
    TOTAL,
    CdfTable,
    FactorizedPrior,
    GaussianParams,
    estimate_rate,
    gaussian_likelihood,
    gaussian_likelihood_t,
    gaussian_tables,
    pmf_to_cdf,
    quantize,
    rc_decode,
    rc_encode,
    round_half_away,
)
from lvcodec.layers import ParamStore
from lvcodec.tensor import Tensor

from gradcheck import max_rel_error, numeric_grad


def phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# --- quantize -----------------------------------------------------------------

def test_round_convention():
    out = quantize(Tensor([2.4, -2.5, 2.5, -0.4, 3.0, -7.0]), "round").data
    np.testing.assert_array_equal(out, [2, -3, 3, 0, 3, -7])


def test_round_commutes_with_negation():
    x = np.random.default_rng(0).uniform(-10, 10, 1000)
    x[:10] = np.arange(10) + 0.5
    np.testing.assert_array_equal(round_half_away(-x), -round_half_away(x))


def test_noise_within_half():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal(10_000))
    y = quantize(x, "noise", rng)
    d = y.data - x.data
    assert d.min() >= -0.5 and d.max() <= 0.5


def test_noise_gradient_passes_through():
    x = Tensor(np.ones(5), requires_grad=True)
    T.backward(T.tsum(quantize(x, "noise", np.random.default_rng(0)) * 3.0))
    np.testing.assert_array_equal(x.grad, np.full(5, 3.0))


def test_ste_rounds_with_identity_gradient():
    x = Tensor(np.array([0.4, 1.6]), requires_grad=True)
    y = quantize(x, "ste")
    T.backward(T.tsum(y))
    np.testing.assert_array_equal(y.data, [0, 2])
    np.testing.assert_array_equal(x.grad, [1, 1])


# --- Gaussian likelihood -----------------------------------------------------------

def test_standard_normal_unit_bin():
    expected = phi(0.5) - phi(-0.5)
    p = gaussian_likelihood(np.array([0]), GaussianParams([0.0], [1.0]))[0]
    assert p == pytest.approx(expected, abs=1e-12)
    assert p == pytest.approx(0.382925, abs=1e-6)
    assert -math.log2(p) == pytest.approx(1.3849, abs=1e-4)


def test_peaked_gaussian_is_free():
    p = gaussian_likelihood(np.array([3]), GaussianParams([3.0], [0.01]))
    assert p[0] == pytest.approx(1.0, abs=1e-12)
    assert estimate_rate(p) == pytest.approx(0.0, abs=1e-9)


def test_far_symbol_hits_floor():
    p = gaussian_likelihood(np.array([50]), GaussianParams([0.0], [0.5]))
    assert p[0] == 2.0 ** -16


def test_unfloored_mass_sums_to_one():
    s = np.arange(-1000, 1001)
    rng = np.random.default_rng(2)
    for mu, sigma in zip(rng.uniform(-20, 20, 5), rng.uniform(0.05, 50, 5)):
        p = gaussian_likelihood(s, GaussianParams(np.full(s.shape, mu), np.full(s.shape, sigma)), floor=0.0)
        assert 1 - 1e-6 <= p.sum() <= 1 + 1e-12


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(-5, 5), s1=st.floats(0.01, 10), s2=st.floats(0.01, 10))
def test_widening_sigma_never_raises_mode_probability(mu, s1, s2):
    lo, hi = min(s1, s2), max(s1, s2)
    s = np.array([round_half_away(np.array(mu))])
    p_lo = gaussian_likelihood(s, GaussianParams([mu], [lo]))
    p_hi = gaussian_likelihood(s, GaussianParams([mu], [hi]))
    assert p_hi[0] <= p_lo[0] + 1e-15


def test_tensor_likelihood_matches_numpy_and_gradients():
    rng = np.random.default_rng(3)
    v = rng.normal(0, 2, 40)
    mu = rng.normal(0, 1, 40)
    sig = rng.uniform(0.3, 3, 40)
    p_np = gaussian_likelihood(v, GaussianParams(mu, sig))
    tv, tm, ts = (Tensor(a.copy(), requires_grad=True) for a in (v, mu, sig))
    rate = estimate_rate(gaussian_likelihood_t(tv, tm, ts))
    np.testing.assert_allclose(rate.item(), estimate_rate(p_np), rtol=1e-12)
    T.backward(rate)
    for t, arr in ((tv, v), (tm, mu), (ts, sig)):
        def f():
            return estimate_rate(gaussian_likelihood(v, GaussianParams(mu, sig)))
        assert max_rel_error(t.grad, numeric_grad(f, arr)) < 1e-4


# --- range coder ----------------------------------------------------------------------

def test_empty_round_trip():
    table = CdfTable(pmf_to_cdf(np.ones((1, 4)), [4]), [4], [0])
    data = rc_encode(np.array([], np.int64), table)
    assert rc_decode(data, table, 0, count=0).size == 0


def test_uniform_256_costs_eight_bits():
    cdf = np.arange(257, dtype=np.int64)[None] * 256
    table = CdfTable(cdf, [256], [0], escape=False)
    sym = np.random.default_rng(4).integers(0, 256, 10_000)
    data = rc_encode(sym, table)
    assert abs(8 * len(data) - 80_000) <= 40
    np.testing.assert_array_equal(rc_decode(data, table, 0, count=sym.size), sym)


def random_table(rng, rows, max_len):
    length = rng.integers(2, max_len + 1, rows)
    pmf = rng.dirichlet(np.full(max_len, 0.3), rows)
    offset = rng.integers(-50, 50, rows)
    return CdfTable(pmf_to_cdf(pmf, length), length, offset, escape=True)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rows=st.integers(1, 20), max_len=st.integers(2, 300))
def test_random_streams_round_trip(seed, rows, max_len):
    rng = np.random.default_rng(seed)
    table = random_table(rng, rows, max_len)
    n = 2000
    index = rng.integers(0, rows, n)
    pos = (rng.random(n) * (table.length[index] - 1)).astype(np.int64)
    sym = table.offset[index] + pos
    # sprinkle escapes, including large magnitudes
    esc = rng.random(n) < 0.02
    sym[esc] = rng.integers(-(2**40), 2**40, esc.sum())
    data = rc_encode(sym, table, index)
    np.testing.assert_array_equal(rc_decode(data, table, index), sym)


def test_ten_thousand_symbols_round_trip_and_rate():
    rng = np.random.default_rng(5)
    table = random_table(rng, 8, 64)
    index = rng.integers(0, 8, 10_000)
    sym = np.empty(10_000, np.int64)
    for i, row in enumerate(index):
        n = table.length[row]
        freq = np.diff(table.cdf[row, : n + 1])[:-1].astype(float)
        sym[i] = table.offset[row] + rng.choice(n - 1, p=freq / freq.sum())
    data = rc_encode(sym, table, index)
    np.testing.assert_array_equal(rc_decode(data, table, index), sym)
    ideal = table.bits(sym, index)
    assert abs(8 * len(data) - ideal) <= 0.02 * ideal + 32


def test_no_escape_table_rejects_outside_symbol():
    table = CdfTable(pmf_to_cdf(np.ones((1, 4)), [4]), [4], [0], escape=False)
    with pytest.raises(ValueError, match="outside"):
        rc_encode(np.array([5]), table)


def test_pmf_to_cdf_floor_and_total():
    pmf = np.array([[1.0, 0.0, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]])
    cdf = pmf_to_cdf(pmf, [4, 3])
    table = CdfTable(cdf, [4, 3], [0, 0])
    table.validate()
    assert cdf[0, 4] == TOTAL and cdf[1, 3] == TOTAL
    assert np.all(np.diff(cdf[0, :5]) >= 1)


def test_cdf_table_serialization_bit_exact():
    rng = np.random.default_rng(6)
    table = random_table(rng, 7, 33)
    back = CdfTable.from_bytes(table.to_bytes())
    np.testing.assert_array_equal(back.cdf, table.cdf)
    np.testing.assert_array_equal(back.length, table.length)
    np.testing.assert_array_equal(back.offset, table.offset)
    assert back.to_bytes() == table.to_bytes()


# --- Gaussian tables and coder-vs-estimate ------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_gaussian_stream_matches_estimate(seed):
    rng = np.random.default_rng(seed)
    n = 3000
    mu = rng.normal(0, 3, n)
    sigma = np.exp(rng.uniform(np.log(0.05), np.log(20), n))
    params = GaussianParams(mu, sigma)
    sym = round_half_away(rng.normal(mu, sigma)).astype(np.int64)
    table, index = gaussian_tables(params)
    data = rc_encode(sym, table, index)
    np.testing.assert_array_equal(rc_decode(data, table, index), sym)
    est = estimate_rate(gaussian_likelihood(sym, params))
    assert abs(8 * len(data) - est) <= 0.02 * est + 32


def test_gaussian_table_rows_valid():
    table, _ = gaussian_tables(GaussianParams(np.array([0.3, -4.5, 100.2]), np.array([0.01, 1.0, 300.0])))
    table.validate()


# --- factorized prior -----------------------------------------------------------------------

def test_factorized_prior_mass_and_table():
    store = ParamStore(seed=0, dtype=np.float64)
    prior = FactorizedPrior(store, "p", 4)
    z = Tensor(np.arange(-200, 201, dtype=np.float64).reshape(1, 1, 1, -1).repeat(4, axis=1))
    p = prior.likelihood(z).data
    # floored bins each add at most 2^-16
    assert np.all(np.abs(p.sum(axis=-1) - 1.0) < 401 * 2.0 ** -16 + 1e-3)
    table = prior.table()
    table.validate()
    sym = np.random.default_rng(0).integers(-3, 4, (4, 3, 5))
    index = prior.table_index(sym.shape)
    data = rc_encode(sym.ravel(), table, index)
    np.testing.assert_array_equal(rc_decode(data, table, index).reshape(sym.shape), sym)


def test_factorized_prior_gradients():
    store = ParamStore(seed=1, dtype=np.float64)
    prior = FactorizedPrior(store, "p", 2)
    zarr = np.random.default_rng(1).normal(0, 2, (1, 2, 2, 3))
    rate = estimate_rate(prior.likelihood(Tensor(zarr)))
    T.backward(rate)
    for name, t in store.items():
        def f():
            with T.no_grad():
                return estimate_rate(prior.likelihood(Tensor(zarr))).item()
        assert max_rel_error(t.grad, numeric_grad(f, t.data)) < 1e-4, name
