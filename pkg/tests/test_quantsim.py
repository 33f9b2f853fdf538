import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fpquant.formats import FpFormat, IntFormat, enumerate_grid, max_representable
from fpquant.quantsim import (
    QuantizerConfig,
    Tensor,
    empirical_mse,
    fp_scale,
    quantize,
    quantize_fp,
    quantize_fp_oracle,
    quantize_int,
)

EIGHT_BIT = [(5, 2), (4, 3), (3, 4), (2, 5)]

fp_formats = st.builds(
    FpFormat,
    st.integers(1, 6),
    st.integers(1, 5),
    st.one_of(st.integers(-8, 20).map(float), st.floats(-8, 20, allow_nan=False)),
)


def spread_inputs(f, rng, n):
    g = enumerate_grid(f).values
    pos = g[g > 0]
    mag = np.exp2(rng.uniform(math.log2(pos[0]) - 2, math.log2(pos[-1]) + 1, n))
    mid = 0.5 * (g[:-1] + g[1:])
    return np.concatenate(
        [rng.choice([-1.0, 1.0], n) * mag, mid, np.nextafter(mid, -np.inf), np.nextafter(mid, np.inf), g]
    )


@pytest.mark.parametrize("m,e", EIGHT_BIT)
@pytest.mark.parametrize("b", [4.0, 8.0, 16.0, 5.37, -2.71])
def test_fast_path_matches_oracle(m, e, b):
    f = FpFormat(m, e, b)
    x = spread_inputs(f, np.random.default_rng(1), 50_000)
    np.testing.assert_array_equal(quantize_fp(x, f), quantize_fp_oracle(x, enumerate_grid(f)))


@given(fp_formats, st.integers(0, 2**32 - 1))
def test_fast_path_matches_oracle_any_format(f, seed):
    x = spread_inputs(f, np.random.default_rng(seed), 200)
    np.testing.assert_array_equal(quantize_fp(x, f), quantize_fp_oracle(x, enumerate_grid(f)))


@given(fp_formats, arrays(np.float64, 30, elements=st.floats(-1e6, 1e6)))
def test_idempotent_symmetric_and_on_grid(f, x):
    q = quantize_fp(x, f)
    np.testing.assert_array_equal(quantize_fp(q, f), q)
    np.testing.assert_array_equal(quantize_fp(-x, f), -q)
    c = max_representable(f)
    assert np.all(np.abs(q) <= c)
    grid = enumerate_grid(f)
    assert all(v in grid for v in q.tolist())


@given(fp_formats, arrays(np.float64, 30, elements=st.floats(-1e4, 1e4)))
def test_monotone(f, x):
    xs = np.sort(x)
    assert np.all(np.diff(quantize_fp(xs, f)) >= 0)


def test_examples():
    assert quantize_fp(300.0, FpFormat(3, 4, 8)) == 240.0
    assert quantize_fp(-300.0, FpFormat(3, 4, 8)) == -240.0
    assert quantize_fp(0.3, FpFormat(2, 2, 2)) == 0.25
    assert quantize_fp(0.0, FpFormat(2, 2, 2)) == 0.0
    assert quantize_fp_oracle(-9.0, enumerate_grid(FpFormat(2, 2, 2))) == -3.5


def test_ties_go_to_even_code():
    f = FpFormat(2, 2, 2)
    # 1.125 sits between 1.0 (code 100) and 1.25 (code 101)
    assert quantize_fp(1.125, f) == 1.0
    # 1.375 between 1.25 (101) and 1.5 (110)
    assert quantize_fp(1.375, f) == 1.5
    # subnormal tie 0.0625 between 0 and 0.125
    assert quantize_fp(0.0625, f) == 0.0


def test_away_rounding_breaks_equivalence_only_at_ties():
    f = FpFormat(3, 4, 8)
    g = enumerate_grid(f).values
    mid = 0.5 * (g[:-1] + g[1:])
    fast = quantize_fp(mid, f, rounding="away")
    assert np.count_nonzero(fast != quantize_fp_oracle(mid, enumerate_grid(f))) > 0
    off = np.nextafter(mid, np.inf)
    np.testing.assert_array_equal(quantize_fp(off, f, rounding="away"), quantize_fp(off, f))


@pytest.mark.parametrize("m,e", EIGHT_BIT)
def test_binade_boundary_branches_agree(m, e):
    # where floor(log2|x| + b) == 1 both branches use the subnormal exponent
    b = 5.0
    x = np.array([2.0 ** (1 - b), 2.0 ** (1 - b) * 1.5, np.nextafter(2.0 ** (2 - b), 0)])
    _, shift, normal = fp_scale(x, m, b)
    assert not np.any(normal)
    np.testing.assert_array_equal(quantize_fp(x, FpFormat(m, e, b)), quantize_fp_oracle(x, enumerate_grid(FpFormat(m, e, b))))


def test_m0_only_differs_at_exact_midpoints():
    f = FpFormat(0, 3, 2)
    g = enumerate_grid(f).values
    mid = 0.5 * (g[:-1] + g[1:])
    x = np.linspace(-10, 10, 1001)
    x = np.concatenate([np.nextafter(mid, -np.inf), np.nextafter(mid, np.inf), x[~np.isin(x, mid)]])
    np.testing.assert_array_equal(quantize_fp(x, f), quantize_fp_oracle(x, enumerate_grid(f)))


def test_nonfinite_input_rejected():
    with pytest.raises(ValueError):
        quantize_fp(np.array([1.0, np.nan]), FpFormat(3, 4, 8))
    with pytest.raises(ValueError):
        Tensor(np.array([np.inf]))


def test_int_examples():
    assert quantize_int(3.4, IntFormat(8)) == 3.0
    assert quantize_int(1000.0, IntFormat(8)) == 127.0
    assert quantize_int(-1000.0, IntFormat(8)) == -128.0
    assert quantize_int(0.26, IntFormat(8, 0.1)) == pytest.approx(0.3, abs=1e-15)
    assert quantize_int(2.5, IntFormat(8)) == 2.0
    assert quantize_int(3.5, IntFormat(8)) == 4.0


@given(st.integers(2, 10), st.floats(1e-3, 10), arrays(np.float64, 20, elements=st.floats(-1e3, 1e3)))
def test_int_matches_oracle(n, s, x):
    f = IntFormat(n, s)
    from fpquant.formats import enumerate_int_grid

    g = enumerate_int_grid(f).values
    q = quantize_int(x, f)
    d = np.abs(x[:, None] - g[None, :])
    best = d.min(axis=1)
    assert np.all(np.abs(x - q) <= best * (1 + 1e-12) + 1e-12)


def test_tensor_wrapping_and_per_channel():
    rng = np.random.default_rng(3)
    data = rng.standard_normal((3, 50)) * np.array([[1.0], [10.0], [100.0]])
    t = Tensor(data, channel_axis=0)
    biases = np.array([9.0, 5.5, 2.0])
    cfg = QuantizerConfig(FpFormat(4, 3, 0.0), per_channel=True, channel_params=biases)
    q = quantize_fp(t, cfg)
    assert isinstance(q, Tensor) and q.channel_axis == 0
    for i, b in enumerate(biases):
        np.testing.assert_array_equal(q.data[i], quantize_fp(data[i], FpFormat(4, 3, b)))


def test_per_channel_int_and_dispatch():
    data = np.array([[0.26, 1.0], [0.26, 1.0]])
    cfg = QuantizerConfig(IntFormat(8), per_channel=True, channel_params=[0.1, 0.5], channel_axis=0)
    q = quantize(data, cfg)
    np.testing.assert_allclose(q, [[0.3, 1.0], [0.5, 1.0]])
    assert quantize(300.0, FpFormat(3, 4, 8)) == 240.0


def test_per_channel_errors():
    cfg = QuantizerConfig(FpFormat(4, 3, 0.0), per_channel=True, channel_params=[1.0, 2.0])
    with pytest.raises(ValueError):
        quantize_fp(Tensor(np.zeros((3, 4)), channel_axis=0), cfg)
    with pytest.raises(ValueError):
        quantize_fp(np.zeros((2, 4)), cfg)
    with pytest.raises(ValueError):
        QuantizerConfig(FpFormat(4, 3, 0.0), per_channel=True)


def test_empirical_mse():
    assert empirical_mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert empirical_mse([1.0, -1.0], [0.0, 0.0]) == 1.0
    with pytest.raises(ValueError):
        empirical_mse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        empirical_mse(np.array([]), np.array([]))
