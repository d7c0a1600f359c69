import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from bia_sim.bcgm import build_scheme, transmit_signal
from bia_sim.channel import (
    complex_normal,
    draw_channels,
    power_normalize,
    receive,
    receiver_channel_matrix,
)
from bia_sim.errors import ParameterError


def test_same_seed_same_book():
    a = draw_channels(4, 3, 2, blocks=2, seed=11)
    b = draw_channels(4, 3, 2, blocks=2, seed=11)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, draw_channels(4, 3, 2, blocks=2, seed=12).coeffs)


def test_seed_sequence_accepted():
    a = draw_channels(2, 2, 2, seed=[3, 1])
    assert a.seed == (3, 1)


def test_seed_required():
    with pytest.raises(ParameterError):
        draw_channels(2, 2, 2, seed=None)


def test_book_is_read_only():
    with pytest.raises(ValueError):
        draw_channels(2, 2, 2, seed=0).coeffs[0, 0, 0, 0] = 1


def test_unit_variance_zero_mean():
    h = draw_channels(10, 10, 10, blocks=100, seed=2024).coeffs.ravel()
    assert h.size == 10**5
    assert 0.98 <= np.mean(np.abs(h) ** 2) <= 1.02
    assert abs(h.mean()) < 0.01
    assert abs(np.mean(h.real**2) - 0.5) < 0.01


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, 0, 1), (1, 1, 0)])
def test_dimensions_must_be_positive(bad):
    with pytest.raises(ParameterError):
        draw_channels(*bad, seed=0)


def test_long_coherence_is_single_block():
    book = draw_channels(2, 2, 2, seed=0)
    assert book.blocks == 1
    assert np.all(book.block_of(np.arange(1, 10**6, 997)) == 0)


def test_block_boundaries():
    book = draw_channels(1, 1, 1, blocks=3, T_c=4, seed=0)
    assert book.block_of(np.arange(1, 13)).tolist() == [0] * 4 + [1] * 4 + [2] * 4
    with pytest.raises(ParameterError):
        book.block_of(np.array([13]))


def test_receive_zero_input_is_zero():
    book = draw_channels(2, 2, 3, seed=1)
    y = receive(book, 1, [1, 2, 1], np.zeros((3, 3))).samples
    assert np.all(y == 0)


def test_receive_reads_selected_mode():
    book = draw_channels(2, 3, 1, seed=1)
    X = np.zeros((3, 1))
    X[1, 0] = 1
    y = receive(book, 2, [1, 3, 2], X).samples
    assert y.tolist() == [0, book.vector(2, 3)[0], 0]


def test_receive_golden_slot_two():
    s = build_scheme(4, 3, 2)
    rng = np.random.default_rng(0)
    W = complex_normal(rng, (4, 2))
    book = draw_channels(4, 2, 2, seed=9)
    y = receive(book, 1, s.pattern(1), transmit_signal(W, s.precoders)).samples
    h = book.vector(1, 1)
    lam2 = [1, 2, 3, 4]
    assert y[1] == pytest.approx(sum(c * (h @ W[n]) for n, c in enumerate(lam2)), abs=1e-12)


def test_receive_uses_block_of_each_slot():
    book = draw_channels(1, 1, 1, blocks=2, T_c=2, seed=4)
    y = receive(book, 1, [1, 1], np.ones((2, 1)), first_slot=2).samples
    assert y.tolist() == [book.vector(1, 1, 1)[0], book.vector(1, 1, 2)[0]]


def test_receive_shape_errors():
    book = draw_channels(2, 2, 2, seed=0)
    with pytest.raises(ParameterError):
        receive(book, 1, [1, 2], np.zeros((3, 2)))
    with pytest.raises(ParameterError):
        receive(book, 1, [1, 2], np.zeros((2, 3)))
    with pytest.raises(ParameterError):
        receive(book, 3, [1, 2], np.zeros((2, 2)))
    with pytest.raises(ParameterError):
        receive(book, 1, [1, 3], np.zeros((2, 2)))
    with pytest.raises(ParameterError):
        receive(book, 1, [1, 2], np.zeros((2, 2)), noise_variance=-1)


def test_noise_substreams_reproducible_and_distinct():
    book = draw_channels(2, 1, 1, seed=5)
    X = np.zeros((2000, 1))
    pat = np.ones(2000, dtype=int)
    a = receive(book, 1, pat, X, 2.0, call_index=0).samples
    b = receive(book, 1, pat, X, 2.0, call_index=0).samples
    c = receive(book, 1, pat, X, 2.0, call_index=1).samples
    d = receive(book, 2, pat, X, 2.0, call_index=0).samples
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)
    assert 1.8 < np.mean(np.abs(a) ** 2) < 2.2


@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10), st.complex_numbers(max_magnitude=10))
def test_noiseless_receive_is_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    book = draw_channels(2, 3, 2, seed=seed)
    pat = rng.integers(1, 4, 6)
    X1, X2 = complex_normal(rng, (6, 2)), complex_normal(rng, (6, 2))
    lhs = receive(book, 2, pat, alpha * X1 + beta * X2).samples
    rhs = alpha * receive(book, 2, pat, X1).samples + beta * receive(book, 2, pat, X2).samples
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


def test_channel_matrix_rows_match_book():
    book = draw_channels(3, 4, 4, blocks=2, seed=8)
    H = receiver_channel_matrix(book, 2, block=2)
    for m in range(1, 5):
        np.testing.assert_array_equal(H[m - 1], book.vector(2, m, 2))
    np.testing.assert_array_equal(receiver_channel_matrix(book, 2, block=2, n_modes=2), H[:2])
    with pytest.raises(ParameterError):
        receiver_channel_matrix(book, 1, block=3)


@pytest.mark.parametrize("M", [2, 3, 4])
def test_channel_matrix_invertible_almost_surely(M):
    good = sum(
        np.linalg.cond(receiver_channel_matrix(draw_channels(1, M, M, seed=[M, s]), 1)) < 1e8
        for s in range(1000)
    )
    assert good >= 999


def test_streams_exchangeable():
    # one sample per seed from two different (receiver, mode) streams
    a = np.array([draw_channels(3, 2, 1, seed=s).vector(1, 1)[0] for s in range(10**4)])
    b = np.array([draw_channels(3, 2, 1, seed=s).vector(3, 2)[0] for s in range(10**4)])
    for x, y in ((a.real, b.real), (a.imag, b.imag), (np.abs(a), np.abs(b))):
        assert stats.ks_2samp(x, y).statistic < 0.02
    assert stats.kstest(a.real, "norm", args=(0, np.sqrt(0.5))).statistic < 0.02
    assert stats.kstest(np.abs(b) ** 2, "expon").statistic < 0.02


def test_power_normalize_identity_precoder():
    X, s = power_normalize(np.eye(3), 4.0)
    assert s == pytest.approx(2.0)
    np.testing.assert_allclose(X, 2 * np.eye(3))


def test_power_normalize_scheme_worst_slot():
    s = build_scheme(4, 3, 2)
    p = s.params
    # linear map slot x antenna x (message, stream)
    X = np.concatenate(
        [s.precoders.precoder(n).reshape(p.n_slots, p.M, p.n_streams) for n in range(1, 5)], axis=2
    )
    scaled, scale = power_normalize(X, 1.0)
    # third alignment round superposes coefficients 1, 4, 9, 16
    assert scale == pytest.approx(1 / np.sqrt(1 + 16 + 81 + 256))
    assert np.max(np.sum(np.abs(scaled) ** 2, axis=-1)) == pytest.approx(1.0)


def test_power_normalize_scaling_law():
    X = np.array([[1.0, 2.0], [0.5, 0.0]])
    _, a = power_normalize(X, 1.0)
    _, b = power_normalize(X, 2.0)
    assert b == pytest.approx(np.sqrt(2) * a)


def test_power_normalize_errors_and_zero():
    with pytest.raises(ParameterError):
        power_normalize(np.eye(2), 0)
    with pytest.raises(ParameterError):
        power_normalize(np.ones(3), 1)
    X, s = power_normalize(np.zeros((2, 2)), 9.0)
    assert s == 3.0 and not X.any()
