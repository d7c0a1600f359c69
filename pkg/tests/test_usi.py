import dataclasses
import warnings
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bia_sim.bcgm import SchemeParams, effective_mode_matrix
from bia_sim.channel import (
    complex_normal,
    draw_channels,
    receive,
    receiver_channel_matrix,
)
from bia_sim.combinatorics import member_position
from bia_sim.errors import DecodingError, EncodingError, ParameterError
from bia_sim.linalg import numeric_rank
from bia_sim.metrics import dof_usi
from bia_sim.simulation import simulate_usi
from bia_sim.usi import (
    ConditioningWarning,
    UsiScheme,
    block_channel,
    build_usi_scheme,
    build_usi_table,
    distributed_signal,
    effective_modes,
    effective_modes_asym,
    known_messages,
    m1_schedule,
    relabel_mapreduce_to_usi,
    tx_support,
    usi_decode,
    usi_power_profile,
    usi_transmit_all,
)


def _random_parts(scheme, seed):
    N = len(scheme.table.groups)
    return complex_normal(np.random.default_rng(seed), (N, scheme.table.G, scheme.symbols_per_message))


# ------------------------------------------------------------------- tables


@pytest.mark.parametrize("G,M,out", [(3, 2, 2), (2, 2, 1), (4, 5, 3), (5, 1, 1)])
def test_effective_modes(G, M, out):
    assert effective_modes(G, M) == out


def test_effective_modes_errors():
    with pytest.raises(ParameterError):
        effective_modes(1, 3)
    with pytest.raises(ParameterError):
        effective_modes(3, 0)
    assert effective_modes_asym(3, 5) == 3


@given(st.integers(2, 6).flatmap(lambda K: st.tuples(st.just(K), st.integers(2, K), st.integers(1, 5))))
def test_table_invariants(case):
    K, G, M = case
    t = build_usi_table(K, G, M)
    assert len(t) == G * comb(K, G)
    for m in t.messages:
        grp = t.groups.subset_at(m.n)
        assert m.desired_rx == grp[m.g - 1]
        assert m.desired_rx not in m.knowing_txs
        assert len(m.knowing_txs) == G - 1
        assert set(m.support) <= set(m.knowing_txs)
        assert len(m.support) == min(M, G - 1)
        assert m.support == tuple(sorted(m.support))


def test_tx_support_examples():
    t = build_usi_table(4, 3, 2)
    assert tx_support(1, 2, t) == (1, 3)
    assert tx_support(1, 3, t) == (1, 2)
    assert tx_support(1, 1, t) == (2, 3)


def test_support_is_whole_knowing_set_when_modes_fill_it():
    t = build_usi_table(5, 4, 3)
    assert all(m.support == m.knowing_txs for m in t.messages)


def test_message_lookup_bounds():
    t = build_usi_table(4, 3, 2)
    with pytest.raises(ParameterError):
        t.message(5, 1)
    with pytest.raises(ParameterError):
        t.message(1, 4)


def test_known_messages_of_node_one():
    t = build_usi_table(4, 3, 2)
    assert known_messages(1, t) == {(1, 2), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)}


# ----------------------------------------------------------------- relabel


def test_relabel_four_two_first_super_message():
    r = relabel_mapreduce_to_usi(4, 2)
    assert r.to_mapreduce(1, 1) == ((2, 3), 1)
    assert r.to_mapreduce(1, 2) == ((1, 3), 2)
    assert r.to_mapreduce(1, 3) == ((1, 2), 3)
    assert len(r) == 12 == (4 - 2) * comb(4, 2)


def test_relabel_smallest_case():
    r = relabel_mapreduce_to_usi(2, 1)
    assert r.forward == {((2,), 1): (1, 1), ((1,), 2): (1, 2)}


@pytest.mark.parametrize("K,r", [(3, 0), (3, 3), (1, 1)])
def test_relabel_rejects_bad_load(K, r):
    with pytest.raises(ParameterError):
        relabel_mapreduce_to_usi(K, r)


@pytest.mark.parametrize("K", range(2, 7))
def test_relabel_round_trip(K):
    for r in range(1, K):
        m = relabel_mapreduce_to_usi(K, r)
        assert len(m) == (K - r) * comb(K, r) == (r + 1) * comb(K, r + 1)
        for (holders, dest), (n, g) in m.forward.items():
            assert len(holders) == r and dest not in holders
            assert m.to_mapreduce(n, g) == (holders, dest)
            assert m.to_usi(reversed(holders), dest) == (n, g)
        assert len(set(m.forward.values())) == len(m.forward)


# ---------------------------------------------------------------- schedule


def test_single_mode_schedule_senders():
    sched = m1_schedule(4, 3)
    assert sched[0].n == 1 and sched[0].senders == (2, 3, 1)
    assert len(sched) == comb(4, 3)


@pytest.mark.parametrize("K,G", [(3, 2), (4, 2), (4, 3), (5, 4), (6, 3)])
def test_single_mode_schedule_is_knowledge_matching(K, G):
    t = build_usi_table(K, G, 1)
    for s in m1_schedule(K, G):
        assert len(set(s.senders)) == G
        for g, tx in enumerate(s.senders, start=1):
            assert tx in t.message(s.n, g).knowing_txs
    scheme = build_usi_scheme(K, G, 1)
    assert Fraction(G * len(t.groups) * scheme.symbols_per_message, scheme.n_slots) == G


def test_single_mode_schedule_needs_side_information():
    with pytest.raises(ParameterError):
        m1_schedule(4, 1)


# ---------------------------------------------------------------- encoding


def test_distributed_signal_zero_message():
    s = build_usi_scheme(4, 3, 2)
    X = distributed_signal(1, 1, np.zeros(2), s.bcgm.precoders, (2, 3), 4)
    assert X.shape == (7, 4) and not X.any()


def test_distributed_signal_layout():
    s = build_usi_scheme(4, 3, 2)
    w = np.array([1 + 1j, 2 - 1j])
    X = distributed_signal(1, 1, w, s.bcgm.precoders, (2, 3), 4)
    lam = s.bcgm.precoders.lam
    assert X[1, 1] == lam.coefficient(2, 1) * w[0]
    assert X[1, 2] == lam.coefficient(2, 1) * w[1]
    assert not X[:, [0, 3]].any()


def test_distributed_signal_dense_precoder_matches_compact():
    s = build_usi_scheme(4, 3, 2)
    pre = s.bcgm.precoders
    w = np.array([0.3j, -1.2])
    a = distributed_signal(2, 3, w, pre, (1, 2), 4)
    b = distributed_signal(2, 3, w, pre.precoder(2), (1, 2), 4)
    np.testing.assert_allclose(a, b)


def test_distributed_signal_support_mismatch():
    s = build_usi_scheme(4, 3, 2)
    with pytest.raises(ParameterError):
        distributed_signal(1, 1, np.zeros(2), s.bcgm.precoders, (2,), 4)


def test_transmit_all_tx_one_slot_one():
    s = build_usi_scheme(4, 3, 2)
    W = _random_parts(s, 1)
    X = usi_transmit_all(s, W)
    A, B, C = W[0], W[1], W[2]
    expect = (A[1, 0] + A[2, 0]) + (B[1, 0] + B[2, 0]) + (C[1, 0] + C[2, 0])
    assert X[0, 0] == pytest.approx(expect, abs=1e-12)


def test_transmit_all_single_part_equals_distributed_signal():
    s = build_usi_scheme(4, 3, 2)
    W = np.zeros((4, 3, 2), dtype=complex)
    W[2, 1] = [1.5, -0.5j]
    m = s.table.message(3, 2)
    np.testing.assert_allclose(
        usi_transmit_all(s, W), distributed_signal(3, 2, W[2, 1], s.bcgm.precoders, m.support, 4)
    )


@pytest.mark.parametrize("K,G,M", [(4, 3, 2), (4, 2, 1)])
def test_knowledge_violation_detected(K, G, M):
    s = build_usi_scheme(K, G, M)
    msgs = list(s.table.messages)
    if s.schedule is None:
        bad = msgs[0]
        msgs[0] = dataclasses.replace(bad, support=(bad.desired_rx,) + bad.support[1:])
        table = dataclasses.replace(s.table, messages=tuple(msgs))
        broken = UsiScheme(table, s.bcgm, None)
    else:
        sched = list(s.schedule)
        first = sched[0]
        dest = s.table.message(first.n, 1).desired_rx
        sched[0] = dataclasses.replace(first, senders=(dest,) + first.senders[1:])
        broken = UsiScheme(s.table, None, tuple(sched))
    with pytest.raises(EncodingError):
        usi_transmit_all(broken, _random_parts(s, 0))


def test_transmit_all_shape_check():
    s = build_usi_scheme(4, 3, 2)
    with pytest.raises(ParameterError):
        usi_transmit_all(s, np.zeros((4, 3, 3)))


@given(st.integers(3, 6).flatmap(lambda K: st.tuples(st.just(K), st.integers(2, K), st.integers(1, 4))))
def test_transmitters_only_send_known_parts(case):
    K, G, M = case
    if G >= 3 and M >= 2 and SchemeParams(K, G, min(M, G - 1)).n_slots > 5000:
        return
    s = build_usi_scheme(K, G, M)
    N = len(s.table.groups)
    for node in range(1, K + 1):
        known = known_messages(node, s.table)
        if s.schedule is not None:
            sent = {(sl.n, g) for sl in s.schedule for g, tx in enumerate(sl.senders, start=1) if tx == node}
        else:
            sent = {(m.n, m.g) for m in s.table.messages if node in m.support}
        assert sent <= known
    # numeric check: a node's column ignores every part it does not know
    W = _random_parts(s, 3)
    X = usi_transmit_all(s, W)
    for node in range(1, K + 1):
        known = known_messages(node, s.table)
        W2 = W.copy()
        for n in range(1, N + 1):
            for g in range(1, G + 1):
                if (n, g) not in known:
                    W2[n - 1, g - 1] = 0
        np.testing.assert_allclose(usi_transmit_all(s, W2)[:, node - 1], X[:, node - 1])


# ----------------------------------------------------------------- decoding


@pytest.mark.parametrize("K,G,M", [(4, 3, 2), (4, 2, 2), (4, 3, 1), (5, 4, 3), (5, 3, 4), (4, 4, 3)])
def test_noiseless_usi_recovery(K, G, M):
    rep = simulate_usi(K, G, M, seed=21)
    assert rep.max_relative_error < 1e-8
    assert rep.full_rank
    assert rep.recoveries == rep.n_messages == G * comb(K, G)


def test_group_size_one_falls_back_to_groupcast():
    rep = simulate_usi(3, 1, 3, seed=2)
    assert rep.max_relative_error < 1e-8
    assert rep.notes and rep.setting == "usi"


def test_node_one_inverts_two_by_two_on_knowing_columns():
    s = build_usi_scheme(4, 3, 2)
    m = s.table.message(1, member_position(1, 1, s.table.groups))
    assert m.support == (2, 3)
    H = complex_normal(np.random.default_rng(0), (2, 4))
    np.testing.assert_array_equal(block_channel(H, m.support), H[:, [1, 2]])


def _run_node(s, k, seed=0):
    W = _random_parts(s, seed)
    book = draw_channels(s.table.K, s.modes, s.table.K, seed=seed)
    y = receive(book, k, s.pattern(k), usi_transmit_all(s, W)).samples
    H = receiver_channel_matrix(book, k, n_modes=s.modes)
    side = {key: W[key[0] - 1, key[1] - 1] for key in known_messages(k, s.table)}
    return W, y, H, side


@pytest.mark.parametrize("M", [1, 2])
def test_missing_side_information(M):
    s = build_usi_scheme(4, 3, M)
    W, y, H, side = _run_node(s, 1)
    side.pop(min(side))
    with pytest.raises(DecodingError):
        usi_decode(s, 1, y, side, H)


def test_ill_conditioned_block_channel_warns():
    s = build_usi_scheme(4, 3, 2)
    W, y, H, side = _run_node(s, 1)
    H = H.copy()
    H[:, 2] = H[:, 1]  # Tx-2 and Tx-3 indistinguishable at node 1
    with pytest.warns(ConditioningWarning):
        usi_decode(s, 1, y, side, H)


def test_decode_without_warning_on_good_channel():
    s = build_usi_scheme(4, 3, 2)
    W, y, H, side = _run_node(s, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = usi_decode(s, 2, y, side, H)
    for n, w in out.items():
        g = member_position(n, 2, s.table.groups)
        np.testing.assert_allclose(w, W[n - 1, g - 1], atol=1e-9)


def test_decode_rejects_wrong_length():
    s = build_usi_scheme(4, 3, 2)
    W, y, H, side = _run_node(s, 1)
    with pytest.raises(ParameterError):
        usi_decode(s, 1, y[:-1], side, H)


@pytest.mark.parametrize("K,G,M", [(4, 3, 2), (5, 3, 2), (5, 4, 3), (4, 4, 3)])
def test_inter_message_alignment_footprint(K, G, M):
    s = build_usi_scheme(K, G, M)
    bc = s.bcgm
    H = complex_normal(np.random.default_rng(K * G * M), (s.modes, K))
    ell = bc.params.n_blocks
    for k in range(1, K + 1):
        for n in range(1, len(s.table.groups) + 1):
            if k in s.table.groups.subset_at(n):
                continue
            E = effective_mode_matrix(n, bc.pattern(k), bc.precoders).toarray()
            cols = [
                E @ np.kron(np.eye(ell), block_channel(H, s.table.message(n, g).support))
                for g in range(1, G + 1)
            ]
            assert numeric_rank(np.hstack(cols)) == ell


@pytest.mark.parametrize("K,G,M", [(4, 3, 2), (5, 4, 2), (5, 4, 3), (5, 3, 4), (4, 2, 3)])
def test_per_message_dof_matches_formula(K, G, M):
    s = build_usi_scheme(K, G, M)
    per = Fraction(s.symbols_per_message, s.n_slots)
    assert per * G * comb(K, G) == dof_usi(K, G, M)[0]


def test_power_profile_single_mode():
    s = build_usi_scheme(4, 2, 1)
    prof = usi_power_profile(s)
    assert prof.shape == (6, 4)
    assert np.all(prof.sum(axis=1) == 2)
    assert prof.max() == 1
