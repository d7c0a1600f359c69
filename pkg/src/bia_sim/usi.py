"""Unicast with side information, run over distributed transmitters.

Each group ``S_n`` owns a super-message of ``G`` parts. Part ``W_{n,g}`` is
wanted by node ``S_n(g)`` and known to the other ``G-1`` members of
``S_n``. Every node transmits from one antenna and receives on a
reconfigurable antenna.

With ``M' = min(M, G-1)`` modes, the ``M'`` transmit antennas of the
groupcast scheme are split over the first ``M'`` nodes that know each
part. The parts of one super-message then superpose over the air, and a
node outside ``S_n`` sees them as a single interference footprint. With
``M' = 1`` a one-slot-per-group schedule reaches sum-DoF ``G``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .bcgm import BcgmScheme, PrecoderSet, build_scheme, mode_observations
from .combinatorics import (
    GroupTable,
    desired_indices,
    member_position,
    mod1,
    ordered_subsets,
)
from .errors import DecodingError, EncodingError, ParameterError

__all__ = [
    "ConditioningWarning",
    "UsiMessage",
    "UsiMessageTable",
    "RelabelMap",
    "M1Slot",
    "UsiScheme",
    "CONDITION_LIMIT",
    "effective_modes",
    "effective_modes_asym",
    "build_usi_table",
    "relabel_mapreduce_to_usi",
    "tx_support",
    "known_messages",
    "distributed_signal",
    "usi_transmit_all",
    "usi_decode",
    "m1_schedule",
    "build_usi_scheme",
    "block_channel",
    "usi_power_profile",
]

#: condition number above which a block-channel inversion warns
CONDITION_LIMIT = 1e8


class ConditioningWarning(RuntimeWarning):
    """A per-block channel matrix is close to singular."""


def effective_modes(G: int, M: int) -> int:
    """Modes actually used by the side-information scheme, ``min(G-1, M)``."""
    if G < 2:
        raise ParameterError("side-information mode count needs G >= 2")
    if M < 1:
        raise ParameterError("M must be >= 1")
    return min(G - 1, M)


def effective_modes_asym(M_tx: int, M_rx: int) -> int:
    """Modes usable with ``M_tx`` transmit antennas and ``M_rx`` receive modes."""
    if min(M_tx, M_rx) < 1:
        raise ParameterError("antenna counts must be >= 1")
    return min(M_tx, M_rx)


@dataclass(frozen=True)
class UsiMessage:
    """One part ``W_{n,g}`` with its destination and transmitters."""

    n: int
    g: int
    desired_rx: int
    knowing_txs: tuple[int, ...]
    support: tuple[int, ...]


@dataclass(frozen=True)
class UsiMessageTable:
    """All ``G * N_g`` message parts, ordered by ``(n, g)``.

    Attributes
    ----------
    K, G : int
    M : int
        Requested mode count.
    modes : int
        Modes actually used, ``min(M, G-1)``.
    groups : GroupTable
    messages : tuple of UsiMessage
    """

    K: int
    G: int
    M: int
    modes: int
    groups: GroupTable
    messages: tuple[UsiMessage, ...]

    def message(self, n: int, g: int) -> UsiMessage:
        if not (1 <= n <= len(self.groups) and 1 <= g <= self.G):
            raise ParameterError(f"no message ({n}, {g})")
        return self.messages[(n - 1) * self.G + (g - 1)]

    def __len__(self) -> int:
        return len(self.messages)


def build_usi_table(K: int, G: int, M: int) -> UsiMessageTable:
    """Destinations, knowing nodes and transmit supports of every part."""
    groups = ordered_subsets(K, G)
    modes = effective_modes(G, M)
    msgs = []
    for n, grp in enumerate(groups.groups, start=1):
        for g, dest in enumerate(grp, start=1):
            knowing = tuple(x for x in grp if x != dest)
            msgs.append(UsiMessage(n, g, dest, knowing, knowing[:modes]))
    return UsiMessageTable(K, G, M, modes, groups, tuple(msgs))


def tx_support(n: int, g: int, table: UsiMessageTable) -> tuple[int, ...]:
    """Nodes that emulate the transmit antennas for part ``(n, g)``."""
    return table.message(n, g).support


def known_messages(node: int, table: UsiMessageTable) -> frozenset:
    """Parts ``(n, g)`` available at ``node`` as side information."""
    return frozenset((m.n, m.g) for m in table.messages if node in m.knowing_txs)


@dataclass(frozen=True)
class RelabelMap:
    """Bijection between shuffle messages and side-information messages.

    ``forward[(holders, dest)] = (n, g)``. ``holders`` is the size-``r`` set
    of nodes that computed the value and ``dest`` is the node that needs it.
    ``backward`` is the inverse.
    """

    K: int
    r: int
    forward: dict = field(repr=False)
    backward: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.forward)

    def to_usi(self, holders, dest: int) -> tuple[int, int]:
        return self.forward[(tuple(sorted(holders)), dest)]

    def to_mapreduce(self, n: int, g: int) -> tuple[tuple[int, ...], int]:
        return self.backward[(n, g)]


def relabel_mapreduce_to_usi(K: int, r: int) -> RelabelMap:
    """Map shuffle messages to parts of a ``(K, G=r+1)`` side-information setting.

    Part ``(n, g)`` is the value computed by ``S_n`` minus ``S_n(g)`` and
    needed by ``S_n(g)``.
    """
    if not 1 <= r <= K - 1:
        raise ParameterError(f"need 1 <= r <= K-1, got K={K}, r={r}")
    groups = ordered_subsets(K, r + 1)
    fwd, bwd = {}, {}
    for n, grp in enumerate(groups.groups, start=1):
        for g, dest in enumerate(grp, start=1):
            holders = tuple(x for x in grp if x != dest)
            fwd[(holders, dest)] = (n, g)
            bwd[(n, g)] = (holders, dest)
    expected = (K - r) * len(list(combinations(range(K), r)))
    assert len(fwd) == expected == len(bwd)
    return RelabelMap(K, r, fwd, bwd)


# ------------------------------------------------------------ M' = 1 path


@dataclass(frozen=True)
class M1Slot:
    """One slot of the single-mode schedule: group ``n`` and its senders.

    ``senders[g-1]`` transmits part ``(n, g)``.
    """

    n: int
    senders: tuple[int, ...]


def m1_schedule(K: int, G: int) -> tuple[M1Slot, ...]:
    """One slot per group, sending all of its ``G`` parts at once.

    Part ``g`` goes out from member ``S_n(mod1(g+1, G))``, which is a
    cyclic matching of parts to members that know them. Each sender
    carries one part, so every member of ``S_n`` can cancel the ``G-1``
    parts it knows. Every other node sees one combined interference term
    in that slot.
    """
    if G < 2:
        raise ParameterError("single-mode side-information schedule needs G >= 2")
    groups = ordered_subsets(K, G)
    return tuple(
        M1Slot(n, tuple(grp[mod1(g + 1, G) - 1] for g in range(1, G + 1)))
        for n, grp in enumerate(groups.groups, start=1)
    )


# ----------------------------------------------------------- scheme bundle


@dataclass(frozen=True)
class UsiScheme:
    """Message table plus either a groupcast scheme or the single-mode schedule."""

    table: UsiMessageTable
    bcgm: BcgmScheme | None
    schedule: tuple[M1Slot, ...] | None

    @property
    def modes(self) -> int:
        return self.table.modes

    @property
    def n_slots(self) -> int:
        return self.bcgm.params.n_slots if self.bcgm else len(self.schedule)

    @property
    def symbols_per_message(self) -> int:
        return self.bcgm.params.n_streams if self.bcgm else 1

    def pattern(self, k: int):
        if self.bcgm:
            return self.bcgm.pattern(k)
        return np.ones(len(self.schedule), dtype=np.int64)


def build_usi_scheme(K: int, G: int, M: int) -> UsiScheme:
    table = build_usi_table(K, G, M)
    if table.modes == 1:
        return UsiScheme(table, None, m1_schedule(K, G))
    return UsiScheme(table, build_scheme(K, G, table.modes), None)


# ------------------------------------------------------------- transmit


def _streams(n: int, symbols, precoder, modes: int) -> np.ndarray:
    w = np.asarray(symbols, dtype=complex).reshape(-1)
    if isinstance(precoder, PrecoderSet):
        p = precoder.params
        if w.size != p.n_streams:
            raise ParameterError(f"part needs {p.n_streams} symbols, got {w.size}")
        blk = precoder.slot_blocks(n)
        out = np.zeros((p.n_slots, p.M), dtype=complex)
        rows = np.nonzero(blk)[0]
        out[rows] = precoder.slot_coefs(n)[rows, None] * w.reshape(p.n_blocks, p.M)[blk[rows] - 1]
        return out
    V = np.asarray(precoder)
    return (V @ w).reshape(-1, modes)


def distributed_signal(n: int, g: int, symbols, precoder, support, K: int) -> np.ndarray:
    """Transmit matrix ``(T_p, K)`` of one part, spread over its support.

    Column ``support[i]`` carries antenna stream ``i`` of the groupcast
    precoder applied to the part's symbols. Other columns are zero.

    Parameters
    ----------
    precoder : PrecoderSet or ndarray
        Either the compact precoders or the dense ``V_n`` of message ``n``.
    """
    support = tuple(support)
    modes = precoder.params.M if isinstance(precoder, PrecoderSet) else None
    if modes is None:
        modes = len(support)
        if np.asarray(precoder).shape[0] % max(modes, 1):
            raise ParameterError("dense precoder rows are not a multiple of the support size")
    if len(support) != modes:
        raise ParameterError(f"support has {len(support)} nodes, scheme uses {modes} antennas")
    streams = _streams(n, symbols, precoder, modes)
    X = np.zeros((streams.shape[0], K), dtype=complex)
    for i, tx in enumerate(support):
        X[:, tx - 1] += streams[:, i]
    return X


def _check_knowledge(table: UsiMessageTable, routing) -> None:
    for (n, g), txs in routing:
        msg = table.message(n, g)
        for tx in txs:
            if tx not in msg.knowing_txs:
                raise EncodingError(f"node {tx} would transmit part ({n}, {g}) it does not know")


def usi_transmit_all(scheme: UsiScheme, messages) -> np.ndarray:
    """Sum of every part's distributed signal, ``(T, K)``.

    ``messages`` has shape ``(N_g, G, symbols_per_message)``. Before
    anything is sent, the function checks that every node transmits only
    parts it knows.

    Raises
    ------
    EncodingError
        If a part would be routed through a node that does not know it.
    """
    table = scheme.table
    N = len(table.groups)
    W = np.asarray(messages, dtype=complex)
    shape = (N, table.G, scheme.symbols_per_message)
    if W.shape != shape:
        raise ParameterError(f"messages have shape {W.shape}, need {shape}")
    if scheme.schedule is not None:
        _check_knowledge(
            table,
            [((s.n, g), (tx,)) for s in scheme.schedule for g, tx in enumerate(s.senders, start=1)],
        )
        X = np.zeros((len(scheme.schedule), table.K), dtype=complex)
        for slot, s in enumerate(scheme.schedule):
            for g, tx in enumerate(s.senders, start=1):
                X[slot, tx - 1] += W[s.n - 1, g - 1, 0]
        return X
    _check_knowledge(table, [((m.n, m.g), m.support) for m in table.messages])
    pre = scheme.bcgm.precoders
    X = np.zeros((pre.params.n_slots, table.K), dtype=complex)
    for m in table.messages:
        X += distributed_signal(m.n, m.g, W[m.n - 1, m.g - 1], pre, m.support, table.K)
    return X


# --------------------------------------------------------------- decode


def block_channel(H_modes: np.ndarray, support) -> np.ndarray:
    """Rows = modes, columns = the supporting nodes of one part."""
    return H_modes[:, [tx - 1 for tx in support]]


def _solve(H, rhs, where: str):
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        warnings.warn(f"ill-conditioned block channel at {where} (cond={cond:.3g})", ConditioningWarning, stacklevel=3)
    return np.linalg.solve(H, rhs)


def usi_decode(scheme: UsiScheme, k: int, y, side_info: dict, H_modes: np.ndarray) -> dict:
    """Recover the parts wanted by node ``k``.

    Parameters
    ----------
    scheme : UsiScheme
    k : int
        Receiving node.
    y : ndarray
        Received samples over the whole schedule.
    side_info : dict
        ``(n, g) -> symbols`` for the parts ``k`` knows. Every sibling of a
        wanted part must be present.
    H_modes : ndarray, shape (modes, K)
        Channel of node ``k``, one row per mode used.

    Returns
    -------
    dict
        ``n -> symbols`` of part ``(n, g)`` with ``S_n(g) = k``.

    Raises
    ------
    DecodingError
        If side information for a sibling part is missing.
    """
    table = scheme.table
    G = table.G
    desired = desired_indices(k, table.groups)
    y = np.asarray(y)
    if y.shape != (scheme.n_slots,):
        raise ParameterError(f"received {y.shape}, need ({scheme.n_slots},)")

    def sibling(n, g):
        try:
            return np.asarray(side_info[(n, g)], dtype=complex).reshape(-1)
        except KeyError:
            raise DecodingError(f"node {k} lacks side information for part ({n}, {g})") from None

    out = {}
    if scheme.schedule is not None:
        for n in desired:
            s = scheme.schedule[n - 1]
            own = member_position(n, k, table.groups)
            rest = y[n - 1]
            for g, tx in enumerate(s.senders, start=1):
                if g != own:
                    rest -= H_modes[0, tx - 1] * sibling(n, g)[0]
            gain = H_modes[0, s.senders[own - 1] - 1]
            out[n] = _solve(np.array([[gain]]), np.array([rest]), f"node {k}, group {n}")
        return out
    bc = scheme.bcgm
    obs = mode_observations(y, bc.pattern(k), bc.precoders, desired)
    M, ell = bc.params.M, bc.params.n_blocks
    for n in desired:
        own = member_position(n, k, table.groups)
        rhs = obs[n].T.copy()  # (modes, blocks)
        for g in range(1, G + 1):
            if g == own:
                continue
            Hg = block_channel(H_modes, table.message(n, g).support)
            rhs -= Hg @ sibling(n, g).reshape(ell, M).T
        Hown = block_channel(H_modes, table.message(n, own).support)
        out[n] = _solve(Hown, rhs, f"node {k}, group {n}").T.reshape(-1)
    return out


def usi_power_profile(scheme: UsiScheme) -> np.ndarray:
    """Per-slot, per-node transmit power for unit-power part symbols, ``(T, K)``."""
    table = scheme.table
    out = np.zeros((scheme.n_slots, table.K))
    if scheme.schedule is not None:
        for slot, s in enumerate(scheme.schedule):
            for tx in s.senders:
                out[slot, tx - 1] += 1.0
        return out
    pre = scheme.bcgm.precoders
    for m in table.messages:
        power = np.abs(pre.slot_coefs(m.n)) ** 2
        for tx in m.support:
            out[:, tx - 1] += power
    return out
