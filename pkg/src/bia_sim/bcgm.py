"""Blind interference alignment for broadcast with groupcast messages.

One ``M``-antenna transmitter serves ``K`` single-antenna receivers, each
with a reconfigurable antenna that switches among ``M`` channel modes.
Every size-``G`` receiver group ``S_n`` shares one message ``W_n``.

A scheme runs in two phases:

* the alignment phase repeats ``(M-1)*ell`` slots ``nu`` times. Round ``v``
  superposes every message weighted by ``lam[v, n]``. Each message is
  split into ``ell`` blocks of ``M`` symbols and block ``f_n(t)`` is sent
  in slot ``t``;
* the resolution phase sends each block of each message alone, once.

Receivers follow a switching pattern built so that every unwanted block
always hits the same mode and so occupies a single dimension. Slots,
messages, blocks, modes and receivers are 1-based in the public API.
Arrays are 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
import scipy.sparse as sp

from .combinatorics import GroupTable, desired_indices, ordered_subsets
from .errors import AlignmentViolation, ParameterError, SizeError
from .linalg import (
    DEFAULT_TOL,
    MdsMatrix,
    monomial_rank,
    numeric_rank,
    solve_decoder,
    vandermonde_mds,
)

__all__ = [
    "MAX_SLOTS",
    "DENSE_SLOT_LIMIT",
    "SVD_SLOT_LIMIT",
    "SchemeParams",
    "SchemeDimensions",
    "SwitchingPattern",
    "AlignmentVerdict",
    "PrecoderSet",
    "BcgmScheme",
    "RankReport",
    "block_index",
    "block_indices",
    "selection_matrix",
    "alignment_precoder",
    "resolution_precoder",
    "full_precoder",
    "build_precoders",
    "switching_pattern_first_phase",
    "verify_alignment",
    "switching_pattern_full",
    "effective_mode_matrix",
    "decoder_matrices",
    "structured_decoders",
    "scheme_dimensions",
    "build_scheme",
    "transmit_signal",
    "mode_observations",
    "bcgm_decode",
    "rank_diagnostics",
]

#: construction refuses schemes longer than this many slots
MAX_SLOTS = 10**6
#: above this many slots dense SVD / least-squares paths are refused
DENSE_SLOT_LIMIT = 4096
#: longest scheme whose union rank is taken by dense SVD
SVD_SLOT_LIMIT = 1024


@dataclass(frozen=True)
class SchemeParams:
    """Scheme parameters and the sizes derived from them.

    Attributes
    ----------
    K : int
        Number of receivers.
    G : int
        Receivers per group, ``1 <= G <= K``.
    M : int
        Transmit antennas, equal to the receive-antenna mode count.
    """

    K: int
    G: int
    M: int

    def __post_init__(self):
        for name in ("K", "G", "M"):
            if not isinstance(getattr(self, name), (int, np.integer)):
                raise ParameterError(f"{name} must be an integer")
        if self.K < 1 or not 1 <= self.G <= self.K:
            raise ParameterError(f"need 1 <= G <= K, got K={self.K}, G={self.G}")
        if self.M < 1:
            raise ParameterError(f"need M >= 1, got M={self.M}")

    @property
    def n_groups(self) -> int:
        """``N_g``: number of messages (one per group)."""
        return comb(self.K, self.G)

    @property
    def groups_per_node(self) -> int:
        """``nu``: messages desired by each receiver, also the round count."""
        return comb(self.K - 1, self.G - 1)

    @property
    def n_blocks(self) -> int:
        """``ell``: blocks per message. ``M = 1`` uses a single block."""
        if self.M == 1:
            return 1
        return (self.M - 1) ** (self.n_groups - 1)

    @property
    def n_streams(self) -> int:
        """``L``: symbols per message per scheme run."""
        return self.M * self.n_blocks

    @property
    def round_len(self) -> int:
        """Slots in one alignment round, ``(M-1)*ell``."""
        return (self.M - 1) * self.n_blocks

    @property
    def n_slots(self) -> int:
        """``T_p``: total scheme duration."""
        return self.groups_per_node * self.round_len + self.n_groups * self.n_blocks

    def check_size(self, limit: int = MAX_SLOTS) -> None:
        if self.n_slots > limit:
            raise SizeError(
                f"(K={self.K}, G={self.G}, M={self.M}) needs {self.n_slots} slots, "
                f"above the limit of {limit}"
            )


@dataclass(frozen=True)
class SchemeDimensions:
    n_blocks: int
    n_streams: int
    n_slots: int
    dof_message: Fraction
    dof_sum: Fraction


def scheme_dimensions(params: SchemeParams) -> SchemeDimensions:
    """Block count, stream count, duration and per-message / sum DoF.

    ``M = 1`` reduces to one slot per message (``T_p = N_g``).
    """
    d_msg = Fraction(params.n_streams, params.n_slots)
    return SchemeDimensions(
        params.n_blocks,
        params.n_streams,
        params.n_slots,
        d_msg,
        d_msg * params.n_groups,
    )


# ---------------------------------------------------------------- precoders


def _need_multimode(params: SchemeParams) -> None:
    if params.M < 2:
        raise ParameterError("alignment phase only exists for M >= 2")


def block_indices(n: int, params: SchemeParams) -> np.ndarray:
    """Block index ``f_n(t)`` for every alignment slot ``t``, as an array."""
    _need_multimode(params)
    if not 1 <= n <= params.n_groups:
        raise ParameterError(f"message {n} outside 1..{params.n_groups}")
    base = params.M - 1
    t0 = np.arange(params.round_len, dtype=np.int64)
    outer = base**n
    inner = base ** (n - 1)
    return (t0 // outer) * inner + t0 % inner + 1


def block_index(n: int, t: int, params: SchemeParams) -> int:
    """Which block of message ``n`` is sent in alignment slot ``t``.

    ``f_n(t) = floor((t-1)/(M-1)^n) (M-1)^(n-1) + mod1(t, (M-1)^(n-1))``.
    """
    _need_multimode(params)
    if not 1 <= t <= params.round_len:
        raise ParameterError(f"slot {t} outside 1..{params.round_len}")
    if not 1 <= n <= params.n_groups:
        raise ParameterError(f"message {n} outside 1..{params.n_groups}")
    base = params.M - 1
    return (t - 1) // base**n * base ** (n - 1) + (t - 1) % base ** (n - 1) + 1


def selection_matrix(n: int, params: SchemeParams) -> np.ndarray:
    """Row selector whose row ``t`` is the ``f_n(t)``-th unit row of ``I_ell``."""
    f = block_indices(n, params)
    out = np.zeros((params.round_len, params.n_blocks))
    out[np.arange(f.size), f - 1] = 1.0
    return out


def alignment_precoder(n: int, params: SchemeParams) -> np.ndarray:
    """One alignment round for message ``n``: ``kron(selection, I_M)``."""
    return np.kron(selection_matrix(n, params), np.eye(params.M))


def resolution_precoder(n: int, params: SchemeParams) -> np.ndarray:
    """Resolution phase placement of message ``n``'s blocks."""
    N, ell = params.n_groups, params.n_blocks
    place = np.zeros((N * ell, ell))
    place[(n - 1) * ell : n * ell] = np.eye(ell)
    return np.kron(place, np.eye(params.M))


def _check_lam(lam: MdsMatrix, params: SchemeParams) -> None:
    shape = (params.groups_per_node, params.n_groups)
    if lam.base.shape != shape:
        raise ParameterError(f"coefficient matrix has shape {lam.base.shape}, need {shape}")
    if not np.allclose(lam.base[0], 1.0):
        raise ParameterError("coefficient matrix must have an all-ones first row")


def full_precoder(n: int, lam: MdsMatrix, params: SchemeParams) -> np.ndarray:
    """Stacked precoder of message ``n``, shape ``(T_p*M, L)``.

    Rounds ``1..nu`` carry ``lam[v, n]`` times the alignment precoder. The
    resolution precoder follows.
    """
    _need_multimode(params)
    _check_lam(lam, params)
    T = alignment_precoder(n, params)
    rounds = [lam.coefficient(v, n) * T for v in range(1, params.groups_per_node + 1)]
    return np.vstack(rounds + [resolution_precoder(n, params)])


@dataclass(frozen=True)
class PrecoderSet:
    """Compact description of every message's precoder.

    The coefficient grid ``alpha[n, t, l]`` has at most one nonzero per
    slot and message, so it is stored as a block index per slot plus that
    block's coefficient.

    Attributes
    ----------
    params : SchemeParams
    lam : MdsMatrix
        Round coefficients, shape ``(nu, N_g)``.
    blocks : ndarray, shape (N_g, (M-1)*ell)
        ``f_n(t)`` for every message and alignment slot.
    """

    params: SchemeParams
    lam: MdsMatrix
    blocks: np.ndarray

    def slot_blocks(self, n: int) -> np.ndarray:
        """Block of message ``n`` sent in each of the ``T_p`` slots (0 = none)."""
        p = self.params
        ell = p.n_blocks
        out = np.zeros(p.n_slots, dtype=np.int64)
        P1 = p.round_len
        out[: p.groups_per_node * P1] = np.tile(self.blocks[n - 1], p.groups_per_node)
        start = p.groups_per_node * P1 + (n - 1) * ell
        out[start : start + ell] = np.arange(1, ell + 1)
        return out

    def slot_coefs(self, n: int) -> np.ndarray:
        """Coefficient applied to message ``n`` in each slot (0 when silent)."""
        p = self.params
        ell = p.n_blocks
        P1 = p.round_len
        out = np.zeros(p.n_slots, dtype=complex)
        out[: p.groups_per_node * P1] = np.repeat(self.lam.base[:, n - 1], P1)
        start = p.groups_per_node * P1 + (n - 1) * ell
        out[start : start + ell] = 1.0
        return out

    def alpha(self, n: int) -> np.ndarray:
        """Dense ``(T_p, ell)`` coefficient grid of message ``n``."""
        blk, coef = self.slot_blocks(n), self.slot_coefs(n)
        out = np.zeros((self.params.n_slots, self.params.n_blocks), dtype=complex)
        rows = np.nonzero(blk)[0]
        out[rows, blk[rows] - 1] = coef[rows]
        return out

    def precoder(self, n: int) -> np.ndarray:
        """Dense ``(T_p*M, L)`` precoder; equals ``full_precoder`` for ``M >= 2``."""
        return np.kron(self.alpha(n), np.eye(self.params.M))

    def power_profile(self) -> np.ndarray:
        """Sum over messages of ``|alpha|^2`` per slot (same on every antenna)."""
        return sum(np.abs(self.slot_coefs(n)) ** 2 for n in range(1, self.params.n_groups + 1))


def build_precoders(params: SchemeParams, lam: MdsMatrix | None = None) -> PrecoderSet:
    """Assemble the precoders; ``lam`` defaults to the Vandermonde matrix."""
    params.check_size()
    if lam is None:
        lam = vandermonde_mds(params.groups_per_node, params.n_groups)
    _check_lam(lam, params)
    if params.M >= 2:
        blocks = np.vstack([block_indices(n, params) for n in range(1, params.n_groups + 1)])
    else:
        blocks = np.zeros((params.n_groups, 0), dtype=np.int64)
    blocks.setflags(write=False)
    return PrecoderSet(params, lam, blocks)


# ---------------------------------------------------------- switching patterns


@dataclass(frozen=True)
class AlignmentVerdict:
    """Outcome of the intra-message alignment check.

    On failure ``message``, ``h``, ``i`` and ``j`` locate the first bad slot
    ``t = h (M-1)^n + i (M-1)^(n-1) + j``. Here ``h`` and ``i`` are 0-based
    and ``j`` is 1-based.
    """

    passed: bool
    message: int | None = None
    h: int | None = None
    i: int | None = None
    j: int | None = None
    slot: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.passed


def switching_pattern_first_phase(desired, params: SchemeParams) -> np.ndarray:
    """Alignment-round mode sequence ``p_k`` of a receiver.

    Starts from ``1..M-1`` if message 1 is desired, otherwise all ones. For
    each following message ``n``, the current prefix of length
    ``(M-1)^(n-1)`` is extended ``M-2`` times. Each extension is cyclically
    shifted by ``i`` when ``n`` is desired and copied unchanged otherwise.

    Parameters
    ----------
    desired : iterable of int
        Messages the receiver wants (1-based).
    params : SchemeParams

    Returns
    -------
    ndarray of int, length ``(M-1)*ell``, values in ``1..M-1``.
    """
    desired = set(desired)
    if params.M == 1:
        return np.zeros(0, dtype=np.int64)
    params.check_size()
    base = params.M - 1
    p = np.empty(params.round_len, dtype=np.int64)
    p[:base] = np.arange(1, base + 1) if 1 in desired else 1
    for n in range(2, params.n_groups + 1):
        width = base ** (n - 1)
        head = p[:width]
        for i in range(1, base):
            seg = (head - 1 + i) % base + 1 if n in desired else head
            p[i * width : (i + 1) * width] = seg
    return p


def verify_alignment(pattern, desired, params: SchemeParams) -> AlignmentVerdict:
    """Check the alignment condition on a first-phase pattern.

    For every message ``n`` the slots ``t(h, i, j)`` with fixed ``h, j``
    must see one constant mode when ``n`` is unwanted. When ``n`` is
    wanted they must walk through the modes cyclically,
    ``p(t(h,i,j)) = mod1(p(t(h,0,j)) + i, M-1)``.

    Messages are examined from the last to the first. The reported
    violation therefore sits at the coarsest level that is broken.
    """
    p = np.asarray(pattern, dtype=np.int64)
    if params.M == 1:
        if p.size:
            raise ParameterError("M = 1 has no alignment phase")
        return AlignmentVerdict(True)
    if p.shape != (params.round_len,):
        raise ParameterError(f"pattern length {p.size}, need {params.round_len}")
    base = params.M - 1
    bad = np.nonzero((p < 1) | (p > base))[0]
    if bad.size:
        t = int(bad[0]) + 1
        return AlignmentVerdict(False, slot=t, reason=f"mode {p[t - 1]} at slot {t} outside 1..{base}")
    desired = set(desired)
    for n in range(params.n_groups, 0, -1):
        width = base ** (n - 1)
        cube = p.reshape(-1, base, width)  # (h, i, j)
        ref = cube[:, :1, :]
        if n in desired:
            expect = (ref - 1 + np.arange(base)[None, :, None]) % base + 1
        else:
            expect = np.broadcast_to(ref, cube.shape)
        wrong = (cube != expect).transpose(0, 2, 1)  # order h, j, i
        if wrong.any():
            h, j0, i = np.unravel_index(int(np.argmax(wrong)), wrong.shape)
            t = h * base**n + i * width + j0 + 1
            kind = "shift" if n in desired else "repeat"
            return AlignmentVerdict(
                False,
                message=n,
                h=int(h),
                i=int(i),
                j=int(j0) + 1,
                slot=int(t),
                reason=f"{kind} rule broken for message {n}",
            )
    return AlignmentVerdict(True)


@dataclass(frozen=True)
class SwitchingPattern:
    """Mode sequence of one receiver over the whole scheme.

    Attributes
    ----------
    receiver : int
    modes : ndarray of int, length T_p
        Mode used in each slot, in ``1..M``.
    first_phase : ndarray of int
        Alignment-round pattern ``p_k`` (repeated ``nu`` times in ``modes``).
    interference_modes : ndarray of int, shape (N_g, ell)
        Mode on which block ``l`` of unwanted message ``n`` is seen; 0 for
        wanted messages.
    desired : tuple of int
        Messages this pattern was built for.
    """

    receiver: int
    modes: np.ndarray
    first_phase: np.ndarray
    interference_modes: np.ndarray
    desired: tuple[int, ...] = field(default=())

    def interference_mode(self, n: int, l: int) -> int:
        m = int(self.interference_modes[n - 1, l - 1])
        if m == 0:
            raise ParameterError(f"message {n} is desired by receiver {self.receiver}")
        return m

    def __len__(self) -> int:
        return int(self.modes.size)


def switching_pattern_full(
    k: int, params: SchemeParams, table: GroupTable | None = None
) -> SwitchingPattern:
    """Full ``T_p``-slot pattern of receiver ``k``.

    The alignment phase repeats ``p_k`` once per round. In the resolution
    phase a wanted block is received on mode ``M``. An unwanted block is
    received on the mode where it was seen during alignment, so it stays
    in the dimension it already occupies.

    Raises
    ------
    AlignmentViolation
        If an unwanted block is not seen on a single mode (cannot happen for
        patterns produced by ``switching_pattern_first_phase``).
    """
    params.check_size()
    table = table or ordered_subsets(params.K, params.G)
    desired = desired_indices(k, table)
    N, ell = params.n_groups, params.n_blocks
    if params.M == 1:
        modes = np.ones(N, dtype=np.int64)
        inter = np.array([[0 if n in desired else 1] for n in range(1, N + 1)], dtype=np.int64)
        return SwitchingPattern(k, modes, np.zeros(0, dtype=np.int64), inter, desired)
    p = switching_pattern_first_phase(desired, params)
    base = params.M - 1
    inter = np.zeros((N, ell), dtype=np.int64)
    tail = np.full((N, ell), params.M, dtype=np.int64)
    for n in range(1, N + 1):
        if n in desired:
            continue
        cube = p.reshape(-1, base, base ** (n - 1))
        if np.any(cube != cube[:, :1, :]):
            raise AlignmentViolation(
                f"message {n} is not confined to one mode at receiver {k}",
                {"message": n},
            )
        inter[n - 1] = cube[:, 0, :].reshape(-1)
        tail[n - 1] = inter[n - 1]
    modes = np.concatenate([np.tile(p, params.groups_per_node), tail.reshape(-1)])
    for arr in (modes, p, inter):
        arr.setflags(write=False)
    return SwitchingPattern(k, modes, p, inter, desired)


# ------------------------------------------------------- effective channels


def effective_mode_matrix(n: int, pattern: SwitchingPattern, precoders: PrecoderSet) -> sp.csr_array:
    """Sparse ``(T_p, M*ell)`` matrix mapping message ``n``'s mode-domain
    symbols to received samples.

    Row ``t`` holds ``alpha[n, t, l]`` at column ``(l-1)*M + m(t) - 1``.
    Multiplying by ``kron(I_ell, H_k)`` then gives the received samples.
    """
    p = precoders.params
    if len(pattern) != p.n_slots:
        raise ParameterError(f"pattern has {len(pattern)} slots, scheme needs {p.n_slots}")
    blk = precoders.slot_blocks(n)
    coef = precoders.slot_coefs(n)
    rows = np.nonzero(blk)[0]
    cols = (blk[rows] - 1) * p.M + pattern.modes[rows] - 1
    return sp.csr_array((coef[rows], (rows, cols)), shape=(p.n_slots, p.n_streams))


def decoder_matrices(
    k: int,
    pattern: SwitchingPattern,
    precoders: PrecoderSet,
    table: GroupTable | None = None,
    tol: float = DEFAULT_TOL,
) -> dict[int, np.ndarray]:
    """Least-squares zero-forcing decoders ``D_{k,n}`` for every wanted ``n``.

    Dense route; refuses schemes longer than ``DENSE_SLOT_LIMIT`` slots
    (use ``structured_decoders`` there).

    Raises
    ------
    AlignmentViolation
        If the pattern does not separate a wanted message from the rest.
    """
    p = precoders.params
    if p.n_slots > DENSE_SLOT_LIMIT:
        raise SizeError(f"{p.n_slots} slots is too long for the dense decoder route")
    table = table or ordered_subsets(p.K, p.G)
    family = [effective_mode_matrix(n, pattern, precoders).toarray() for n in range(1, p.n_groups + 1)]
    return {n: solve_decoder(family, n, tol) for n in desired_indices(k, table)}


def _round_inverse(precoders: PrecoderSet, desired) -> np.ndarray:
    cols = [n - 1 for n in desired]
    return np.linalg.inv(precoders.lam.base[:, cols])


def structured_decoders(
    k: int,
    pattern: SwitchingPattern,
    precoders: PrecoderSet,
    table: GroupTable | None = None,
) -> dict[int, sp.csr_array]:
    """Sparse decoders built from the scheme structure, for any size.

    For a wanted message ``n`` the decoder does three things. It removes
    each unwanted block using its resolution-phase sample, combines the
    rounds with the inverse of the wanted columns of ``lam``, and reads
    mode ``M`` of each block from the resolution phase.

    Raises
    ------
    AlignmentViolation
        If the pattern does not show the ``M-1`` alignment modes of every
        wanted block exactly once.
    """
    p = precoders.params
    table = table or ordered_subsets(p.K, p.G)
    desired = desired_indices(k, table)
    N, ell, M, nu, P1 = p.n_groups, p.n_blocks, p.M, p.groups_per_node, p.round_len
    res0 = nu * P1
    lam = precoders.lam.base
    inv = _round_inverse(precoders, desired)
    undesired = [n for n in range(1, N + 1) if n not in desired]
    first = np.asarray(pattern.modes[:P1])
    t = np.arange(P1)
    out = {}
    for pos, n in enumerate(desired):
        weights = inv[pos]  # over rounds
        cols = (precoders.blocks[n - 1] - 1) * M + first - 1 if P1 else np.zeros(0, dtype=np.int64)
        if P1 and (np.unique(cols).size != P1 or np.any(first == M)):
            raise AlignmentViolation(
                f"alignment slots do not cover the modes of message {n} at receiver {k}",
                {"message": n, "distinct_columns": int(np.unique(cols).size), "expected": P1},
            )
        rows_l, cols_l, vals_l = [], [], []
        for v in range(nu):
            rows_l.append(v * P1 + t)
            cols_l.append(cols)
            vals_l.append(np.full(P1, weights[v]))
        for u in undesired:
            beta = -weights @ lam[:, u - 1]
            rows_l.append(res0 + (u - 1) * ell + precoders.blocks[u - 1] - 1)
            cols_l.append(cols)
            vals_l.append(np.full(P1, beta))
        blocks = np.arange(ell)
        rows_l.append(res0 + (n - 1) * ell + blocks)
        cols_l.append(blocks * M + M - 1)
        vals_l.append(np.ones(ell, dtype=complex))
        D = sp.coo_array(
            (np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
            shape=(p.n_slots, p.n_streams),
        ).tocsr()
        D.sum_duplicates()
        out[n] = D
    return out


# ------------------------------------------------------- encode and decode


def transmit_signal(symbols, precoders: PrecoderSet) -> np.ndarray:
    """Transmit matrix ``(T_p, M)`` for message symbols ``(N_g, L)``.

    Symbol ``(l-1)*M + a`` of message ``n`` is antenna ``a``'s share of
    block ``l``.
    """
    p = precoders.params
    W = np.asarray(symbols, dtype=complex)
    if W.shape != (p.n_groups, p.n_streams):
        raise ParameterError(f"symbols have shape {W.shape}, need {(p.n_groups, p.n_streams)}")
    X = np.zeros((p.n_slots, p.M), dtype=complex)
    for n in range(1, p.n_groups + 1):
        blk = precoders.slot_blocks(n)
        rows = np.nonzero(blk)[0]
        X[rows] += precoders.slot_coefs(n)[rows, None] * W[n - 1].reshape(p.n_blocks, p.M)[blk[rows] - 1]
    return X


def mode_observations(
    y, pattern: SwitchingPattern, precoders: PrecoderSet, desired
) -> dict[int, np.ndarray]:
    """Separate wanted messages into per-block, per-mode observations.

    Returns, for each wanted ``n``, an ``(ell, M)`` array whose entry
    ``(l, m)`` is the mode-``m`` channel applied to block ``l`` of ``W_n``.
    Two steps produce it:

    1. unwanted blocks are read off the resolution phase and removed from
       every alignment round;
    2. the rounds are combined with the inverse of ``lam`` restricted to
       the wanted columns.
    """
    p = precoders.params
    y = np.asarray(y)
    if y.shape != (p.n_slots,):
        raise ParameterError(f"received {y.shape}, need ({p.n_slots},)")
    desired = tuple(desired)
    N, ell, M, nu, P1 = p.n_groups, p.n_blocks, p.M, p.groups_per_node, p.round_len
    res0 = nu * P1
    lam = precoders.lam.base
    rounds = y[:res0].reshape(nu, P1).astype(complex)
    resolution = y[res0:].reshape(N, ell)
    # stage 1: interference removal
    for u in range(1, N + 1):
        if u in desired:
            continue
        seen = resolution[u - 1][precoders.blocks[u - 1] - 1] if P1 else np.zeros(0)
        rounds -= lam[:, u - 1][:, None] * seen[None, :]
    # stage 2: invert the round coefficients
    combos = _round_inverse(precoders, desired) @ rounds if P1 else np.zeros((len(desired), 0))
    first = np.asarray(pattern.modes[:P1])
    out = {}
    for pos, n in enumerate(desired):
        obs = np.full((ell, M), np.nan + 0j)
        if P1:
            obs[precoders.blocks[n - 1] - 1, first - 1] = combos[pos]
        obs[:, M - 1] = resolution[n - 1]
        out[n] = obs
    return out


def bcgm_decode(
    k: int,
    y,
    pattern: SwitchingPattern,
    precoders: PrecoderSet,
    H: np.ndarray,
    table: GroupTable | None = None,
) -> dict[int, np.ndarray]:
    """Recover every wanted message at receiver ``k``.

    ``H`` is the ``(M, M)`` mode-by-antenna channel of receiver ``k``. The
    third decoding step solves ``H w = obs`` for each block.
    """
    p = precoders.params
    table = table or ordered_subsets(p.K, p.G)
    desired = desired_indices(k, table)
    obs = mode_observations(y, pattern, precoders, desired)
    return {n: np.linalg.solve(H, o.T).T.reshape(-1) for n, o in obs.items()}


# ------------------------------------------------------------- assembly


@dataclass(frozen=True)
class BcgmScheme:
    """Everything needed to run one scheme: groups, precoders, patterns."""

    params: SchemeParams
    table: GroupTable
    precoders: PrecoderSet
    patterns: tuple[SwitchingPattern, ...]

    def pattern(self, k: int) -> SwitchingPattern:
        return self.patterns[k - 1]

    def desired(self, k: int) -> tuple[int, ...]:
        return self.patterns[k - 1].desired


def build_scheme(K: int, G: int, M: int, lam: MdsMatrix | None = None) -> BcgmScheme:
    params = SchemeParams(K, G, M)
    params.check_size()
    table = ordered_subsets(K, G)
    precoders = build_precoders(params, lam)
    patterns = tuple(switching_pattern_full(k, params, table) for k in range(1, K + 1))
    return BcgmScheme(params, table, precoders, patterns)


# ---------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class RankReport:
    """Rank and decoder diagnostics of one receiver.

    ``union_method`` is ``"svd"`` when the union rank came from a dense SVD.
    It is ``"certificate"`` when it came from checking that the structured
    decoders invert a ``T_p x T_p`` basis of the union.
    """

    receiver: int
    ranks: dict
    expected: dict
    rank_sum: int
    union_rank: int
    union_method: str
    decoder_residual: float
    certificate_residual: float

    @property
    def ok(self) -> bool:
        return self.ranks == self.expected and self.union_rank == self.rank_sum


def _max_abs(A) -> float:
    A = A.tocsr() if hasattr(A, "tocsr") else A
    data = A.data if hasattr(A, "data") and sp.issparse(A) else np.asarray(A).ravel()
    return float(np.max(np.abs(data))) if data.size else 0.0


def rank_diagnostics(
    scheme: BcgmScheme, k: int, tol: float = DEFAULT_TOL, dense_limit: int = SVD_SLOT_LIMIT
) -> RankReport:
    """Ranks of the effective matrices at receiver ``k`` and decoder residuals."""
    p, pre = scheme.params, scheme.precoders
    pattern = scheme.pattern(k)
    desired = pattern.desired
    N, ell, L = p.n_groups, p.n_blocks, p.n_streams
    E = {n: effective_mode_matrix(n, pattern, pre) for n in range(1, N + 1)}
    ranks = {n: monomial_rank(E[n], tol) for n in E}
    expected = {n: (L if n in desired else ell) for n in E}
    D = structured_decoders(k, pattern, pre, scheme.table)
    resid = 0.0
    for n, Dn in D.items():
        for u, Eu in E.items():
            prod = (Dn.T @ Eu).tocsr()
            if u == n:
                prod = prod - sp.eye_array(L, format="csr")
            resid = max(resid, _max_abs(prod))
    # basis of the union: wanted E in full, unwanted E restricted to its occupied columns
    basis, inverse_rows = [], []
    res0 = p.groups_per_node * p.round_len
    for n in range(1, N + 1):
        if n in desired:
            basis.append(E[n])
            inverse_rows.append(D[n].T)
        else:
            cols = np.arange(ell) * p.M + pattern.interference_modes[n - 1] - 1
            basis.append(E[n][:, cols])
            sel = sp.csr_array(
                (np.ones(ell), (np.arange(ell), res0 + (n - 1) * ell + np.arange(ell))),
                shape=(ell, p.n_slots),
            )
            inverse_rows.append(sel)
    B = sp.hstack(basis, format="csr")
    X = sp.vstack(inverse_rows, format="csr")
    cert = _max_abs((X @ B).tocsr() - sp.eye_array(p.n_slots, format="csr"))
    if p.n_slots <= dense_limit:
        union = numeric_rank(sp.hstack(list(E.values())).toarray(), tol)
        method = "svd"
    else:
        # X B = I on a square basis certifies full rank
        union = p.n_slots if B.shape[1] == p.n_slots and cert < 1e-8 else -1
        method = "certificate"
    return RankReport(k, ranks, expected, sum(ranks.values()), union, method, resid, cert)
