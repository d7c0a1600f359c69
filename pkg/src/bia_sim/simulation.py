"""End-to-end runs: random symbols, random channels, decode, compare."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bcgm import bcgm_decode, build_scheme, rank_diagnostics, transmit_signal
from .channel import complex_normal, draw_channels, receive, receiver_channel_matrix
from .combinatorics import desired_indices, member_position
from .errors import ParameterError
from .usi import (
    build_usi_scheme,
    known_messages,
    usi_decode,
    usi_power_profile,
    usi_transmit_all,
)

__all__ = ["DecodingReport", "simulate_bcgm", "simulate_usi", "db_to_power"]

#: block channels with a larger condition number count as rank deficient
CHANNEL_CONDITION_LIMIT = 1e8


def db_to_power(snr_db: float) -> float:
    return float(10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class DecodingReport:
    """Outcome of one end-to-end run.

    Attributes
    ----------
    setting : str
        ``"bcgm"`` or ``"usi"``.
    modes : int
        Modes the scheme actually used after clipping.
    n_slots : int
        Slots in one scheme run.
    symbols_per_message : int
        Symbols each message carries per run.
    n_messages : int
        Distinct messages delivered.
    max_relative_error : float
        Worst ``|w_hat - w| / |w|`` over every recovery.
    receiver_errors : dict
        Worst relative error per receiver.
    full_rank : bool
        All rank conditions and channel inversions held.
    """

    setting: str
    K: int
    G: int
    M: int
    modes: int
    seed: int
    snr_db: float | None
    n_slots: int
    symbols_per_message: int
    n_messages: int
    recoveries: int
    max_relative_error: float
    receiver_errors: dict = field(default_factory=dict)
    full_rank: bool = True
    notes: tuple[str, ...] = ()

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["receiver_errors"] = {str(k): v for k, v in self.receiver_errors.items()}
        rec["notes"] = list(self.notes)
        return rec


def _rel(est, ref) -> float:
    return float(np.linalg.norm(est - ref) / max(np.linalg.norm(ref), 1e-300))


def simulate_bcgm(
    K: int,
    G: int,
    M: int,
    seed: int,
    snr_db: float | None = None,
    M_tx: int | None = None,
    M_rx: int | None = None,
    diagnostics: bool = True,
) -> DecodingReport:
    """Run the groupcast scheme once and decode at every receiver.

    ``M_tx`` / ``M_rx`` default to ``M``. The scheme uses
    ``min(M_tx, M_rx)`` antennas and modes. Noiseless when ``snr_db`` is
    None. Otherwise the per-antenna power is ``10^(snr_db/10)`` with unit
    noise.
    """
    M_tx = M if M_tx is None else M_tx
    M_rx = M if M_rx is None else M_rx
    modes = min(M_tx, M_rx)
    scheme = build_scheme(K, G, modes)
    p = scheme.params
    rng = np.random.default_rng([seed, 0])
    W = complex_normal(rng, (p.n_groups, p.n_streams))
    book = draw_channels(K, M_rx, M_tx, seed=[seed, 1])
    scale, noise = 1.0, 0.0
    if snr_db is not None:
        scale = float(np.sqrt(db_to_power(snr_db) / scheme.precoders.power_profile().max()))
        noise = 1.0
    X = np.zeros((p.n_slots, M_tx), dtype=complex)
    X[:, :modes] = scale * transmit_signal(W, scheme.precoders)
    full_rank = True
    errs, worst, count = {}, 0.0, 0
    for k in range(1, K + 1):
        y = receive(book, k, scheme.pattern(k), X, noise, call_index=0).samples
        H = receiver_channel_matrix(book, k)[:modes, :modes]
        if np.linalg.cond(H) > CHANNEL_CONDITION_LIMIT:
            full_rank = False
        if diagnostics and not rank_diagnostics(scheme, k).ok:
            full_rank = False
        est = bcgm_decode(k, y, scheme.pattern(k), scheme.precoders, H, scheme.table)
        e = max(_rel(v / scale, W[n - 1]) for n, v in est.items())
        errs[k] = e
        worst = max(worst, e)
        count += len(est)
    return DecodingReport(
        "bcgm", K, G, M, modes, seed, snr_db, p.n_slots, p.n_streams, p.n_groups,
        count, worst, errs, full_rank,
    )


def simulate_usi(
    K: int,
    G: int,
    M: int,
    seed: int,
    snr_db: float | None = None,
    diagnostics: bool = True,
) -> DecodingReport:
    """Run the side-information scheme once and decode every part.

    ``G = 1`` has no side information; it runs the groupcast scheme.
    """
    if G == 1:
        rep = simulate_bcgm(K, G, M, seed, snr_db, diagnostics=diagnostics)
        return replace(rep, setting="usi", notes=("no side information: groupcast scheme",))
    scheme = build_usi_scheme(K, G, M)
    table = scheme.table
    N = len(table.groups)
    L = scheme.symbols_per_message
    rng = np.random.default_rng([seed, 0])
    W = complex_normal(rng, (N, G, L))
    book = draw_channels(K, M, K, seed=[seed, 1])
    scale, noise = 1.0, 0.0
    if snr_db is not None:
        scale = float(np.sqrt(db_to_power(snr_db) / usi_power_profile(scheme).max()))
        noise = 1.0
    X = scale * usi_transmit_all(scheme, W)
    full_rank = True
    notes = []
    if diagnostics and scheme.bcgm is not None:
        full_rank = all(rank_diagnostics(scheme.bcgm, k).ok for k in range(1, K + 1))
    if scheme.schedule is not None:
        notes.append("single-mode schedule")
    errs, worst, count = {}, 0.0, 0
    for k in range(1, K + 1):
        y = receive(book, k, scheme.pattern(k), X, noise, call_index=0).samples
        H = receiver_channel_matrix(book, k, n_modes=scheme.modes)
        side = {key: scale * W[key[0] - 1, key[1] - 1] for key in known_messages(k, table)}
        for n in desired_indices(k, table.groups):
            own = table.message(n, member_position(n, k, table.groups))
            Hown = H[:, [tx - 1 for tx in own.support]] if scheme.bcgm else H[:1, [scheme.schedule[n - 1].senders[own.g - 1] - 1]]
            if np.linalg.cond(Hown) > CHANNEL_CONDITION_LIMIT:
                full_rank = False
        est = usi_decode(scheme, k, y, side, H)
        e = 0.0
        for n, v in est.items():
            g = member_position(n, k, table.groups)
            e = max(e, _rel(np.asarray(v).reshape(-1) / scale, W[n - 1, g - 1]))
        errs[k] = e
        worst = max(worst, e)
        count += len(est)
    if count != N * G:
        raise ParameterError("not every part has exactly one destination")
    return DecodingReport(
        "usi", K, G, M, scheme.modes, seed, snr_db, scheme.n_slots, L, N * G,
        count, worst, errs, full_rank, tuple(notes),
    )
