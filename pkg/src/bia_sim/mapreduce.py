"""MapReduce with a wireless shuffle carried by the side-information scheme.

``K`` nodes each store the ``C(K-1, r-1)`` files assigned to them. File
``n`` lives on the size-``r`` node set ``T_n``, and files enumerate all such
sets in order. Node ``k`` maps each stored file to ``K`` intermediate
values (IVAs), ``a_{k', n}`` for every reducer ``k'``. It then needs
``a_{k, n}`` for every file it lacks.

Only those missing IVAs travel. They are relabeled as side-information
messages and sent with the scheme of ``usi``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable

import numpy as np

from .channel import draw_channels, receive, receiver_channel_matrix
from .errors import CorrectnessError, ParameterError, ShuffleError
from .simulation import db_to_power
from .usi import (
    build_usi_scheme,
    known_messages,
    relabel_mapreduce_to_usi,
    usi_decode,
    usi_power_profile,
    usi_transmit_all,
)

__all__ = [
    "MapReduceJob",
    "LedgerEntry",
    "ShuffleLedger",
    "OracleVerdict",
    "default_map",
    "default_reduce",
    "bytes_to_symbols",
    "symbols_to_bytes",
    "build_job",
    "map_phase",
    "shuffle_phase",
    "reduce_phase",
    "oracle_check",
    "job_from_description",
    "load_job_file",
]

IVA_BYTES = 8
_QAM_SCALE = math.sqrt(170.0)  # mean energy of the 16x16 grid with odd levels


def default_map(k: int, n: int, payload: bytes) -> bytes:
    """IVA for reducer ``k`` from file ``n``: a keyed 8-byte BLAKE2b digest."""
    key = f"reducer-{k}-file-{n}".encode()
    return hashlib.blake2b(payload, key=key, digest_size=IVA_BYTES).digest()


def default_reduce(k: int, ivas: list[bytes]) -> bytes:
    """Reduce output of node ``k``: SHA-256 over its IVAs in file order."""
    h = hashlib.sha256(f"node-{k}".encode())
    for a in ivas:
        h.update(a)
    return h.digest()


def bytes_to_symbols(data: bytes) -> np.ndarray:
    """One unit-average-power 256-QAM symbol per byte (high nibble = real)."""
    b = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int64)
    return ((2 * (b >> 4) - 15) + 1j * (2 * (b & 15) - 15)) / _QAM_SCALE


def symbols_to_bytes(symbols) -> bytes:
    """Nearest-point inverse of :func:`bytes_to_symbols`."""
    s = np.asarray(symbols) * _QAM_SCALE
    hi = np.clip(np.rint((s.real + 15) / 2), 0, 15).astype(np.uint8)
    lo = np.clip(np.rint((s.imag + 15) / 2), 0, 15).astype(np.uint8)
    return ((hi << 4) | lo).tobytes()


@dataclass(frozen=True)
class MapReduceJob:
    """Files, their placement and the map/reduce functions.

    Attributes
    ----------
    K : int
        Nodes, also the number of reduce functions.
    r : int
        Computation load: copies of each file.
    files : tuple of bytes
        Payload of files ``1..C(K, r)``.
    placement : tuple of tuple of int
        ``placement[n-1]`` is the node set storing file ``n``.
    map_fn : callable ``(k, n, payload) -> bytes``
    reduce_fn : callable ``(k, ivas) -> bytes``
    """

    K: int
    r: int
    files: tuple[bytes, ...]
    placement: tuple[tuple[int, ...], ...]
    map_fn: Callable = field(default=default_map, repr=False)
    reduce_fn: Callable = field(default=default_reduce, repr=False)

    @property
    def n_files(self) -> int:
        return len(self.files)

    def files_at(self, node: int) -> tuple[int, ...]:
        return tuple(n for n, T in enumerate(self.placement, start=1) if node in T)

    def file_of(self, holders) -> int:
        return self.placement.index(tuple(sorted(holders))) + 1


def build_job(K: int, r: int, payloads, map_fn=None, reduce_fn=None) -> MapReduceJob:
    """Place ``C(K, r)`` files on every size-``r`` node set, in order."""
    if K < 1 or not 1 <= r <= K:
        raise ParameterError(f"need 1 <= r <= K, got K={K}, r={r}")
    payloads = tuple(bytes(p) for p in payloads)
    if len(payloads) != comb(K, r):
        raise ParameterError(f"need {comb(K, r)} payloads, got {len(payloads)}")
    placement = tuple(combinations(range(1, K + 1), r))
    return MapReduceJob(K, r, payloads, placement, map_fn or default_map, reduce_fn or default_reduce)


def map_phase(job: MapReduceJob) -> dict[int, dict[tuple[int, int], bytes]]:
    """IVAs computed at each node, keyed ``(reducer, file)``.

    Node ``k`` computes ``a_{k', n}`` for every reducer ``k'`` and stored
    file ``n``.
    """
    out = {}
    for node in range(1, job.K + 1):
        local = {}
        for n in job.files_at(node):
            for k in range(1, job.K + 1):
                local[(k, n)] = bytes(job.map_fn(k, n, job.files[n - 1]))
        out[node] = local
    return out


@dataclass(frozen=True)
class LedgerEntry:
    """One effective IVA: reducer ``node`` needs file ``file`` held by ``holders``."""

    node: int
    file: int
    holders: tuple[int, ...]
    usi_label: tuple[int, int]
    delivered: bool
    symbol_error: float


@dataclass(frozen=True)
class ShuffleLedger:
    """What the shuffle sent, to whom, and how well it arrived.

    Attributes
    ----------
    redundant : tuple of (node, file)
        IVAs already at their reducer.
    effective : tuple of LedgerEntry
    delivered : dict
        ``node -> {file: bytes}`` as decoded at the node.
    rounds : int
        Scheme repetitions needed to carry every IVA byte.
    slots : int
        Channel uses spent.
    """

    K: int
    r: int
    M: int
    modes: int
    redundant: tuple[tuple[int, int], ...]
    effective: tuple[LedgerEntry, ...]
    delivered: dict = field(repr=False)
    rounds: int
    slots: int
    symbols_per_round: int
    max_symbol_error: float
    snr_db: float | None = None

    def to_record(self) -> dict:
        return {
            "record": "ledger",
            "K": self.K,
            "r": self.r,
            "M": self.M,
            "modes": self.modes,
            "snr_db": self.snr_db,
            "redundant": [list(x) for x in self.redundant],
            "effective": [
                {
                    "node": e.node,
                    "file": e.file,
                    "holders": list(e.holders),
                    "usi_label": list(e.usi_label),
                    "delivered": e.delivered,
                    "symbol_error": e.symbol_error,
                }
                for e in self.effective
            ],
            "rounds": self.rounds,
            "slots": self.slots,
            "symbols_per_round": self.symbols_per_round,
            "max_symbol_error": self.max_symbol_error,
        }


def _iva_length(ivas) -> int:
    lengths = {len(a) for local in ivas.values() for a in local.values()}
    if len(lengths) > 1:
        raise ParameterError(f"IVAs must share one length, got {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def shuffle_phase(
    job: MapReduceJob,
    ivas: dict,
    M: int,
    seed: int = 0,
    snr_db: float | None = None,
) -> ShuffleLedger:
    """Deliver every missing IVA over the simulated channel.

    Each effective IVA becomes side-information part ``(n, g)``, coded as
    256-QAM symbols and split over as many scheme rounds as its length
    needs. Round ``q`` uses coherence block ``q``. The side information a
    node subtracts is taken from its own map output.

    Raises
    ------
    ShuffleError
        If a decoded symbol lands farther than half the constellation
        spacing from what was sent.
    """
    K, r = job.K, job.r
    redundant = tuple(sorted((k, n) for n in range(1, job.n_files + 1) for k in job.placement[n - 1]))
    if r == K:
        return ShuffleLedger(K, r, M, 0, redundant, (), {k: {} for k in range(1, K + 1)}, 0, 0, 0, 0.0, snr_db)
    relabel = relabel_mapreduce_to_usi(K, r)
    scheme = build_usi_scheme(K, r + 1, M)
    table = scheme.table
    N, G, L = len(table.groups), table.G, scheme.symbols_per_message
    size = _iva_length(ivas)
    rounds = -(-size // L)
    # symbols of every part, from the map output of a node that holds it
    parts = np.zeros((N, G, rounds * L), dtype=complex)
    for (holders, dest), (n, g) in relabel.forward.items():
        f = job.file_of(holders)
        parts[n - 1, g - 1, :size] = bytes_to_symbols(ivas[holders[0]][(dest, f)])
    book = draw_channels(K, M, K, blocks=max(rounds, 1), T_c=scheme.n_slots, seed=[seed, 2])
    scale, noise = 1.0, 0.0
    if snr_db is not None:
        scale = math.sqrt(db_to_power(snr_db) / usi_power_profile(scheme).max())
        noise = 1.0
    est = np.zeros_like(parts)
    for q in range(rounds):
        chunk = parts[:, :, q * L : (q + 1) * L]
        X = scale * usi_transmit_all(scheme, chunk)
        for k in range(1, K + 1):
            # side information from node k's own map output
            side = {}
            for n, g in known_messages(k, table):
                holders, dest = relabel.to_mapreduce(n, g)
                local = bytes_to_symbols(ivas[k][(dest, job.file_of(holders))])
                padded = np.zeros(rounds * L, dtype=complex)
                padded[:size] = local
                side[(n, g)] = scale * padded[q * L : (q + 1) * L]
            y = receive(book, k, scheme.pattern(k), X, noise, call_index=q, first_slot=q * scheme.n_slots + 1)
            H = receiver_channel_matrix(book, k, block=q + 1, n_modes=scheme.modes)
            for n, sym in usi_decode(scheme, k, y.samples, side, H).items():
                g = table.groups.subset_at(n).index(k) + 1
                est[n - 1, g - 1, q * L : (q + 1) * L] = np.asarray(sym).reshape(-1) / scale
    delivered = {k: {} for k in range(1, K + 1)}
    entries = []
    half_gap = 1.0 / _QAM_SCALE
    worst = 0.0
    for (holders, dest), (n, g) in sorted(relabel.forward.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        f = job.file_of(holders)
        err = float(np.max(np.abs(est[n - 1, g - 1, :size] - parts[n - 1, g - 1, :size]), initial=0.0))
        worst = max(worst, err)
        delivered[dest][f] = symbols_to_bytes(est[n - 1, g - 1, :size])
        entries.append(LedgerEntry(dest, f, holders, (n, g), err < half_gap, err))
    entries.sort(key=lambda e: (e.node, e.file))
    ledger = ShuffleLedger(
        K, r, M, scheme.modes, redundant, tuple(entries), delivered,
        rounds, rounds * scheme.n_slots, L, worst, snr_db,
    )
    if worst >= half_gap:
        bad = [(e.node, e.file) for e in entries if not e.delivered]
        raise ShuffleError(
            f"{len(bad)} IVAs decoded beyond the constellation decision radius",
            {"failed": bad, "max_symbol_error": worst, "ledger": ledger},
        )
    return ledger


def _collect(job: MapReduceJob, ivas: dict, ledger: ShuffleLedger, k: int) -> list[bytes]:
    out = []
    for n in range(1, job.n_files + 1):
        if k in job.placement[n - 1]:
            out.append(ivas[k][(k, n)])
        else:
            out.append(ledger.delivered[k][n])
    return out


def reduce_phase(job: MapReduceJob, ivas: dict, ledger: ShuffleLedger) -> dict[int, bytes]:
    """Reduce output at each node from local and delivered IVAs."""
    return {k: job.reduce_fn(k, _collect(job, ivas, ledger, k)) for k in range(1, job.K + 1)}


@dataclass(frozen=True)
class OracleVerdict:
    """Comparison against a centralized run.

    ``mismatches`` lists ``(node, file)`` pairs whose IVA differs; a file of
    ``None`` means only the reduce output differs.
    """

    passed: bool
    mismatches: tuple[tuple[int, int | None], ...]

    def raise_for_failure(self) -> None:
        if not self.passed:
            raise CorrectnessError(f"oracle mismatch at (node, IVA) {list(self.mismatches)}")

    @property
    def failing_nodes(self) -> tuple[int, ...]:
        return tuple(sorted({node for node, _ in self.mismatches}))


def oracle_check(job: MapReduceJob, ivas: dict, ledger: ShuffleLedger) -> OracleVerdict:
    """Recompute every reduce output centrally and compare bit for bit."""
    bad = []
    for k in range(1, job.K + 1):
        truth = [job.map_fn(k, n, job.files[n - 1]) for n in range(1, job.n_files + 1)]
        got = _collect(job, ivas, ledger, k)
        wrong = [n for n, (a, b) in enumerate(zip(truth, got), start=1) if a != b]
        bad.extend((k, n) for n in wrong)
        if not wrong and job.reduce_fn(k, truth) != job.reduce_fn(k, got):
            bad.append((k, None))
    return OracleVerdict(not bad, tuple(bad))


# ------------------------------------------------------------ job files


def job_from_description(desc: dict) -> tuple[MapReduceJob, dict]:
    """Build a job from a parsed description.

    Keys: ``K``, ``r``, and either ``payloads`` (list of hex strings) or
    ``payload_seed`` with optional ``payload_bytes`` (default 32). Other keys
    (``M``, ``snr_db``, ``trials``, ``seed``) are returned as run settings.
    """
    try:
        K, r = int(desc["K"]), int(desc["r"])
    except KeyError as exc:
        raise ParameterError(f"job description lacks {exc.args[0]!r}") from None
    if "payloads" in desc:
        try:
            payloads = [bytes.fromhex(p) for p in desc["payloads"]]
        except (TypeError, ValueError):
            raise ParameterError("payloads must be a list of hex strings") from None
    else:
        rng = np.random.default_rng([int(desc.get("payload_seed", 0))])
        size = int(desc.get("payload_bytes", 32))
        payloads = [rng.integers(0, 256, size, dtype=np.uint8).tobytes() for _ in range(comb(K, r))]
    settings = {k: desc[k] for k in ("M", "snr_db", "trials", "seed") if k in desc}
    return build_job(K, r, payloads), settings


def load_job_file(path) -> tuple[MapReduceJob, dict]:
    with open(path, encoding="utf-8") as fh:
        return job_from_description(json.load(fh))
