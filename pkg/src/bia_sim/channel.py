"""Rayleigh block fading with reconfigurable receive antennas.

Receiver ``k`` set to mode ``m`` sees the ``1 x A`` vector ``h_k^[m]``.
Vectors are i.i.d. CN(0, 1), constant for ``T_c`` consecutive slots and
redrawn afterwards. Noise is additive CN(0, sigma^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "ChannelBook",
    "ReceivedSignal",
    "complex_normal",
    "draw_channels",
    "receive",
    "receiver_channel_matrix",
    "power_normalize",
]

#: coherence used when none is given: longer than any scheme
LONG_COHERENCE = 10**12


def _seed_words(seed) -> list[int]:
    if seed is None:
        raise ParameterError("a seed is required for stochastic runs")
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: two independent real normals of variance 1/2."""
    scale = np.sqrt(0.5)
    return rng.normal(0.0, scale, shape) + 1j * rng.normal(0.0, scale, shape)


@dataclass(frozen=True)
class ChannelBook:
    """Channel vectors for every receiver, mode and coherence block.

    Attributes
    ----------
    coeffs : ndarray, shape (K, M, blocks, A)
        ``coeffs[k-1, m-1, q-1]`` is ``h_k^[m]`` in block ``q``.
    coherence_slots : int
        Slots per coherence block.
    seed : tuple of int
        Seed words the book (and its noise substreams) derive from.
    """

    coeffs: np.ndarray
    coherence_slots: int
    seed: tuple[int, ...]

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    @property
    def M(self) -> int:
        return self.coeffs.shape[1]

    @property
    def blocks(self) -> int:
        return self.coeffs.shape[2]

    @property
    def A(self) -> int:
        return self.coeffs.shape[3]

    def vector(self, k: int, m: int, block: int = 1) -> np.ndarray:
        return self.coeffs[k - 1, m - 1, block - 1]

    def block_of(self, slots: np.ndarray) -> np.ndarray:
        """0-based coherence block of each 1-based slot."""
        q = (np.asarray(slots) - 1) // self.coherence_slots
        if np.any(q >= self.blocks):
            raise ParameterError("transmission runs past the last coherence block")
        return q


@dataclass(frozen=True)
class ReceivedSignal:
    receiver: int
    samples: np.ndarray
    noise_variance: float
    modes: np.ndarray

    def __len__(self) -> int:
        return int(self.samples.size)


def draw_channels(K: int, M: int, A: int, blocks: int = 1, T_c: int | None = None, seed=0) -> ChannelBook:
    """Draw a reproducible channel book.

    Parameters
    ----------
    K, M, A : int
        Receivers, modes per receiver and transmit antennas.
    blocks : int
        Number of coherence blocks.
    T_c : int, optional
        Slots per block; defaults to effectively infinite.
    seed : int or sequence of int
    """
    T_c = LONG_COHERENCE if T_c is None else T_c
    if min(K, M, A, blocks, T_c) < 1:
        raise ParameterError("channel dimensions must all be >= 1")
    words = _seed_words(seed)
    rng = np.random.default_rng(words)
    coeffs = complex_normal(rng, (K, M, blocks, A))
    coeffs.setflags(write=False)
    return ChannelBook(coeffs, int(T_c), tuple(words))


def receive(
    book: ChannelBook,
    k: int,
    pattern,
    X,
    noise_variance: float = 0.0,
    call_index: int = 0,
    first_slot: int = 1,
) -> ReceivedSignal:
    """Samples at receiver ``k``: ``y(t) = h_k^[m(t)](t) x(t) + z(t)``.

    Parameters
    ----------
    pattern : SwitchingPattern or sequence of int
        Mode per slot.
    X : ndarray, shape (T, A)
        Transmit matrix.
    noise_variance : float
        ``sigma^2``; zero gives the noiseless signal.
    call_index : int
        Selects the noise substream, keyed by ``(seed, k, call_index)``.
    first_slot : int
        Absolute slot index of row 0 of ``X`` (selects the coherence block).
    """
    modes = np.asarray(getattr(pattern, "modes", pattern), dtype=np.int64)
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != modes.size or X.shape[1] != book.A:
        raise ParameterError(
            f"transmit matrix {X.shape} does not match {modes.size} slots x {book.A} antennas"
        )
    if noise_variance < 0:
        raise ParameterError("noise variance must be >= 0")
    if not 1 <= k <= book.K:
        raise ParameterError(f"receiver {k} outside 1..{book.K}")
    if modes.size and (modes.min() < 1 or modes.max() > book.M):
        raise ParameterError(f"modes must lie in 1..{book.M}")
    q = book.block_of(np.arange(first_slot, first_slot + modes.size))
    h = book.coeffs[k - 1, modes - 1, q]
    y = np.einsum("ta,ta->t", h, X)
    if noise_variance > 0:
        rng = np.random.default_rng([*book.seed, k, call_index])
        y = y + np.sqrt(noise_variance) * complex_normal(rng, y.shape)
    return ReceivedSignal(k, y, float(noise_variance), modes)


def receiver_channel_matrix(book: ChannelBook, k: int, block: int = 1, n_modes: int | None = None) -> np.ndarray:
    """Stack ``h_k^[1..n_modes]`` of one block into a ``(n_modes, A)`` matrix."""
    if not 1 <= block <= book.blocks:
        raise ParameterError(f"block {block} outside 1..{book.blocks}")
    n_modes = book.M if n_modes is None else n_modes
    return np.array(book.coeffs[k - 1, :n_modes, block - 1])


def power_normalize(X, P: float):
    """Scale a linear transmit map to meet a per-antenna power limit.

    Parameters
    ----------
    X : ndarray, shape (T, A, S) or (T, S)
        ``x_a(t) = sum_s X[t, a, s] w_s`` for unit-power symbols ``w``. A
        2-D input is a single antenna.
    P : float
        Per-antenna power limit.

    Returns
    -------
    scaled : ndarray
        ``scale * X``.
    scale : float
        ``sqrt(P / max_{t,a} sum_s |X[t,a,s]|^2)``.
    """
    if P <= 0:
        raise ParameterError("power must be positive")
    X = np.asarray(X)
    if X.ndim not in (2, 3):
        raise ParameterError("transmit map must be 2-D or 3-D")
    peak = float(np.max(np.sum(np.abs(X) ** 2, axis=-1))) if X.size else 0.0
    if peak == 0:
        return X.copy(), float(np.sqrt(P))
    scale = float(np.sqrt(P / peak))
    return scale * X, scale
