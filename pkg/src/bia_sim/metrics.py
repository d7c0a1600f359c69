"""Closed-form DoF values, dimension counting and rate-vs-SNR slopes.

All DoF values are exact ``Fraction`` objects.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .bcgm import build_scheme, structured_decoders
from .channel import complex_normal, draw_channels, receiver_channel_matrix
from .combinatorics import member_position
from .errors import InvalidRunError, ParameterError
from .simulation import DecodingReport, db_to_power
from .usi import block_channel, build_usi_scheme, usi_power_profile

__all__ = [
    "DofReport",
    "RateSetting",
    "RateCurve",
    "dof_bcgm",
    "dof_bcgm_asym",
    "dof_usi",
    "dof_mapreduce",
    "dof_report",
    "dimension_count",
    "estimate_rate_curve",
    "rate_curve_csv",
]

#: two-sided 95% normal quantile for confidence half-widths
Z95 = 1.959963984540054


def _check(K: int, G: int, M: int) -> None:
    if K < 1 or not 1 <= G <= K or M < 1:
        raise ParameterError(f"invalid parameters K={K}, G={G}, M={M}")


def _groupcast(K: int, G: int, M: int) -> Fraction:
    N, nu = comb(K, G), comb(K - 1, G - 1)
    return Fraction(N * M, (M - 1) * nu + N)


def dof_bcgm(K: int, G: int, M: int) -> Fraction:
    """Sum-DoF ``N_g M / ((M-1) nu + N_g)`` of the groupcast broadcast."""
    _check(K, G, M)
    return _groupcast(K, G, M)


def dof_bcgm_asym(K: int, G: int, M_tx: int, M_rx: int) -> Fraction:
    """Groupcast sum-DoF with ``M`` replaced by ``min(M_tx, M_rx)``."""
    return dof_bcgm(K, G, min(M_tx, M_rx))


def dof_usi(K: int, G: int, M: int) -> tuple[Fraction, Fraction]:
    """Achievable and upper sum-DoF with side information.

    For ``M <= G-1`` both equal ``G`` times the groupcast value. Otherwise
    the achievable value uses ``G-1`` modes and the upper value uses ``M``.
    ``G = 1`` has no side information and returns the groupcast value
    twice.
    """
    _check(K, G, M)
    if G == 1:
        v = _groupcast(K, 1, M)
        return v, v
    upper = G * _groupcast(K, G, M)
    achievable = upper if M <= G - 1 else G * _groupcast(K, G, G - 1)
    return achievable, upper


def dof_mapreduce(K: int, r: int, M: int) -> tuple[Fraction, Fraction]:
    """Shuffle sum-DoF bounds, ``K(r+1)M / ((M-1)(r+1) + K)`` for ``M <= r``."""
    if not 1 <= r <= K - 1 or M < 1:
        raise ParameterError(f"need 1 <= r <= K-1 and M >= 1, got K={K}, r={r}, M={M}")

    def value(m):
        return Fraction(K * (r + 1) * m, (m - 1) * (r + 1) + K)

    upper = value(M)
    return (upper if M <= r else value(r)), upper


@dataclass(frozen=True)
class DofReport:
    """DoF summary of one setting.

    ``achieved`` is a dimension count from an actual run when available.
    Otherwise it is the achievable formula value.
    """

    setting: str
    K: int
    G: int
    M: int
    achievable: Fraction
    upper: Fraction
    achieved: Fraction | None = None
    slope: float | None = None
    slope_ci: float | None = None

    @property
    def tight(self) -> bool:
        return self.achievable == self.upper

    def to_record(self) -> dict:
        rec = asdict(self)
        for key in ("achievable", "upper", "achieved"):
            if rec[key] is not None:
                rec[key] = str(rec[key])
        return rec


def dof_report(setting: str, K: int, G: int, M: int, M_tx=None, M_rx=None) -> DofReport:
    """Formula values for ``setting`` in ``{"bcgm", "usi", "mapreduce"}``.

    For ``mapreduce`` the ``G`` argument is the computation load ``r``.
    """
    if setting == "bcgm":
        if M_tx is not None or M_rx is not None:
            v = dof_bcgm_asym(K, G, M_tx or M, M_rx or M)
        else:
            v = dof_bcgm(K, G, M)
        return DofReport("bcgm", K, G, M, v, v)
    if setting == "usi":
        a, u = dof_usi(K, G, M)
        return DofReport("usi", K, G, M, a, u)
    if setting == "mapreduce":
        a, u = dof_mapreduce(K, G, M)
        return DofReport("mapreduce", K, G, M, a, u)
    raise ParameterError(f"unknown setting {setting!r}")


def dimension_count(report: DecodingReport, tol: float = 1e-8) -> Fraction:
    """Delivered symbols per message per slot of a verified noiseless run.

    Raises
    ------
    InvalidRunError
        If the run was noisy, rank deficient or failed to recover a message.
    """
    if report.snr_db is not None:
        raise InvalidRunError("dimension counting needs a noiseless run")
    if not report.full_rank:
        raise InvalidRunError("run has rank-deficient diagnostics")
    if not report.max_relative_error < tol:
        raise InvalidRunError(f"recovery error {report.max_relative_error:.3g} above {tol}")
    return Fraction(report.symbols_per_message, report.n_slots)


# ----------------------------------------------------------- rate curves


@dataclass(frozen=True)
class RateSetting:
    """What to simulate: ``kind`` is ``"bcgm"``, ``"usi"`` or ``"mimo"``."""

    kind: str
    K: int = 1
    G: int = 1
    M: int = 1

    def __post_init__(self):
        if self.kind not in ("bcgm", "usi", "mimo"):
            raise ParameterError(f"unknown rate setting {self.kind!r}")


@dataclass(frozen=True)
class RateCurve:
    """Average sum rate per SNR point and the high-SNR slope.

    ``slope`` is the rate increase per doubling of power between the last
    two SNR points. Its confidence half-width comes from per-trial slopes.
    """

    snr_db: tuple[float, ...]
    mean_rate: tuple[float, ...]
    ci_halfwidth: tuple[float, ...]
    slope: float
    slope_ci: float
    trials: int


def _logdet_gain(A: np.ndarray) -> float:
    """``log2 det(I + A)`` for Hermitian PSD ``A``."""
    sign, val = np.linalg.slogdet(np.eye(A.shape[0]) + A)
    return float(val / math.log(2.0))


class _Evaluator:
    """Per-setting rate computation shared across trials."""

    def __init__(self, setting: RateSetting):
        self.setting = setting
        if setting.kind == "mimo":
            return
        if setting.kind == "usi" and setting.G >= 2:
            self.usi = build_usi_scheme(setting.K, setting.G, setting.M)
            self.bcgm = self.usi.bcgm
            self.peak = float(usi_power_profile(self.usi).max())
        else:
            self.usi = None
            self.bcgm = build_scheme(setting.K, setting.G, setting.M)
            self.peak = float(self.bcgm.precoders.power_profile().max())
        self.whiten = {}
        if self.bcgm is not None:
            sch = self.bcgm
            for k in range(1, setting.K + 1):
                for n, D in structured_decoders(k, sch.pattern(k), sch.precoders, sch.table).items():
                    Dd = D.toarray()
                    cov = Dd.T @ Dd.conj()
                    self.whiten[(k, n)] = np.linalg.inv(np.linalg.cholesky(cov))

    def rates(self, seed_words, powers) -> list[float]:
        s = self.setting
        if s.kind == "mimo":
            rng = np.random.default_rng(seed_words)
            H = complex_normal(rng, (s.M, s.M))
            G = H @ H.conj().T
            return [_logdet_gain(P * G) for P in powers]
        if self.usi is not None:
            book = draw_channels(s.K, s.M, s.K, seed=seed_words)
            return [self._usi_rate(book, P) for P in powers]
        book = draw_channels(s.K, self.bcgm.params.M, self.bcgm.params.M, seed=seed_words)
        return [self._bcgm_rate(book, P) for P in powers]

    def _block_rate(self, k, n, Hsmall, gain) -> float:
        ell = self.bcgm.params.n_blocks
        Heff = self.whiten[(k, n)] @ np.kron(np.eye(ell), Hsmall)
        return _logdet_gain(gain * (Heff.conj().T @ Heff)) / self.bcgm.params.n_slots

    def _bcgm_rate(self, book, P) -> float:
        sch = self.bcgm
        gain = P / self.peak
        per_msg = {}
        for k in range(1, sch.params.K + 1):
            H = receiver_channel_matrix(book, k)
            for n in sch.desired(k):
                r = self._block_rate(k, n, H, gain)
                per_msg[n] = min(per_msg.get(n, math.inf), r)
        return math.fsum(per_msg[n] for n in sorted(per_msg))

    def _usi_rate(self, book, P) -> float:
        usi = self.usi
        table = usi.table
        gain = P / self.peak
        rates = []
        for m in table.messages:
            k = m.desired_rx
            H = receiver_channel_matrix(book, k, n_modes=usi.modes)
            if usi.schedule is not None:
                tx = usi.schedule[m.n - 1].senders[m.g - 1]
                rates.append(math.log2(1 + gain * abs(H[0, tx - 1]) ** 2) / usi.n_slots)
            else:
                assert member_position(m.n, k, table.groups) == m.g
                rates.append(self._block_rate(k, m.n, block_channel(H, m.support), gain))
        return math.fsum(rates)


def estimate_rate_curve(setting: RateSetting, snr_db, trials: int, seed: int) -> RateCurve:
    """Monte Carlo average sum rate and its slope against ``log2 P``.

    Each trial draws fresh channels from the substream ``(seed, trial)``.
    Message rates come from the post-decoder Gaussian channel: the
    effective block channel with noise colored by the decoder. For the
    groupcast setting a message's rate is the minimum over its receivers.
    The sum rate is in bits per slot.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    snr = tuple(float(x) for x in snr_db)
    if len(snr) < 2:
        raise ParameterError("need at least two SNR points for a slope")
    powers = [db_to_power(x) for x in snr]
    ev = _Evaluator(setting)
    table = np.array([ev.rates([seed, t], powers) for t in range(trials)])
    mean = tuple(math.fsum(col) / trials for col in table.T)
    sd = table.std(axis=0, ddof=1) if trials > 1 else np.zeros(len(snr))
    ci = tuple(float(Z95 * v / math.sqrt(trials)) for v in sd)
    dlog = math.log2(powers[-1]) - math.log2(powers[-2])
    per_trial = (table[:, -1] - table[:, -2]) / dlog
    slope = math.fsum(per_trial) / trials
    slope_ci = float(Z95 * per_trial.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return RateCurve(snr, mean, ci, slope, slope_ci, trials)


def rate_curve_csv(curve: RateCurve) -> str:
    """CSV with columns ``snr_db, mean_rate, ci_halfwidth``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "mean_rate", "ci_halfwidth"])
    for row in zip(curve.snr_db, curve.mean_rate, curve.ci_halfwidth):
        w.writerow([repr(v) for v in row])
    return buf.getvalue()
