"""Command-line front end.

Every command writes line-delimited JSON records to stdout (or ``--out``).
The exit status is 0 exactly when every check a command performs passes.
Errors become a ``{"record": "error", ...}`` line and exit status 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction
from math import comb

from . import __version__
from .bcgm import (
    MAX_SLOTS,
    SchemeParams,
    build_scheme,
    rank_diagnostics,
    scheme_dimensions,
    verify_alignment,
)
from .errors import BiaError, ParameterError, ShuffleError
from .mapreduce import (
    job_from_description,
    map_phase,
    oracle_check,
    shuffle_phase,
)
from .metrics import (
    RateSetting,
    dimension_count,
    dof_bcgm,
    dof_mapreduce,
    dof_report,
    dof_usi,
    estimate_rate_curve,
    rate_curve_csv,
)
from .simulation import simulate_bcgm, simulate_usi

SEED_ENV = "BIA_SIM_SEED"
MODES = ("bcgm", "usi", "mapreduce", "mimo")
SLOPE_TOLERANCE = 0.10


@dataclass
class ExperimentConfig:
    """Resolved settings of one command invocation."""

    command: str
    mode: str | None = None
    k: int | None = None
    g: int | None = None
    r: int | None = None
    m: int | None = None
    m_tx: int | None = None
    m_rx: int | None = None
    snr_db: list = field(default_factory=list)
    trials: int = 200
    seed: int | None = None
    noiseless: bool = False
    out: str | None = None
    extra: dict = field(default_factory=dict)
    out_csv: str | None = None

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise ParameterError(f"{self.command} needs {flags}")

    def validate(self) -> "ExperimentConfig":
        if self.mode is not None and self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.command == "verify":
            return self
        if self.mode is None:
            raise ParameterError(f"{self.command} needs --mode")
        if self.mode == "mapreduce":
            if self.g is not None:
                raise ParameterError("mapreduce mode takes --r, not --g")
            self.require("k", "r", "m")
        elif self.mode == "mimo":
            if self.command != "sweep":
                raise ParameterError("mimo mode is only a sweep control")
            self.require("m")
        else:
            if self.r is not None:
                raise ParameterError(f"{self.mode} mode takes --g, not --r")
            if self.m is None and self.m_tx is not None and self.m_rx is not None:
                self.m = min(self.m_tx, self.m_rx)
            self.require("k", "g", "m")
        if self.command in ("simulate", "sweep", "mapreduce-demo"):
            if self.seed is None:
                raise ParameterError(f"a seed is required: pass --seed or set {SEED_ENV}")
        return self


# ----------------------------------------------------------------- output


class Emitter:
    def __init__(self, stream):
        self.stream = stream
        self.ok = True

    def emit(self, record: dict) -> None:
        self.stream.write(json.dumps(_plain(record), sort_keys=True) + "\n")

    def check(self, name: str, passed: bool, **detail) -> None:
        self.ok = self.ok and bool(passed)
        self.emit({"record": "check", "name": name, "passed": bool(passed), **detail})


def _plain(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    return obj


# --------------------------------------------------------------- commands


def _usi_modes(cfg) -> int:
    return cfg.m if cfg.g < 2 else min(cfg.m, cfg.g - 1)


def cmd_dims(cfg: ExperimentConfig, out: Emitter) -> None:
    """Scheme sizes and DoF values of one setting."""
    if cfg.mode == "mapreduce":
        rep = dof_report("mapreduce", cfg.k, cfg.r, cfg.m)
        G, modes = cfg.r + 1, min(cfg.m, cfg.r)
    elif cfg.mode == "usi":
        rep = dof_report("usi", cfg.k, cfg.g, cfg.m)
        G, modes = cfg.g, _usi_modes(cfg)
    else:
        rep = dof_report("bcgm", cfg.k, cfg.g, cfg.m, cfg.m_tx, cfg.m_rx)
        G, modes = cfg.g, min(cfg.m_tx or cfg.m, cfg.m_rx or cfg.m)
    rec = {"record": "dims", "mode": cfg.mode, "K": cfg.k, "G": G, "M": cfg.m, "modes": modes}
    if cfg.mode in ("usi", "mapreduce") and modes == 1 and G >= 2:
        rec.update(schedule="single-mode", n_slots=comb(cfg.k, G), symbols_per_message=1)
    else:
        d = scheme_dimensions(SchemeParams(cfg.k, G, modes))
        rec.update(n_blocks=d.n_blocks, n_streams=d.n_streams, n_slots=d.n_slots,
                   dof_message=d.dof_message, dof_sum_groupcast=d.dof_sum)
    out.emit(rec)
    out.emit({"record": "dof", **rep.to_record()})


def cmd_pattern(cfg: ExperimentConfig, out: Emitter) -> None:
    """Switching patterns and alignment verdicts of every receiver."""
    if cfg.mode == "mapreduce":
        G, modes = cfg.r + 1, min(cfg.m, cfg.r)
    elif cfg.mode == "usi":
        G, modes = cfg.g, _usi_modes(cfg)
    else:
        G, modes = cfg.g, min(cfg.m_tx or cfg.m, cfg.m_rx or cfg.m)
    scheme = build_scheme(cfg.k, G, modes)
    for k in range(1, cfg.k + 1):
        pat = scheme.pattern(k)
        verdict = verify_alignment(pat.first_phase, pat.desired, scheme.params)
        out.emit({
            "record": "pattern",
            "receiver": k,
            "desired": list(pat.desired),
            "first_phase": pat.first_phase,
            "modes": pat.modes,
            "alignment": "pass" if verdict else "fail",
        })
        out.check(f"alignment/rx{k}", bool(verdict), reason=verdict.reason)


def cmd_simulate(cfg: ExperimentConfig, out: Emitter) -> None:
    """One end-to-end run with a decoding report."""
    snr = None if cfg.noiseless or not cfg.snr_db else float(cfg.snr_db[-1])
    if cfg.mode == "bcgm":
        rep = simulate_bcgm(cfg.k, cfg.g, cfg.m, cfg.seed, snr, cfg.m_tx, cfg.m_rx)
    elif cfg.mode == "usi":
        rep = simulate_usi(cfg.k, cfg.g, cfg.m, cfg.seed, snr)
    else:
        raise ParameterError("simulate supports --mode bcgm or usi; use mapreduce-demo for mapreduce")
    out.emit({"record": "report", **rep.to_record()})
    out.check("full_rank", rep.full_rank)
    if snr is None:
        out.check("noiseless_recovery", rep.max_relative_error < 1e-8, max_relative_error=rep.max_relative_error)
        out.emit({"record": "dimension_count", "dof_message": dimension_count(rep),
                  "dof_sum": dimension_count(rep) * rep.n_messages})


def cmd_sweep(cfg: ExperimentConfig, out: Emitter) -> None:
    """Monte Carlo rate curve; checks the top slope against the DoF formula."""
    snr = cfg.snr_db or [40.0, 60.0]
    if cfg.mode == "mimo":
        setting, target = RateSetting("mimo", M=cfg.m), Fraction(cfg.m)
    elif cfg.mode == "bcgm":
        setting, target = RateSetting("bcgm", cfg.k, cfg.g, cfg.m), dof_bcgm(cfg.k, cfg.g, cfg.m)
    elif cfg.mode == "usi":
        setting, target = RateSetting("usi", cfg.k, cfg.g, cfg.m), dof_usi(cfg.k, cfg.g, cfg.m)[0]
    else:
        a = dof_mapreduce(cfg.k, cfg.r, cfg.m)[0]
        setting, target = RateSetting("usi", cfg.k, cfg.r + 1, cfg.m), a
    curve = estimate_rate_curve(setting, snr, cfg.trials, cfg.seed)
    for s, r, c in zip(curve.snr_db, curve.mean_rate, curve.ci_halfwidth):
        out.emit({"record": "rate", "snr_db": s, "mean_rate": r, "ci_halfwidth": c})
    ratio = curve.slope / float(target)
    out.emit({"record": "slope", "slope": curve.slope, "slope_ci": curve.slope_ci,
              "dof": target, "ratio": ratio, "trials": curve.trials})
    if cfg.out_csv:
        with open(cfg.out_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(rate_curve_csv(curve))
    out.check("slope_within_tolerance", abs(ratio - 1) <= SLOPE_TOLERANCE, tolerance=SLOPE_TOLERANCE)


def cmd_mapreduce_demo(cfg: ExperimentConfig, out: Emitter) -> None:
    """Map, shuffle over the channel, reduce, compare with a central oracle."""
    desc = {"K": cfg.k, "r": cfg.r, "payload_seed": cfg.seed, **cfg.extra}
    job, _ = job_from_description(desc)
    ivas = map_phase(job)
    snr = None if cfg.noiseless or not cfg.snr_db else float(cfg.snr_db[-1])
    try:
        ledger = shuffle_phase(job, ivas, cfg.m, seed=cfg.seed, snr_db=snr)
    except ShuffleError as exc:
        out.emit(exc.diagnostics["ledger"].to_record())
        out.check("shuffle", False, failed=exc.diagnostics["failed"])
        return
    out.emit(ledger.to_record())
    verdict = oracle_check(job, ivas, ledger)
    out.check("oracle", verdict.passed, mismatches=[list(m) for m in verdict.mismatches])
    a, u = dof_mapreduce(job.K, job.r, cfg.m) if job.r < job.K else (None, None)
    if ledger.slots:
        measured = Fraction(len(ledger.effective) * ledger.symbols_per_round * ledger.rounds, ledger.slots)
        out.emit({"record": "dof", "setting": "mapreduce", "achievable": a, "upper": u,
                  "achieved": measured})
        out.check("dof_matches_formula", measured == a)


def _verify_point(K, G, M, out: Emitter, seed: int) -> bool:
    params = SchemeParams(K, G, M)
    rec = {"record": "verify", "K": K, "G": G, "M": M, "n_slots": params.n_slots}
    ok = True
    dims = scheme_dimensions(params)
    formula = dims.dof_sum == dof_bcgm(K, G, M)
    ok &= formula
    rec["formula"] = formula
    scheme = build_scheme(K, G, M)
    if M >= 2:
        align = all(
            verify_alignment(scheme.pattern(k).first_phase, scheme.desired(k), params).passed
            for k in range(1, K + 1)
        )
        rec["alignment"] = align
        ok &= align
    reports = [rank_diagnostics(scheme, k) for k in range(1, K + 1)]
    rec["ranks"] = all(r.ok for r in reports)
    rec["decoder_residual"] = max(r.decoder_residual for r in reports)
    ok &= rec["ranks"] and rec["decoder_residual"] < 1e-8
    rep = simulate_bcgm(K, G, M, seed, diagnostics=False)
    rec["recovery_error"] = rep.max_relative_error
    ok &= rep.max_relative_error < 1e-8
    if G >= 2:
        a, u = dof_usi(K, G, M)
        ok &= (a == G * dof_bcgm(K, G, min(M, G - 1)))
        if G - 1 <= K - 1:
            ok &= dof_mapreduce(K, G - 1, M) == (a, u)
    rec["passed"] = bool(ok)
    out.emit(rec)
    return bool(ok)


def cmd_verify(cfg: ExperimentConfig, out: Emitter) -> None:
    """Invariant suite over the parameter grid, capped by the slot guardrail."""
    seed = 0 if cfg.seed is None else cfg.seed
    Ks = [cfg.k] if cfg.k else range(2, 6)
    total = passed = skipped = 0
    for K in Ks:
        Gs = [cfg.g] if cfg.g else range(1, K + 1)
        for G in Gs:
            Ms = [cfg.m] if cfg.m else range(1, 5)
            for M in Ms:
                if SchemeParams(K, G, M).n_slots > MAX_SLOTS:
                    skipped += 1
                    out.emit({"record": "verify", "K": K, "G": G, "M": M, "skipped": "slot guardrail"})
                    continue
                total += 1
                passed += _verify_point(K, G, M, out, seed)
    out.emit({"record": "verify_summary", "points": total, "passed": passed, "skipped": skipped})
    out.check("verify", passed == total)


COMMANDS = {
    "dims": cmd_dims,
    "pattern": cmd_pattern,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "mapreduce-demo": cmd_mapreduce_demo,
    "verify": cmd_verify,
}


# ----------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", help="bcgm | usi | mapreduce | mimo")
    common.add_argument("--k", type=int, help="number of nodes / receivers")
    common.add_argument("--g", type=int, help="group size")
    common.add_argument("--r", type=int, help="MapReduce computation load")
    common.add_argument("--m", type=int, help="antennas = receive modes")
    common.add_argument("--m-tx", type=int, help="transmit antennas (groupcast)")
    common.add_argument("--m-rx", type=int, help="receive modes (groupcast)")
    common.add_argument("--snr-db", type=float, action="append", default=None,
                        help="SNR point in dB (repeatable)")
    common.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed (fallback: ${SEED_ENV})")
    common.add_argument("--noiseless", action="store_true", default=None)
    common.add_argument("--out", help="write records here (sweep: CSV path)")
    common.add_argument("--config", help="JSON file whose keys override flags")
    parser = argparse.ArgumentParser(prog="bia-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.splitlines()[0])
    return parser


def resolve_config(args: argparse.Namespace, environ=None) -> ExperimentConfig:
    environ = os.environ if environ is None else environ
    values = {f.name: getattr(args, f.name, None) for f in fields(ExperimentConfig)
              if f.name not in ("command", "extra", "out_csv")}
    values = {k: v for k, v in values.items() if v is not None}
    extra = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ParameterError("config file must hold a JSON object")
        known = {f.name for f in fields(ExperimentConfig)}
        for key, val in data.items():
            name = key.replace("-", "_")
            if name in known and name not in ("command", "extra", "out_csv"):
                values[name] = val
            else:
                extra[key] = val
    if isinstance(values.get("snr_db"), (int, float)):
        values["snr_db"] = [values["snr_db"]]
    if "seed" not in values and environ.get(SEED_ENV):
        try:
            values["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ParameterError(f"{SEED_ENV} must be an integer") from None
    if args.command == "mapreduce-demo":
        values.setdefault("mode", "mapreduce")
    cfg = ExperimentConfig(command=args.command, extra=extra, **values)
    return cfg.validate()


def main(argv=None, stdout=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stdout = sys.stdout if stdout is None else stdout
    out = Emitter(stdout)
    handle = None
    try:
        cfg = resolve_config(args, environ)
        if cfg.out and cfg.command == "sweep":
            cfg.out_csv = cfg.out
        elif cfg.out:
            handle = open(cfg.out, "w", encoding="utf-8")
            out = Emitter(handle)
        COMMANDS[cfg.command](cfg, out)
    except BiaError as exc:
        record = {"record": "error", "kind": exc.kind, "message": str(exc)}
        if getattr(exc, "ranks", None):
            record["ranks"] = exc.ranks
        out.emit(record)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        out.emit({"record": "error", "kind": "io", "message": str(exc)})
        return 2
    finally:
        if handle is not None:
            handle.close()
    return 0 if out.ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
