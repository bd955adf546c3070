"""Command line entry point ``smallgain``.

Exit codes: 0 certified or passed, 1 refuted or failed, 2 inconclusive,
3 input error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .apps import (average_drift, build_consensus_error_system, build_observer_composite, build_original_system,
                   clock_augment, consensus_metrics, observer_error_decay, to_error_coordinates, ueiss_check,
                   write_consensus_csv)
from .apps.consensus import ConsensusSpec
from .certify import (check_composite_dissipation, check_coercivity, check_eiss_envelope,
                      check_local_dissipation, check_monotone_comparison, dumps, practical_iss_offset,
                      write_margins_csv)
from .expr import Scale, State
from .gainop import SpecError, analyze
from .netsim import integrate, truncate
from .seqspace import EmptySetError

log = logging.getLogger("smallgain")

EXIT = {"certified": 0, "pass": 0, "yes": 0, "refuted": 1, "fail": 1, "no": 1, "inconclusive": 2}
INPUT_ERROR = 3
FIXED_CLOCK = "1970-01-01T00:00:00+00:00"


class Context:
    def __init__(self, cfg: dict, out: Path, seed: int, fixed_clock: bool, command: str):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.command = command
        self.stamp = FIXED_CLOCK if fixed_clock else _dt.datetime.now(_dt.timezone.utc).isoformat()

    def analysis_args(self) -> dict:
        a = self.cfg.get("analysis", {})
        kw = {}
        if "N_schedule" in a:
            kw["N_schedule"] = tuple(a["N_schedule"])
        if a.get("rho") is not None:
            kw["rho"] = float(a["rho"])
        if "tol" in a:
            kw["tol"] = float(a["tol"])
        return kw

    def report(self, status: str, body: dict) -> int:
        rep = {"command": self.command, "name": self.cfg.get("name", ""), "seed": self.seed,
               "generated_at": self.stamp, "status": status, **body}
        (self.out / "report.json").write_text(dumps(rep) + "\n")
        print(f"{self.command}: {status}")
        return EXIT[status]


def _certificate_constants(an, cfg: dict):
    chk = cfg.get("checks", {})
    if "M" in chk and "a" in chk:
        return float(chk["M"]), float(chk["a"]), None
    if an.status == "certified":
        c = an.certificate
        return c.M, c.a, c.gamma
    return None, None, None


def cmd_analyze(ctx: Context) -> int:
    if "gain" not in ctx.cfg:
        raise C.ConfigError("analyze needs a 'gain' section")
    p, q = float(ctx.cfg.get("p", 2.0)), float(ctx.cfg.get("q", 2.0))
    an = analyze(C.gain_spec(ctx.cfg["gain"], p, q), **ctx.analysis_args())
    return ctx.report(an.status, {"analysis": an.to_dict()})


def cmd_simulate(ctx: Context) -> int:
    cfg = ctx.cfg
    net = C.network(cfg)
    an = analyze(net.gain, **ctx.analysis_args())
    sim = C.SimSettings.from_cfg(cfg)
    sys_ = truncate(net, sim.N)
    x0 = C.initial_state(cfg.get("simulation", {}).get("x0"), sys_.D, ctx.rng)
    u = C.input_signal(cfg.get("simulation", {}).get("input"), net.m)
    tr = integrate(sys_, x0, u, sim.T, sim.dt, record_every=sim.record_every)
    tr.to_csv(ctx.out / "trajectory.csv", stride=sim.csv_stride)
    M, a, gamma = _certificate_constants(an, cfg)
    body = {"analysis": an.to_dict(), "integration": tr.diagnostics()}
    if M is None:
        body["message"] = "no certificate and no user-supplied (M, a): envelope not checked"
        return ctx.report("inconclusive", body)
    chk = cfg.get("checks", {})
    tol = float(chk.get("envelope_tol", 1e-6))
    rep = check_eiss_envelope(tr, net.sets, M, a, gamma, tol, net.q)
    if np.isfinite(net.sets.radius(net.dims, net.p)):
        rep.add(practical_iss_offset(tr, net.sets, M, a, gamma, tol, net.q).checks["practical_iss"])
    if an.status == "certified":
        c = an.certificate
        rep.add(check_composite_dissipation(c, net, tr))
        rep.add(check_coercivity(c, net, tr))
        if u.kind == "zero":
            rep.add(check_monotone_comparison(c, net, tr))
    for i in chk.get("local_blocks", ()):
        if i < sim.N:
            rep.add(check_local_dissipation(net, tr, int(i)))
    rep.margins_csv(ctx.out / "margins.csv", stride=sim.csv_stride)
    body["envelope"] = rep.to_dict()
    ok = rep.passed and not tr.overflow
    return ctx.report("pass" if ok else "fail", body)


def cmd_consensus(ctx: Context) -> int:
    cfg = ctx.cfg
    cs = C.consensus_spec(cfg)
    net = build_consensus_error_system(cs)
    an = analyze(net.gain, **ctx.analysis_args())
    body = {"analysis": an.to_dict()}
    if an.status != "certified":
        return ctx.report(an.status, body)
    c = an.certificate
    sim = C.SimSettings.from_cfg(cfg, N=100)
    N = sim.N
    x0 = C.initial_state(cfg.get("simulation", {}).get("x0"), N * cs.n, ctx.rng)
    orig = integrate(truncate(build_original_system(cs), N), x0, None, sim.T, sim.dt, record_every=sim.record_every)
    err = integrate(truncate(net, N + 1), to_error_coordinates(cs, x0, N), None, sim.T, sim.dt,
                    record_every=sim.record_every)
    agree = float(np.max(np.abs(to_error_coordinates(cs, orig.states, N) - err.states)))
    modes = int(cfg.get("checks", {}).get("modes", N))
    metrics = consensus_metrics(err, cs, c.M, c.a, modes)
    free = ConsensusSpec(Scale(0.0, State()), cs.alpha, cs.sigma, cs.n, cs.B, cs.bandwidth, cs.weight,
                         cs.decay, cs.lipschitz, cs.explicit)
    drift_run = integrate(truncate(build_original_system(free), N), x0, None, sim.T, sim.dt,
                          record_every=sim.record_every)
    drift = average_drift(free, drift_run)
    write_consensus_csv(ctx.out / "consensus.csv", err, cs, modes, sim.csv_stride)
    body.update({"metrics": metrics, "coordinate_agreement": agree, "average_drift_uncoupled": drift,
                 "integration": err.diagnostics()})
    ok = metrics["passed"] and agree < 1e-6 and drift < 1e-10 and metrics["fitted"]["a"] > 0
    return ctx.report("pass" if ok else "fail", body)


def cmd_observer(ctx: Context) -> int:
    cfg = ctx.cfg
    os_ = C.observer_spec(cfg)
    net = build_observer_composite(os_, seed=ctx.seed)
    an = analyze(net.gain, **ctx.analysis_args())
    sim = C.SimSettings.from_cfg(cfg, N=100, T=5.0)
    N, n = sim.N, os_.n
    s = cfg.get("simulation", {})
    x0 = C.initial_state(s.get("x0"), N * n, ctx.rng)
    xh0 = C.initial_state(s.get("xhat0"), N * n, ctx.rng)
    z0 = np.stack([x0.reshape(N, n), xh0.reshape(N, n)], axis=1).ravel()
    tr = integrate(truncate(net, N), z0, None, sim.T, sim.dt, record_every=sim.record_every)
    tr.to_csv(ctx.out / "trajectory.csv", stride=sim.csv_stride)
    M, a, _ = _certificate_constants(an, cfg)
    rep = observer_error_decay(tr, os_, M, a, float(cfg.get("checks", {}).get("envelope_tol", 1e-6)))
    body = {"analysis": an.to_dict(), "observer": rep, "integration": tr.diagnostics()}
    if an.status == "refuted" and rep["verdict"] == "inconclusive":
        rep["verdict"] = "no"
        rep["summary"] = "robust distributed observer: no"
    print(rep["summary"])
    return ctx.report(rep["verdict"], body)


def cmd_timevarying(ctx: Context) -> int:
    cfg = ctx.cfg
    tv = C.network(cfg)
    ck = cfg.get("clock", {})
    aug = clock_augment(tv, float(ck.get("lam0", 1.0)))
    an = analyze(aug.augmented.gain, **ctx.analysis_args())
    if "M" in ck and "a" in ck:
        M, a = float(ck["M"]), float(ck["a"])
    elif an.status == "certified":
        M, a = an.certificate.M, an.certificate.a
    else:
        return ctx.report(an.status, {"analysis": an.to_dict()})
    sim = C.SimSettings.from_cfg(cfg, N=1, T=5.0)
    D = int(tv.dims.total(sim.N))
    x0s = [C.initial_state(cfg.get("simulation", {}).get("x0"), D, ctx.rng) for _ in range(int(ck.get("samples", 1)))]
    u = C.input_signal(cfg.get("simulation", {}).get("input"), tv.m)
    t0s = ck.get("t0", [0.0])
    tol = float(cfg.get("checks", {}).get("envelope_tol", 1e-6))
    rep = ueiss_check(aug, M, a, t0s, x0s, u, sim.T, sim.dt, sim.N, tol)
    write_margins_csv(ctx.out / "margins.csv", rep.pop("series"), sim.csv_stride)
    body = {"analysis": an.to_dict(), "ueiss": rep}
    return ctx.report("pass" if rep["passed"] else "fail", body)


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "consensus": cmd_consensus,
    "observer": cmd_observer,
    "timevarying": cmd_timevarying,
}


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smallgain", description="Small-gain certificates for infinite networks.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML scenario file")
    ap.add_argument("--out", default="smallgain-out", help="output directory (default: %(default)s)")
    ap.add_argument("--seed", type=_seed, default=0, help="RNG seed for initial data (default: 0)")
    ap.add_argument("--fixed-clock", action="store_true", help="write a constant generated_at timestamp")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return INPUT_ERROR if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        cfg = C.load(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(cfg, out, args.seed, args.fixed_clock, args.command)
        return COMMANDS[args.command](ctx)
    except (C.ConfigError, SpecError, EmptySetError, ValueError, KeyError, TypeError) as exc:
        print(f"smallgain {args.command}: input error: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
