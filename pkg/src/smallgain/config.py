"""YAML scenario files: validation against the bundled schema and object builders."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .expr import Scale, State, from_dict
from .gainop import BandedKernel, GainSpec, GeometricKernel
from .netsim import DistPowV, InputSignal, NetworkSpec, QuadV, SubsystemSpec
from .rules import BlockRule, ScalarSeq
from .seqspace import Box, Diagonal, Full, Origin, Point, SetSpec


class ConfigError(ValueError):
    """Malformed or inconsistent scenario file."""


def schema() -> dict:
    return json.loads(resources.files("smallgain").joinpath("schema.json").read_text())


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    return cfg


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("scenario file must hold a mapping")
    return validate(cfg)


# --------------------------------------------------------------------------
# builders


def seq(v) -> ScalarSeq:
    if isinstance(v, dict):
        return ScalarSeq(tuple(v.get("prefix", ())), float(v["tail"]), float(v.get("ratio", 1.0)))
    return ScalarSeq.coerce(v)


def set_descriptor(d: dict):
    kind = d["kind"]
    if kind == "origin":
        return Origin()
    if kind == "full":
        return Full()
    if kind == "point":
        return Point(tuple(d["a"]))
    if kind == "box":
        return Box(tuple(d["lo"]), tuple(d["hi"]))
    return Diagonal()


def set_spec(d: dict | None) -> SetSpec:
    if d is None:
        return SetSpec.origin()
    return SetSpec.make(tuple(set_descriptor(x) for x in d.get("prefix", ())), set_descriptor(d["tail"]))


def local_V(d: dict | None, n: int, p: float):
    if d is None:
        return DistPowV(1.0, p)
    if d["kind"] == "quad":
        return QuadV(tuple(map(tuple, np.atleast_2d(d["P"]))))
    return DistPowV(float(d.get("c", 1.0)), float(d.get("power", p)))


def kernel(d: dict | None):
    if d is None:
        return BandedKernel()
    if d["kind"] == "geometric":
        return GeometricKernel(float(d["c"]), float(d["ratio"]))
    return BandedKernel(tuple((int(k), float(c)) for k, c in d.get("offsets", {}).items()))


def gain_spec(d: dict, p: float = 2.0, q: float = 2.0) -> GainSpec:
    return GainSpec(
        lam=seq(d["lambda"]),
        entries=tuple((int(i), int(j), float(v)) for i, j, v in d.get("entries", ())),
        P=int(d.get("P", 0)),
        kernel=kernel(d.get("kernel")),
        gamma_u=seq(d.get("gamma_u", 1.0)),
        alpha_lo=seq(d.get("alpha_lo", 1.0)),
        alpha_hi=seq(d.get("alpha_hi", 1.0)),
        p=float(d.get("p", p)),
        q=float(d.get("q", q)),
        col_lo=int(d.get("col_lo", 0)),
        null_blocks=frozenset(int(i) for i in d.get("null_blocks", ())),
    )


def subsystem(d: dict, p: float) -> SubsystemSpec:
    n = int(d.get("n", 1))
    return SubsystemSpec(from_dict(d["f"]), n, int(d.get("m", 0)), local_V(d.get("V"), n, p),
                         float(d.get("lipschitz", np.inf)))


def network(cfg: dict) -> NetworkSpec:
    if "network" not in cfg or "gain" not in cfg:
        raise ConfigError("this command needs both 'network' and 'gain' sections")
    p, q = float(cfg.get("p", 2.0)), float(cfg.get("q", 2.0))
    nd = cfg["network"]
    subs = nd["subsystems"]
    rule = BlockRule(tuple(subsystem(s, p) for s in subs.get("prefix", ())), subsystem(subs["tail"], p))
    return NetworkSpec(rule, gain_spec(cfg["gain"], p, q), set_spec(nd.get("sets")), p, q,
                       bool(nd.get("time_varying", False)), cfg.get("name", ""))


def input_signal(d: dict | None, m: int) -> InputSignal:
    if d is None or d["kind"] == "zero" or m == 0:
        return InputSignal.zero(max(m, 1))
    k = d["kind"]
    support = int(d.get("support", 0))
    if k == "constant":
        return InputSignal.constant(d["value"], support, m)
    if k == "schedule":
        return InputSignal.schedule(d["times"], d["values"], support, m)
    return InputSignal.sinusoid(d["amp"], float(d.get("omega", 1.0)), float(d.get("phase", 0.0)), support, m)


def initial_state(d: dict | None, D: int, rng: np.random.Generator) -> np.ndarray:
    """Flat initial state of length ``D``; explicit values are zero-padded."""
    if d is None:
        return rng.uniform(-1.0, 1.0, D)
    k = d["kind"]
    if k == "uniform":
        return rng.uniform(float(d.get("low", -1.0)), float(d.get("high", 1.0)), D)
    if k == "normal":
        return float(d.get("scale", 1.0)) * rng.standard_normal(D)
    if k == "constant":
        return np.full(D, float(d["value"]))
    v = np.asarray(d["values"], dtype=float)
    if v.size > D:
        raise ConfigError(f"{v.size} initial values given for a state of size {D}")
    return np.concatenate([v, np.zeros(D - v.size)])


@dataclass(frozen=True)
class SimSettings:
    N: int
    T: float
    dt: float
    record_every: int
    csv_stride: int

    @classmethod
    def from_cfg(cls, cfg: dict, N: int = 50, T: float = 10.0) -> "SimSettings":
        s = cfg.get("simulation", {})
        return cls(int(s.get("N", N)), float(s.get("T", T)), float(s.get("dt", 1e-3)),
                   int(s.get("record_every", 1)), int(s.get("csv_stride", 1)))


def consensus_spec(cfg: dict):
    from .apps.consensus import ConsensusSpec

    d = cfg["consensus"]
    n = int(d.get("n", 1))
    return ConsensusSpec(
        f=from_dict(d["f"]) if d["f"] else Scale(0.0, State()),
        alpha=seq(d["alpha"]),
        sigma=float(d["sigma"]),
        n=n,
        B=tuple(map(tuple, np.atleast_2d(d.get("B", np.eye(n))))),
        bandwidth=int(d.get("bandwidth", 1)),
        weight=float(d.get("weight", 1.0)),
        decay=float(d.get("decay", 1.0)),
        lipschitz=float(d.get("lipschitz", 1.0)),
        explicit=int(d.get("explicit", 64)),
    )


def observer_spec(cfg: dict):
    from .apps.observer import ObserverSpec

    if "gain" not in cfg:
        raise ConfigError("observer scenarios need a 'gain' section for the paired Lyapunov data")
    d = cfg["observer"]
    p, q = float(cfg.get("p", 2.0)), float(cfg.get("q", 2.0))
    g = dict(cfg["gain"])
    g.setdefault("gamma_u", 0.0)
    return ObserverSpec(from_dict(d["f"]), from_dict(d["h"]), from_dict(d["fhat"]), int(d.get("n", 1)),
                        int(d.get("ny", 1)), gain_spec(g, p, q), float(d.get("w", 1.0)))
