"""Run configuration: TOML (sectioned key-value) or JSON, validated with field paths."""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .generators import Generator, make_gamma_band, make_polynomial, make_quadratic, make_shortsell_box
from .lattice import DEFAULT_MAX_DEPTH, ScenarioTree, build_tree
from .optim import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "GENERATOR_KINDS", "PAYOFF_KINDS",
           "make_generator", "make_payoff"]

GENERATOR_KINDS = ("quadratic", "gamma_band", "shortsell_box", "custom-polynomial")
PAYOFF_KINDS = ("constant", "linear", "abs", "call", "table")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class RunConfig:
    T: float = 1.0
    N: int = 4
    refine_N: list = field(default_factory=list)
    generator: dict = field(default_factory=lambda: {"kind": "quadratic"})
    payoff: dict = field(default_factory=lambda: {"kind": "abs"})
    z0: float = 0.0
    solver: dict = field(default_factory=dict)
    dual: dict = field(default_factory=dict)
    el_check: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    source: str = ""

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d.pop("out")
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def tree(self, N: Optional[int] = None) -> ScenarioTree:
        return build_tree(self.T, self.N if N is None else N)

    def make_generator(self) -> Generator:
        return make_generator(self.generator)

    def payoff_on(self, tree: ScenarioTree) -> np.ndarray:
        return make_payoff(self.payoff, tree)

    def solver_config(self, threads: int = 1) -> SolverConfig:
        return SolverConfig(**{**self.solver, "seed": self.seed, "threads": threads})


def _num(sec: dict, key: str, path: str, default=None, lo=None, lo_strict=False, integer=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing field '{path}{key}'")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{path}{key}': expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"field '{path}{key}': expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"field '{path}{key}': must be finite, got {v!r}")
    if lo is not None and (v <= lo if lo_strict else v < lo):
        rel = ">" if lo_strict else ">="
        raise ConfigError(f"field '{path}{key}': out of range, must be {rel} {lo}, got {v!r}")
    return int(v) if integer else float(v)


def make_generator(spec: dict, path: str = "generator.") -> Generator:
    kind = spec.get("kind")
    if kind not in GENERATOR_KINDS:
        raise ConfigError(f"field '{path}kind': unknown generator kind {kind!r}; valid kinds: {', '.join(GENERATOR_KINDS)}")
    if kind == "quadratic":
        return make_quadratic()
    if kind == "custom-polynomial":
        coeffs = spec.get("coefficients", {})
        allowed = {"c0", "a_delta", "a_gamma", "a_z", "b_delta", "b_gamma"}
        extra = set(coeffs) - allowed
        if extra:
            raise ConfigError(f"field '{path}coefficients': unknown keys {sorted(extra)}; allowed {sorted(allowed)}")
        vals = {k: _num(coeffs, k, f"{path}coefficients.", lo=0.0) for k in coeffs}
        return make_polynomial(**vals)
    inner = make_generator({"kind": spec.get("inner", "quadratic"), **spec.get("inner_params", {})}, f"{path}inner.")
    if kind == "gamma_band":
        return make_gamma_band(inner, _num(spec, "M", path, lo=0.0))
    lo = _num(spec, "lo", path, default=-math.inf) if "lo" in spec else -math.inf
    hi = _num(spec, "hi", path, default=math.inf) if "hi" in spec else math.inf
    if lo > hi:
        raise ConfigError(f"field '{path}lo': empty box, lo={lo} > hi={hi}")
    return make_shortsell_box(inner, lo, hi)


def make_payoff(spec: dict, tree: ScenarioTree, path: str = "payoff.") -> np.ndarray:
    kind = spec.get("kind")
    W = tree.W_T
    if kind == "constant":
        return np.full(tree.n_leaves, _num(spec, "c", path))
    if kind == "linear":
        a = _num(spec, "a", path, default=1.0)
        b = _num(spec, "b", path, default=0.0) if "b" in spec else 0.0
        return a * W + b
    if kind == "abs":
        return np.abs(W)
    if kind == "call":
        return np.maximum(W - _num(spec, "strike", path, default=0.0), 0.0)
    if kind == "table":
        vals = spec.get("values")
        if not isinstance(vals, list) or len(vals) != tree.n_leaves:
            raise ConfigError(f"field '{path}values': expected a list of {tree.n_leaves} leaf values")
        arr = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"field '{path}values': all values must be finite")
        return arr
    raise ConfigError(f"field '{path}kind': unknown payoff kind {kind!r}; valid kinds: {', '.join(PAYOFF_KINDS)}")


_SOLVER_KEYS = {"max_iters": True, "step0": False, "decay": False, "tol_opt": False, "tol_feas": False,
                "restarts": True, "polish_iters": True}


def load_config(data: dict, source: str = "<dict>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a table/object")
    known = {"tree", "generator", "payoff", "z0", "solver", "dual", "el_check", "out", "seed"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{source}: unknown top-level fields {sorted(extra)}")
    cfg = RunConfig(source=source)
    tree = data.get("tree", {})
    cfg.T = _num(tree, "T", "tree.", default=1.0, lo=0.0, lo_strict=True)
    cfg.N = _num(tree, "N", "tree.", default=4, lo=1, integer=True)
    if cfg.N > DEFAULT_MAX_DEPTH:
        raise ConfigError(f"field 'tree.N': out of range, must be <= {DEFAULT_MAX_DEPTH}, got {cfg.N}")
    refine = tree.get("refine_N", [])
    if not isinstance(refine, list) or any(isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= DEFAULT_MAX_DEPTH for n in refine):
        raise ConfigError(f"field 'tree.refine_N': expected a list of integers in 1..{DEFAULT_MAX_DEPTH}")
    cfg.refine_N = list(refine)

    cfg.generator = dict(data.get("generator", {"kind": "quadratic"}))
    cfg.payoff = dict(data.get("payoff", {"kind": "abs"}))
    make_generator(cfg.generator)
    make_payoff(cfg.payoff, build_tree(cfg.T, cfg.N))
    cfg.z0 = _num(data, "z0", "", default=0.0)

    solver = dict(data.get("solver", {}))
    for k, v in solver.items():
        if k == "method":
            if v not in ("smoothed", "subgradient"):
                raise ConfigError(f"field 'solver.method': expected 'smoothed' or 'subgradient', got {v!r}")
            continue
        if k not in _SOLVER_KEYS:
            raise ConfigError(f"field 'solver.{k}': unknown solver option; allowed {sorted(_SOLVER_KEYS) + ['method']}")
        solver[k] = _num(solver, k, "solver.", lo=0, lo_strict=True, integer=_SOLVER_KEYS[k])
    cfg.solver = solver

    dual = dict(data.get("dual", {}))
    dt = cfg.T / cfg.N
    if "kernel" in dual:
        kern = dual["kernel"]
        if not isinstance(kern, list) or not kern or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in kern):
            raise ConfigError("field 'dual.kernel': expected a non-empty list of numbers (one per time piece)")
        if max(abs(x) for x in kern) * math.sqrt(dt) >= 1:
            raise ConfigError("field 'dual.kernel': |q|*sqrt(dt) must stay below 1")
    dual["pieces"] = _num(dual, "pieces", "dual.", default=2, lo=1, integer=True)
    dual["q_max"] = _num(dual, "q_max", "dual.", default=0.5 / math.sqrt(dt), lo=0.0)
    if dual["q_max"] * math.sqrt(dt) >= 1:
        raise ConfigError(f"field 'dual.q_max': out of range, q_max*sqrt(dt) must be < 1 (dt={dt:g})")
    dual["sweeps"] = _num(dual, "sweeps", "dual.", default=2, lo=1, integer=True)
    dual.setdefault("method", "numeric")
    if dual["method"] not in ("numeric", "closed_form"):
        raise ConfigError(f"field 'dual.method': expected 'numeric' or 'closed_form', got {dual['method']!r}")
    cfg.dual = dual

    el = dict(data.get("el_check", {}))
    el.setdefault("kernels", [[0.5], [0.8, -0.3]])
    el.setdefault("N_fine", [500, 1000, 2000])
    if not all(isinstance(k, list) and k for k in el["kernels"]):
        raise ConfigError("field 'el_check.kernels': expected a list of non-empty lists")
    if not all(isinstance(n, int) and 1 <= n <= 10**5 for n in el["N_fine"]):
        raise ConfigError("field 'el_check.N_fine': expected integers in 1..100000")
    cfg.el_check = el

    cfg.out = str(data.get("out", "out"))
    cfg.seed = _num(data, "seed", "", default=0, lo=0, integer=True)
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a ``.toml`` or ``.json`` run configuration."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text()
    try:
        if p.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from None
    return load_config(data, str(p))
