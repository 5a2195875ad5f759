"""Command line driver: ``gammabsde {primal,dual,gap,el-check,suite}``.

Exit codes: 0 success, 1 configuration error, 2 non-convergence,
3 property or verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .dual import Kernel, dual_bound, el_optimizer, inner_value_closed_form, maximize_over_q
from .oracles import qp_inner_oracle
from .optim import SolverConfig
from .primal import minimal_value, verify_supersolution
from .suite import run_suite

__all__ = ["main", "run", "emit_plot_data", "EXIT_OK", "EXIT_CONFIG", "EXIT_NONCONVERGED", "EXIT_PROPERTY"]

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_PROPERTY = 0, 1, 2, 3
EL_TOL = 1e-5


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _meta(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash, "version": __version__, "seed": cfg.seed}


def _constraint_note(gen, sol) -> str:
    dom = gen.domain
    if dom is None or dom.gamma_radius is None:
        return ""
    M = dom.gamma_radius
    gmax = float(np.max(np.abs(sol.ct.gamma)))
    if M == 0.0:
        return "gamma constraint active: M = 0, value is the Gamma == 0 restricted minimum"
    if gmax >= M - 1e-9:
        return f"gamma constraint active: max |Gamma| = {gmax:.6g} at bound M = {M:g}"
    return f"gamma constraint inactive: max |Gamma| = {gmax:.6g} < M = {M:g}"


def _primal(cfg: RunConfig, out: Path, scfg: SolverConfig):
    tree, gen = cfg.tree(), cfg.make_generator()
    xi = cfg.payoff_on(tree)
    value, sol = minimal_value(tree, gen, xi, cfg.z0, scfg)
    ver = verify_supersolution(tree, gen, xi, sol.Y, sol.ct, scfg.tol_feas)
    sol.ct.to_csv(out / "witness.csv", Y=sol.Y, A=sol.A)
    rep = {
        "value": value,
        "converged": sol.report.converged,
        "restart_values": sol.report.restart_values,
        "tolerance": sol.report.tolerance,
        "iterations": sol.report.iterations,
        "method": sol.report.method,
        "note": sol.report.note,
        "constraint": _constraint_note(gen, sol),
        "verification": {"ok": ver.ok, "worst_slack": ver.worst_slack, "worst_location": ver.worst_location,
                          "note": ver.note},
        "decomposition": {"predictable": sol.decomposition.predictable,
                          "increasing": sol.decomposition.increasing,
                          "max_disagreement": sol.decomposition.max_disagreement,
                          "min_increment": sol.decomposition.min_increment},
        **_meta(cfg),
    }
    _dump(out / "primal.json", rep)
    code = EXIT_OK
    if not ver.ok:
        code = EXIT_PROPERTY
    elif not sol.report.converged:
        code = EXIT_NONCONVERGED
    print(f"primal value {value:.10g} (converged={sol.report.converged}, feasible={ver.ok})")
    if rep["constraint"]:
        print(rep["constraint"])
    return value, code


def _dual(cfg: RunConfig, out: Path, scfg: SolverConfig, primal_value: Optional[float] = None):
    tree, gen = cfg.tree(), cfg.make_generator()
    xi = cfg.payoff_on(tree)
    d = cfg.dual
    if "kernel" in d:
        rep = dual_bound(tree, gen, xi, cfg.z0, Kernel(d["kernel"], tree.T), d["method"], primal_value, scfg)
        history = [rep.bound]
    else:
        res = maximize_over_q(tree, gen, xi, cfg.z0, d["pieces"], d["q_max"], scfg, d["sweeps"], primal_value)
        rep, history = res.report, res.history
    _dump(out / "dual.json", rep.to_dict())
    _write_csv(out / "ascent.csv", ["iteration", "bound"], enumerate(history))
    code = EXIT_OK
    if rep.method == "numeric" and rep.inner is not None and not rep.inner.converged:
        code = EXIT_NONCONVERGED
    print(f"dual bound {rep.bound:.10g} (estar={rep.estar:.10g}, method={rep.method})")
    return rep, code


def _el_check(cfg: RunConfig, out: Path):
    rows, worst = [], {}
    for q in cfg.el_check["kernels"]:
        spec = ";".join(repr(float(x)) for x in q)
        cf = inner_value_closed_form(list(q), cfg.T, cfg.z0)
        for n in cfg.el_check["N_fine"]:
            orc = qp_inner_oracle(list(q), cfg.T, cfg.z0, n).estar
            rel = abs(cf - orc) / max(abs(orc), 1e-300)
            rows.append((spec, n, cf, orc, rel))
            worst[spec] = rel  # error at the finest grid listed last
    _write_csv(out / "el_check.csv", ["q-spec", "N_fine", "closed_form", "oracle", "rel_err"], rows)
    curve = []
    for q in cfg.el_check["kernels"]:
        spec = ";".join(repr(float(x)) for x in q)
        el = el_optimizer(list(q), cfg.T, 101)
        curve += [(spec, t, a, b) for t, a, b in zip(el.t, el.delta, el.gamma)]
    _write_csv(out / "el_curve.csv", ["q-spec", "t", "Delta_Q", "Gamma_Q"], curve)
    for r in rows:
        print(f"{r[0]:>16s} N_fine={r[1]:<6d} closed_form={r[2]:.10g} oracle={r[3]:.10g} rel_err={r[4]:.2e}")
    ok = all(v <= EL_TOL for v in worst.values())
    return EXIT_OK if ok else EXIT_PROPERTY


def emit_plot_data(cfg: RunConfig, out, scfg: Optional[SolverConfig] = None) -> Path:
    """Write ``refinement.csv`` (``N, value``), one row per ``tree.refine_N`` entry."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = scfg or cfg.solver_config()
    gen = cfg.make_generator()
    rows = []
    for n in cfg.refine_N:
        tree = cfg.tree(n)
        rows.append((n, minimal_value(tree, gen, cfg.payoff_on(tree), cfg.z0, scfg)[0]))
    path = out / "refinement.csv"
    _write_csv(path, ["N", "value"], rows)
    return path


def run(subcommand: str, cfg: RunConfig, out=None, threads: int = 1) -> int:
    """Execute one subcommand and write its artifacts under ``out``."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scfg = cfg.solver_config(threads)
    _dump(out / "run.json", {"subcommand": subcommand, "config": cfg.canonical(), **_meta(cfg)})
    if subcommand == "primal":
        _, code = _primal(cfg, out, scfg)
        if cfg.refine_N:
            emit_plot_data(cfg, out, scfg)
        return code
    if subcommand == "dual":
        return _dual(cfg, out, scfg)[1]
    if subcommand == "gap":
        value, c1 = _primal(cfg, out, scfg)
        rep, c2 = _dual(cfg, out, scfg, value)
        print(f"gap {rep.gap:.3e} (primal {value:.10g} - bound {rep.bound:.10g})")
        _dump(out / "gap.json", {"primal": value, "bound": rep.bound, "gap": rep.gap, **_meta(cfg)})
        return max(c1, c2)
    if subcommand == "el-check":
        return _el_check(cfg, out)
    if subcommand == "suite":
        tree, gen = cfg.tree(), cfg.make_generator()
        results = run_suite(tree, gen, cfg.payoff_on(tree), cfg.z0, scfg)
        _write_csv(out / "suite.csv", ["property", "ok", "detail"], [(r.name, r.ok, r.detail) for r in results])
        for r in results:
            print(r.line())
        failed = [r.name for r in results if not r.ok]
        print(f"{len(results) - len(failed)}/{len(results)} properties passed")
        return EXIT_PROPERTY if failed else EXIT_OK
    raise ValueError(f"unknown subcommand {subcommand!r}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gammabsde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("primal", "dual", "gap", "el-check", "suite"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="TOML or JSON run configuration (defaults if omitted)")
        s.add_argument("--out", type=Path, help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="restart seed (overrides the config)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for solver restarts")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else load_config({}, "<defaults>")
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError(f"--seed: out of range, expected 0 <= seed < 2**64, got {args.seed}")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError(f"--threads: must be >= 1, got {args.threads}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, cfg, args.out, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
