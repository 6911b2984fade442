"""Command-line entry point.

Subcommands: ``run-local``, ``run-global``, ``run-bernoulli``, ``verify``,
``mc-hitting`` and ``replay``. Exit codes are 0 on success, 1 on a failed
suite or assertion, and 2 on a configuration error.

``report.json`` holds no timings or thread counts, so a fixed seed and
config give the same bytes whatever ``--threads`` is.
"""

from __future__ import annotations

import argparse
import inspect
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..fields import TangentialField, save_field
from ..gevrey_global import (global_run, hitting_prob_mc, sigma_fan, survival_stats)
from ..local_solver import picard_iterate, scheme_I_solve, trajectory_energy
from ..noise import (BernoulliConfig, NoiseSpec, OUState, WienerPath, make_rng, ou_exact,
                     run_bernoulli, sample_increments)
from ..norms import hx_norm
from ..physics import CutoffParams
from .config import ConfigError, RunConfig, load_config, parse_config
from .corpus import random_tangential
from .records import RunDir, dumps, read_json, write_csv, write_json, write_svg
from .setups import (LocalSetup, bernoulli_from, global_from, local_from, mc_from, run_section)
from .suites import SUITES

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="plain-text run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides [run] seed)")
    common.add_argument("--paths", type=int, help="number of sample paths")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (PRANDTL_THREADS overrides)")
    common.add_argument("--emit-plots", action="store_true", help="write SVG charts under plots/")

    p = argparse.ArgumentParser(prog="stochprandtl", description=__doc__.splitlines()[1])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run-local", parents=[common], help="local solver (scheme I or II) on an ensemble")
    sub.add_parser("run-global", parents=[common], help="transformed global experiment")
    sub.add_parser("run-bernoulli", parents=[common], help="outflow law alone")
    v = sub.add_parser("verify", parents=[common], help="certification suites")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])
    sub.add_parser("mc-hitting", parents=[common], help="barrier hitting probability by Monte Carlo")
    r = sub.add_parser("replay", parents=[common], help="re-run recorded paths and compare bytes")
    r.add_argument("run_dir", nargs="?", help="directory written by run-local or run-global")
    r.add_argument("--only", type=int, help="replay a single path index")
    return p


def resolve_threads(flag: int | None) -> int:
    env = os.environ.get("PRANDTL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"PRANDTL_THREADS must be an integer, got {env!r}") from exc
    else:
        n = flag or 1
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _pmap(fn, items, threads: int) -> list:
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _config(args) -> tuple[RunConfig, str]:
    if args.config is None:
        return RunConfig(), ""
    cfg = load_config(args.config)
    return cfg, Path(args.config).read_text()


def _out(args, default: str) -> RunDir:
    return RunDir(args.out_dir or os.path.join("prandtl-out", default)).prepare()


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


# -- run-local ----------------------------------------------------------------------------------

def local_path(setup: LocalSetup, seed: int, index: int, path: WienerPath | None = None):
    """One local run; returns ``(record dict, final field, Wiener path)``."""
    cfg = setup.scheme_config()
    if path is None:
        path = sample_increments(seed, cfg.steps, cfg.K, cfg.dt, path=index)
    w0 = setup.initial_data(seed, index)
    outflow = setup.outflow_schedule(seed, index)
    if setup.scheme == "I":
        rec, traj = scheme_I_solve(cfg, path, w0, outflow, keep_fields=True)
        return rec.to_dict(), traj.at(len(traj) - 1), path
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        res = picard_iterate(cfg, path, w0, outflow)
    final = res.iterates[-1]
    tr = trajectory_energy(final, cfg)
    rec = {
        "seed": seed, "path_index": index, "config_hash": cfg.config_hash(), "scheme": "II",
        "times": list(tr.times), "energy": tr.energies().tolist(),
        "picard_increments": res.increments, "picard_ratios": res.ratios,
        "converged": res.converged, "warnings": [str(w.message) for w in caught],
    }
    return rec, final.at(len(final) - 1), path


def _local_summary(rec: dict) -> dict:
    e = rec["energy"]
    out = {"path_index": rec["path_index"], "steps": len(rec["times"]) - 1,
           "final_energy": e[-1], "max_energy": max(e)}
    if rec["scheme"] == "I":
        out.update(T_star=rec["T_star"], tau_out=rec["tau_out"], tau_3M=rec["tau_3M"],
                   aborted=rec["aborted"], abort_reason=rec["abort_reason"])
    else:
        out.update(sweeps=len(rec["picard_increments"]), converged=rec["converged"],
                   last_increment=rec["picard_increments"][-1])
    return out


def cmd_run_local(args, cfg: RunConfig, text: str, threads: int) -> int:
    setup = local_from(cfg)
    run = run_section(cfg)
    seed = run["seed"] if args.seed is None else args.seed
    n = run["paths"] if args.paths is None else args.paths
    if n < 1:
        raise ConfigError("--paths must be >= 1")
    out = _out(args, "local")
    results = _pmap(lambda p: local_path(setup, seed, p), range(n), threads)
    for rec, final, path in results:
        i = rec["path_index"]
        write_json(out.path_file(i), rec)
        save_field(final, out.field_file(f"final_{i:05d}"))
        path.save(out.field_file(f"wiener_{i:05d}"))
    recs = [r for r, _, _ in results]
    report = {
        "command": "run-local", "version": __version__, "seed": seed, "paths": n,
        "setup": setup.to_dict(), "config_hash": setup.scheme_config().config_hash(),
        "config_text": text, "summaries": [_local_summary(r) for r in recs],
        "aggregate": {"max_energy": max(max(r["energy"]) for r in recs),
                      "aborted": sum(1 for r in recs if r.get("aborted"))},
    }
    write_json(out.report, report)
    if args.emit_plots:
        write_svg(out.plot_file("energy.svg"),
                  {f"path {r['path_index']}": (r["times"], r["energy"]) for r in recs},
                  "Local energy", "t", "energy")
    _emit(f"run-local: {n} paths -> {out.root}\n")
    return EXIT_OK


# -- run-global ---------------------------------------------------------------------------------

def cmd_run_global(args, cfg: RunConfig, text: str, threads: int) -> int:
    setup = global_from(cfg)
    run_sec = run_section(cfg)
    seed = run_sec["seed"] if args.seed is None else args.seed
    rc = setup.run if args.paths is None else replace(setup.run, n_paths=args.paths)
    if rc.n_paths < 1:
        raise ConfigError("--paths must be >= 1")
    params = setup.params
    out = _out(args, "global")
    records = _pmap(lambda p: global_run(params, rc, seed, p), range(rc.n_paths), threads)
    for r in records:
        write_json(out.path_file(r.path_index), r.to_dict(series=True))
    stats = survival_stats(records, params.eps)
    stats["enough_survivors"] = stats["survivors"] >= rc.min_survivors
    stats["all_survivors_monotone"] = stats["survivors_monotone"] == stats["survivors"]
    q = (0.05, 0.25, 0.5, 0.75, 0.95)
    times, fan = sigma_fan(params, rc, seed, rc.n_paths, q)
    floor = params.sigma0 / 2 + params.lam * times / 2
    write_csv(out.root / "sigma_fan.csv", ["t"] + [f"q{int(100 * v):02d}" for v in q] + ["floor"],
              np.column_stack([times, fan.T, floor]))
    p1, p2 = params.bound_terms()
    report = {
        "command": "run-global", "version": __version__, "seed": seed, "paths": rc.n_paths,
        "params": params.to_dict(), "run": rc.to_dict(), "calibrated": setup.calibrated,
        "config_text": text,
        "bound": {"first_barrier": p1, "second_barrier": p2, "survival_bound": params.survival_bound()},
        "survival": stats,
        "summaries": [r.to_dict(series=False) for r in records],
    }
    write_json(out.report, report)
    if args.emit_plots:
        write_svg(out.plot_file("energy.svg"),
                  {f"path {r.path_index}": (r.times, r.energy) for r in records[:12]},
                  "Transformed energy", "t", "energy", logy=True)
        series = {f"q{int(100 * v)}": (times, fan[i]) for i, v in enumerate(q)}
        series["(sigma0 + lam t)/2"] = (times, floor)
        write_svg(out.plot_file("sigma_fan.svg"), series, "Radius quantiles", "t", "sigma")
    _emit(f"run-global: {stats['survivors']}/{rc.n_paths} survivors, "
          f"Wilson 95% {stats['wilson_95'][0]:.3f}..{stats['wilson_95'][1]:.3f} -> {out.root}\n")
    return EXIT_OK


# -- run-bernoulli ------------------------------------------------------------------------------

def cmd_run_bernoulli(args, cfg: RunConfig, text: str, threads: int) -> int:
    st = bernoulli_from(cfg)
    run = run_section(cfg)
    seed = run["seed"] if args.seed is None else args.seed
    n = run["paths"] if args.paths is None else args.paths
    if n < 1:
        raise ConfigError("--paths must be >= 1")
    steps = int(round(st.T / st.dt))
    g = st.grid
    out = _out(args, "bernoulli")
    if st.mode == "ou":
        noise = NoiseSpec.linear_only(g, 1, Gbar=st.alpha1)
        bcfg = BernoulliConfig(noise, lambda t, V: V * (-st.beta), st.dt, st.s, st.sigma0, 0.0,
                               CutoffParams(M=1e12))
    else:
        bcfg = BernoulliConfig(NoiseSpec.zero(g, 1), lambda t, V: V * 0.0, st.dt, st.s, st.sigma0,
                               0.0, CutoffParams(M=1e12))

    def one(p):
        path = sample_increments(seed, steps, 1, st.dt, path=p)
        if st.mode == "ou":
            U0 = TangentialField.constant(g, st.U0)
        else:
            U0 = random_tangential(g, make_rng(seed, p, 303), st.kmax, st.amp)
        states = run_bernoulli(U0, path, bcfg)
        rec = {"path_index": p, "times": [s.t for s in states],
               "mean": [float(s.U.coeffs[(0,) + (0,) * (g.d - 1)].real) for s in states],
               "hx_norm": [hx_norm(s.U, st.s, 0.0) for s in states]}
        if st.mode == "ou":
            B = np.concatenate([[0.0], np.cumsum(path.increments[:, 0])])
            exact = ou_exact(OUState.initial(st.beta, st.alpha1, st.U0), B, np.asarray(rec["times"]))
            rec["exact"] = exact.tolist()
            rec["strong_error"] = float(abs(rec["mean"][-1] - exact[-1]))
        return rec

    recs = _pmap(one, range(n), threads)
    for r in recs:
        write_json(out.path_file(r["path_index"]), r)
    report = {"command": "run-bernoulli", "version": __version__, "seed": seed, "paths": n,
              "setup": st.to_dict(), "config_text": text}
    if st.mode == "ou":
        finals = np.array([r["mean"][-1] for r in recs])
        target = st.U0 * math.exp(st.beta * st.T)
        se = float(finals.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        report["ou"] = {"mean_U_T": float(finals.mean()), "se": se, "exact_mean": target,
                        "z": float((finals.mean() - target) / se) if se > 0 else 0.0,
                        "mean_strong_error": float(np.mean([r["strong_error"] for r in recs]))}
    else:
        report["transport"] = {"max_hx_norm": max(max(r["hx_norm"]) for r in recs),
                               "final_hx_norm": [r["hx_norm"][-1] for r in recs]}
    write_json(out.report, report)
    if args.emit_plots:
        write_svg(out.plot_file("outflow.svg"),
                  {f"path {r['path_index']}": (r["times"], r["mean"]) for r in recs[:12]},
                  "Outflow mean", "t", "mean U")
    _emit(f"run-bernoulli ({st.mode}): {n} paths -> {out.root}\n")
    return EXIT_OK


# -- verify -------------------------------------------------------------------------------------

def run_suite(name: str, seed: int | None, threads: int):
    fn = SUITES[name]
    kw = {}
    sig = inspect.signature(fn).parameters
    if "threads" in sig:
        kw["threads"] = threads
    if "seed" in sig and seed is not None:
        kw["seed"] = seed
    return fn(**kw)


def cmd_verify(args, cfg: RunConfig, text: str, threads: int) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    reports = []
    for name in names:
        rep = run_suite(name, args.seed, threads)
        reports.append(rep)
        _emit(f"{'PASS' if rep.passed else 'FAIL'} {name} ({rep.case_count} cases)\n")
        for chk in rep.checks:
            _emit(f"    {'ok  ' if chk.passed else 'FAIL'} {chk.name}: max={chk.max_value:.3e}\n")
    ok = all(r.passed for r in reports)
    if args.out_dir:
        out = RunDir(args.out_dir).prepare()
        write_json(out.report, {"command": "verify", "version": __version__, "suites": names,
                                "passed": ok, "reports": [r.to_dict() for r in reports]})
    return EXIT_OK if ok else EXIT_FAIL


# -- mc-hitting ---------------------------------------------------------------------------------

def cmd_mc_hitting(args, cfg: RunConfig, text: str, threads: int) -> int:
    params = global_from(cfg).params
    mc = mc_from(cfg)
    seed = run_section(cfg)["seed"] if args.seed is None else args.seed
    n = mc.paths if args.paths is None else args.paths
    if n < 2:
        raise ConfigError("--paths must be >= 2")
    res = hitting_prob_mc(params, n_paths=n, dt=mc.dt, T=mc.T, seed=seed, threads=threads,
                          block_size=mc.block, tail_tol=mc.tail_tol)
    doc = {"command": "mc-hitting", "version": __version__, "seed": seed,
           "params": params.to_dict(), "result": res.to_dict()}
    _emit(dumps(doc))
    if args.out_dir:
        write_json(RunDir(args.out_dir).prepare().report, doc)
    return EXIT_OK if res.passes else EXIT_FAIL


# -- replay -------------------------------------------------------------------------------------

def cmd_replay(args, cfg: RunConfig, text: str, threads: int) -> int:
    root = args.run_dir or args.out_dir
    if root is None:
        raise ConfigError("replay needs a run directory")
    out = RunDir(root)
    if not out.report.is_file():
        raise ConfigError(f"no report.json in {root}")
    rep = read_json(out.report)
    rcfg = parse_config(rep.get("config_text", ""), str(out.report))
    seed = rep["seed"]
    idx = list(range(rep["paths"])) if args.only is None else [args.only]
    if any(i < 0 or i >= rep["paths"] for i in idx):
        raise ConfigError(f"path index out of range 0..{rep['paths'] - 1}")
    if rep["command"] == "run-local":
        setup = local_from(rcfg)

        def redo(i):
            wf = out.field_file(f"wiener_{i:05d}")
            path = WienerPath.load(wf) if wf.is_file() else None
            return local_path(setup, seed, i, path)[0]
    elif rep["command"] == "run-global":
        gs = global_from(rcfg)
        rc = replace(gs.run, n_paths=rep["paths"])

        def redo(i):
            return global_run(gs.params, rc, seed, i).to_dict(series=True)
    else:
        raise ConfigError(f"cannot replay a {rep['command']!r} report")
    fresh = _pmap(redo, idx, threads)
    bad = []
    for i, rec in zip(idx, fresh):
        f = out.path_file(i)
        if not f.is_file() or f.read_text() != dumps(rec):
            bad.append(i)
    _emit(f"replay: {len(idx) - len(bad)}/{len(idx)} paths identical"
          + (f"; mismatched: {bad}" if bad else "") + "\n")
    return EXIT_OK if not bad else EXIT_FAIL


COMMANDS = {
    "run-local": cmd_run_local,
    "run-global": cmd_run_global,
    "run-bernoulli": cmd_run_bernoulli,
    "verify": cmd_verify,
    "mc-hitting": cmd_mc_hitting,
    "replay": cmd_replay,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        threads = resolve_threads(args.threads)
        cfg, text = _config(args)
        return COMMANDS[args.command](args, cfg, text, threads)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
