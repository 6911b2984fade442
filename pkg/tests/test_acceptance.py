"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL criterion N: ...`` line (visible
with ``pytest -v`` or ``-s``) before asserting.
"""

import math
import time

import numpy as np
import pytest

from stochprandtl.fields import Grid
from stochprandtl.gevrey_global import (
    hitting_prob_mc, parameter_recipe, run_global_ensemble, survival_stats,
)
from stochprandtl.harness.cli import cli_main
from stochprandtl.harness.config import parse_config
from stochprandtl.harness.setups import global_from
from stochprandtl.harness.suites import (
    consistency_suite, contraction_suite, identity_suite, noise_estimate_suite, product_estimate_suite,
)
from stochprandtl.noise import OUState, ito_isometry_check, ou_exact, ou_strong_errors, sample_increments
from stochprandtl.physics import corrector_heat_residual


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return report


def test_criterion_01_hitting_probability(verdict):
    p = parameter_recipe(0.1, 10.0, 1.0, 2.0, 4)
    t0 = time.perf_counter()
    res = hitting_prob_mc(p, n_paths=100_000, dt=1e-3, seed=0)
    elapsed = time.perf_counter() - t0
    second_ok = abs(res.second_freq - 0.05) <= 3 * res.second_se
    ok = res.passes and second_ok and res.tail_bound < 1e-4 and elapsed <= 120
    verdict(1, ok, f"survival={res.survival:.4f}+-{res.survival_se:.4f} (bound {res.bound:.2f}), "
                   f"second barrier freq={res.second_freq:.4f}+-{res.second_se:.4f} vs 0.05, "
                   f"horizon T={res.T:.3f} tail={res.tail_bound:.1e}, {elapsed:.1f}s")


def test_criterion_02_ito_isometry(verdict):
    c, dt, steps = 0.7, 0.01, 100
    t0 = time.perf_counter()
    res = ito_isometry_check(np.full((steps, 1), c), dt, 10_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = res.rhs == pytest.approx(c * c * steps * dt) and abs(res.lhs - res.rhs) <= 3 * res.se and elapsed <= 10
    verdict(2, ok, f"E|I|^2={res.lhs:.4f}+-{res.se:.4f} vs c^2 T={res.rhs:.4f} "
                   f"(rel err {res.rel_error:.3f}), {elapsed:.1f}s")


def test_criterion_03_ou_moment_and_strong_order(verdict):
    beta, alpha1, U0 = 1.0, 0.5, 1.0
    s = OUState.initial(beta, alpha1, U0)
    n = 10_000
    B1 = np.array([sample_increments(0, 1, 1, 1.0, path=p).increments[0, 0] for p in range(n)])
    vals = ou_exact(s, B1, 1.0)
    se = vals.std(ddof=1) / math.sqrt(n)
    mean_ok = abs(vals.mean() - U0 * math.e) <= 3 * se
    errs = ou_strong_errors(1.0, 2.0, 1.0, 1.0, [1 / 64, 1 / 128, 1 / 256], 10_000, seed=1)
    ratios = errs[:-1] / errs[1:]
    order_ok = bool(np.all((ratios >= 1.25) & (ratios <= 1.6)))
    verdict(3, mean_ok and order_ok,
            f"mean U(1)={vals.mean():.4f}+-{se:.4f} vs e={math.e:.4f}; "
            f"strong errors {np.array2string(errs, precision=4)}, ratios {np.array2string(ratios, precision=3)}")


def test_criterion_04_corrector_residual(verdict):
    res = [corrector_heat_residual(Grid(Nx=8, Ny=n, Ly=8.0), 0.1, 0.25) for n in (128, 256, 512)]
    ratios = [a / b for a, b in zip(res, res[1:])]
    ok = all(3.5 <= r <= 4.5 for r in ratios)
    verdict(4, ok, f"residuals {', '.join(f'{r:.3e}' for r in res)}; ratios {', '.join(f'{r:.3f}' for r in ratios)}")


def test_criterion_05_product_estimates(verdict):
    reps = [product_estimate_suite(), noise_estimate_suite()]
    ok = all(r.passed for r in reps) and reps[0].case_count >= 100
    drifts = {c.name: c.drift for r in reps for c in r.checks if c.kind == "ratio"}
    worst = max(d for d in drifts.values() if d is not None)
    verdict(5, ok, f"{reps[0].case_count} product pairs, {reps[1].case_count} noise cases, "
                   f"worst drift {worst:.3f}, failures {[f for r in reps for f in r.failures()]}")


def test_criterion_06_identities(verdict):
    rep = identity_suite()
    m = {c.name: c.max_value for c in rep.checks}
    verdict(6, rep.passed, f"commutator {m['commutator']:.1e}, parseval {m['parseval']:.1e}, "
                           f"ibp orders {np.round(rep.meta['ibp_orders'], 3).tolist()}")


@pytest.mark.slow
def test_criterion_07_picard_contraction(verdict):
    rep = contraction_suite(n_paths=32, seed=0, threads=4, min_cases=32)
    ratios = rep.meta["median_ratios"]
    ok = rep.passed and len(ratios) >= 1 and all(r < 1 for r in ratios)
    verdict(7, ok, f"32 paths, median ratios {np.array2string(np.array(ratios), precision=3)}")


def test_criterion_08_scheme_I_consistency(verdict):
    rep = consistency_suite(n_paths=2)
    d = rep.meta["distances"]
    slopes = next(c.values for c in rep.checks if c.name == "loglog_slope")
    verdict(8, rep.passed, f"distances {[{k: f'{v:.2e}' for k, v in r.items()} for r in d]}, "
                           f"slopes {np.round(slopes, 2).tolist()}")


@pytest.mark.slow
def test_criterion_09_global_energy_decay(verdict):
    gs = global_from(parse_config(""))
    recs = run_global_ensemble(gs.params, gs.run, seed=0, threads=4)
    st = survival_stats(recs, gs.params.eps)
    surv = [r for r in recs if r.survived and not r.aborted]
    over_unit = all(r.times[-1] == pytest.approx(1.0) or r.T_2delta is not None for r in surv)
    ok = (st["survivors"] >= gs.run.min_survivors and st["survivors_monotone"] == st["survivors"]
          and st["target_consistent"] and st["margin_nonnegative"] == st["survivors"]
          and st["aborted"] == 0 and over_unit)
    verdict(9, ok, f"{st['survivors']}/{st['n_paths']} survivors, monotone {st['survivors_monotone']}, "
                   f"max rel increase {st['max_rel_increase']:.1e}, Wilson 95% "
                   f"[{st['wilson_95'][0]:.3f}, {st['wilson_95'][1]:.3f}] vs {st['target']:.2f}, "
                   f"margin ok {st['margin_nonnegative']}")


LOCAL_CFG = "[run]\nseed = 11\npaths = 3\n[grid]\nNx = 8\nNy = 24\n[local]\ns = 2\nT = 0.006\n"
GLOBAL_CFG = "[run]\nseed = 11\n[global]\nT = 0.03\npaths = 3\nmin_survivors = 1\n[global.grid]\nNx = 8\nNy = 24\n"


def test_criterion_10_thread_determinism(verdict, tmp_path, monkeypatch, capsys):
    same = {}
    for cmd, text in (("run-local", LOCAL_CFG), ("run-global", GLOBAL_CFG)):
        cfg = tmp_path / f"{cmd}.cfg"
        cfg.write_text(text)
        outs = []
        for tag, env in (("t1", None), ("t8", "8")):
            if env is None:
                monkeypatch.delenv("PRANDTL_THREADS", raising=False)
            else:
                monkeypatch.setenv("PRANDTL_THREADS", env)
            out = tmp_path / f"{cmd}-{tag}"
            code = cli_main([cmd, "--config", str(cfg), "--out-dir", str(out), "--threads", "1"])
            capsys.readouterr()
            assert code == 0
            outs.append((out / "report.json").read_bytes())
        same[cmd] = outs[0] == outs[1]
    verdict(10, all(same.values()), f"byte-identical report.json at 1 vs 8 threads: {same}")
