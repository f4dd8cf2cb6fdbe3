"""Monte-Carlo checks of the extremal approximations and the Δ recursion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .dag import Kind
from .delta import DeltaConfig, build_delta_table
from .extremal import (
    NO_PRIOR,
    BivariatePair,
    ExtremalPrior,
    GaussianBelief,
    extremum_of_set,
    max_moments_pair,
    min_moments_pair,
)
from .oracles import mc_extremal_moments

PAIR_ALLOWANCE = 0.02
FOLD_ALLOWANCE = 0.03


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}"


def random_pair_config(rng: np.random.Generator, with_prior: bool):
    a = GaussianBelief(float(rng.uniform(-2, 2)), float(rng.uniform(0.05, 3.0)))
    b = GaussianBelief(float(rng.uniform(-2, 2)), float(rng.uniform(0.05, 3.0)))
    rho = float(rng.uniform(-0.9, 0.9))
    prior = None
    if with_prior:
        prior = (float(rng.uniform(-2, 2)), float(rng.uniform(0.3, 3.0)))
    return BivariatePair(a, b, rho), prior


def compare(approx: GaussianBelief, report, allowance: float) -> dict:
    err_mean = abs(approx.mean - report.estimate["mean"])
    err_std = abs(approx.std - report.estimate["std"])
    tol_mean = 3 * report.standard_error["mean"] + allowance
    tol_std = 3 * report.standard_error["std"] + allowance
    return {
        "approx": [approx.mean, approx.std],
        "mc": [report.estimate["mean"], report.estimate["std"]],
        "err": [err_mean, err_std],
        "tol": [tol_mean, tol_std],
        "ok": bool(err_mean <= tol_mean and err_std <= tol_std and report.reliable),
    }


def check_pairwise(configs: int = 200, samples: int = 100_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    details = []
    for i in range(configs):
        pair, prior = random_pair_config(rng, with_prior=i % 2 == 1)
        kind = "max" if i % 4 < 2 else "min"
        ep = ExtremalPrior(None if prior is None else GaussianBelief(*prior))
        approx = max_moments_pair(pair, ep) if kind == "max" else min_moments_pair(pair, ep)
        corr = [[1.0, pair.correlation], [pair.correlation, 1.0]]
        rep = mc_extremal_moments([pair.a, pair.b], corr, prior, samples, rng, kind)
        details.append(compare(approx, rep, PAIR_ALLOWANCE))
    bad = [d for d in details if not d["ok"]]
    worst = max(max(d["err"][0] - d["tol"][0], d["err"][1] - d["tol"][1]) for d in details)
    return CheckResult(f"pairwise moments vs Monte-Carlo ({configs} configs)", not bad,
                       {"failures": len(bad), "worst_margin": worst})


def check_closed_form(tol: float = 1e-3) -> CheckResult:
    b = max_moments_pair(BivariatePair(GaussianBelief(0, 1), GaussianBelief(0, 1)), NO_PRIOR)
    m_ok = abs(b.mean - 1 / math.sqrt(math.pi)) <= tol
    v_ok = abs(b.variance - (1 - 1 / math.pi)) <= tol
    return CheckResult("max of two iid standard normals (closed form)", m_ok and v_ok,
                       {"mean": b.mean, "variance": b.variance})


def check_duality_dominance(configs: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(configs):
        pair, prior = random_pair_config(rng, with_prior=i % 2 == 1)
        ep = ExtremalPrior(None if prior is None else GaussianBelief(*prior))
        mx = max_moments_pair(pair, ep)
        neg = BivariatePair(-pair.a, -pair.b, pair.correlation)
        mn = min_moments_pair(neg, ep.negated())
        worst = max(worst, abs(mx.mean + mn.mean), abs(mx.variance - mn.variance))
    dominant = max_moments_pair(BivariatePair(GaussianBelief(0, 1), GaussianBelief(-1000, 1)))
    dom_err = max(abs(dominant.mean), abs(dominant.variance - 1))
    return CheckResult("min/max duality and dominance", worst <= 1e-12 and dom_err <= 1e-12,
                       {"duality_error": worst, "dominance_error": dom_err})


def check_three_fold(samples: int = 1_000_000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    three = [GaussianBelief(0, 1)] * 3
    out = []
    for prior in (None, (0.0, 1.0)):
        ep = ExtremalPrior(None if prior is None else GaussianBelief(*prior))
        approx = extremum_of_set(three, None, ep, "max")
        rep = mc_extremal_moments(three, None, prior, samples, rng)
        out.append(compare(approx, rep, FOLD_ALLOWANCE))
    return CheckResult("three-variable fold vs Monte-Carlo", all(d["ok"] for d in out),
                       {"cases": out})


def check_delta_nested(samples: int = 1_000_000, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    cfg = DeltaConfig(2, (2, 2), 1.0, (Kind.MAX, Kind.MIN), NO_PRIOR)
    table = build_delta_table(cfg)
    d1 = table[1]
    step = GaussianBelief(d1.mean, d1.variance + 1.0)
    rep = mc_extremal_moments([step, step], None, None, samples, rng, "min")
    res = compare(table[2], rep, PAIR_ALLOWANCE)
    return CheckResult("two-level increment table vs nested Monte-Carlo", res["ok"], res)


def run_all(configs: int = 200, samples: int = 100_000, seed: int = 0) -> List[CheckResult]:
    return [
        check_closed_form(),
        check_pairwise(configs, samples, seed),
        check_duality_dominance(configs, seed),
        check_three_fold(seed=seed + 1),
        check_delta_nested(seed=seed + 2),
    ]
