"""Monte Carlo checks of exponential/polynomial moment bounds and steering.

The exponential bound: for alpha > 0 and any decay rate lam >= 2*alpha*
C_{alpha+1}, E exp{e^{-lam t}(1+|X_t|^2)^alpha} <= exp{(1+|x|^2)^alpha}. The
polynomial branch (alpha = 0): E(1+|X_t|^2)^p <= e^{lam t}(1+|x|^2)^p for
lam >= 2p C_{p-1/2}. Both are continuous-time statements, so every check
carries a Richardson-style bias slack alongside the 3-SE statistical slack.

A rate below the admissible threshold does not make a check fail; it makes
the premise unverified and the verdict says so.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import mcstats, rng
from .coefficients import CoefficientField, SdeProblem
from .integrators import PathEnsemble, SimulationConfig, first_exit_index, simulate
from ._parallel import parallel_map

VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_INCONCLUSIVE = "inconclusive"
VERDICT_UNVERIFIED = "unverified-premise"

TAIL_MASS_LIMIT = 0.5


@dataclass(frozen=True)
class LyapunovSpec:
    alpha: float
    lam: float
    p: float = 1.0

    def admissible_for(self, problem: SdeProblem) -> Optional[bool]:
        """True/False against the problem's growth constants, None if unknowable."""
        g = problem.growth
        if g is None:
            return None
        if self.alpha > 0:
            return self.lam >= g.exp_moment_rate() - 1e-12
        return self.lam >= g.poly_moment_rate(self.p) - 1e-12


@dataclass(frozen=True)
class MomentReport:
    time: float
    estimate: float
    std_error: float
    bound: float
    passed: bool
    n_paths: int
    exploded_fraction: float
    verdict: str
    bias: float = 0.0
    detail: dict = field(default_factory=dict)


def _verdict(estimate, se, bound, bias, exploded_fraction, tail_mass, admissible):
    passed = bool(estimate <= bound + 3.0 * se + bias)
    if admissible is False:
        return VERDICT_UNVERIFIED, passed
    if exploded_fraction > 0 or tail_mass > TAIL_MASS_LIMIT:
        return VERDICT_INCONCLUSIVE, passed
    return (VERDICT_PASS if passed else VERDICT_FAIL), passed


def _grid_index(ensemble: PathEnsemble, t: float) -> int:
    k = int(np.argmin(np.abs(ensemble.time_grid - t)))
    if abs(ensemble.time_grid[k] - t) > 1e-9 + 1e-9 * abs(t):
        raise ValueError(f"time {t} is not on the simulation grid")
    return k


def exp_moment_check(problem: SdeProblem, config: SimulationConfig, x,
                     spec: LyapunovSpec, times, bias: float = 0.0,
                     ensemble: Optional[PathEnsemble] = None) -> list[MomentReport]:
    """E exp{e^{-lam t}(1+|X_t|^2)^alpha} against exp{(1+|x|^2)^alpha} per time."""
    if spec.alpha <= 0:
        raise ValueError("exp_moment_check applies to the alpha > 0 branch")
    admissible = spec.admissible_for(problem)
    ens = ensemble if ensemble is not None else simulate(problem, config, x)
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    bound = math.exp((1.0 + float(x_arr @ x_arr)) ** spec.alpha)
    reports = []
    for t in times:
        k = _grid_index(ens, t)
        xt = ens.states[:, k, :]
        nsq = np.einsum("nd,nd->n", xt, xt)
        vals = np.exp(math.exp(-spec.lam * t) * (1.0 + nsq) ** spec.alpha)
        ok = ~ens.exploded
        est, se = mcstats.mean_se(vals[ok])
        tail = mcstats.tail_mass_fraction(vals[ok])
        verdict, passed = _verdict(est, se, bound, bias, 1.0 - ok.mean(), tail, admissible)
        reports.append(MomentReport(
            time=float(t), estimate=est, std_error=se, bound=bound,
            passed=passed, n_paths=int(ok.sum()),
            exploded_fraction=float(1.0 - ok.mean()), verdict=verdict,
            bias=bias, detail={"lambda": spec.lam, "alpha": spec.alpha,
                               "tail_mass": tail}))
    return reports


def poly_moment_check(problem: SdeProblem, config: SimulationConfig, x,
                      p: float, lam: float, times, bias: float = 0.0,
                      ensemble: Optional[PathEnsemble] = None) -> list[MomentReport]:
    """E(1+|X_t|^2)^p against e^{lam t}(1+|x|^2)^p per time."""
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    g = problem.growth
    admissible = None if g is None else lam >= g.poly_moment_rate(p) - 1e-12
    ens = ensemble if ensemble is not None else simulate(problem, config, x)
    x_arr = np.asarray(x, dtype=float).reshape(-1)
    base = (1.0 + float(x_arr @ x_arr)) ** p
    reports = []
    for t in times:
        k = _grid_index(ens, t)
        xt = ens.states[:, k, :]
        vals = (1.0 + np.einsum("nd,nd->n", xt, xt)) ** p
        ok = ~ens.exploded
        est, se = mcstats.mean_se(vals[ok])
        tail = mcstats.tail_mass_fraction(vals[ok])
        bound = math.exp(lam * t) * base
        verdict, passed = _verdict(est, se, bound, bias, 1.0 - ok.mean(), tail, admissible)
        reports.append(MomentReport(
            time=float(t), estimate=est, std_error=se, bound=bound,
            passed=passed, n_paths=int(ok.sum()),
            exploded_fraction=float(1.0 - ok.mean()), verdict=verdict,
            bias=bias, detail={"lambda": lam, "p": p, "tail_mass": tail}))
    return reports


@dataclass(frozen=True)
class SupermartingaleReport:
    times: tuple
    estimates: tuple
    std_errors: tuple
    passed: bool
    verdict: str
    worst_increase: float
    detail: dict = field(default_factory=dict)


def supermartingale_test(problem: SdeProblem, config: SimulationConfig, x,
                         spec: LyapunovSpec, stop_radius: float,
                         grid) -> SupermartingaleReport:
    """t -> E f(t ^ tau_R, X_{t ^ tau_R}) should be nonincreasing.

    f(t,x) = exp{e^{-lam t}(1+|x|^2)^alpha}. Consecutive-pair slack uses the
    paired per-path differences, which is tighter than pooling marginal SEs.
    """
    if stop_radius > config.r_cap:
        raise ValueError("stop radius above the explosion cap")
    admissible = spec.admissible_for(problem)
    ens = simulate(problem, config, x)
    exit_idx = first_exit_index(ens, stop_radius)
    times = [float(t) for t in grid]
    ks = [_grid_index(ens, t) for t in times]

    # stopped state and stopped time per path per requested grid time
    P = ens.n_paths
    vals = np.empty((len(ks), P))
    for j, k in enumerate(ks):
        stopped_k = np.minimum(k, exit_idx)
        xt = ens.states[np.arange(P), stopped_k, :]
        ts = ens.time_grid[stopped_k]
        nsq = np.einsum("nd,nd->n", xt, xt)
        vals[j] = np.exp(np.exp(-spec.lam * ts) * (1.0 + nsq) ** spec.alpha)

    estimates, ses = [], []
    for j in range(len(ks)):
        est, se = mcstats.mean_se(vals[j])
        estimates.append(est)
        ses.append(se)
    worst = -math.inf
    for j in range(len(ks) - 1):
        diff = vals[j + 1] - vals[j]
        dmean, dse = mcstats.mean_se(diff)
        worst = max(worst, dmean - 3.0 * dse)
    passed = worst <= 0.0
    if admissible is False:
        verdict = VERDICT_UNVERIFIED
    else:
        verdict = VERDICT_PASS if passed else VERDICT_FAIL
    return SupermartingaleReport(
        times=tuple(times), estimates=tuple(estimates), std_errors=tuple(ses),
        passed=passed, verdict=verdict, worst_increase=float(worst),
        detail={"lambda": spec.lam, "alpha": spec.alpha, "R": stop_radius})


def steered_problem(problem: SdeProblem, m: float, y0) -> SdeProblem:
    """The steered SDE dY = -m(Y - y0)dt + b dt + sigma dW."""
    y0_arr = np.asarray(y0, dtype=float).reshape(1, -1)
    base = problem.field
    if y0_arr.shape[1] != base.d:
        raise ValueError(f"y0 must have dimension {base.d}")

    def drift(t, x):
        return -m * (x - y0_arr) + base.drift_batch(t, x)

    def diffusion(t, x):
        return base.diffusion_batch(t, x)

    return SdeProblem(
        field=CoefficientField(drift, diffusion, base.d, base.m),
        growth=None,
        preset_id=f"steered({problem.preset_id}, m={m:g})",
        description=f"{problem.preset_id} with steering -{m:g}(y - y0)")


@dataclass(frozen=True)
class SteeringReport:
    m_values: tuple
    C0: float
    C1: float
    per_m_passed: tuple
    sup_estimates: tuple
    sup_stable: bool
    passed: bool
    verdict: str
    detail: dict = field(default_factory=dict)


def steering_contraction_check(problem: SdeProblem, config: SimulationConfig,
                               x0, y0, m_values, n_check_times: int = 21,
                               threads: Optional[int] = None) -> SteeringReport:
    """Fit E|Y_t - y0|^2 <= C0 e^{-mt}|x0-y0|^2 + C1/sqrt(m) at the smallest m,
    then check the fitted bound at the larger m values with 3-SE slack.

    Also checks that E sup_t |Y_t|^2 is stable between the full path count
    and a tenth of it (independent streams), the finiteness surrogate.
    """
    ms = sorted(float(m) for m in m_values)
    if not ms or ms[0] < 1.0:
        raise ValueError("steering rates must satisfy m >= 1")
    x0_arr = np.asarray(x0, dtype=float).reshape(-1)
    y0_arr = np.asarray(y0, dtype=float).reshape(-1)
    sep_sq = float(np.sum((x0_arr - y0_arr) ** 2))

    def run(idx_m):
        idx, m = idx_m
        cfg = replace(config, stream=rng.child_stream(config.stream, idx))
        ens = simulate(steered_problem(problem, m, y0_arr), cfg, x0_arr)
        K = ens.n_steps
        ks = sorted({int(round(f * K)) for f in np.linspace(0.0, 1.0, n_check_times)})
        rows = []
        dev = ens.states - y0_arr[None, None, :]
        dev_sq = np.einsum("nkd,nkd->nk", dev, dev)
        for k in ks:
            est, se = mcstats.mean_se(dev_sq[:, k])
            rows.append((float(ens.time_grid[k]), est, se))
        nrm_sq = np.einsum("nkd,nkd->nk", ens.states, ens.states)
        sup_est, sup_se = mcstats.mean_se(np.max(nrm_sq, axis=1))
        exploded = ens.exploded_fraction
        return rows, (sup_est, sup_se), exploded

    results = parallel_map(run, list(enumerate(ms)), threads)
    exploded_any = any(r[2] > 0 for r in results)

    # fit (C0, C1) at the smallest m
    rows0 = results[0][0]
    m0 = ms[0]
    late = [est for (t, est, se) in rows0 if t >= 0.5 * rows0[-1][0]]
    C1 = math.sqrt(m0) * max(late) if late else 0.0
    C0 = 1.0
    for t, est, se in rows0:
        resid = est - C1 / math.sqrt(m0)
        if resid > 2.0 * se and sep_sq > 0:
            C0 = max(C0, resid * math.exp(m0 * t) / sep_sq)

    per_m = []
    for (m, (rows, _, _)) in zip(ms, results):
        ok = True
        for t, est, se in rows:
            bound = C0 * math.exp(-m * t) * sep_sq + C1 / math.sqrt(m)
            if est > bound + 3.0 * se:
                ok = False
                break
        per_m.append(ok)

    # sup-moment stability across a 10x path-count drop
    small_cfg = replace(config, n_paths=max(config.n_paths // 10, 100),
                        stream=rng.child_stream(config.stream, 10_000))
    ens_small = simulate(steered_problem(problem, ms[-1], y0_arr), small_cfg, x0_arr)
    nrm_sq = np.einsum("nkd,nkd->nk", ens_small.states, ens_small.states)
    sup_small, sup_small_se = mcstats.mean_se(np.max(nrm_sq, axis=1))
    sup_full, sup_full_se = results[-1][1]
    sup_stable = abs(sup_full - sup_small) <= 3.0 * mcstats.pooled_se(sup_full_se, sup_small_se)

    passed = all(per_m) and sup_stable
    verdict = VERDICT_INCONCLUSIVE if exploded_any else (VERDICT_PASS if passed else VERDICT_FAIL)
    return SteeringReport(
        m_values=tuple(ms), C0=float(C0), C1=float(C1),
        per_m_passed=tuple(per_m),
        sup_estimates=(float(sup_full), float(sup_small)),
        sup_stable=bool(sup_stable), passed=bool(passed and not exploded_any),
        verdict=verdict,
        detail={"x0": x0_arr.tolist(), "y0": y0_arr.tolist(),
                "separation_sq": sep_sq})
