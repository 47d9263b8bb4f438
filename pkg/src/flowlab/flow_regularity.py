"""Difference-quotient norms, Sobolev witness fitting, flow derivatives,
and the discrete local maximal function.

The central object is the quotient inequality: a random field x -> X(x) is
weakly differentiable iff there is a nonnegative g with

    ||X(x,.) - X(y,.)||_{L^p(Omega; L^r(T))} <= |x-y| (g(x) + g(y)).

We estimate the left side from synchronously coupled ensembles and fit the
minimal grid witness g by iterated proportional assignment. The companion
device is the local maximal function M_R: the pointwise bound
|f(x)-f(y)| <= 2^d |x-y| (M_R|grad f|(x) + M_R|grad f|(y)) is checked
exhaustively on lattices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import ndimage

from . import mcstats
from .coefficients import SdeProblem
from .integrators import (PathEnsemble, SimulationConfig, simulate_bundle,
                          start_difference)
from .lyapunov import (MomentReport, VERDICT_FAIL, VERDICT_INCONCLUSIVE,
                       VERDICT_PASS)

EXCLUSION_LIMIT = 0.01
WITNESS_MAX_ROUNDS = 100
ENVELOPE_SLOPE_SLACK = 0.1


@dataclass(frozen=True)
class QuotientNorm:
    pair: tuple
    p: float
    r: float
    value: float
    std_error: float
    excluded_fraction: float
    verdict: str


@dataclass(frozen=True)
class SobolevWitness:
    base_grid: np.ndarray
    g: np.ndarray
    g_std_error: np.ndarray
    p: float
    r: float
    envelope_pass: bool
    envelope_C: float
    envelope_gamma: float
    envelope_slope: float
    pair_table: tuple = ()
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FlowDerivativeEstimate:
    x: np.ndarray
    h: float
    times: np.ndarray
    mean_matrix: np.ndarray      # (n_times, d, d)
    variant: str
    value: float
    std_error: float
    step_warning: bool


def _path_time_norm(abs_z: np.ndarray, time_grid: np.ndarray, r: float) -> np.ndarray:
    """Discrete L^r([0,T]) norm per path of t -> |Z_t|; left-endpoint quadrature."""
    if math.isinf(r):
        return np.max(abs_z, axis=1)
    h = np.diff(time_grid)
    return (np.sum(abs_z[:, :-1] ** r * h[None, :], axis=1)) ** (1.0 / r)


def quotient_norm(ensemble: PathEnsemble, pair, p: float, r: float) -> QuotientNorm:
    """||X(x,.) - X(y,.)||_{L^p(Omega; L^r(T))} from a coupled ensemble."""
    if ensemble.coupling is None or not ensemble.coupling.shared_noise:
        raise ValueError("quotient norms need a synchronously coupled ensemble")
    x, y = pair
    sx = ensemble.find_start(x)
    sy = ensemble.find_start(y)
    z = start_difference(ensemble, sx, sy)
    abs_z = np.linalg.norm(z, axis=2)
    ok = ~(ensemble.member_flags(sx) | ensemble.member_flags(sy))
    excluded = 1.0 - float(ok.mean())
    norms = _path_time_norm(abs_z[ok], ensemble.time_grid, r)
    value, se = mcstats.power_mean_se(norms, p)
    verdict = VERDICT_INCONCLUSIVE if excluded > EXCLUSION_LIMIT else VERDICT_PASS
    return QuotientNorm(pair=(np.asarray(x, dtype=float).tolist(),
                              np.asarray(y, dtype=float).tolist()),
                        p=p, r=r, value=float(value), std_error=float(se),
                        excluded_fraction=excluded, verdict=verdict)


def _fit_witness(q_matrix: np.ndarray) -> np.ndarray:
    """Minimal g with q_ij <= g_i + g_j by iterated proportional assignment.

    Start from g_i = max_j q_ij / 2 and raise g_i to max_j (q_ij - g_j)+
    until fixpoint (at most WITNESS_MAX_ROUNDS sweeps). The iteration only
    increases g and is bounded by max q, so it terminates.
    """
    G = q_matrix.shape[0]
    masked = np.where(np.isfinite(q_matrix), q_matrix, -np.inf)
    g = 0.5 * np.max(masked, axis=1)
    g = np.maximum(g, 0.0)
    for _ in range(WITNESS_MAX_ROUNDS):
        shortfall = masked - g[None, :]
        candidate = np.maximum(np.max(shortfall, axis=1), 0.0)
        new_g = np.maximum(g, candidate)
        if np.all(new_g <= g + 1e-15):
            return new_g
        g = new_g
    return g


def _envelope_regression(base_grid: np.ndarray, g: np.ndarray, alpha: float):
    """Log-regress the witness against the growth envelope shape.

    alpha > 0: regress log g on (1+|x|^2)^alpha; the envelope exp{(1+|x|^2)^alpha}
    has unit slope, so the fit passes when slope <= 1 + slack. alpha = 0:
    regress log g on log(1+|x|^2); the exponent gamma is free, so any finite
    fit passes and gamma is reported.
    """
    nsq = np.einsum("nd,nd->n", base_grid, base_grid)
    pos = g > 0
    if pos.sum() < 2:
        return True, float(np.max(g, initial=0.0)), 0.0, 0.0
    ly = np.log(g[pos])
    if alpha > 0:
        lx = (1.0 + nsq[pos]) ** alpha
    else:
        lx = np.log(1.0 + nsq[pos])
    if np.ptp(lx) < 1e-12:
        slope = 0.0
        intercept = float(np.max(ly))
    else:
        slope, intercept = np.polyfit(lx, ly, 1)
    if alpha > 0:
        envelope = np.exp((1.0 + nsq) ** alpha)
        ok = slope <= 1.0 + ENVELOPE_SLOPE_SLACK
        gamma = 0.0
    else:
        gamma = max(float(slope), 0.0)
        envelope = (1.0 + nsq) ** gamma
        ok = True
    with np.errstate(divide="ignore"):
        C = float(np.max(g / envelope))
    return bool(ok), C, gamma, float(slope)


def witness_fit(problem: SdeProblem, config: SimulationConfig, base_grid,
                p: float, r: float, max_pairs: int = 120) -> SobolevWitness:
    """Fit the minimal grid witness g realizing the quotient inequality.

    All starts are integrated under one shared Brownian flow, pairwise
    quotients are normalized by the exact initial separation, and the
    growth-envelope shape is tested by log-regression.
    """
    d = problem.field.d
    grid = np.asarray(base_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1) if d == 1 else grid.reshape(1, -1)
    G = grid.shape[0]
    if G < 3:
        raise ValueError("witness fitting needs at least 3 base points")
    ens = simulate_bundle(problem, config, grid, share_noise=True,
                          kind="synchronous")

    all_pairs = list(combinations(range(G), 2))
    if len(all_pairs) > max_pairs:
        stride = max(1, len(all_pairs) // max_pairs)
        all_pairs = all_pairs[::stride][:max_pairs]

    q = np.full((G, G), -np.inf)
    q_se = np.zeros((G, G))
    table = []
    for i, j in all_pairs:
        z = start_difference(ens, i, j)
        sep = float(np.linalg.norm(z[0, 0]))
        if sep == 0.0:
            continue
        ok = ~(ens.member_flags(i) | ens.member_flags(j))
        norms = _path_time_norm(np.linalg.norm(z[ok], axis=2), ens.time_grid, r)
        value, se = mcstats.power_mean_se(norms, p)
        q[i, j] = q[j, i] = value / sep
        q_se[i, j] = q_se[j, i] = se / sep
        table.append((i, j, sep, float(value), float(se),
                      float(1.0 - ok.mean())))

    g = _fit_witness(q)
    g_se = 0.5 * np.max(np.where(np.isfinite(q), q_se, 0.0), axis=1)
    alpha = problem.growth.alpha if problem.growth is not None else 1.0
    env_ok, C, gamma, slope = _envelope_regression(grid, g, alpha)
    return SobolevWitness(base_grid=grid, g=g, g_std_error=g_se, p=p, r=r,
                          envelope_pass=env_ok, envelope_C=C,
                          envelope_gamma=gamma, envelope_slope=slope,
                          pair_table=tuple(table),
                          detail={"alpha": alpha, "n_pairs": len(table),
                                  "seed": config.seed})


def witness_envelope_bound(witness: SobolevWitness, x, alpha: float) -> float:
    nsq = float(np.sum(np.asarray(x, dtype=float) ** 2))
    if alpha > 0:
        return witness.envelope_C * math.exp((1.0 + nsq) ** alpha)
    return witness.envelope_C * (1.0 + nsq) ** witness.envelope_gamma


def fd_gradient(problem: SdeProblem, config: SimulationConfig, x, h: float,
                p: float, variant: str = "sup-of-expectation",
                witness: Optional[SobolevWitness] = None,
                check_step: bool = True) -> tuple[FlowDerivativeEstimate, MomentReport]:
    """Central-difference flow derivative from a shared-noise stencil.

    variant "sup-of-expectation": sup over grid times of E|grad X_t|^p;
    variant "expectation-of-sup": E[(sup over grid times |grad X_t|)^p].
    The matrix norm is Frobenius. A witness supplies the envelope bound for
    the MomentReport; without one the bound is +inf (shape-only report).
    """
    if variant not in ("sup-of-expectation", "expectation-of-sup"):
        raise ValueError(f"unknown variant {variant!r}")
    d = problem.field.d
    x_arr = np.asarray(x, dtype=float).reshape(d)

    def run(step_size):
        starts = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = step_size
            starts.append(x_arr + e)
            starts.append(x_arr - e)
        ens = simulate_bundle(problem, config, np.asarray(starts),
                              share_noise=True, kind="synchronous")
        ok = np.ones(config.n_paths, dtype=bool)
        cols = []
        for i in range(d):
            z = start_difference(ens, 2 * i, 2 * i + 1) / (2.0 * step_size)
            cols.append(z)
            ok &= ~(ens.member_flags(2 * i) | ens.member_flags(2 * i + 1))
        grad = np.stack(cols, axis=3)          # (n_rep, K+1, d, d)
        frob = np.sqrt(np.einsum("nkij,nkij->nk", grad, grad))[ok]
        if variant == "sup-of-expectation":
            per_time = np.mean(frob ** p, axis=0)
            k_star = int(np.argmax(per_time))
            value, se = mcstats.mean_se(frob[:, k_star] ** p)
        else:
            sup_vals = np.max(frob, axis=1) ** p
            value, se = mcstats.mean_se(sup_vals)
        mean_matrix = np.mean(grad[ok], axis=0)
        return ens.time_grid, mean_matrix, float(value), float(se), float(1.0 - ok.mean())

    times, mean_matrix, value, se, excluded = run(h)
    step_warning = False
    if check_step:
        _, _, value_half, _, _ = run(h / 2.0)
        denom = max(abs(value), 1e-300)
        step_warning = abs(value_half - value) / denom > 0.20

    alpha = problem.growth.alpha if problem.growth is not None else 1.0
    bound = witness_envelope_bound(witness, x_arr, alpha) if witness is not None else math.inf
    passed = value <= bound
    if excluded > EXCLUSION_LIMIT:
        verdict = VERDICT_INCONCLUSIVE
    else:
        verdict = VERDICT_PASS if passed else VERDICT_FAIL
    estimate = FlowDerivativeEstimate(
        x=x_arr, h=float(h), times=times, mean_matrix=mean_matrix,
        variant=variant, value=value, std_error=se, step_warning=step_warning)
    report = MomentReport(time=float(times[-1]), estimate=value, std_error=se,
                          bound=float(bound), passed=bool(passed),
                          n_paths=config.n_paths, exploded_fraction=excluded,
                          verdict=verdict,
                          detail={"variant": variant, "h": h, "p": p,
                                  "step_warning": step_warning})
    return estimate, report


# ---------------------------------------------------------------------------
# discrete local maximal function


def maximal_function(values: np.ndarray, spacing: float, radius: float) -> np.ndarray:
    """Local maximal function on a uniform lattice.

    M_R g(x) = max over discretized radii s = 0, h, 2h, ..., <= R of the
    average of |g| over in-domain lattice nodes within Euclidean distance s
    of x. The zero radius (the node itself) represents the s -> 0 limit of
    ball averages. Works in any dimension; boundary balls are restricted to
    the domain.
    """
    arr = np.abs(np.asarray(values, dtype=float))
    if radius < spacing:
        raise ValueError("radius must be at least the lattice spacing")
    ndim = arr.ndim
    best = arr.copy()                      # j = 0 term
    j_max = int(math.floor(radius / spacing + 1e-12))
    ones = np.ones_like(arr)
    for j in range(1, j_max + 1):
        ax = np.arange(-j, j + 1)
        mesh = np.meshgrid(*([ax] * ndim), indexing="ij")
        dist_sq = sum(m**2 for m in mesh)
        kernel = (dist_sq <= j * j).astype(float)
        sums = ndimage.convolve(arr, kernel, mode="constant", cval=0.0)
        counts = ndimage.convolve(ones, kernel, mode="constant", cval=0.0)
        best = np.maximum(best, sums / counts)
    return best


@dataclass(frozen=True)
class LatticeLipschitzReport:
    n_pairs: int
    n_violations: int
    worst_margin: float
    passed: bool


def lipschitz_witness_check(f_values: np.ndarray, grad_values: np.ndarray,
                            spacing: float, radius: float,
                            max_separation: float = math.inf) -> LatticeLipschitzReport:
    """Exhaustive lattice check of |f(x)-f(y)| <= 2^d |x-y| (M_R|grad f|(x)+M_R|grad f|(y)).

    1-D lattices only (the flow witnesses live on 1-D grids); grad_values
    holds the analytic |f'| samples.
    """
    f = np.asarray(f_values, dtype=float).ravel()
    M = maximal_function(np.asarray(grad_values, dtype=float).ravel(), spacing, radius)
    n = f.size
    idx = np.arange(n)
    xi, yi = np.meshgrid(idx, idx, indexing="ij")
    mask = xi < yi
    sep = (yi - xi) * spacing
    if math.isfinite(max_separation):
        mask &= sep <= max_separation
    lhs = np.abs(f[xi] - f[yi])
    rhs = 2.0 * sep * (M[xi] + M[yi])      # 2^d with d = 1
    margin = np.where(mask, lhs - rhs, -np.inf)
    worst = float(np.max(margin))
    violations = int(np.sum(margin > 1e-12))
    return LatticeLipschitzReport(n_pairs=int(mask.sum()),
                                  n_violations=violations,
                                  worst_margin=worst,
                                  passed=violations == 0)
