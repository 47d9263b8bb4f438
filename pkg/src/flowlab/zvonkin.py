"""Drift splitting, backward PDE solve, diffeomorphism construction, and
conjugacy verification (the singular-drift regularization pipeline).

The chain: split b = b1 + b2 with a quintic-smoothstep cutoff; solve the
backward equation dt_u + (1/2) sigma^2 u'' + b1 u' + b1 = lambda u with
u(T) = 0 on a box; escalate lambda by doubling until the smallness test
sup|u| + sup|u'| <= 1/2 holds; build Phi_t(x) = x + u(t,x) chi_{2R0}(x),
its inverse, and the transformed coefficients

    sigma~ = (Phi' . sigma) o Phi^{-1},   b~ = (h + b2 . Phi') o Phi^{-1},

where h = sigma^2 u' chi' + (1/2) u sigma^2 chi'' + lambda u chi (the two
cancelled cross terms vanish because supp(b1) and supp(grad chi_{2R0}) are
disjoint, which is asserted at build time). One spatial dimension is
supported; rectangular 2-D grids are an extension hook, not shipped.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .coefficients import CoefficientField, SdeProblem
from .integrators import PathEnsemble, SimulationConfig, simulate

SMALLNESS_LIMIT = 0.5
MAX_LAMBDA_DOUBLINGS = 40


class PdeSolveError(RuntimeError):
    """Smallness unattainable or grid rejected."""


def smoothstep(s: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 -> 0, 1 -> 1, C^2 with vanishing end derivatives."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def smoothstep_d1(s: np.ndarray) -> np.ndarray:
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * s**2 * (1.0 - s) ** 2, 0.0)


def smoothstep_d2(s: np.ndarray) -> np.ndarray:
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 60.0 * s * (1.0 - 3.0 * s + 2.0 * s**2), 0.0)


class CutoffProfile:
    """chi_R: 1 on |x| <= R, 0 on |x| >= 2R, quintic smoothstep in between."""

    def __init__(self, R: float):
        self.R = float(R)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = np.abs(np.asarray(x, dtype=float))
        return 1.0 - smoothstep((r - self.R) / self.R)

    def d1(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.abs(x)
        return -smoothstep_d1((r - self.R) / self.R) / self.R * np.sign(x)

    def d2(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.abs(x)
        return -smoothstep_d2((r - self.R) / self.R) / self.R**2

    @property
    def grad_bound(self) -> float:
        """sup |chi'| = 1.875 / R (max of the smoothstep derivative is 30/16)."""
        return 1.875 / self.R


@dataclass(frozen=True)
class DriftSplit:
    b1: Callable
    b2: Callable
    R0: float
    chi: CutoffProfile
    grad_chi_sup: float
    reconstruction_error: float


def split_drift(problem: SdeProblem, R0: float,
                audit_grid: Optional[np.ndarray] = None) -> DriftSplit:
    """b = b*chi_{R0} + b*(1 - chi_{R0}); requires the normalization R0 >= 4."""
    if R0 < 4.0:
        raise ValueError("cutoff radius must satisfy R0 >= 4 (so |grad chi| <= 1/2)")
    if problem.field.d != 1:
        raise NotImplementedError("drift splitting ships for d = 1")
    chi = CutoffProfile(R0)
    base = problem.field

    def b1(t, x):
        return base.drift_batch(t, x) * chi(x[:, 0])[:, None]

    def b2(t, x):
        return base.drift_batch(t, x) * (1.0 - chi(x[:, 0]))[:, None]

    if audit_grid is None:
        audit_grid = np.linspace(-4.0 * R0, 4.0 * R0, 1601).reshape(-1, 1)
    full = base.drift_batch(0.0, audit_grid)
    recon = b1(0.0, audit_grid) + b2(0.0, audit_grid)
    scale = np.max(np.abs(full)) or 1.0
    err = float(np.max(np.abs(recon - full)) / scale)
    if err > 1e-12:
        raise PdeSolveError(f"drift reconstruction error {err:.2e} exceeds 1e-12")
    grad_sup = chi.grad_bound
    if grad_sup > 0.5 + 1e-12:
        raise PdeSolveError(f"cutoff gradient bound {grad_sup:.3f} exceeds 1/2")
    return DriftSplit(b1=b1, b2=b2, R0=float(R0), chi=chi,
                      grad_chi_sup=grad_sup, reconstruction_error=err)


@dataclass(frozen=True)
class PdeGridSpec:
    x_min: float
    x_max: float
    n_x: int = 801
    n_t: int = 201
    horizon: float = 1.0

    def x_grid(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_t)


@dataclass(frozen=True)
class PdeSolution:
    lam: float
    t_grid: np.ndarray
    x_grid: np.ndarray
    u: np.ndarray        # (n_t, n_x)
    du: np.ndarray
    d2u: np.ndarray
    sup_u: float
    sup_du: float
    accepted: bool
    boundary_margin: float
    detail: dict = field(default_factory=dict)


def solve_backward_pde(b1, sigma, lam: float, grid: PdeGridSpec,
                       support_radius: Optional[float] = None) -> PdeSolution:
    """Implicit backward time stepping of dt_u + L u + b1 = lambda u, u(T) = 0.

    Second-order central differences in space, homogeneous Dirichlet lateral
    boundaries (the source is compactly supported; the margin between its
    support and the box edge is recorded). Each backward step solves one
    tridiagonal system, unconditionally stable.
    """
    xs = grid.x_grid()
    ts = grid.t_grid()
    n_x, n_t = xs.size, ts.size
    dx = xs[1] - xs[0]
    pts = xs.reshape(-1, 1)

    u = np.zeros((n_t, n_x))
    for j in range(n_t - 2, -1, -1):
        t = float(ts[j])
        dt_step = float(ts[j + 1] - ts[j])
        sig = np.asarray(sigma(t, pts), dtype=float).reshape(n_x)
        if np.any(sig <= 0.0):
            raise PdeSolveError("diffusion is not elliptic on the grid")
        bb = np.asarray(b1(t, pts), dtype=float).reshape(n_x)
        a_diff = 0.5 * sig**2 / dx**2
        a_conv = bb / (2.0 * dx)
        # rows of I + dt*(lam - L)
        lower = dt_step * (-a_diff + a_conv)
        diag = 1.0 + dt_step * (lam + 2.0 * a_diff)
        upper = dt_step * (-a_diff - a_conv)
        rhs = u[j + 1] + dt_step * bb
        ab = np.zeros((3, n_x))
        ab[0, 1:] = upper[:-1]
        ab[1, :] = diag
        ab[2, :-1] = lower[1:]
        # Dirichlet edges
        ab[1, 0] = ab[1, -1] = 1.0
        ab[0, 1] = 0.0
        ab[2, -2] = 0.0
        rhs[0] = rhs[-1] = 0.0
        u[j] = solve_banded((1, 1), ab, rhs)

    du = np.gradient(u, xs, axis=1)
    d2u = np.gradient(du, xs, axis=1)
    sup_u = float(np.max(np.abs(u)))
    sup_du = float(np.max(np.abs(du)))
    margin = (min(abs(grid.x_min), grid.x_max) - support_radius
              if support_radius is not None else math.nan)
    return PdeSolution(lam=float(lam), t_grid=ts, x_grid=xs, u=u, du=du,
                       d2u=d2u, sup_u=sup_u, sup_du=sup_du,
                       accepted=sup_u + sup_du <= SMALLNESS_LIMIT,
                       boundary_margin=float(margin),
                       detail={"dx": float(dx), "dt": float(ts[1] - ts[0])})


def solve_with_smallness(b1, sigma, grid: PdeGridSpec, lam0: float = 1.0,
                         support_radius: Optional[float] = None,
                         max_doublings: int = MAX_LAMBDA_DOUBLINGS):
    """Double lambda until the smallness test sup|u| + sup|u'| <= 1/2 holds.

    Returns (solution, trace) where trace rows are (lambda, sup_u, sup_du).
    """
    lam = float(lam0)
    trace = []
    for _ in range(max_doublings + 1):
        sol = solve_backward_pde(b1, sigma, lam, grid, support_radius)
        trace.append((lam, sol.sup_u, sol.sup_du))
        if sol.accepted:
            return sol, trace
        lam *= 2.0
    raise PdeSolveError(
        f"smallness not reached within {max_doublings} doublings; "
        f"last norms sup_u={trace[-1][1]:.3g}, sup_du={trace[-1][2]:.3g}")


def solve_stationary(b1, sigma, lam: float, grid: PdeGridSpec) -> np.ndarray:
    """Elliptic companion solve (1/2) sigma^2 u'' + b1 u' + b1 = lambda u (oracle)."""
    xs = grid.x_grid()
    n_x = xs.size
    dx = xs[1] - xs[0]
    pts = xs.reshape(-1, 1)
    sig = np.asarray(sigma(0.0, pts), dtype=float).reshape(n_x)
    bb = np.asarray(b1(0.0, pts), dtype=float).reshape(n_x)
    a_diff = 0.5 * sig**2 / dx**2
    a_conv = bb / (2.0 * dx)
    lower = -a_diff + a_conv
    diag = lam + 2.0 * a_diff
    upper = -a_diff - a_conv
    rhs = bb.copy()
    ab = np.zeros((3, n_x))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    ab[1, 0] = ab[1, -1] = 1.0
    ab[0, 1] = 0.0
    ab[2, -2] = 0.0
    rhs[0] = rhs[-1] = 0.0
    return solve_banded((1, 1), ab, rhs)


@dataclass(frozen=True)
class SandwichReport:
    passed: bool
    worst_low: float     # min pair slope (want >= 1/2)
    worst_high: float    # max pair slope (want <= 3/2)
    violating_pair: Optional[tuple]


@dataclass(frozen=True)
class ZvonkinTransform:
    solution: PdeSolution
    R0: float
    R1: float
    chi2: CutoffProfile
    phi: np.ndarray        # (n_t, n_x) tabulated Phi_t(x)
    phi_inv: np.ndarray    # (n_t, n_x) tabulated inverse on the same grid
    dphi: np.ndarray       # (n_t, n_x) tabulated spatial derivative
    h: np.ndarray          # (n_t, n_x) auxiliary drift field
    sigma_tab: np.ndarray  # (n_t, n_x) transformed diffusion on the grid
    b_tab: np.ndarray      # (n_t, n_x) transformed drift on the grid
    sandwich: SandwichReport
    problem_id: str
    _offset_splines: tuple = field(default=(), repr=False, compare=False)
    _sigma_splines: tuple = field(default=(), repr=False, compare=False)
    _b_splines: tuple = field(default=(), repr=False, compare=False)

    def _blend(self, splines, t, y):
        # a + w*(b - a) so agreeing slices blend bit-exactly
        ts = self.solution.t_grid
        j = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        w = min(max(w, 0.0), 1.0)
        a = splines[j](y)
        return a + w * (splines[j + 1](y) - a)

    def apply(self, t: float, x: np.ndarray) -> np.ndarray:
        """Phi_t(x) = x + interpolated offset; identity outside |x| >= R1 (bit-exact)."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        inside = np.abs(x) < self.R1
        if np.any(inside):
            xi = x[inside]
            out[inside] = xi + self._blend(self._offset_splines, float(t), xi)
        return out

    def apply_inverse(self, t: float, y: np.ndarray) -> np.ndarray:
        """Phi_t^{-1}(y) by monotone bracketing plus Newton on the spline."""
        y = np.asarray(y, dtype=float)
        out = y.copy()
        inside = np.abs(y) < self.R1
        if not np.any(inside):
            return out
        ts = self.solution.t_grid
        xs = self.solution.x_grid
        j = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        w = min(max(w, 0.0), 1.0)
        phi_t = self.phi[j] + w * (self.phi[j + 1] - self.phi[j])
        target = y[inside]
        z = np.interp(target, phi_t, xs)
        spline = self._offset_splines[j]
        spline_next = self._offset_splines[j + 1]
        for _ in range(12):
            off = spline(z)
            val = z + off + w * (spline_next(z) - off)
            doff = spline(z, 1)
            der = 1.0 + doff + w * (spline_next(z, 1) - doff)
            step = (val - target) / np.maximum(der, 0.25)
            z = np.clip(z - step, xs[0], xs[-1])
            if np.max(np.abs(val - target)) < 1e-13:
                break
        out[inside] = z
        return out

    def transformed_problem(self, base: SdeProblem) -> SdeProblem:
        """The SDE for Y = Phi_t(X): coefficients sigma~, b~ with identity tails."""
        R1 = self.R1

        def drift(t, x):
            v = x[:, 0]
            out = np.empty_like(v)
            inside = np.abs(v) < R1
            if np.any(~inside):
                out[~inside] = base.field.drift_batch(t, x[~inside])[:, 0]
            if np.any(inside):
                out[inside] = self._blend(self._b_splines, float(t), v[inside])
            return out[:, None]

        def diffusion(t, x):
            v = x[:, 0]
            out = np.empty_like(v)
            inside = np.abs(v) < R1
            if np.any(~inside):
                out[~inside] = base.field.diffusion_batch(t, x[~inside])[:, 0, 0]
            if np.any(inside):
                out[inside] = self._blend(self._sigma_splines, float(t), v[inside])
            return out[:, None, None]

        return SdeProblem(
            field=CoefficientField(drift, diffusion, 1, 1),
            growth=None,
            preset_id=f"zvonkin({self.problem_id})",
            description="coefficients pushed through the drift-removing diffeomorphism")


def _sandwich_check(phi: np.ndarray, xs: np.ndarray) -> SandwichReport:
    """Exhaustive grid-pair bi-Lipschitz check per time slice."""
    worst_low, worst_high = math.inf, -math.inf
    violator = None
    n = xs.size
    sep = xs[None, :] - xs[:, None]
    iu = np.triu_indices(n, k=1)
    sep_u = sep[iu]
    for j in range(phi.shape[0]):
        dphi = phi[j][None, :] - phi[j][:, None]
        slopes = dphi[iu] / sep_u
        lo = float(np.min(slopes))
        hi = float(np.max(slopes))
        if lo < worst_low:
            worst_low = lo
            if lo < 0.5 - 1e-12:
                k = int(np.argmin(slopes))
                violator = (float(xs[iu[0][k]]), float(xs[iu[1][k]]), j)
        if hi > worst_high:
            worst_high = hi
            if hi > 1.5 + 1e-12:
                k = int(np.argmax(slopes))
                violator = (float(xs[iu[0][k]]), float(xs[iu[1][k]]), j)
    passed = worst_low >= 0.5 - 1e-12 and worst_high <= 1.5 + 1e-12
    return SandwichReport(passed=passed, worst_low=worst_low,
                          worst_high=worst_high, violating_pair=violator)


def build_transform(problem: SdeProblem, split: DriftSplit,
                    solution: PdeSolution) -> ZvonkinTransform:
    """Assemble Phi, its inverse, h, and the transformed coefficients.

    Rejects when the solution fails the smallness test or the exhaustive
    bi-Lipschitz sandwich fails on any grid pair.
    """
    if not solution.accepted:
        raise PdeSolveError("PDE solution does not satisfy the smallness test")
    R0 = split.R0
    chi2 = CutoffProfile(2.0 * R0)
    R1 = 4.0 * R0
    xs = solution.x_grid
    ts = solution.t_grid
    if xs[0] > -R1 or xs[-1] < R1:
        raise PdeSolveError("grid box must contain the cutoff support |x| <= 4 R0")
    pts = xs.reshape(-1, 1)

    # support disjointness behind the two cancelled terms: b1 * chi2' = 0
    b1_vals = np.asarray(split.b1(0.0, pts), dtype=float).reshape(-1)
    cross = float(np.max(np.abs(b1_vals * chi2.d1(xs))))
    if cross > 1e-12:
        raise PdeSolveError(f"b1 and grad chi_{{2R0}} overlap: max |b1 chi'| = {cross:.2e}")

    chi_v = chi2(xs)
    chi_d1 = chi2.d1(xs)
    chi_d2 = chi2.d2(xs)
    phi = xs[None, :] + solution.u * chi_v[None, :]
    dphi = 1.0 + solution.du * chi_v[None, :] + solution.u * chi_d1[None, :]

    sandwich = _sandwich_check(phi, xs)
    if not sandwich.passed:
        raise PdeSolveError(
            f"bi-Lipschitz sandwich violated at pair {sandwich.violating_pair}: "
            f"slopes in [{sandwich.worst_low:.3f}, {sandwich.worst_high:.3f}]")

    n_t = ts.size
    h_field = np.empty_like(solution.u)
    sigma_tab = np.empty_like(solution.u)
    b_tab = np.empty_like(solution.u)
    phi_inv = np.empty_like(solution.u)
    offset_splines = []
    for j in range(n_t):
        t = float(ts[j])
        sig = np.asarray(problem.field.diffusion_batch(t, pts), dtype=float).reshape(-1)
        sig_sq = sig**2
        h_field[j] = (sig_sq * solution.du[j] * chi_d1
                      + 0.5 * solution.u[j] * sig_sq * chi_d2
                      + solution.lam * solution.u[j] * chi_v)
        # interpolate the offset u*chi rather than Phi itself: identity
        # regions then evaluate bit-exactly as x + 0
        spline = CubicSpline(xs, solution.u[j] * chi_v)
        offset_splines.append(spline)
        # tabulated inverse: monotone bracket by interpolation then Newton
        z = np.interp(xs, phi[j], xs)
        for _ in range(12):
            val = z + spline(z) - xs
            der = np.maximum(1.0 + spline(z, 1), 0.25)
            z = np.clip(z - val / der, xs[0], xs[-1])
            if np.max(np.abs(val)) < 1e-13:
                break
        phi_inv[j] = z
        b2_vals = np.asarray(split.b2(t, pts), dtype=float).reshape(-1)
        b_tilde_at_x = h_field[j] + b2_vals * dphi[j]
        sigma_tilde_at_x = dphi[j] * sig
        # compose with the inverse: tabulate sigma~, b~ at the grid nodes
        b_tab[j] = CubicSpline(xs, b_tilde_at_x)(z)
        sigma_tab[j] = CubicSpline(xs, sigma_tilde_at_x)(z)

    inv_err = 0.0
    for j in range(n_t):
        inv_err = max(inv_err, float(np.max(np.abs(
            phi_inv[j] + offset_splines[j](phi_inv[j]) - xs))))
    if inv_err > 1e-10:
        raise PdeSolveError(f"inverse consistency error {inv_err:.2e}")

    sigma_splines = tuple(CubicSpline(xs, sigma_tab[j]) for j in range(n_t))
    b_splines = tuple(CubicSpline(xs, b_tab[j]) for j in range(n_t))
    return ZvonkinTransform(solution=solution, R0=R0, R1=R1, chi2=chi2,
                            phi=phi, phi_inv=phi_inv, dphi=dphi, h=h_field,
                            sigma_tab=sigma_tab, b_tab=b_tab,
                            sandwich=sandwich, problem_id=problem.preset_id,
                            _offset_splines=tuple(offset_splines),
                            _sigma_splines=sigma_splines,
                            _b_splines=b_splines)


@dataclass(frozen=True)
class ConjugacyReport:
    dt_levels: tuple
    medians: tuple
    ratios: tuple
    monotone: bool
    ratios_in_band: bool
    passed: bool
    excluded_fractions: tuple
    detail: dict = field(default_factory=dict)


def conjugacy_check(problem: SdeProblem, transform: ZvonkinTransform,
                    config: SimulationConfig, x,
                    dt_levels=(1e-2, 1e-3, 1e-4),
                    ratio_band=(1.2, 3.0)) -> ConjugacyReport:
    """Pathwise error max_t |Y_t - Phi_t(X_t)| under matched increments.

    X runs under (b, sigma), Y under the transformed coefficients from
    Phi_0(x), with identical Brownian increments (same seed/stream/step
    addresses). The medians across paths must decrease through the dt
    levels with consecutive ratios inside `ratio_band`.
    """
    x_arr = np.asarray(x, dtype=float).reshape(1)
    y0 = transform.apply(0.0, x_arr)
    transformed = transform.transformed_problem(problem)
    medians, excluded = [], []
    for dt in sorted(dt_levels, reverse=True):
        cfg = replace(config, dt=dt)
        ens_x = simulate(problem, cfg, x_arr)
        ens_y = simulate(transformed, cfg, y0)
        ok = ~(ens_x.exploded | ens_y.exploded)
        # evaluate Phi on a thinned set of grid times to bound the cost
        K = ens_x.n_steps
        ks = sorted({int(round(f * K)) for f in np.linspace(0.0, 1.0, 101)})
        err = np.zeros(int(ok.sum()))
        for k in ks:
            t = float(ens_x.time_grid[k])
            phi_x = transform.apply(t, ens_x.states[ok, k, 0])
            err = np.maximum(err, np.abs(ens_y.states[ok, k, 0] - phi_x))
        medians.append(float(np.median(err)))
        excluded.append(float(1.0 - ok.mean()))
    ratios = tuple(medians[i] / medians[i + 1] for i in range(len(medians) - 1))
    monotone = all(medians[i] > medians[i + 1] for i in range(len(medians) - 1))
    in_band = all(ratio_band[0] <= r <= ratio_band[1] for r in ratios)
    return ConjugacyReport(dt_levels=tuple(sorted(dt_levels, reverse=True)),
                           medians=tuple(medians), ratios=ratios,
                           monotone=monotone, ratios_in_band=in_band,
                           passed=monotone and in_band,
                           excluded_fractions=tuple(excluded),
                           detail={"x": float(x_arr[0]), "y0": float(y0[0])})


# ---------------------------------------------------------------------------
# binary serialization

_ZVK1_MAGIC = b"ZVK1"


def _write_array(fh, arr: np.ndarray):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<I", arr.ndim))
    for s in arr.shape:
        fh.write(struct.pack("<Q", s))
    fh.write(arr.tobytes())


def _read_array(fh) -> np.ndarray:
    ndim = struct.unpack("<I", fh.read(4))[0]
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
    n = int(np.prod(shape)) if shape else 1
    return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()


def write_zvk1(path: str, solution: PdeSolution,
               transform: Optional[ZvonkinTransform] = None) -> None:
    """Binary dump: magic "ZVK1", version, kind (1 solution / 2 +transform),
    lambda, then shape-prefixed little-endian float64 arrays."""
    kind = 2 if transform is not None else 1
    with open(path, "wb") as fh:
        fh.write(_ZVK1_MAGIC)
        fh.write(struct.pack("<IId", 1, kind, solution.lam))
        for arr in (solution.t_grid, solution.x_grid, solution.u,
                    solution.du, solution.d2u):
            _write_array(fh, arr)
        if transform is not None:
            fh.write(struct.pack("<dd", transform.R0, transform.R1))
            for arr in (transform.phi, transform.phi_inv, transform.dphi,
                        transform.h, transform.sigma_tab, transform.b_tab):
                _write_array(fh, arr)


def read_zvk1(path: str) -> dict:
    """Read back a ZVK1 dump into a dict of arrays (see write_zvk1)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _ZVK1_MAGIC:
            raise ValueError(f"not a ZVK1 file: magic {magic!r}")
        version, kind, lam = struct.unpack("<IId", fh.read(16))
        if version != 1:
            raise ValueError(f"unsupported ZVK1 version {version}")
        out = {"kind": kind, "lambda": lam}
        for name in ("t_grid", "x_grid", "u", "du", "d2u"):
            out[name] = _read_array(fh)
        if kind == 2:
            out["R0"], out["R1"] = struct.unpack("<dd", fh.read(16))
            for name in ("phi", "phi_inv", "dphi", "h", "sigma_tab", "b_tab"):
                out[name] = _read_array(fh)
    return out
