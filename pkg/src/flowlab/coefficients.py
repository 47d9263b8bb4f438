"""SDE coefficient fields, preset problems, and numerical hypothesis audits.

A problem is a pair of fields (drift b, diffusion sigma) plus optional
growth metadata: the exponents/constants of the coercivity, monotonicity,
ellipticity and growth-cap conditions the presets are known to satisfy.
Audits evaluate those conditions on finite grids and report the worst
margin; they are pure functions and bit-reproducible.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .expressions import parse_expression

AUDIT_ATOL = 1e-9
AUDIT_RTOL = 1e-9


class PresetNotFoundError(KeyError):
    """Unknown preset id or out-of-range preset parameter."""


class AuditUnavailableError(ValueError):
    """Audit requested on a problem without growth metadata."""


class CoefficientField:
    """Drift/diffusion pair with batch evaluation.

    `drift(t, x)` accepts a scalar (d=1), a point of shape (d,), or a batch
    (n, d) and mirrors the input shape; `diffusion(t, x)` returns (d, m) for
    a point and (n, d, m) for a batch. The batch implementations are the
    ones integrators call in their inner loop.
    """

    def __init__(self, drift_batch, diffusion_batch, d: int, m: int):
        self._drift = drift_batch
        self._diffusion = diffusion_batch
        self.d = int(d)
        self.m = int(m)

    def _as_batch(self, x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            if self.d != 1:
                raise ValueError(f"scalar state for a {self.d}-dimensional field")
            return arr.reshape(1, 1), "scalar"
        if arr.ndim == 1:
            if arr.shape[0] == self.d:
                return arr.reshape(1, self.d), "point"
            if self.d == 1:
                return arr.reshape(-1, 1), "flat"
            raise ValueError(f"state of shape {arr.shape} for d={self.d}")
        if arr.ndim == 2 and arr.shape[1] == self.d:
            return arr, "batch"
        raise ValueError(f"state of shape {arr.shape} for d={self.d}")

    def drift(self, t, x) -> np.ndarray:
        batch, tag = self._as_batch(x)
        out = self.drift_batch(float(t), batch)
        if tag == "scalar":
            return out[0, 0]
        if tag == "point":
            return out[0]
        if tag == "flat":
            return out[:, 0]
        return out

    def diffusion(self, t, x) -> np.ndarray:
        batch, tag = self._as_batch(x)
        out = self.diffusion_batch(float(t), batch)
        if tag in ("scalar", "point"):
            return out[0]
        return out

    def drift_batch(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self._drift(t, x), dtype=float)
        if out.shape != x.shape:
            raise ValueError(f"drift returned shape {out.shape}, expected {x.shape}")
        return out

    def diffusion_batch(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self._diffusion(t, x), dtype=float)
        want = (x.shape[0], self.d, self.m)
        if out.shape != want:
            raise ValueError(f"diffusion returned shape {out.shape}, expected {want}")
        return out


@dataclass(frozen=True)
class GrowthProfile:
    """Constants of the coercivity/monotonicity/ellipticity/growth conditions.

    `coercivity_constant(kappa)` returns the constant C_kappa dominating
    <x,b> + kappa(1+|x|^2)^alpha ||sigma||_F^2 <= C_kappa (1+|x|^2);
    `monotonicity_majorant(kappa)` returns the field F_kappa(t, x-batch).
    """
    alpha: float
    alpha_prime: float
    gamma1: float
    gamma2: float
    gamma3: float
    C1: float
    C2: float
    C3: float
    R0: float
    coercivity_constant: Callable[[float], float]
    monotonicity_majorant: Callable[[float], Callable[[float, np.ndarray], np.ndarray]]

    def __post_init__(self):
        if self.alpha > 0 and not (0 <= self.alpha_prime < self.alpha):
            raise ValueError("alpha_prime must lie in [0, alpha)")
        if self.R0 < 1:
            raise ValueError("R0 must be >= 1")
        for name in ("C1", "C2", "C3"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def exp_moment_rate(self) -> float:
        """Smallest admissible decay rate for the exponential moment bound (alpha > 0)."""
        return 2.0 * self.alpha * self.coercivity_constant(self.alpha + 1.0)

    def poly_moment_rate(self, p: float) -> float:
        """Admissible rate for the p-th polynomial moment bound (alpha = 0 branch).

        Derived from the Ito computation on (1+|x|^2)^p: the generator is
        dominated by 2p C_{p-1/2} (1+|x|^2)^p.
        """
        return 2.0 * p * self.coercivity_constant(max(p - 0.5, 1e-12))


@dataclass(frozen=True)
class SdeProblem:
    field: CoefficientField
    growth: Optional[GrowthProfile]
    preset_id: str
    description: str = ""


@dataclass(frozen=True)
class AuditReport:
    quantity_name: str
    grid: tuple
    worst_value: float
    bound: float
    margin: float
    passed: bool
    tolerance: float
    detail: dict = dataclass_field(default_factory=dict)


def _tolerance(worst: float, bound: float) -> float:
    scale = max(abs(worst), abs(bound))
    return AUDIT_ATOL + AUDIT_RTOL * scale


def _make_report(name, grid_points, worst, bound, detail=None) -> AuditReport:
    tol = _tolerance(worst, bound)
    passed = bool(worst <= bound + tol)
    return AuditReport(
        quantity_name=name,
        grid=tuple(np.asarray(grid_points, dtype=float).reshape(-1).tolist())
        if np.asarray(grid_points).size <= 64 else ("n_points", int(np.asarray(grid_points).reshape(-1, 1).shape[0])),
        worst_value=float(worst),
        bound=float(bound),
        margin=float(bound + tol - worst),
        passed=passed,
        tolerance=tol,
        detail=detail or {},
    )


# ---------------------------------------------------------------------------
# presets


def _grid_points(grid, d) -> np.ndarray:
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 1:
        if d == 1:
            pts = pts.reshape(-1, 1)
        elif pts.shape[0] == d:
            pts = pts.reshape(1, d)
        else:
            raise ValueError(f"grid shape {pts.shape} for d={d}")
    return pts


def default_audit_grid(d: int) -> np.ndarray:
    """[-10, 10]^d tensor grid with about 10^3 points total (d <= 3)."""
    per_axis = {1: 1000, 2: 32, 3: 10}.get(d)
    if per_axis is None:
        raise ValueError("default audit grid is defined for d <= 3")
    axis = np.linspace(-10.0, 10.0, per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _radial_max(fn, r_max: float = 1e3) -> float:
    """Deterministic maximizer of a radial profile on [0, r_max].

    Dense grid scan (linear near the origin, geometric out to r_max) followed
    by golden-section refinement around the best bracket.
    """
    rs = np.concatenate([np.linspace(0.0, 1.0, 2001),
                         np.geomspace(1.0, r_max, 2000)[1:]])
    vals = fn(rs)
    k = int(np.argmax(vals))
    lo = rs[max(k - 1, 0)]
    hi = rs[min(k + 1, rs.size - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c, dd = b - phi * (b - a), a + phi * (b - a)
    fc, fd = fn(np.array([c]))[0], fn(np.array([dd]))[0]
    for _ in range(80):
        if fc >= fd:
            b, dd, fd = dd, c, fc
            c = b - phi * (b - a)
            fc = fn(np.array([c]))[0]
        else:
            a, c, fc = c, dd, fd
            dd = a + phi * (b - a)
            fd = fn(np.array([dd]))[0]
    return float(max(vals[k], fc, fd))


@lru_cache(maxsize=None)
def _example1_coercivity(beta: float, kappa: float) -> float:
    def profile(r):
        return (-(r**6) - r) / (1.0 + r**2) + kappa * (1.0 + r**2) ** (2.0 * beta)

    return _radial_max(profile)


def _example1(beta: float) -> SdeProblem:
    if not (0.0 <= beta < 1.0):
        raise PresetNotFoundError(f"example1 parameter must lie in [0,1), got {beta}")

    def drift(t, x):
        v = x[:, 0]
        return np.where(v < 0.0, 1.0 - v**5, -(1.0 + v**5))[:, None]

    def diffusion(t, x):
        v = x[:, 0]
        return ((1.0 + v**2) ** beta)[:, None, None]

    tail_exp = max(2.0 * (2.0 * beta - 1.0), 0.0) / 2.0  # F grows like (1+x^2)^tail_exp

    def majorant(kappa):
        lip_sq = 4.0 * beta**2

        def F(t, x):
            v = x[:, 0]
            return kappa * lip_sq * (1.0 + v**2) ** tail_exp

        return F

    growth = GrowthProfile(
        alpha=1.0, alpha_prime=0.9, gamma1=1.0, gamma2=2.5, gamma3=1.0,
        C1=1.0, C2=8.0, C3=10.0, R0=1.0,
        coercivity_constant=lambda kappa: _example1_coercivity(beta, kappa),
        monotonicity_majorant=majorant,
    )
    return SdeProblem(
        field=CoefficientField(drift, diffusion, 1, 1),
        growth=growth,
        preset_id=f"example1({beta:g})",
        description="1-D quintic-well drift with jump at 0, sigma=(1+x^2)^beta",
    )


def _bm(d: int) -> SdeProblem:
    eye = np.eye(d)

    def drift(t, x):
        return np.zeros_like(x)

    def diffusion(t, x):
        return np.broadcast_to(eye, (x.shape[0], d, d)).copy()

    def majorant(kappa):
        def F(t, x):
            return np.zeros(x.shape[0])

        return F

    growth = GrowthProfile(
        alpha=1.0, alpha_prime=0.5, gamma1=1.0, gamma2=1.0, gamma3=1.0,
        C1=1.0, C2=max(1.0, math.log(1.0 + math.sqrt(d))), C3=1.0, R0=1.0,
        coercivity_constant=lambda kappa: kappa * d,
        monotonicity_majorant=majorant,
    )
    return SdeProblem(
        field=CoefficientField(drift, diffusion, d, d),
        growth=growth,
        preset_id=f"bm({d})",
        description=f"{d}-dimensional Brownian motion (zero drift, identity diffusion)",
    )


def _ou(d: int) -> SdeProblem:
    eye = np.eye(d)

    def drift(t, x):
        return -x

    def diffusion(t, x):
        return np.broadcast_to(eye, (x.shape[0], d, d)).copy()

    def majorant(kappa):
        def F(t, x):
            return np.zeros(x.shape[0])

        return F

    growth = GrowthProfile(
        alpha=1.0, alpha_prime=0.5, gamma1=1.0, gamma2=1.0, gamma3=1.0,
        C1=1.0, C2=max(1.0, math.log(1.0 + math.sqrt(d)) + 0.5), C3=1.0, R0=1.0,
        coercivity_constant=lambda kappa: kappa * d,
        monotonicity_majorant=majorant,
    )
    return SdeProblem(
        field=CoefficientField(drift, diffusion, d, d),
        growth=growth,
        preset_id=f"ou({d})",
        description=f"{d}-dimensional Ornstein-Uhlenbeck (drift -x, identity diffusion)",
    )


def _step_drift() -> SdeProblem:
    def drift(t, x):
        v = x[:, 0]
        return (-np.sign(v) * (np.abs(v) <= 2.0))[:, None]

    def diffusion(t, x):
        return np.ones((x.shape[0], 1, 1))

    # Discontinuous compactly-supported drift: the Zvonkin test case. No
    # monotonicity majorant with the required local integrability exists
    # (the jump at |x|=2 goes the wrong way), so no growth metadata ships.
    return SdeProblem(
        field=CoefficientField(drift, diffusion, 1, 1),
        growth=None,
        preset_id="step-drift-1d",
        description="1-D sign-step drift supported on |x|<=2, unit diffusion",
    )


@lru_cache(maxsize=None)
def _degenerate_coercivity(gamma: float, kappa: float) -> float:
    def profile(r):
        return (-(r**6) - r) / (1.0 + r**2) + kappa * (1.0 + r**2) ** (-2.0 * gamma - 1.0)

    return _radial_max(profile)


def _degenerate_example1(gamma: float) -> SdeProblem:
    if gamma <= 0:
        raise PresetNotFoundError(f"degenerate-example1 parameter must be > 0, got {gamma}")

    def drift(t, x):
        v = x[:, 0]
        return np.where(v < 0.0, 1.0 - v**5, -(1.0 + v**5))[:, None]

    def diffusion(t, x):
        v = x[:, 0]
        return ((1.0 + v**2) ** (-gamma))[:, None, None]

    def majorant(kappa):
        lip_sq = 4.0 * gamma**2

        def F(t, x):
            return np.full(x.shape[0], kappa * lip_sq / 2.0)

        return F

    growth = GrowthProfile(
        alpha=0.0, alpha_prime=0.0, gamma1=gamma, gamma2=2.5, gamma3=1.0,
        C1=1.0, C2=3.0, C3=max(4.0 * gamma**2, 1.0) / math.log(5.0) + 1.0, R0=2.0,
        coercivity_constant=lambda kappa: _degenerate_coercivity(gamma, kappa),
        monotonicity_majorant=majorant,
    )
    return SdeProblem(
        field=CoefficientField(drift, diffusion, 1, 1),
        growth=growth,
        preset_id=f"degenerate-example1({gamma:g})",
        description="example1 drift with degenerate sigma=(1+x^2)^(-gamma), alpha=0 branch",
    )


_PARAM_PRESETS = [
    (re.compile(r"example1\(([^)]+)\)"), lambda s: _example1(float(s))),
    (re.compile(r"bm\((\d+)\)"), lambda s: _bm(int(s))),
    (re.compile(r"ou\((\d+)\)"), lambda s: _ou(int(s))),
    (re.compile(r"degenerate-example1\(([^)]+)\)"), lambda s: _degenerate_example1(float(s))),
]


def preset(name: str) -> SdeProblem:
    """Look up a preset problem by string id, e.g. "example1(0.4)" or "bm(3)"."""
    name = name.strip()
    if name == "step-drift-1d":
        return _step_drift()
    for pattern, builder in _PARAM_PRESETS:
        match = pattern.fullmatch(name)
        if match:
            try:
                return builder(match.group(1))
            except (TypeError, ValueError) as exc:
                raise PresetNotFoundError(f"bad parameter in preset {name!r}: {exc}") from exc
    raise PresetNotFoundError(f"unknown preset {name!r}")


def list_presets() -> list[dict]:
    """Stable-ordered preset catalogue with representative growth metadata."""
    rows = []
    for pattern, instance in [
        ("bm(d)", _bm(1)),
        ("degenerate-example1(gamma)", _degenerate_example1(1.0)),
        ("example1(beta)", _example1(0.4)),
        ("ou(d)", _ou(1)),
        ("step-drift-1d", _step_drift()),
    ]:
        g = instance.growth
        rows.append({
            "name": pattern,
            "example": instance.preset_id,
            "description": instance.description,
            "alpha": None if g is None else g.alpha,
            "alpha_prime": None if g is None else g.alpha_prime,
            "R0": None if g is None else g.R0,
        })
    return rows


def from_expressions(spec: dict) -> SdeProblem:
    """Build a problem from a config dict with expression-tree coefficients.

    Expected keys: d, m, drift (list of d expressions), diffusion (d x m
    nested list of expressions), optional name/description. No growth
    metadata is attached, so hypothesis audits are unavailable.
    """
    d = int(spec["d"])
    m = int(spec["m"])
    drift_exprs = [parse_expression(src, d) for src in spec["drift"]]
    diffusion_exprs = [[parse_expression(src, d) for src in row] for row in spec["diffusion"]]
    if len(drift_exprs) != d:
        raise ValueError(f"drift needs {d} component expressions")
    if len(diffusion_exprs) != d or any(len(row) != m for row in diffusion_exprs):
        raise ValueError(f"diffusion needs a {d}x{m} expression matrix")

    def drift(t, x):
        return np.stack([e(t, x) for e in drift_exprs], axis=1)

    def diffusion(t, x):
        rows = [np.stack([e(t, x) for e in row], axis=1) for row in diffusion_exprs]
        return np.stack(rows, axis=1)

    return SdeProblem(
        field=CoefficientField(drift, diffusion, d, m),
        growth=None,
        preset_id=str(spec.get("name", "custom")),
        description=str(spec.get("description", "user-defined expression field")),
    )


# ---------------------------------------------------------------------------
# audits


def _require_growth(problem: SdeProblem) -> GrowthProfile:
    if problem.growth is None:
        raise AuditUnavailableError(
            f"problem {problem.preset_id!r} carries no growth metadata")
    return problem.growth


def _sigma_frobenius_sq(field: CoefficientField, t: float, pts: np.ndarray) -> np.ndarray:
    sig = field.diffusion_batch(t, pts)
    return np.einsum("nij,nij->n", sig, sig)


def audit_coercivity(problem: SdeProblem, kappa: float, grid,
                     times=(0.0,)) -> AuditReport:
    """Worst margin of <x,b> + kappa(1+|x|^2)^alpha ||sigma||^2 - C_kappa(1+|x|^2)."""
    g = _require_growth(problem)
    pts = _grid_points(grid, problem.field.d)
    if pts.shape[0] == 0:
        raise ValueError("empty audit grid")
    c_kappa = g.coercivity_constant(kappa)
    worst = -math.inf
    argmax = None
    for t in times:
        b = problem.field.drift_batch(float(t), pts)
        ssq = _sigma_frobenius_sq(problem.field, float(t), pts)
        nsq = np.einsum("nd,nd->n", pts, pts)
        lhs = np.einsum("nd,nd->n", pts, b) + kappa * (1.0 + nsq) ** g.alpha * ssq
        vals = lhs - c_kappa * (1.0 + nsq)
        k = int(np.argmax(vals))
        if vals[k] > worst:
            worst, argmax = float(vals[k]), pts[k].tolist()
    return _make_report("coercivity", pts, worst, 0.0,
                        {"kappa": kappa, "C_kappa": c_kappa, "argmax": argmax})


def _as_pairs(pairs, d) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim == 2 and d == 1 and arr.shape[1] == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[1] != 2 or arr.shape[2] != d:
        raise ValueError(f"pairs must have shape (n, 2, {d})")
    return arr


def audit_monotonicity(problem: SdeProblem, kappa: float, pairs,
                       times=(0.0,)) -> AuditReport:
    """Pairwise monotonicity margin, plus the tail bound on the majorant F."""
    g = _require_growth(problem)
    arr = _as_pairs(pairs, problem.field.d)
    xs, ys = arr[:, 0, :], arr[:, 1, :]
    diff = xs - ys
    sep_sq = np.einsum("nd,nd->n", diff, diff)
    coincident = sep_sq == 0.0
    if np.any(coincident):
        warnings.warn(f"skipping {int(coincident.sum())} coincident pair(s) (0/0 = 0 convention)")
        keep = ~coincident
        xs, ys, diff, sep_sq = xs[keep], ys[keep], diff[keep], sep_sq[keep]
    if xs.shape[0] == 0:
        raise ValueError("no non-coincident pairs to audit")
    F = g.monotonicity_majorant(kappa)
    worst = -math.inf
    for t in times:
        bx = problem.field.drift_batch(float(t), xs)
        by = problem.field.drift_batch(float(t), ys)
        sx = problem.field.diffusion_batch(float(t), xs)
        sy = problem.field.diffusion_batch(float(t), ys)
        dsig = sx - sy
        lhs = (np.einsum("nd,nd->n", diff, bx - by)
               + kappa * np.einsum("nij,nij->n", dsig, dsig))
        rhs = sep_sq * (F(float(t), xs) + F(float(t), ys))
        worst = max(worst, float(np.max(lhs - rhs)))

    # tail bound on F for |x| >= R0, checked at the pair endpoints
    all_pts = np.concatenate([xs, ys], axis=0)
    norms_sq = np.einsum("nd,nd->n", all_pts, all_pts)
    outside = norms_sq >= g.R0**2
    tail_worst = -math.inf
    if np.any(outside):
        pts_out = all_pts[outside]
        nsq = norms_sq[outside]
        if g.alpha > 0:
            cap = g.C3 * (1.0 + nsq) ** g.alpha_prime
        else:
            cap = g.C3 * np.log(1.0 + nsq)
        for t in times:
            tail_worst = max(tail_worst, float(np.max(F(float(t), pts_out) - cap)))
    worst_all = max(worst, tail_worst) if tail_worst > -math.inf else worst
    return _make_report("monotonicity", arr, worst_all, 0.0,
                        {"kappa": kappa, "pair_margin": worst,
                         "tail_margin": None if tail_worst == -math.inf else tail_worst})


def audit_ellipticity(problem: SdeProblem, grid, times=(0.0,)) -> AuditReport:
    """Worst envelope(x) - sigma_min(sigma(t,x)) against the lower ellipticity envelope."""
    g = _require_growth(problem)
    pts = _grid_points(grid, problem.field.d)
    nsq = np.einsum("nd,nd->n", pts, pts)
    if g.alpha > 0:
        envelope = np.exp(-g.C1 * (1.0 + nsq) ** g.alpha_prime)
    else:
        envelope = g.C1 * (1.0 + nsq) ** (-g.gamma1)
    worst = -math.inf
    for t in times:
        sig = problem.field.diffusion_batch(float(t), pts)
        smin = np.linalg.svd(sig, compute_uv=False)[:, -1]
        worst = max(worst, float(np.max(envelope - smin)))
    return _make_report("ellipticity", pts, worst, 0.0, {})


def audit_growth(problem: SdeProblem, grid, times=(0.0,)) -> AuditReport:
    """Worst |b| + ||sigma|| minus the super-linear growth cap."""
    g = _require_growth(problem)
    pts = _grid_points(grid, problem.field.d)
    nsq = np.einsum("nd,nd->n", pts, pts)
    if g.alpha > 0:
        cap = np.exp(g.C2 * (1.0 + nsq) ** g.alpha_prime)
    else:
        cap = g.C2 * (1.0 + nsq) ** g.gamma2
    worst = -math.inf
    for t in times:
        b = problem.field.drift_batch(float(t), pts)
        ssq = _sigma_frobenius_sq(problem.field, float(t), pts)
        lhs = np.sqrt(np.einsum("nd,nd->n", b, b)) + np.sqrt(ssq)
        worst = max(worst, float(np.max(lhs - cap)))
    return _make_report("growth", pts, worst, 0.0, {})


def audit_majorant_convexity(problem: SdeProblem, kappa: float, pairs,
                             thetas=(0.25, 0.5, 0.75), times=(0.0,)) -> AuditReport:
    """Midpoint convexity check F(theta x + (1-theta) y) <= theta F(x) + (1-theta) F(y)."""
    g = _require_growth(problem)
    arr = _as_pairs(pairs, problem.field.d)
    xs, ys = arr[:, 0, :], arr[:, 1, :]
    F = g.monotonicity_majorant(kappa)
    worst = -math.inf
    for t in times:
        fx, fy = F(float(t), xs), F(float(t), ys)
        for theta in thetas:
            mid = theta * xs + (1.0 - theta) * ys
            worst = max(worst, float(np.max(F(float(t), mid) - theta * fx - (1.0 - theta) * fy)))
    return _make_report("majorant-convexity", arr, worst, 0.0, {"thetas": list(thetas)})


def run_all_audits(problem: SdeProblem, kappa: float = 1.0, grid=None,
                   n_pairs: int = 200) -> list[AuditReport]:
    """Convenience bundle: the four hypothesis audits on the default grid."""
    d = problem.field.d
    pts = default_audit_grid(d) if grid is None else _grid_points(grid, d)
    half = pts.shape[0] // 2
    pairs = np.stack([pts[:half], pts[half:2 * half]], axis=1)
    keep = np.einsum("nd,nd->n", pairs[:, 0] - pairs[:, 1], pairs[:, 0] - pairs[:, 1]) > 0
    pairs = pairs[keep][:n_pairs]
    return [
        audit_coercivity(problem, kappa, pts),
        audit_monotonicity(problem, kappa, pairs),
        audit_ellipticity(problem, pts),
        audit_growth(problem, pts),
    ]
