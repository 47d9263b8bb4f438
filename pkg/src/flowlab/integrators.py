"""Time-stepping schemes and path ensembles.

The engine advances all paths of an ensemble together, one step at a time,
drawing Brownian increments from counter-based streams (see `rng`): the
increment consumed by noise slot i at step k depends only on (seed, stream,
k, i), never on scheduling or worker count.

Synchronously coupled bundles are integrated in offset space: each start is
tied to a base start, the base trajectory is advanced absolutely, and the
member's offset D_t = X_t(x_s) - X_t(x_base) is advanced with the
difference-form update h*(tau_s - tau_base) + (sigma_s - sigma_base)*dW.
Whenever the drift and diffusion differences cancel exactly (Brownian
motion, any additive-noise problem), the offset is bit-exactly constant, so
coupled differences carry no spurious floating-point noise.

Paths whose state norm reaches the explosion cap are flagged and frozen at
the exit value; the drift-implicit scheme additionally flags paths whose
Newton/bisection solve failed, which is a distinct condition.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import rng
from .coefficients import SdeProblem

SCHEMES = ("tamed-euler", "drift-implicit-euler", "euler-maruyama")

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 30


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class SimulationConfig:
    scheme: str = "tamed-euler"
    dt: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 1
    seed: int = 0
    r_cap: float = 1e6
    store_increments: bool = False
    stream: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.horizon < self.dt:
            raise ConfigError("horizon must be at least one step")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if not (self.r_cap > 0):
            raise ConfigError("r_cap must be positive")


def time_grid(config: SimulationConfig) -> np.ndarray:
    """Uniform grid 0, dt, 2dt, ... with the last step truncated to end at T."""
    n_steps = int(math.ceil(config.horizon / config.dt - 1e-12))
    grid = np.arange(n_steps + 1, dtype=float) * config.dt
    grid[-1] = config.horizon
    return grid


@dataclass(frozen=True)
class BundleCoupling:
    """Layout of a multi-start ensemble: start s owns paths [s*n_rep, (s+1)*n_rep)."""
    starts: np.ndarray             # (S, d)
    n_rep: int
    shared_noise: bool
    kind: str                      # "none" | "synchronous"
    base_index: Optional[np.ndarray] = None   # (S,) reference start per start
    pairs: Optional[tuple] = None  # ((start_idx_x, start_idx_y), ...) for coupled pairs


@dataclass(frozen=True)
class PathEnsemble:
    time_grid: np.ndarray          # (K+1,)
    states: np.ndarray             # (P, K+1, d)
    exploded: np.ndarray           # (P,) bool
    exit_index: np.ndarray         # (P,) int, K+1 sentinel when never exited
    solver_failed: np.ndarray      # (P,) bool
    coupling: Optional[BundleCoupling]
    seed: int
    stream: int
    scheme: str
    increments: Optional[np.ndarray] = None  # (P, K, m) when stored
    offsets: Optional[np.ndarray] = None     # (P, K+1, d) for shared-noise bundles

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def exploded_fraction(self) -> float:
        return float(np.mean(self.exploded))

    def member(self, start_index: int) -> np.ndarray:
        """States of the paths started at coupling.starts[start_index]."""
        if self.coupling is None:
            raise ValueError("ensemble carries no bundle coupling")
        n = self.coupling.n_rep
        return self.states[start_index * n:(start_index + 1) * n]

    def member_offsets(self, start_index: int) -> np.ndarray:
        if self.offsets is None:
            raise ValueError("ensemble was not integrated with shared noise")
        n = self.coupling.n_rep
        return self.offsets[start_index * n:(start_index + 1) * n]

    def member_flags(self, start_index: int) -> np.ndarray:
        if self.coupling is None:
            raise ValueError("ensemble carries no bundle coupling")
        n = self.coupling.n_rep
        return self.exploded[start_index * n:(start_index + 1) * n]

    def find_start(self, point) -> int:
        if self.coupling is None:
            raise ValueError("ensemble carries no bundle coupling")
        pt = np.asarray(point, dtype=float).reshape(-1)
        dists = np.linalg.norm(self.coupling.starts - pt[None, :], axis=1)
        k = int(np.argmin(dists))
        if dists[k] > 1e-12 * (1.0 + np.linalg.norm(pt)):
            raise KeyError(f"start point {pt} not in ensemble")
        return k

    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]


def _as_starts(initial, d: int) -> np.ndarray:
    arr = np.asarray(initial, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise ConfigError(f"scalar start for d={d}")
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        if arr.shape[0] == d:
            return arr.reshape(1, d)
        if d == 1:
            return arr.reshape(-1, 1)
        raise ConfigError(f"start shape {arr.shape} for d={d}")
    if arr.ndim == 2 and arr.shape[1] == d:
        return arr
    raise ConfigError(f"start shape {arr.shape} for d={d}")


def _damped_newton(residual, z0: np.ndarray, scale: np.ndarray):
    """Vectorized damped Newton for row-wise systems G(z) = 0.

    `residual` maps an (n, d) block to (n, d); the Jacobian is formed by
    central differences. Rows converge when |G| <= NEWTON_TOL * scale.
    Returns (z, failed_mask).
    """
    z = z0.copy()
    n, d = z.shape
    tol = NEWTON_TOL * scale
    active = np.ones(n, dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        za = z[idx]
        Ga = residual(za, idx)
        gn = np.linalg.norm(Ga, axis=1)
        done = gn <= tol[idx]
        if np.any(done):
            active[idx[done]] = False
            keep = ~done
            idx, za, Ga, gn = idx[keep], za[keep], Ga[keep], gn[keep]
            if idx.size == 0:
                break
        eps = 1e-7 * (1.0 + np.abs(za))
        J = np.zeros((idx.size, d, d))
        for j in range(d):
            zp, zm = za.copy(), za.copy()
            zp[:, j] += eps[:, j]
            zm[:, j] -= eps[:, j]
            J[:, :, j] = (residual(zp, idx) - residual(zm, idx)) / (2.0 * eps[:, j])[:, None]
        try:
            step = -np.linalg.solve(J, Ga[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = -Ga
        lam = np.ones(idx.size)
        trial = za + step
        for _ in range(NEWTON_MAX_HALVINGS):
            gt = np.linalg.norm(residual(trial, idx), axis=1)
            bad = gt > gn
            if not np.any(bad):
                break
            lam[bad] *= 0.5
            trial[bad] = za[bad] + lam[bad, None] * step[bad]
        z[idx] = trial

    failed = np.zeros(n, dtype=bool)
    if np.any(active):
        idx = np.nonzero(active)[0]
        final = np.linalg.norm(residual(z[idx], idx), axis=1)
        failed[idx[final > tol[idx]]] = True
    return z, failed


def _bisect_1d(residual_scalar, lo: float, hi: float, tol: float):
    """Bisection with geometric bracket widening; returns (root, ok)."""
    glo, ghi = residual_scalar(lo), residual_scalar(hi)
    width = hi - lo
    widenings = 0
    while glo * ghi > 0 and widenings < 60:
        width *= 2.0
        lo -= width / 4.0
        hi += width / 4.0
        glo, ghi = residual_scalar(lo), residual_scalar(hi)
        widenings += 1
    if glo * ghi > 0:
        return 0.5 * (lo + hi), False
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = residual_scalar(mid)
        if glo * gm <= 0:
            hi, ghi = mid, gm
        else:
            lo, glo = mid, gm
    root = 0.5 * (lo + hi)
    return root, abs(residual_scalar(root)) <= max(tol, 1e-10)


class _Stepper:
    """Per-scheme single-step updates, absolute and offset form."""

    def __init__(self, field, scheme: str):
        self.field = field
        self.scheme = scheme

    def tamed_drift(self, t, x, h):
        b = self.field.drift_batch(t, x)
        if self.scheme == "tamed-euler":
            bn = np.linalg.norm(b, axis=1, keepdims=True)
            return b / (1.0 + h * bn)
        return b

    def explicit(self, t, x, h, noise):
        return x + h * self.tamed_drift(t, x, h) + noise

    def implicit(self, t_next, h, rhs, x_prev):
        """Solve z - h b(t_next, z) = rhs rows."""
        field = self.field

        def residual(z, idx):
            return z - h * field.drift_batch(t_next, z) - rhs[idx]

        scale = 1.0 + np.linalg.norm(rhs, axis=1)
        z, failed = _damped_newton(residual, rhs.copy(), scale)
        if np.any(failed) and rhs.shape[1] == 1:
            for i in np.nonzero(failed)[0]:
                def g1(v):
                    zz = np.array([[v]])
                    return float(zz[0, 0] - h * field.drift_batch(t_next, zz)[0, 0] - rhs[i, 0])
                root, ok = _bisect_1d(g1, x_prev[i, 0] - 10.0, x_prev[i, 0] + 10.0,
                                      NEWTON_TOL * scale[i])
                if ok:
                    z[i, 0] = root
                    failed[i] = False
        return z, failed

    def implicit_offset(self, t_next, h, base_new, rhs, d_prev):
        """Solve E - h*[b(base+E) - b(base)] = rhs rows (offset form)."""
        field = self.field
        b_base = field.drift_batch(t_next, base_new)

        def residual(e, idx):
            return (e - h * (field.drift_batch(t_next, base_new[idx] + e) - b_base[idx])
                    - rhs[idx])

        scale = 1.0 + np.linalg.norm(rhs, axis=1) + np.linalg.norm(base_new, axis=1)
        z, failed = _damped_newton(residual, rhs.copy(), scale)
        if np.any(failed) and rhs.shape[1] == 1:
            for i in np.nonzero(failed)[0]:
                def g1(v):
                    e = np.array([[v]])
                    bb = base_new[i:i + 1]
                    return float(e[0, 0] - h * (field.drift_batch(t_next, bb + e)[0, 0]
                                                - b_base[i, 0]) - rhs[i, 0])
                root, ok = _bisect_1d(g1, d_prev[i, 0] - 10.0, d_prev[i, 0] + 10.0,
                                      NEWTON_TOL * scale[i])
                if ok:
                    z[i, 0] = root
                    failed[i] = False
        return z, failed


def simulate_bundle(problem: SdeProblem, config: SimulationConfig, starts,
                    share_noise: bool = False, kind: str = "none",
                    pairs=None, base_index=None) -> PathEnsemble:
    """Advance n_paths replicas from each start; optionally share noise across starts."""
    field = problem.field
    d, m = field.d, field.m
    start_pts = _as_starts(starts, d)
    S = start_pts.shape[0]
    R = config.n_paths
    P = S * R
    grid = time_grid(config)
    K = grid.size - 1
    stepper = _Stepper(field, config.scheme)

    if share_noise:
        if base_index is None:
            base_arr = np.zeros(S, dtype=int)
        else:
            base_arr = np.asarray(base_index, dtype=int)
            if base_arr.shape != (S,):
                raise ConfigError("base_index must have one entry per start")
    else:
        base_arr = np.arange(S)

    start_of_path = np.repeat(np.arange(S), R)
    base_path = base_arr[start_of_path] * R + np.tile(np.arange(R), S)
    is_base = base_path == np.arange(P)

    states = np.empty((P, K + 1, d))
    x = np.repeat(start_pts, R, axis=0)
    D = x - x[base_path]          # exact zeros for base paths
    offsets = np.empty((P, K + 1, d)) if share_noise else None
    states[:, 0, :] = x
    if offsets is not None:
        offsets[:, 0, :] = D

    exploded = np.linalg.norm(x, axis=1) >= config.r_cap
    exit_index = np.where(exploded, 0, K + 1).astype(np.int64)
    solver_failed = np.zeros(P, dtype=bool)
    alive = ~exploded

    n_noise = R if share_noise else P
    noise_index = np.tile(np.arange(R), S) if share_noise else np.arange(P)

    increments = None
    if config.store_increments:
        if P * K * m > 300_000_000:
            raise ConfigError("store_increments would exceed the memory budget")
        increments = np.empty((P, K, m))

    implicit = config.scheme == "drift-implicit-euler"
    for k in range(K):
        h = grid[k + 1] - grid[k]
        t_k = float(grid[k])
        t_next = float(grid[k + 1])
        dw = rng.normal_block(config.seed, config.stream, k, n_noise, m) * math.sqrt(h)
        dw_paths = dw[noise_index]
        if increments is not None:
            increments[:, k, :] = dw_paths

        idx = np.nonzero(alive)[0]
        if idx.size:
            xa = x[idx]
            sig = field.diffusion_batch(t_k, xa)
            if not share_noise:
                noise = np.einsum("nij,nj->ni", sig, dw_paths[idx])
                if implicit:
                    xn, failed = stepper.implicit(t_next, h, xa + noise, xa)
                    if np.any(failed):
                        solver_failed[idx[failed]] = True
                else:
                    xn = stepper.explicit(t_k, xa, h, noise)
            else:
                xn = np.empty_like(xa)
                # map path id -> position inside the alive block
                pos = np.full(P, -1, dtype=np.int64)
                pos[idx] = np.arange(idx.size)
                loc_base = is_base[idx]
                base_of = base_path[idx]
                base_alive_pos = pos[base_of]
                has_live_base = (~loc_base) & (base_alive_pos >= 0)
                absolute = loc_base | ~has_live_base

                if implicit:
                    tau = None
                else:
                    tau = stepper.tamed_drift(t_k, xa, h)

                new_abs = np.empty_like(xa)
                # absolute update for base paths and orphaned members
                ai = np.nonzero(absolute)[0]
                if ai.size:
                    noise_abs = np.einsum("nij,nj->ni", sig[ai], dw_paths[idx[ai]])
                    if implicit:
                        zn, failed = stepper.implicit(t_next, h, xa[ai] + noise_abs, xa[ai])
                        if np.any(failed):
                            solver_failed[idx[ai[failed]]] = True
                        new_abs[ai] = zn
                    else:
                        new_abs[ai] = xa[ai] + h * tau[ai] + noise_abs
                # offset update for members whose base is alive
                mi = np.nonzero(has_live_base)[0]
                if mi.size:
                    bpos = base_alive_pos[mi]
                    dsig = sig[mi] - sig[bpos]
                    dnoise = np.einsum("nij,nj->ni", dsig, dw_paths[idx[mi]])
                    d_prev = D[idx[mi]]
                    if implicit:
                        rhs = d_prev + dnoise
                        base_new = new_abs[bpos]
                        en, failed = stepper.implicit_offset(t_next, h, base_new, rhs, d_prev)
                        if np.any(failed):
                            solver_failed[idx[mi[failed]]] = True
                        d_new = en
                    else:
                        d_new = d_prev + h * (tau[mi] - tau[bpos]) + dnoise
                    D[idx[mi]] = d_new
                    new_abs[mi] = new_abs[bpos] + d_new
                xn = new_abs
                # orphaned members: absolute update, offset tracks frozen base
                oi = np.nonzero((~loc_base) & ~has_live_base)[0]
                if oi.size:
                    D[idx[oi]] = xn[oi] - x[base_path[idx[oi]]]

            bad = ~np.all(np.isfinite(xn), axis=1)
            if np.any(bad):
                # freeze at the last finite value; counts as an explosion
                xn[bad] = xa[bad]
                if share_noise:
                    D[idx[bad]] = xn[bad] - x[base_path[idx[bad]]]
            nrm = np.linalg.norm(xn, axis=1)
            blow = (nrm >= config.r_cap) | bad
            x[idx] = xn
            if np.any(blow):
                hit = idx[blow]
                exploded[hit] = True
                exit_index[hit] = k + 1
                alive[hit] = False
        states[:, k + 1, :] = x
        if offsets is not None:
            offsets[:, k + 1, :] = D

    coupling = BundleCoupling(starts=start_pts, n_rep=R,
                              shared_noise=share_noise, kind=kind,
                              base_index=base_arr if share_noise else None,
                              pairs=pairs)
    return PathEnsemble(time_grid=grid, states=states, exploded=exploded,
                        exit_index=exit_index, solver_failed=solver_failed,
                        coupling=coupling, seed=config.seed,
                        stream=config.stream, scheme=config.scheme,
                        increments=increments, offsets=offsets)


def simulate(problem: SdeProblem, config: SimulationConfig, initial) -> PathEnsemble:
    """n_paths independent paths from each initial point."""
    return simulate_bundle(problem, config, initial, share_noise=False, kind="none")


def coupled_simulate(problem: SdeProblem, config: SimulationConfig,
                     pairs: Sequence) -> PathEnsemble:
    """Synchronously coupled pairs: both members consume identical increments.

    Each pair's first member is the offset base, so the coupled difference
    Z_t = X_t(x) - X_t(y) is the exactly-integrated offset (no spurious
    floating-point noise; identically x - y whenever coefficient
    differences cancel).
    """
    d = problem.field.d
    pair_arr = np.asarray(pairs, dtype=float)
    if pair_arr.ndim == 1 and d == 1 and pair_arr.shape[0] == 2:
        pair_arr = pair_arr.reshape(1, 2, 1)
    if pair_arr.ndim == 2:
        if d == 1 and pair_arr.shape[1] == 2:
            pair_arr = pair_arr[:, :, None]
        elif pair_arr.shape == (2, d):
            pair_arr = pair_arr[None, :, :]
    if pair_arr.ndim != 3 or pair_arr.shape[1] != 2:
        raise ConfigError("pairs must be a list of (x, y) point pairs")
    starts = pair_arr.reshape(-1, d)
    n_pairs = pair_arr.shape[0]
    base_index = np.repeat(2 * np.arange(n_pairs), 2)
    index_pairs = tuple((2 * j, 2 * j + 1) for j in range(n_pairs))
    return simulate_bundle(problem, config, starts, share_noise=True,
                           kind="synchronous", pairs=index_pairs,
                           base_index=base_index)


def coupled_difference(ensemble: PathEnsemble, pair_index: int = 0) -> np.ndarray:
    """Z_t = X_t(x) - X_t(y) for a synchronously coupled pair; shape (n_rep, K+1, d)."""
    if ensemble.coupling is None or ensemble.coupling.kind != "synchronous":
        raise ValueError("ensemble is not synchronously coupled")
    if ensemble.coupling.pairs is not None:
        sx, sy = ensemble.coupling.pairs[pair_index]
    else:
        raise ValueError("ensemble carries no pair map")
    return start_difference(ensemble, sx, sy)


def start_difference(ensemble: PathEnsemble, sx: int, sy: int) -> np.ndarray:
    """X_t(starts[sx]) - X_t(starts[sy]) from exactly-integrated offsets."""
    if ensemble.offsets is None:
        return ensemble.member(sx) - ensemble.member(sy)
    base = ensemble.coupling.base_index
    ox = ensemble.member_offsets(sx)
    oy = ensemble.member_offsets(sy)
    if base[sx] == base[sy]:
        if sx == base[sy]:
            return -oy
        if sy == base[sx]:
            return ox
        return ox - oy
    return ensemble.member(sx) - ensemble.member(sy)


def first_exit(ensemble: PathEnsemble, radius: float) -> np.ndarray:
    """Per-path first grid time with |X| >= radius; +inf when never reached."""
    out = np.full(ensemble.n_paths, np.inf)
    chunk = max(1, 50_000_000 // max(1, ensemble.states.shape[1] * ensemble.dim))
    for lo in range(0, ensemble.n_paths, chunk):
        hi = min(lo + chunk, ensemble.n_paths)
        norms = np.linalg.norm(ensemble.states[lo:hi], axis=2)
        hit = norms >= radius
        any_hit = hit.any(axis=1)
        idx = np.argmax(hit, axis=1)
        out[lo:hi][any_hit] = ensemble.time_grid[idx[any_hit]]
    return out


def first_exit_index(ensemble: PathEnsemble, radius: float) -> np.ndarray:
    """Per-path first grid index with |X| >= radius; K+1 sentinel otherwise."""
    K1 = ensemble.states.shape[1]
    out = np.full(ensemble.n_paths, K1, dtype=np.int64)
    chunk = max(1, 50_000_000 // max(1, K1 * ensemble.dim))
    for lo in range(0, ensemble.n_paths, chunk):
        hi = min(lo + chunk, ensemble.n_paths)
        norms = np.linalg.norm(ensemble.states[lo:hi], axis=2)
        hit = norms >= radius
        any_hit = hit.any(axis=1)
        idx = np.argmax(hit, axis=1)
        out[lo:hi][any_hit] = idx[any_hit]
    return out


# ---------------------------------------------------------------------------
# export formats

_FLW1_MAGIC = b"FLW1"


def ensemble_to_csv(ensemble: PathEnsemble, path: str) -> None:
    """Columnar CSV: path_id, step, t, x_1..x_d, exploded."""
    d = ensemble.dim
    header = "path_id,step,t," + ",".join(f"x_{j + 1}" for j in range(d)) + ",exploded"
    P, K1 = ensemble.n_paths, ensemble.states.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for p in range(P):
            flag = int(ensemble.exploded[p])
            for k in range(K1):
                coords = ",".join(repr(float(v)) for v in ensemble.states[p, k])
                fh.write(f"{p},{k},{ensemble.time_grid[k]!r},{coords},{flag}\n")


def write_flw1(ensemble: PathEnsemble, path: str) -> None:
    """Compact binary dump.

    Layout (all little-endian): magic "FLW1"; uint32 version=1; uint32 d;
    uint64 n_paths; uint64 n_times; int64 seed; int64 stream; then the time
    grid (n_times float64), states (n_paths*n_times*d float64, C order),
    exploded flags (n_paths uint8), exit indices (n_paths int64).
    """
    with open(path, "wb") as fh:
        fh.write(_FLW1_MAGIC)
        fh.write(struct.pack("<IIQQqq", 1, ensemble.dim, ensemble.n_paths,
                             ensemble.states.shape[1], ensemble.seed,
                             ensemble.stream))
        fh.write(ensemble.time_grid.astype("<f8").tobytes())
        fh.write(ensemble.states.astype("<f8").tobytes())
        fh.write(ensemble.exploded.astype(np.uint8).tobytes())
        fh.write(ensemble.exit_index.astype("<i8").tobytes())


def read_flw1(path: str) -> PathEnsemble:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _FLW1_MAGIC:
            raise ValueError(f"not a FLW1 file: magic {magic!r}")
        version, d, n_paths, n_times, seed, stream = struct.unpack("<IIQQqq", fh.read(40))
        if version != 1:
            raise ValueError(f"unsupported FLW1 version {version}")
        grid = np.frombuffer(fh.read(8 * n_times), dtype="<f8").copy()
        states = np.frombuffer(fh.read(8 * n_paths * n_times * d), dtype="<f8")
        states = states.reshape(n_paths, n_times, d).copy()
        exploded = np.frombuffer(fh.read(n_paths), dtype=np.uint8).astype(bool)
        exit_index = np.frombuffer(fh.read(8 * n_paths), dtype="<i8").copy()
    return PathEnsemble(time_grid=grid, states=states, exploded=exploded,
                        exit_index=exit_index,
                        solver_failed=np.zeros(n_paths, dtype=bool),
                        coupling=None, seed=seed, stream=stream, scheme="")


def dt_refinement(problem: SdeProblem, config: SimulationConfig, initial,
                  statistic, factors=(1, 2, 4)) -> dict:
    """Evaluate a path-functional at dt, 2dt, 4dt and estimate the O(dt) bias.

    `statistic` maps an ensemble to a float. Returns {"estimates": {dt: value},
    "bias": Richardson estimate at the finest level}.
    """
    from .mcstats import richardson_bias

    estimates = {}
    for f in factors:
        cfg = replace(config, dt=config.dt * f)
        estimates[cfg.dt] = float(statistic(simulate(problem, cfg, initial)))
    vals = [estimates[config.dt * f] for f in factors]
    bias = richardson_bias(*vals) if len(vals) >= 3 else abs(vals[-1] - vals[0])
    return {"estimates": estimates, "bias": bias}
