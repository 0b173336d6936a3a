"""Option market-making policies.

Two books are supported.  The joint book quotes around both the stock and the
option mid simultaneously; its tilt functionals are

    H1 = -gamma     E[ integral of nu (Delta + rho xi C_nu) ]
    H2 = -gamma / 2 E[ integral of nu (Delta^2 + 2 rho xi Delta C_nu + xi^2 C_nu^2) ].

The delta-hedged book quotes only the option while holding ``q_s = -q_o Delta``
in stock continuously; its single functional is

    M = -(gamma / 2) xi^2 E[ integral of nu C_nu^2 ].

All three are path integrals under the real-world dynamics, estimated by
Monte Carlo with greeks interpolated from a solved pricing grid, and cached on
a coarse lattice for use inside simulations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .heston import HestonParams, MidState
from .intensity import ArrivalParams
from .option_pricing import PricingGrid
from .quotes import RiskParams, inventory_coefficient
from .seeding import FUNCTIONAL_STREAM, OPTION_MM_STREAM, block_ranges, path_generator

__all__ = [
    "OptionMMState",
    "Functionals",
    "FunctionalLattice",
    "GridExitError",
    "estimate_functionals",
    "joint_book_quotes",
    "hedged_book_quotes",
    "hedge_position",
    "approx_value_joint",
    "approx_value_hedged",
    "run_hedged_paths",
    "run_joint_paths",
    "HedgedStats",
    "JointStats",
    "write_lattice_csv",
]


class GridExitError(RuntimeError):
    """Too many simulated paths left the pricing grid."""


@dataclass(frozen=True)
class OptionMMState:
    """Dealer book: stock inventory (fractional when hedged), option
    inventory, mid state, hedging flag."""

    q_s: float
    q_o: int
    mid: MidState
    hedged: bool = False


@dataclass(frozen=True)
class Functionals:
    """Monte Carlo estimates of the quote-tilt functionals with standard
    errors.  H2 and M are nonpositive up to sampling noise."""

    h1: float
    h2: float
    m: float
    se_h1: float = 0.0
    se_h2: float = 0.0
    se_m: float = 0.0


def _simulate_integrals(
    s0: float, nu0: float, t: float, T: float,
    heston: HestonParams, grid: PricingGrid,
    n_paths: int, seed: int, dt_target: float,
    max_exit_fraction: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-path left-endpoint quadratures of the three integrands along
    real-world paths started at (s0, nu0, t)."""
    tau = T - t
    n_steps = max(1, round(tau / dt_target))
    dt = tau / n_steps
    sqrt_dt = math.sqrt(dt)
    rho, rho_c, xi = heston.rho, math.sqrt(1.0 - heston.rho**2), heston.xi

    s_lo, s_hi = grid.s_grid[0], grid.s_grid[-1]
    v_lo, v_hi = grid.nu_grid[0], grid.nu_grid[-1]

    i1 = np.empty(n_paths)
    i2 = np.empty(n_paths)
    i3 = np.empty(n_paths)
    exited = 0
    for lo, hi in block_ranges(n_paths):
        shocks = np.stack([
            path_generator(seed, FUNCTIONAL_STREAM, i).standard_normal((n_steps, 2))
            for i in range(lo, hi)
        ])
        n = hi - lo
        s = np.full(n, s0)
        nu = np.full(n, nu0)
        a1 = np.zeros(n)
        a2 = np.zeros(n)
        a3 = np.zeros(n)
        out = np.zeros(n, dtype=bool)
        for step in range(n_steps):
            out |= (s < s_lo) | (s > s_hi) | (nu < v_lo) | (nu > v_hi)
            sc = np.clip(s, s_lo, s_hi)
            vc = np.clip(nu, v_lo, v_hi)
            dplane, _, cplane = grid.greek_planes(t + step * dt)
            delta = grid._bilinear(dplane, sc, vc)
            c_nu = grid._bilinear(cplane, sc, vc)
            a1 += nu * (delta + rho * xi * c_nu) * dt
            a2 += nu * (delta**2 + 2.0 * rho * xi * delta * c_nu + xi**2 * c_nu**2) * dt
            a3 += nu * c_nu**2 * dt
            nu_pos = np.maximum(nu, 0.0)
            root = np.sqrt(nu_pos)
            z_s = shocks[:, step, 0]
            z_v = rho * z_s + rho_c * shocks[:, step, 1]
            s = s + root * z_s * sqrt_dt
            nu = np.maximum(nu + heston.theta * (heston.alpha - nu) * dt + xi * root * z_v * sqrt_dt, 0.0)
        i1[lo:hi], i2[lo:hi], i3[lo:hi] = a1, a2, a3
        exited += int(out.sum())
    if exited > max_exit_fraction * n_paths:
        raise GridExitError(
            f"{exited}/{n_paths} paths left the pricing grid "
            f"(allowed fraction {max_exit_fraction}); widen the grid"
        )
    return i1, i2, i3


def estimate_functionals(
    s: float, nu: float, t: float, T: float,
    heston: HestonParams, risk: RiskParams, grid: PricingGrid,
    n_paths: int = 2000, seed: int = 0, dt_target: float = 0.005,
    max_exit_fraction: float = 0.01,
) -> Functionals:
    """Estimate (H1, H2, M) at state (s, nu, t) by Monte Carlo.

    Exact zeros at ``t == T`` (empty integral) and for ``gamma == 0``.
    """
    if t > T:
        raise ValueError("t beyond horizon")
    if t == T or risk.gamma == 0.0:
        return Functionals(0.0, 0.0, 0.0)
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    i1, i2, i3 = _simulate_integrals(s, nu, t, T, heston, grid, n_paths, seed,
                                     dt_target, max_exit_fraction)
    g = risk.gamma
    root_n = math.sqrt(n_paths)
    return Functionals(
        h1=-g * float(i1.mean()),
        h2=-0.5 * g * float(i2.mean()),
        m=-0.5 * g * heston.xi**2 * float(i3.mean()),
        se_h1=g * float(i1.std(ddof=1)) / root_n,
        se_h2=0.5 * g * float(i2.std(ddof=1)) / root_n,
        se_m=0.5 * g * heston.xi**2 * float(i3.std(ddof=1)) / root_n,
    )


class FunctionalLattice:
    """(H1, H2, M) precomputed on a coarse (s, nu, t) lattice and
    interpolated trilinearly during simulations."""

    def __init__(self, s_nodes, nu_nodes, t_nodes, h1, h2, m):
        self.s_nodes = np.asarray(s_nodes, dtype=np.float64)
        self.nu_nodes = np.asarray(nu_nodes, dtype=np.float64)
        self.t_nodes = np.asarray(t_nodes, dtype=np.float64)
        self.h1 = np.asarray(h1)
        self.h2 = np.asarray(h2)
        self.m = np.asarray(m)
        pts = (self.s_nodes, self.nu_nodes, self.t_nodes)
        self._interp = {
            "h1": RegularGridInterpolator(pts, self.h1, bounds_error=False, fill_value=None),
            "h2": RegularGridInterpolator(pts, self.h2, bounds_error=False, fill_value=None),
            "m": RegularGridInterpolator(pts, self.m, bounds_error=False, fill_value=None),
        }

    @classmethod
    def build(
        cls, s_nodes, nu_nodes, t_nodes, T: float,
        heston: HestonParams, risk: RiskParams, grid: PricingGrid,
        n_paths: int = 1000, seed: int = 0, dt_target: float = 0.01,
        max_exit_fraction: float = 0.5,
    ) -> "FunctionalLattice":
        # outer lattice nodes sit near the pricing-grid edge on purpose, so a
        # generous exit fraction is the default here; exited paths are clamped
        s_nodes = np.asarray(s_nodes, dtype=np.float64)
        nu_nodes = np.asarray(nu_nodes, dtype=np.float64)
        t_nodes = np.asarray(t_nodes, dtype=np.float64)
        shape = (s_nodes.size, nu_nodes.size, t_nodes.size)
        h1 = np.zeros(shape)
        h2 = np.zeros(shape)
        m = np.zeros(shape)
        node = 0
        for i, sv in enumerate(s_nodes):
            for j, nv in enumerate(nu_nodes):
                for k, tv in enumerate(t_nodes):
                    node += 1
                    if tv >= T:
                        continue
                    f = estimate_functionals(
                        float(sv), float(nv), float(tv), T, heston, risk, grid,
                        n_paths=n_paths, seed=seed + node, dt_target=dt_target,
                        max_exit_fraction=max_exit_fraction,
                    )
                    h1[i, j, k], h2[i, j, k], m[i, j, k] = f.h1, f.h2, f.m
        return cls(s_nodes, nu_nodes, t_nodes, h1, h2, m)

    def _eval(self, key, s, nu, t):
        s = np.clip(np.asarray(s, dtype=np.float64), self.s_nodes[0], self.s_nodes[-1])
        nu = np.clip(np.asarray(nu, dtype=np.float64), self.nu_nodes[0], self.nu_nodes[-1])
        t = np.clip(np.asarray(t, dtype=np.float64), self.t_nodes[0], self.t_nodes[-1])
        pts = np.stack(np.broadcast_arrays(s, nu, t), axis=-1)
        out = self._interp[key](pts)
        if np.ndim(s) == 0 and np.ndim(nu) == 0 and np.ndim(t) == 0:
            return float(out.reshape(-1)[0])
        return out

    def functionals(self, s, nu, t):
        return self._eval("h1", s, nu, t), self._eval("h2", s, nu, t), self._eval("m", s, nu, t)


def joint_book_quotes(
    state: OptionMMState, F: Functionals,
    arrival: ArrivalParams, heston: HestonParams, risk: RiskParams,
    t: float, T: float,
) -> tuple[float, float, float, float]:
    """Four premiums (ask/bid stock, ask/bid option) of the joint book.

    Clearing fees are zero in the option setting, so the stock tilt uses the
    inventory coefficient with ``beta`` absent.
    """
    if state.hedged:
        raise ValueError("joint-book quotes require an unhedged state")
    f = float(inventory_coefficient(state.mid.nu, t, T, heston, risk))
    base = 1.0 / arrival.k
    q_s, q_o = state.q_s, state.q_o
    a_s = base - f * (2.0 * q_s - 1.0) + F.h1 * q_o
    b_s = base + f * (2.0 * q_s + 1.0) - F.h1 * q_o
    a_o = base + F.h2 * (2.0 * q_o - 1.0) + F.h1 * q_s
    b_o = base - F.h2 * (2.0 * q_o + 1.0) - F.h1 * q_s
    return a_s, b_s, a_o, b_o


def hedged_book_quotes(state: OptionMMState, F: Functionals, arrival: ArrivalParams) -> tuple[float, float]:
    """Option premiums of the delta-hedged book: ``1/k + M (2 q_o -+ 1)``."""
    base = 1.0 / arrival.k
    a_o = base + F.m * (2.0 * state.q_o - 1.0)
    b_o = base - F.m * (2.0 * state.q_o + 1.0)
    return a_o, b_o


def hedge_position(q_o, delta):
    """Stock holding maintaining the delta hedge, ``q_s = -q_o * Delta``."""
    return -np.asarray(q_o, dtype=np.float64) * np.asarray(delta, dtype=np.float64)


def approx_value_joint(q_s: float, q_o: int, nu: float, t: float, T: float,
                       heston: HestonParams, risk: RiskParams, F: Functionals) -> float:
    """Quadratic approximate value of the joint book:
    ``-f q_s^2 + H1 q_s q_o + H2 q_o^2``."""
    f = float(inventory_coefficient(nu, t, T, heston, risk))
    return -f * q_s**2 + F.h1 * q_s * q_o + F.h2 * q_o**2


def approx_value_hedged(q_o: int, F: Functionals) -> float:
    """Approximate value of the hedged book, ``M q_o^2``."""
    return F.m * q_o**2


@dataclass
class HedgedStats:
    """Aggregates from delta-hedged option market-making paths."""

    n: int
    z_mean: float
    q_o_mean: float
    qv_hedged: np.ndarray  # per-path realized QV of the hedged book
    qv_unhedged: np.ndarray  # same fills, option-only book
    qv_rate_real: np.ndarray  # per-path mean of (dI)^2 / dt
    qv_rate_pred: np.ndarray  # per-path mean of nu xi^2 C_nu^2 q_o^2
    # leading discretization correction of the squared-increment estimator:
    # per-path mean of 0.5 Gamma^2 nu^2 q_o^2 dt (vanishes as dt -> 0)
    qv_rate_disc: np.ndarray
    clipped: int
    # quote trace of path 0: (t, s, nu, q_o, a_o, b_o) columns
    trace: dict | None = None


@dataclass
class JointStats:
    n: int
    z_mean: float
    z_std: float
    q_s_mean: float
    q_o_mean: float
    qv_mean: float
    clipped: int


def _mm_draws(seed: int, index: int, n_steps: int, n_uniform: int):
    rng = path_generator(seed, OPTION_MM_STREAM, index)
    shocks = rng.standard_normal((n_steps, 2))
    uniforms = rng.random((n_steps, n_uniform))
    return shocks, uniforms


def run_hedged_paths(
    heston: HestonParams, arrival: ArrivalParams, risk: RiskParams,
    grid: PricingGrid, lattice: FunctionalLattice,
    T: float, dt: float, n_paths: int, seed: int, q_o0: int = 0,
) -> HedgedStats:
    """Simulate the delta-hedged option dealer.

    Per step: quote the option via the hedged policy, sample fills, rebalance
    the stock hedge to ``-q_o Delta``, then move the market.  The realized
    inventory-value increment ``q_s dS + q_o dC`` is accumulated both for the
    hedged book and for an option-only twin with identical fills.
    """
    n_steps = round(T / dt)
    if abs(n_steps * dt - T) > 1e-9:
        raise ValueError("dt must divide T")
    sqrt_dt = math.sqrt(dt)
    rho, rho_c, xi = heston.rho, math.sqrt(1.0 - heston.rho**2), heston.xi
    s_lo, s_hi = grid.s_grid[0], grid.s_grid[-1]
    v_lo, v_hi = grid.nu_grid[0], grid.nu_grid[-1]

    qv_h = np.empty(n_paths)
    qv_u = np.empty(n_paths)
    rate_real = np.empty(n_paths)
    rate_pred = np.empty(n_paths)
    rate_disc = np.empty(n_paths)
    z_tot = 0.0
    qo_tot = 0.0
    clipped = 0
    trace = {k: np.empty(n_steps) for k in ("t", "s", "nu", "q_o", "a_o", "b_o")}

    for lo, hi in block_ranges(n_paths):
        n = hi - lo
        stacked = [_mm_draws(seed, i, n_steps, 2) for i in range(lo, hi)]
        shocks = np.stack([d[0] for d in stacked])
        uniforms = np.stack([d[1] for d in stacked])

        s = np.full(n, heston.s0)
        nu = np.full(n, heston.nu0)
        q_o = np.full(n, q_o0, dtype=np.int64)
        z = np.zeros(n)
        acc_h = np.zeros(n)
        acc_u = np.zeros(n)
        acc_pred = np.zeros(n)
        acc_disc = np.zeros(n)

        for step in range(n_steps):
            t = step * dt
            sc = np.clip(s, s_lo, s_hi)
            vc = np.clip(nu, v_lo, v_hi)
            dplane, gplane, cplane = grid.greek_planes(t)
            plane = grid._time_slice(t)
            delta = grid._bilinear(dplane, sc, vc)
            gamma = grid._bilinear(gplane, sc, vc)
            c_nu = grid._bilinear(cplane, sc, vc)
            c_now = grid._bilinear(plane, sc, vc)

            _, _, m = lattice.functionals(sc, vc, t)
            qf = q_o.astype(np.float64)
            a_o = 1.0 / arrival.k + m * (2.0 * qf - 1.0)
            b_o = 1.0 / arrival.k - m * (2.0 * qf + 1.0)
            if lo == 0:
                trace["t"][step] = t
                trace["s"][step] = s[0]
                trace["nu"][step] = nu[0]
                trace["q_o"][step] = q_o[0]
                trace["a_o"][step] = a_o[0]
                trace["b_o"][step] = b_o[0]
            raw_a = arrival.A * np.exp(-arrival.k * a_o) * dt
            raw_b = arrival.A * np.exp(-arrival.k * b_o) * dt
            clipped += int(np.count_nonzero(raw_a > 1)) + int(np.count_nonzero(raw_b > 1))
            fa = uniforms[:, step, 0] < np.minimum(raw_a, 1.0)
            fb = uniforms[:, step, 1] < np.minimum(raw_b, 1.0)
            z += np.where(fa, a_o, 0.0) + np.where(fb, b_o, 0.0)
            q_o += fb.astype(np.int64) - fa.astype(np.int64)

            qf = q_o.astype(np.float64)  # post-fill inventory carries the step
            q_s = -qf * delta
            acc_pred += nu * xi**2 * c_nu**2 * qf**2 * dt
            acc_disc += 0.5 * (gamma * nu * qf) ** 2 * dt**2

            nu_pos = np.maximum(nu, 0.0)
            root = np.sqrt(nu_pos)
            z_s = shocks[:, step, 0]
            z_v = rho * z_s + rho_c * shocks[:, step, 1]
            ds = root * z_s * sqrt_dt
            s = s + ds
            nu = np.maximum(nu + heston.theta * (heston.alpha - nu) * dt + xi * root * z_v * sqrt_dt, 0.0)

            sc2 = np.clip(s, s_lo, s_hi)
            vc2 = np.clip(nu, v_lo, v_hi)
            c_next = grid._bilinear(grid._time_slice(t + dt), sc2, vc2)
            dc = c_next - c_now
            di_h = q_s * ds + qf * dc
            di_u = qf * dc
            acc_h += di_h**2
            acc_u += di_u**2

        qv_h[lo:hi] = acc_h
        qv_u[lo:hi] = acc_u
        rate_real[lo:hi] = acc_h / (n_steps * dt)
        rate_pred[lo:hi] = acc_pred / (n_steps * dt)
        rate_disc[lo:hi] = acc_disc / (n_steps * dt)
        z_tot += float(z.sum())
        qo_tot += float(q_o.sum())

    return HedgedStats(
        n=n_paths,
        z_mean=z_tot / n_paths,
        q_o_mean=qo_tot / n_paths,
        qv_hedged=qv_h,
        qv_unhedged=qv_u,
        qv_rate_real=rate_real,
        qv_rate_pred=rate_pred,
        qv_rate_disc=rate_disc,
        clipped=clipped,
        trace=trace,
    )


def run_joint_paths(
    heston: HestonParams, arrival: ArrivalParams, risk: RiskParams,
    grid: PricingGrid, lattice: FunctionalLattice,
    T: float, dt: float, n_paths: int, seed: int,
    q_s0: int = 0, q_o0: int = 0,
) -> JointStats:
    """Simulate the joint stock+option dealer with the four-quote policy."""
    n_steps = round(T / dt)
    if abs(n_steps * dt - T) > 1e-9:
        raise ValueError("dt must divide T")
    sqrt_dt = math.sqrt(dt)
    rho, rho_c, xi = heston.rho, math.sqrt(1.0 - heston.rho**2), heston.xi
    s_lo, s_hi = grid.s_grid[0], grid.s_grid[-1]
    v_lo, v_hi = grid.nu_grid[0], grid.nu_grid[-1]
    base = 1.0 / arrival.k

    z_all = np.empty(n_paths)
    qs_all = np.empty(n_paths, dtype=np.int64)
    qo_all = np.empty(n_paths, dtype=np.int64)
    qv_all = np.empty(n_paths)
    clipped = 0

    for lo, hi in block_ranges(n_paths):
        n = hi - lo
        stacked = [_mm_draws(seed, i, n_steps, 4) for i in range(lo, hi)]
        shocks = np.stack([d[0] for d in stacked])
        uniforms = np.stack([d[1] for d in stacked])

        s = np.full(n, heston.s0)
        nu = np.full(n, heston.nu0)
        q_s = np.full(n, q_s0, dtype=np.int64)
        q_o = np.full(n, q_o0, dtype=np.int64)
        z = np.zeros(n)
        qv = np.zeros(n)

        for step in range(n_steps):
            t = step * dt
            sc = np.clip(s, s_lo, s_hi)
            vc = np.clip(nu, v_lo, v_hi)
            plane = grid._time_slice(t)
            c_now = grid._bilinear(plane, sc, vc)
            h1, h2, _ = lattice.functionals(sc, vc, t)
            f = inventory_coefficient(nu, t, T, heston, risk)

            qsf = q_s.astype(np.float64)
            qof = q_o.astype(np.float64)
            a_s = base - f * (2 * qsf - 1) + h1 * qof
            b_s = base + f * (2 * qsf + 1) - h1 * qof
            a_o = base + h2 * (2 * qof - 1) + h1 * qsf
            b_o = base - h2 * (2 * qof + 1) - h1 * qsf

            probs = []
            for dlt in (a_s, b_s, a_o, b_o):
                raw = arrival.A * np.exp(-arrival.k * dlt) * dt
                clipped += int(np.count_nonzero(raw > 1))
                probs.append(np.minimum(raw, 1.0))
            f_as = uniforms[:, step, 0] < probs[0]
            f_bs = uniforms[:, step, 1] < probs[1]
            f_ao = uniforms[:, step, 2] < probs[2]
            f_bo = uniforms[:, step, 3] < probs[3]
            z += (np.where(f_as, a_s, 0.0) + np.where(f_bs, b_s, 0.0)
                  + np.where(f_ao, a_o, 0.0) + np.where(f_bo, b_o, 0.0))
            q_s += f_bs.astype(np.int64) - f_as.astype(np.int64)
            q_o += f_bo.astype(np.int64) - f_ao.astype(np.int64)

            nu_pos = np.maximum(nu, 0.0)
            root = np.sqrt(nu_pos)
            z_sh = shocks[:, step, 0]
            z_v = rho * z_sh + rho_c * shocks[:, step, 1]
            ds = root * z_sh * sqrt_dt
            s = s + ds
            nu = np.maximum(nu + heston.theta * (heston.alpha - nu) * dt + xi * root * z_v * sqrt_dt, 0.0)
            c_next = grid._bilinear(grid._time_slice(t + dt),
                                    np.clip(s, s_lo, s_hi), np.clip(nu, v_lo, v_hi))
            di = q_s.astype(np.float64) * ds + q_o.astype(np.float64) * (c_next - c_now)
            qv += di**2

        z_all[lo:hi] = z
        qs_all[lo:hi] = q_s
        qo_all[lo:hi] = q_o
        qv_all[lo:hi] = qv

    ddof = 1 if n_paths > 1 else 0
    return JointStats(
        n=n_paths,
        z_mean=float(z_all.mean()),
        z_std=float(z_all.std(ddof=ddof)),
        q_s_mean=float(qs_all.mean()),
        q_o_mean=float(qo_all.mean()),
        qv_mean=float(qv_all.mean()),
        clipped=clipped,
    )


def write_lattice_csv(lattice: FunctionalLattice, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "nu", "t", "H1", "H2", "M"])
        for i, sv in enumerate(lattice.s_nodes):
            for j, nv in enumerate(lattice.nu_nodes):
                for k, tv in enumerate(lattice.t_nodes):
                    w.writerow([
                        repr(float(sv)), repr(float(nv)), repr(float(tv)),
                        repr(float(lattice.h1[i, j, k])),
                        repr(float(lattice.h2[i, j, k])),
                        repr(float(lattice.m[i, j, k])),
                    ])
