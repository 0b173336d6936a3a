"""Numerical solution of the exact dealer value function.

The dynamic-programming reduction leaves a family of PDEs indexed by the
integer inventory ``q``:

    V_t + theta (alpha - nu) V_nu + 0.5 xi^2 nu V_nunu - (gamma/2) q^2 nu
        + (A/k) (exp(-k delta_a*) + exp(-k delta_b*)) = 0,   V(q, nu, T) = 0,

where the optimal premiums couple neighboring inventory levels:
``delta_a* = 1/k - beta [+ impact fee] + V(q) - V(q-1)`` and
``delta_b* = 1/k + beta [+ impact fee] + V(q) - V(q+1)``.  The solver steps
the coupled system backward in time with an explicit scheme (the coupling is
zeroth order, so no implicit treatment is needed) and extracts the exact
quotes, which are then compared against the closed-form approximation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import fd
from .heston import HestonParams
from .intensity import ArrivalParams
from .quotes import RiskParams, inventory_coefficient, inventory_premiums

__all__ = [
    "HjbConfig",
    "ValueGrid",
    "ComparisonReport",
    "CflError",
    "BlowupError",
    "solve_stock_hjb",
    "estimate_tolerance",
    "compare_exact_vs_approx",
    "write_grid_csv",
    "write_report_csv",
]


class CflError(RuntimeError):
    """Explicit time step exceeds the stability bound of the scheme."""


class BlowupError(RuntimeError):
    """Non-finite values appeared during the backward sweep."""


@dataclass(frozen=True)
class HjbConfig:
    """Inventory box, variance grid and time resolution for one solve."""

    heston: HestonParams
    arrival: ArrivalParams
    risk: RiskParams
    T: float
    q_min: int = -10
    q_max: int = 10
    nu_lo: float = 0.0
    nu_hi: float = 12.0
    n_nu: int = 61
    n_time: int = 2000
    include_impact: bool = False
    max_stored_slices: int = 201

    def __post_init__(self):
        if not (self.q_min < 0 < self.q_max):
            raise ValueError("inventory box must satisfy q_min < 0 < q_max")
        if self.nu_lo < 0 or self.nu_hi <= self.nu_lo:
            raise ValueError("variance grid must satisfy 0 <= nu_lo < nu_hi")
        if self.n_nu < 3:
            raise ValueError("need at least 3 variance nodes")
        if self.n_time < 1:
            raise ValueError("n_time must be at least 1")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def nu_grid(self) -> np.ndarray:
        return np.linspace(self.nu_lo, self.nu_hi, self.n_nu)

    @property
    def q_levels(self) -> np.ndarray:
        return np.arange(self.q_min, self.q_max + 1)


@dataclass
class ValueGrid:
    """Solved value function and exact quotes on (q, nu, t) nodes.

    ``values`` has shape ``(n_q, n_nu, n_t)`` with ``times`` ascending and the
    terminal slice identically zero.  Quotes are NaN at the inventory bound
    where the corresponding side is dropped.
    """

    config: HjbConfig
    q_levels: np.ndarray
    nu_grid: np.ndarray
    times: np.ndarray
    values: np.ndarray
    quotes_a: np.ndarray
    quotes_b: np.ndarray


@dataclass(frozen=True)
class ComparisonReport:
    max_quote_gap_a: float
    max_quote_gap_b: float
    sandwich_ok: bool
    c_emp: float
    tol: float
    gap_a_at: tuple[int, float, float]  # (q, nu, t) achieving the ask gap
    gap_b_at: tuple[int, float, float]


def _optimal_premiums(v: np.ndarray, config: HjbConfig) -> tuple[np.ndarray, np.ndarray]:
    """Exact premiums from a value slice ``v`` of shape (n_q, n_nu).

    Ask at inventory q needs V(q-1), bid needs V(q+1); the rows at the box
    edges where a side would leave the box are NaN.
    """
    base = 1.0 / config.arrival.k
    beta = config.risk.beta
    q = config.q_levels[:, None].astype(np.float64)
    fee_a = fee_b = 0.0
    if config.include_impact:
        fee = 0.5 * config.risk.gamma * config.risk.eta**2
        fee_a = fee * (q - 1.0) ** 2
        fee_b = fee * (q + 1.0) ** 2
    delta_a = np.full_like(v, np.nan)
    delta_b = np.full_like(v, np.nan)
    delta_a[1:, :] = base - beta + (fee_a + v)[1:, :] - v[:-1, :]
    delta_b[:-1, :] = base + beta + (fee_b + v)[:-1, :] - v[1:, :]
    return delta_a, delta_b


def _source(delta_a: np.ndarray, delta_b: np.ndarray, config: HjbConfig) -> np.ndarray:
    """Transaction source (A/k)(e^{-k delta_a} + e^{-k delta_b}); dropped
    sides (NaN premiums) contribute zero.  Overflow to inf is tolerated here
    and caught by the blow-up detector with a grid location."""
    k, A = config.arrival.k, config.arrival.A
    with np.errstate(over="ignore"):
        ask = np.where(np.isnan(delta_a), 0.0, np.exp(-k * np.nan_to_num(delta_a)))
        bid = np.where(np.isnan(delta_b), 0.0, np.exp(-k * np.nan_to_num(delta_b)))
    return (A / k) * (ask + bid)


def solve_stock_hjb(config: HjbConfig) -> ValueGrid:
    """Backward explicit solve of the coupled inventory-indexed PDE family."""
    nu = config.nu_grid
    heston = config.heston
    drift = heston.theta * (heston.alpha - nu)
    diffusion = 0.5 * heston.xi**2 * nu
    diags = fd.operator_diagonals(nu, drift, diffusion)

    dt = config.T / config.n_time
    # explicit stability bound for the nu-operator: dt * |diag| <= 1
    rate = float(np.max(np.abs(diags[1])))
    if rate > 0 and dt > 1.0 / rate:
        raise CflError(
            f"explicit step dt={dt:.3e} exceeds the stability bound {1.0 / rate:.3e}; "
            f"increase n_time to at least {math.ceil(config.T * rate)}"
        )

    q = config.q_levels.astype(np.float64)[:, None]
    penalty = 0.5 * config.risk.gamma * q**2 * nu[None, :]

    n_t = config.n_time + 1
    stride = max(1, math.ceil((n_t - 1) / max(1, config.max_stored_slices - 1)))
    stored_steps = sorted({0, *range(stride, config.n_time, stride), config.n_time})
    store_at = {s: i for i, s in enumerate(stored_steps)}

    shape = (q.size, nu.size, len(stored_steps))
    values = np.empty(shape)
    quotes_a = np.empty(shape)
    quotes_b = np.empty(shape)

    v = np.zeros((q.size, nu.size))

    def record(step_from_end: int, v_slice: np.ndarray):
        step = config.n_time - step_from_end  # index along ascending time
        if step in store_at:
            i = store_at[step]
            values[:, :, i] = v_slice
            da, db = _optimal_premiums(v_slice, config)
            quotes_a[:, :, i] = da
            quotes_b[:, :, i] = db

    record(0, v)
    for n in range(1, config.n_time + 1):
        da, db = _optimal_premiums(v, config)
        g = _source(da, db, config)
        lv = fd.apply_tridiagonal(diags, v, axis=1)
        v = v + dt * (lv + g - penalty)
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise BlowupError(
                f"non-finite value at q={config.q_levels[bad[0]]}, "
                f"nu={nu[bad[1]]:.4g}, t={config.T - n * dt:.4g} (step {n})"
            )
        record(n, v)

    times = np.array([s * dt for s in stored_steps])
    return ValueGrid(
        config=config,
        q_levels=config.q_levels.copy(),
        nu_grid=nu,
        times=times,
        values=values,
        quotes_a=quotes_a,
        quotes_b=quotes_b,
    )


def estimate_tolerance(config: HjbConfig, grid: ValueGrid | None = None) -> float:
    """Discretization tolerance from one refinement step (halve dt, double the
    variance resolution).  For the first-order scheme the error of the base
    solve is about twice the observed change; that factor is included."""
    if grid is None:
        grid = solve_stock_hjb(config)
    fine_cfg = replace(config, n_time=2 * config.n_time, n_nu=2 * config.n_nu - 1)
    fine = solve_stock_hjb(fine_cfg)
    # base nu-nodes are the even nodes of the refined grid
    common_t = np.intersect1d(grid.times, fine.times)
    it_base = np.searchsorted(grid.times, common_t)
    it_fine = np.searchsorted(fine.times, common_t)
    diff = np.abs(grid.values[:, :, it_base] - fine.values[:, ::2, it_fine])
    return max(2.0 * float(diff.max()), 1e-12)


def compare_exact_vs_approx(
    grid: ValueGrid,
    config: HjbConfig | None = None,
    tol: float | None = None,
    nu_window: tuple[float, float] | None = None,
    q_window: tuple[int, int] | None = None,
) -> ComparisonReport:
    """Quote gaps between the exact solve and the closed-form approximation,
    plus the empirical sandwich check on the value function.

    Gaps are taken over interior inventory levels (both quote sides defined)
    restricted to the optional ``q_window``/``nu_window``; the sandwich bound
    and ``c_emp`` use every node of the grid.
    """
    if config is None:
        config = grid.config
    elif config != grid.config:
        raise ValueError("config does not match the one the grid was solved with")
    if config.include_impact:
        raise ValueError("comparison against the impact-free closed form requires include_impact=False")
    if tol is None:
        tol = estimate_tolerance(config, grid)

    nu = grid.nu_grid
    t = grid.times
    qf = grid.q_levels.astype(np.float64)
    approx_a, approx_b = inventory_premiums(
        qf[:, None, None], nu[None, :, None], t[None, None, :],
        config.T, config.heston, config.arrival, config.risk,
    )

    mask = np.ones((grid.q_levels.size, nu.size, t.size), dtype=bool)
    mask[0, :, :] = mask[-1, :, :] = False
    if q_window is not None:
        keep = (grid.q_levels >= q_window[0]) & (grid.q_levels <= q_window[1])
        mask &= keep[:, None, None]
    if nu_window is not None:
        keep = (nu >= nu_window[0]) & (nu <= nu_window[1])
        mask &= keep[None, :, None]

    gap_a = np.abs(grid.quotes_a - approx_a)
    gap_b = np.abs(grid.quotes_b - approx_b)
    gap_a = np.where(mask, gap_a, np.nan)
    gap_b = np.where(mask, gap_b, np.nan)

    def located_max(gap):
        idx = np.unravel_index(np.nanargmax(gap), gap.shape)
        return float(gap[idx]), (int(grid.q_levels[idx[0]]), float(nu[idx[1]]), float(t[idx[2]]))

    max_a, at_a = located_max(gap_a)
    max_b, at_b = located_max(gap_b)

    g = _source(grid.quotes_a, grid.quotes_b, config)
    c_emp = float(g.max())

    v_tilde = -qf[:, None, None] ** 2 * inventory_coefficient(
        nu[None, :, None], t[None, None, :], config.T, config.heston, config.risk
    )
    tau = (config.T - t)[None, None, :]
    lower_ok = bool(np.all(grid.values >= v_tilde - tol))
    upper_ok = bool(np.all(grid.values <= v_tilde + c_emp * tau + tol))

    return ComparisonReport(
        max_quote_gap_a=max_a,
        max_quote_gap_b=max_b,
        sandwich_ok=lower_ok and upper_ok,
        c_emp=c_emp,
        tol=tol,
        gap_a_at=at_a,
        gap_b_at=at_b,
    )


def write_grid_csv(grid: ValueGrid, path: str | Path) -> None:
    """Dump values and exact/approximate quotes, one row per (q, nu, t) node."""
    cfg = grid.config
    approx_a, approx_b = inventory_premiums(
        grid.q_levels.astype(np.float64)[:, None, None],
        grid.nu_grid[None, :, None],
        grid.times[None, None, :],
        cfg.T, cfg.heston, cfg.arrival, cfg.risk,
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "nu", "t", "V", "delta_a_exact", "delta_b_exact",
                    "delta_a_approx", "delta_b_approx"])
        for iq, qv in enumerate(grid.q_levels):
            for inu, nuv in enumerate(grid.nu_grid):
                for it, tv in enumerate(grid.times):
                    w.writerow([
                        int(qv), repr(float(nuv)), repr(float(tv)),
                        repr(float(grid.values[iq, inu, it])),
                        repr(float(grid.quotes_a[iq, inu, it])),
                        repr(float(grid.quotes_b[iq, inu, it])),
                        repr(float(approx_a[iq, inu, it])),
                        repr(float(approx_b[iq, inu, it])),
                    ])


def write_report_csv(report: ComparisonReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([
            "max_quote_gap_a", "max_quote_gap_b", "sandwich_ok", "c_emp", "tol",
            "gap_a_q", "gap_a_nu", "gap_a_t", "gap_b_q", "gap_b_nu", "gap_b_t",
        ])
        w.writerow([
            repr(report.max_quote_gap_a), repr(report.max_quote_gap_b),
            int(report.sandwich_ok), repr(report.c_emp), repr(report.tol),
            report.gap_a_at[0], repr(report.gap_a_at[1]), repr(report.gap_a_at[2]),
            report.gap_b_at[0], repr(report.gap_b_at[1]), repr(report.gap_b_at[2]),
        ])
