"""Experiment runner.

Subcommands map to the core experiments: ``simulate`` (ensemble + one dense
path series), ``compare`` (inventory vs symmetric table), ``frontier``
(risk-aversion sweep), ``trading-curve`` (average inventory path), ``hjb``
(exact value function and approximation report), ``price-option`` (call
surface slices) and ``option-mm`` (option market-making summary).

Every run resolves its configuration from defaults, an optional config file
and ``--set section.key=value`` overrides (in that precedence order), writes
CSV artifacts named ``<subcommand>-<timestamp>-<seed>.csv`` next to a manifest
echoing the resolved configuration, and prints the written paths.  All
randomness flows from the single master seed, so artifact contents are
byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, apply_overrides, dump_manifest, load_config
from .heston import HestonParams
from .hjb import BlowupError, CflError, HjbConfig, compare_exact_vs_approx, solve_stock_hjb, write_grid_csv, write_report_csv
from .intensity import ArrivalParams
from .option_mm import FunctionalLattice, GridExitError, run_hedged_paths, run_joint_paths, write_lattice_csv
from .option_pricing import PricingConfig, StabilityError, default_nu_grid, default_s_grid, solve_call_grid, write_slice_csv
from .quotes import Frozen, InventorySV, MarketImpact, RiskNeutral, RiskParams, Symmetric
from .sim_engine import SimConfig, efficient_frontier, run_ensemble, run_path

ENV_OUTPUT_DIR = "HESTONMM_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (CflError, BlowupError, StabilityError, GridExitError)


def _heston(cfg: RunConfig) -> HestonParams:
    h = cfg["heston"]
    return HestonParams(theta=h["theta"], alpha=h["alpha"], xi=h["xi"],
                        rho=h["rho"], s0=h["s0"], nu0=h["nu0"])


def _arrival(cfg: RunConfig) -> ArrivalParams:
    return ArrivalParams(A=cfg.get("arrival", "a"), k=cfg.get("arrival", "k"))


def _risk(cfg: RunConfig) -> RiskParams:
    r = cfg["risk"]
    return RiskParams(gamma=r["gamma"], beta=r["beta"], eta=r["eta"])


def _sim_config(cfg: RunConfig, q0: int | None = None) -> SimConfig:
    s = cfg["sim"]
    return SimConfig(
        heston=_heston(cfg), arrival=_arrival(cfg), risk=_risk(cfg),
        T=s["t_horizon"], dt=s["dt"], q0=s["q0"] if q0 is None else q0,
        impact=s["impact"], scheme=s["scheme"], snapshot_stride=s["snapshot_stride"],
    )


def _policy(cfg: RunConfig, sim: SimConfig, name: str | None = None,
            avg_spread: float | None = None):
    name = name or cfg.get("sim", "policy")
    if name == "inventory":
        return InventorySV(sim.heston, sim.arrival, sim.risk, sim.T)
    if name == "impact":
        return MarketImpact(sim.heston, sim.arrival, sim.risk, sim.T,
                            variant=cfg.get("sim", "impact_variant"))
    if name == "risk_neutral":
        return RiskNeutral(sim.arrival, sim.risk)
    if name == "frozen":
        return Frozen()
    if name == "symmetric":
        if avg_spread is None:
            raise ConfigError("symmetric policy requires a prior inventory run (internal)")
        return Symmetric(avg_spread)
    raise ConfigError(f"unknown policy {name!r}")


class ArtifactWriter:
    """Names, tracks and (on failure) removes output files."""

    def __init__(self, out_dir: Path, subcommand: str, seed: int):
        self.out_dir = out_dir
        self.stem = f"{subcommand}-{time.strftime('%Y%m%dT%H%M%S')}-{seed}"
        self.written: list[Path] = []

    def path(self, suffix: str = "", ext: str = ".csv") -> Path:
        name = self.stem + (f"-{suffix}" if suffix else "") + ext
        p = self.out_dir / name
        self.written.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.written:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, (str, int)) else repr(float(x)) for x in row])


def _terminal_rows(stats):
    for i in range(stats.n):
        yield (i, stats.profits[i], int(stats.q_terminal[i]), stats.z_terminal[i],
               stats.spread_terminal[i])


def _cmd_simulate(cfg: RunConfig, art: ArtifactWriter, seed: int, n: int, threads: int) -> None:
    sim = _sim_config(cfg)
    policy = _policy(cfg, sim)
    if cfg.get("sim", "policy") == "symmetric":
        base = run_ensemble(_policy(cfg, sim, "inventory"), sim, n, seed, threads=threads)
        policy = Symmetric(base.avg_spread)
    stats = run_ensemble(policy, sim, n, seed, threads=threads)
    _write_rows(art.path(), ["seed", "profit", "q_T", "z", "avg_spread"], _terminal_rows(stats))
    rec = run_path(policy, sim, seed, index=0)
    rows = []
    for j, t in enumerate(rec.times):
        da, db = rec.series_delta_a[j], rec.series_delta_b[j]
        s = rec.series_s[j]
        rows.append((t, s,
                     s + da if np.isfinite(da) else float("nan"),
                     s - db if np.isfinite(db) else float("nan"),
                     int(rec.series_q[j]), rec.series_z[j]))
    _write_rows(art.path("series"), ["t", "s", "p_a", "p_b", "q", "z"], rows)


def _cmd_compare(cfg: RunConfig, art: ArtifactWriter, seed: int, n: int, threads: int) -> None:
    sim = _sim_config(cfg)
    inv_name = "impact" if sim.impact else "inventory"
    inv = run_ensemble(_policy(cfg, sim, inv_name), sim, n, seed, threads=threads)
    sym = run_ensemble(Symmetric(inv.avg_spread), sim, n, seed, threads=threads)
    _write_rows(
        art.path(),
        ["Strategy", "Average Spread", "Profit", "Std (Profit)", "q_T", "Std (q_T)"],
        [("Inventory", inv.avg_spread, inv.profit_mean, inv.profit_std, inv.q_mean, inv.q_std),
         ("Symmetric", sym.avg_spread, sym.profit_mean, sym.profit_std, sym.q_mean, sym.q_std)],
    )
    lo = min(inv.profits.min(), sym.profits.min())
    hi = max(inv.profits.max(), sym.profits.max())
    edges = np.linspace(lo, hi, 31)
    rows = []
    for name, stats in (("Inventory", inv), ("Symmetric", sym)):
        _, counts = stats.histogram(edges=edges)
        rows.extend((name, edges[i], edges[i + 1], int(counts[i])) for i in range(counts.size))
    _write_rows(art.path("hist"), ["strategy", "bin_lo", "bin_hi", "count"], rows)


def _cmd_frontier(cfg: RunConfig, art: ArtifactWriter, seed: int, n: int | None, threads: int) -> None:
    sim = _sim_config(cfg, q0=cfg.get("frontier", "q0"))
    n = n or cfg.get("frontier", "n_paths")
    points = efficient_frontier(sim, cfg.get("frontier", "gammas"), n, seed, threads=threads)
    _write_rows(
        art.path(),
        ["gamma", "variance", "expected_objective", "objective_se", "profit_mean"],
        [(p.gamma, p.variance_proxy, p.objective, p.objective_se, p.profit_mean) for p in points],
    )


def _cmd_trading_curve(cfg: RunConfig, art: ArtifactWriter, seed: int, n: int, threads: int) -> None:
    sim = _sim_config(cfg)
    policy = _policy(cfg, sim)
    stats = run_ensemble(policy, sim, n, seed, threads=threads)
    _write_rows(
        art.path(),
        ["t", "q_mean", "q_std"],
        zip(stats.curve_times, stats.curve_mean, stats.curve_std),
    )


def _cmd_hjb(cfg: RunConfig, art: ArtifactWriter, seed: int) -> None:
    h = cfg["hjb"]
    hcfg = HjbConfig(
        heston=_heston(cfg), arrival=_arrival(cfg), risk=_risk(cfg),
        T=cfg.get("sim", "t_horizon"), q_min=h["q_min"], q_max=h["q_max"],
        nu_lo=h["nu_lo"], nu_hi=h["nu_hi"], n_nu=h["n_nu"], n_time=h["n_time"],
        include_impact=h["include_impact"],
    )
    grid = solve_stock_hjb(hcfg)
    if not hcfg.include_impact:
        report = compare_exact_vs_approx(grid, nu_window=(h["gap_nu_lo"], h["gap_nu_hi"]))
        write_report_csv(report, art.path())
    write_grid_csv(grid, art.path("grid"))


def _pricing_config(cfg: RunConfig) -> PricingConfig:
    p = cfg["pricing"]
    heston = _heston(cfg)
    T = cfg.get("sim", "t_horizon")
    return PricingConfig(
        heston=heston, strike=p["strike"], T=T, eta_nu=p["eta_nu"],
        s_grid=tuple(default_s_grid(heston, T, p["n_s"])),
        nu_grid=tuple(default_nu_grid(heston, T, p["n_nu"])),
        n_time=p["n_time"],
    )


def _cmd_price_option(cfg: RunConfig, art: ArtifactWriter, seed: int) -> None:
    grid = solve_call_grid(_pricing_config(cfg))
    write_slice_csv(grid, art.path(), t_values=[0.0])


def _cmd_option_mm(cfg: RunConfig, art: ArtifactWriter, seed: int, n: int, hedged: bool | None) -> None:
    om = cfg["option_mm"]
    heston, arrival, risk = _heston(cfg), _arrival(cfg), _risk(cfg)
    T = cfg.get("sim", "t_horizon")
    grid = solve_call_grid(_pricing_config(cfg))
    half_s = 0.75 * (grid.s_grid[-1] - heston.s0)
    s_nodes = np.linspace(heston.s0 - half_s, heston.s0 + half_s, om["lattice_n_s"])
    nu_nodes = np.linspace(0.04 * grid.nu_grid[-1], 0.75 * grid.nu_grid[-1], om["lattice_n_nu"])
    t_nodes = np.linspace(0.0, T, om["lattice_n_t"])
    lattice = FunctionalLattice.build(s_nodes, nu_nodes, t_nodes, T, heston, risk, grid,
                                      n_paths=om["lattice_paths"], seed=seed)
    hedged = om["hedged"] if hedged is None else hedged
    if hedged:
        st = run_hedged_paths(heston, arrival, risk, grid, lattice, T=T, dt=om["dt"],
                              n_paths=n, seed=seed, q_o0=om["q_o0"])
        _write_rows(
            art.path(),
            ["mode", "n", "z_mean", "q_o_mean", "qv_hedged_mean", "qv_unhedged_mean",
             "qv_rate_real", "qv_rate_pred", "qv_rate_disc", "clipped"],
            [("hedged", st.n, st.z_mean, st.q_o_mean,
              st.qv_hedged.mean(), st.qv_unhedged.mean(),
              st.qv_rate_real.mean(), st.qv_rate_pred.mean(), st.qv_rate_disc.mean(),
              st.clipped)],
        )
        tr = st.trace
        _write_rows(
            art.path("trace"),
            ["t", "s", "nu", "q_o", "a_o", "b_o"],
            zip(tr["t"], tr["s"], tr["nu"], tr["q_o"].astype(int).tolist(),
                tr["a_o"], tr["b_o"]),
        )
    else:
        st = run_joint_paths(heston, arrival, risk, grid, lattice, T=T, dt=om["dt"],
                             n_paths=n, seed=seed, q_o0=om["q_o0"])
        _write_rows(
            art.path(),
            ["mode", "n", "z_mean", "z_std", "q_s_mean", "q_o_mean", "qv_mean", "clipped"],
            [("joint", st.n, st.z_mean, st.z_std, st.q_s_mean, st.q_o_mean, st.qv_mean,
              st.clipped)],
        )
    write_lattice_csv(lattice, art.path("lattice"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hestonmm",
        description="Market-making experiments under stochastic volatility",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("simulate", "compare", "frontier", "trading-curve", "hjb",
                 "price-option", "option-mm"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="config file (key = value with [sections])")
        p.add_argument("--seed", type=int, help="master seed (overrides sim.seed)")
        p.add_argument("--paths", type=int, help="number of Monte Carlo paths")
        p.add_argument("--threads", type=int, default=1, help="worker cap for path blocks")
        p.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT_DIR} or cwd)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value; repeatable")
        if name == "option-mm":
            p.add_argument("--hedged", action=argparse.BooleanOptionalAction, default=None,
                           help="delta-hedged book (default from config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, args.set)
        if args.seed is not None:
            cfg.values["sim"]["seed"] = int(args.seed)
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigError("--paths must be positive")
            cfg.values["sim"]["n_paths"] = int(args.paths)
            cfg.values["frontier"]["n_paths"] = int(args.paths)
            cfg.values["option_mm"]["n_paths"] = int(args.paths)
        out_dir = Path(args.out or cfg.get("output", "dir")
                       or os.environ.get(ENV_OUTPUT_DIR, "."))
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seed = cfg.get("sim", "seed")
    n = cfg.get("sim", "n_paths")
    art = ArtifactWriter(out_dir, args.subcommand, seed)
    try:
        if args.subcommand == "simulate":
            _cmd_simulate(cfg, art, seed, n, args.threads)
        elif args.subcommand == "compare":
            _cmd_compare(cfg, art, seed, n, args.threads)
        elif args.subcommand == "frontier":
            _cmd_frontier(cfg, art, seed, args.paths, args.threads)
        elif args.subcommand == "trading-curve":
            _cmd_trading_curve(cfg, art, seed, n, args.threads)
        elif args.subcommand == "hjb":
            _cmd_hjb(cfg, art, seed)
        elif args.subcommand == "price-option":
            _cmd_price_option(cfg, art, seed)
        elif args.subcommand == "option-mm":
            _cmd_option_mm(cfg, art, seed, cfg.get("option_mm", "n_paths"), args.hedged)
        manifest = art.path(ext=".manifest")
        dump_manifest(cfg, manifest)
    except _NUMERICAL_ERRORS as exc:
        art.cleanup()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RuntimeError as exc:
        art.cleanup()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        # domain-parameter validation failures are configuration problems
        art.cleanup()
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in art.written:
        print(f"wrote {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
