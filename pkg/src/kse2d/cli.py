"""
Command-line entry point.

    kse2d {simulate,audit,picard,sweep,convergence} --config PATH [--out DIR]
          [--quiet] [--threads N]

Exit codes: 0 success, 2 configuration error, 3 blow-up or under-resolution,
4 auditor failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, RunConfig, load_config, serialize_config
from .grid import set_workers
from .io import (
    CsvWriter,
    build_initial_state,
    ensure_dir,
    l2_distance,
    write_csv,
    write_snapshot,
)
from .model import State
from .picard import picard_run
from .timestepper import BlowUpError, BlowUpReport, StepControl, integrate

log = logging.getLogger("kse2d")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_AUDIT = 4
EXIT_IO = 5

DISSIPATION_SAMPLES = 10
DISSIPATION_TOL = 1e-6


@dataclass
class SimResult:
    state: State
    records: list
    blowup: BlowUpReport | None = None
    kept: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.blowup is None


class _SnapshotWriter:
    """Writes a snapshot whenever the sample time reaches the next multiple of ``interval``."""

    def __init__(self, directory: str, interval: float, t0: float):
        self.dir = directory
        self.interval = interval
        self.next = t0
        self.count = 0

    def __call__(self, state: State, dt: float) -> None:
        if state.t + 1e-9 >= self.next:
            write_snapshot(os.path.join(self.dir, f"snap_{self.count:06d}.kse2"), state)
            self.count += 1
            self.next = state.t + self.interval


class _Keeper:
    """Keeps every ``stride``-th sampled state."""

    def __init__(self, stride: int):
        self.stride = max(1, stride)
        self.i = 0
        self.states: list[State] = []

    def __call__(self, state: State, dt: float) -> None:
        if self.i % self.stride == 0:
            self.states.append(state)
        self.i += 1


def _n_samples(state: State, control: StepControl) -> int:
    return int(math.floor((control.t_end - state.t) / control.sample_interval + 1e-9)) + 1


def run_simulation(
    cfg: RunConfig,
    out_dir: str | None = None,
    keep: int = 0,
    state0: State | None = None,
) -> SimResult:
    """Integrate the configured run; write CSV and snapshots when ``out_dir`` is set.

    ``keep`` > 0 retains about that many evenly spaced sampled states.
    """
    params = cfg.to_params()
    control = cfg.to_control()
    state = state0 if state0 is not None else build_initial_state(cfg)
    records, collector = dg.collect(params, cfg.diag.q_list, cfg.diag.q)
    observers = [collector]
    writer = None
    if out_dir is not None:
        ensure_dir(out_dir)
        with open(os.path.join(out_dir, "config.cfg"), "w", encoding="utf-8") as fh:
            fh.write(serialize_config(cfg))
        writer = CsvWriter(os.path.join(out_dir, "timeseries.csv"), dg.record_columns(cfg.diag.q_list))
        observers.append(lambda s, dt: writer.write(records[-1].as_row()))
        if cfg.out.snapshot_interval > 0:
            snap_dir = ensure_dir(os.path.join(out_dir, "snapshots"))
            observers.append(_SnapshotWriter(snap_dir, cfg.out.snapshot_interval, state.t))
    keeper = None
    if keep > 0:
        keeper = _Keeper(_n_samples(state, control) // keep)
        observers.append(keeper)
    blowup = None
    final = state
    try:
        final = integrate(state, params, control, observers)
    except BlowUpError as err:
        blowup = err.report
        log.error("blow-up: %s", err.report)
    finally:
        if writer is not None:
            writer.close()
    if out_dir is not None:
        if blowup is None:
            write_snapshot(os.path.join(out_dir, "final.kse2"), final)
        else:
            with open(os.path.join(out_dir, "blowup.txt"), "w", encoding="utf-8") as fh:
                fh.write(str(blowup) + "\n")
    kept = keeper.states if keeper is not None else []
    return SimResult(final, records, blowup, kept)


def _spread(items: list, k: int) -> list:
    if len(items) <= k:
        return list(items)
    idx = np.linspace(0, len(items) - 1, k).round().astype(int)
    return [items[i] for i in idx]


def run_audits(cfg: RunConfig, sim: SimResult) -> list[dg.AuditReport]:
    """All series auditors plus the dissipation identity at sampled states."""
    recs = sim.records
    reports = [
        dg.audit_mass(recs),
        dg.audit_circulation(recs),
        dg.audit_nonnegativity(recs),
    ]
    if len(recs) >= 2:
        reports.append(dg.audit_c_monotonicity(recs, cfg.diag.q_list))
    reports.append(dg.audit_rho_infty_trend(recs, cfg.diag.rho_bound))
    params = cfg.to_params()
    states = _spread(sim.kept, DISSIPATION_SAMPLES)
    for q in (2.0, 4.0):
        checks = [dg.audit_dissipation_identity(s, params, q) for s in states]
        worst = max((c.relative for c in checks), default=0.0)
        consumption_ok = all(c.consumption_nonpositive for c in checks)
        reports.append(
            dg.AuditReport(
                f"dissipation_q{int(q)}",
                worst < DISSIPATION_TOL and consumption_ok,
                f"max relative residual {worst:.3e} over {len(checks)} states (tolerance {DISSIPATION_TOL:.0e}); "
                f"consumption term non-positive: {consumption_ok}",
                {"relative": worst},
            )
        )
    ratios = dg.max_ratios(recs)
    finite = all(math.isfinite(v) for v in ratios.values())
    reports.append(
        dg.AuditReport(
            "inequality_ratios",
            finite,
            "max ratios " + ", ".join(f"{k}={v:.4g}" for k, v in ratios.items()),
            ratios,
        )
    )
    if sim.blowup is not None:
        reports.append(dg.AuditReport("completion", False, str(sim.blowup)))
    return reports


# -- subcommands -----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    sim = run_simulation(cfg, out)
    if not sim.ok:
        print(f"blow-up: {sim.blowup}", file=sys.stderr)
        return EXIT_BLOWUP
    log.info("simulate finished at t=%g with %d samples", sim.state.t, len(sim.records))
    return EXIT_OK


def cmd_audit(cfg: RunConfig, out: str) -> int:
    sim = run_simulation(cfg, out, keep=DISSIPATION_SAMPLES)
    reports = run_audits(cfg, sim)
    lines = [r.line() for r in reports]
    with open(os.path.join(out, "audit_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        log.info(line)
    if not sim.ok:
        print(f"blow-up: {sim.blowup}", file=sys.stderr)
        return EXIT_BLOWUP
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"auditor failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_picard(cfg: RunConfig, out: str) -> int:
    ensure_dir(out)
    state = build_initial_state(cfg)
    p = cfg.picard
    res = picard_run(state, cfg.to_params(), T=p.T, dt=p.dt, tol=p.tol, max_iter=p.max_iter)
    rows = []
    for i, r in enumerate(res.residuals):
        ratio = r / res.residuals[i - 1] if i > 0 and res.residuals[i - 1] > 0 else float("nan")
        rows.append({"iteration": i + 1, "residual": r, "ratio": ratio})
    write_csv(os.path.join(out, "picard_residuals.csv"), rows, ["iteration", "residual", "ratio"])
    with open(os.path.join(out, "picard_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(res.message + "\n")
    if res.converged:
        write_snapshot(os.path.join(out, "picard_final.kse2"), res.trajectory.state(res.trajectory.nt))
    log.info(res.message)
    if not res.contracting:
        print(res.message, file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def _sweep_config(cfg: RunConfig, param: str, value: float) -> RunConfig:
    if param == "A_c":
        return cfg.with_value("ic.c_amp", float(value))
    if param == "nu_u":
        return cfg.with_value("params.nu_u", float(value))
    return cfg.with_value("grid.n", int(value))


def _fmt_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) >= 1 else f"{v:g}"


def sweep_reference(param: str, values) -> float:
    """Value every run is compared against: the largest n, otherwise zero."""
    return float(max(values)) if param == "n" else 0.0


def cmd_sweep(cfg: RunConfig, out: str) -> int:
    sw = cfg.sweep
    if not sw.param or not sw.values:
        raise ConfigError("sweep needs sweep.param and sweep.values")
    ensure_dir(out)
    ref_value = sweep_reference(sw.param, sw.values)
    values = list(sw.values)
    if ref_value not in values:
        values.append(ref_value)
    results = {}
    for v in values:
        sub = os.path.join(out, f"{sw.param}_{_fmt_value(v)}")
        sim = run_simulation(_sweep_config(cfg, sw.param, v), sub)
        results[v] = sim
        log.info("sweep %s=%g: %s", sw.param, v, "completed" if sim.ok else f"blow-up ({sim.blowup})")
    ref = results[ref_value]
    cols = ["value", "completed", "t_final", "l2_rho", "l2_c", "l2_omega", "linf_rho", "linf_c", "X_energy"]
    cols += [f"max_ratio_{k}" for k in dg.INEQUALITIES]
    cols.append("l2_diff_vs_reference")
    rows = []
    for v in values:
        sim = results[v]
        g = sim.state.grid
        last = sim.records[-1]
        mr = dg.max_ratios(sim.records)
        row = {
            "value": v,
            "completed": sim.ok,
            "t_final": sim.state.t,
            "l2_rho": g.lq_norm(sim.state.rho, 2),
            "l2_c": last.lq_c.get(2.0, g.lq_norm(sim.state.c, 2)),
            "l2_omega": g.lq_norm(sim.state.omega, 2),
            "linf_rho": last.linf_rho,
            "linf_c": g.lq_norm(sim.state.c, math.inf),
            "X_energy": last.X_energy,
            "l2_diff_vs_reference": l2_distance(sim.state, ref.state) if sim.ok and ref.ok else float("nan"),
        }
        row.update({f"max_ratio_{k}": mr.get(k, float("nan")) for k in dg.INEQUALITIES})
        rows.append(row)
    write_csv(os.path.join(out, "sweep_comparison.csv"), rows, cols)
    if not all(s.ok for s in results.values()):
        print("blow-up in at least one sweep run", file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_OK


def _fixed_dt_run(cfg: RunConfig, T: float, dt: float) -> State:
    state = build_initial_state(cfg)
    control = StepControl(
        cfl=cfg.step.cfl,
        dt_max=max(dt, cfg.step.dt_min),
        dt_min=min(cfg.step.dt_min, dt),
        t_end=state.t + T,
        sample_interval=T,
        dt_fixed=dt,
    )
    return integrate(state, cfg.to_params(), control)


def temporal_study(cfg: RunConfig, dts, T: float) -> list[dict]:
    """Successive differences of fixed-dt runs and the observed order.

    A difference at round-off level (relative 1e-13) marks the scheme as
    exact for this configuration and no order is reported.
    """
    dts = sorted(dts, reverse=True)
    states = [_fixed_dt_run(cfg, T, dt) for dt in dts]
    scale = sum(states[-1].grid.lq_norm(f, 2) for f in states[-1].fields().values())
    diffs = [l2_distance(a, b) for a, b in zip(states[:-1], states[1:])]
    tiny = 1e-13 * max(scale, 1.0)
    rows = []
    for i, dt in enumerate(dts):
        d = diffs[i] if i < len(diffs) else float("nan")
        order = float("nan")
        if 0 < i < len(diffs) and diffs[i - 1] > tiny and diffs[i] > 0:
            order = math.log(diffs[i - 1] / diffs[i]) / math.log(dts[i - 1] / dts[i])
        exact = bool(i < len(diffs) and diffs[i] <= tiny)
        rows.append({"study": "dt", "level": i, "value": dt, "difference": d, "observed_order": order, "exact": exact})
    return rows


def spatial_study(cfg: RunConfig, ns, T: float, dt: float) -> list[dict]:
    """Errors against the finest grid; ``observed_order`` is log2 of the error drop per doubling."""
    ns = sorted(int(n) for n in ns)
    states = [_fixed_dt_run(cfg.with_value("grid.n", n), T, dt) for n in ns]
    ref = states[-1]
    errs = [l2_distance(s, ref) for s in states[:-1]]
    rows = []
    for i, n in enumerate(ns[:-1]):
        drop = errs[i - 1] / errs[i] if i > 0 and errs[i] > 0 else float("nan")
        order = math.log(drop) / math.log(n / ns[i - 1]) if i > 0 and errs[i] > 0 else float("nan")
        rows.append(
            {"study": "n", "level": i, "value": n, "difference": errs[i], "observed_order": order, "exact": False, "drop": drop}
        )
    return rows


def observed_temporal_order(rows: list[dict]) -> float:
    vals = [r["observed_order"] for r in rows if not math.isnan(r["observed_order"])]
    return min(vals) if vals else float("nan")


def cmd_convergence(cfg: RunConfig, out: str) -> int:
    ensure_dir(out)
    cv = cfg.convergence
    rows = temporal_study(cfg, cv.dts, cv.T)
    if cv.ns:
        rows += spatial_study(cfg, cv.ns, cv.T, cv.dt_spatial)
    for r in rows:
        r.setdefault("drop", float("nan"))
    write_csv(
        os.path.join(out, "convergence.csv"),
        rows,
        ["study", "level", "value", "difference", "observed_order", "drop", "exact"],
    )
    for r in rows:
        log.info("%s level %d (%g): difference %.3e order %.3f", r["study"], r["level"], r["value"], r["difference"], r["observed_order"])
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "audit": cmd_audit,
    "picard": cmd_picard,
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kse2d", description="Pseudo-spectral chemotaxis-fluid simulator and estimate auditor")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__ or name)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", default=None, help="output directory (default: out.dir from the config)")
        p.add_argument("--quiet", action="store_true", help="only print warnings and errors")
        p.add_argument("--threads", type=int, default=None, help="FFT worker threads, 0 = all cores")
    return parser


def _threads(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("KSE_THREADS")
        if env is None or env.strip() == "":
            return 1
        try:
            arg = int(env)
        except ValueError:
            raise ConfigError(f"KSE_THREADS must be an integer, got {env!r}") from None
    if arg < 0:
        raise ConfigError("--threads must be >= 0")
    return arg if arg > 0 else (os.cpu_count() or 1)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        set_workers(_threads(args.threads))
        cfg = load_config(args.config)
        out = args.out or cfg.out.dir
        return COMMANDS[args.command](cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG if not os.path.exists(args.config) else EXIT_IO
    except BlowUpError as err:
        print(f"blow-up: {err.report}", file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
