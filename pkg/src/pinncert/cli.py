"""Command-line experiment driver.

Subcommands: train, certify, surrogate, compare, schedule.  Exit codes:
0 success, 2 configuration/validation problem, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import certify as cert
from . import presets, surrogate
from .config import ExperimentConfig, load_config, preset_config, save_config
from .network import load_network, save_network
from .ode import BlowUpError, ConfigurationError
from .train import DivergenceError, TrainingRun, export_loss_history, sample_collocation


def _resolve_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = preset_config(args.preset or "decay1d",
                            desk_scale=getattr(args, "desk_scale", True))
    if getattr(args, "preset", None):
        cfg.preset = args.preset
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "desk_scale", None) is False and cfg.preset == "pendulum":
        cfg = preset_config("pendulum", seed=cfg.seed, desk_scale=False)
        if getattr(args, "out", None):
            cfg.out_dir = args.out
    cfg.validate()
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")
    return out


def cmd_train(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    net, problem, history = presets.train_preset(cfg)
    save_network(net, out / "network.json")
    export_loss_history(history, out / "loss.csv")
    if history:
        total, ld, lp = history[-1]
        print(f"final losses: total={total:.6g} data={ld:.6g} phys={lp:.6g}")
    else:
        print("zero epochs requested; network saved at initialization")
    print(f"artifacts written to {out}")
    return 0


def _certify_grid(cfg, net, problem, ccfg, with_reference):
    t_grid = np.linspace(0.0, problem.t_final, cfg.query_points)
    x0 = np.array([lo for lo, hi in problem.box.x0])   # degenerate box: fixed x0
    u = np.zeros(problem.control_dim)
    certs = [cert.bound(net, problem, x0, u, t, ccfg) for t in t_grid]
    actual = cert.actual_error(net, problem, x0, u, t_grid) if with_reference else None
    return certs, actual


def _certify_schedule(cfg, net, problem, ccfg, schedule, n_intervals,
                      times_per_interval, with_reference):
    dt = presets.SCHEDULE_T_TOTAL / presets.SCHEDULE_INTERVALS
    certs, actual = [], [] if with_reference else None
    for t_start, x0, u in schedule[:n_intervals]:
        local = np.linspace(0.0, dt, times_per_interval)
        for t in local:
            c = cert.bound(net, problem, x0, [u], t, ccfg)
            c.t = t_start + t          # report global time
            c.constants_used["interval_t_start"] = t_start
            certs.append(c)
        if with_reference:
            actual.extend(cert.actual_error(net, problem, x0, [u], local))
    return certs, (np.array(actual) if with_reference else None)


def cmd_certify(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    problem = presets.build_problem(cfg)
    net = load_network(args.network or Path(cfg.out_dir) / "network.json")
    ccfg = presets.certify_config(cfg)
    if ccfg.mode != "linear" and ccfg.L is None and problem.linear_part is None:
        # estimate L once for the whole query set, at certification density
        colloc = sample_collocation(problem, ccfg.colloc_count, ccfg.colloc_seed)
        ccfg.L = cert.estimate_lipschitz(problem, colloc)
        print(f"estimated Lipschitz constant L = {ccfg.L:.6g}")
    if args.schedule:
        if cfg.preset != "pendulum":
            raise ConfigurationError("control schedules apply to the pendulum preset only")
        schedule = presets.load_schedule(args.schedule)
        certs, actual = _certify_schedule(
            cfg, net, problem, ccfg, schedule, args.intervals,
            args.times_per_interval, args.with_reference)
    else:
        certs, actual = _certify_grid(cfg, net, problem, ccfg, args.with_reference)
    path = out / "certificates.csv"
    cert.export_certificates(certs, path, actual)
    if actual is not None:
        violations = sum(1 for c, a in zip(certs, actual) if c.total < a - 1e-12)
        print(f"rigor violations: {violations} of {len(certs)}")
    print(f"certificates written to {path}")
    return 0


def cmd_surrogate(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    problem = presets.build_problem(cfg)
    net = load_network(args.network or Path(cfg.out_dir) / "network.json")
    ccfg = presets.certify_config(cfg)
    if args.data:
        dataset = surrogate.load_surrogate_dataset(
            args.data, problem.dim, problem.control_dim, seed=cfg.seed + 23)
    else:
        dataset = surrogate.generate_surrogate_data(
            net, problem, cfg.surr_count, cfg.seed + 23, ccfg)
        surrogate.export_surrogate_dataset(dataset, out / "surrogate_data.csv")
    run = TrainingRun(gamma_data=1.0, gamma_phys=0.0, optimizer=cfg.surr_optimizer,
                      epochs=cfg.surr_epochs, seed=cfg.seed + 28, lr=cfg.surr_lr)
    err_net = surrogate.train_error_net(dataset, cfg.surr_hidden, run,
                                        under_weight=cfg.surr_under_weight)
    save_network(err_net, out / "errornet.json")

    # held-out comparison
    held = sample_collocation(problem, cfg.surr_holdout, cfg.seed + 31)
    if cfg.preset == "decay1d":
        held.t = np.linspace(0.0, problem.t_final, cfg.surr_holdout)
    e_cert = np.array([
        cert.bound(net, problem, held.x0[i], held.u[i], held.t[i], ccfg).total
        for i in range(cfg.surr_holdout)])
    e_nn = np.array([
        surrogate.evaluate_error_net(err_net, held.t[i], held.x0[i], held.u[i])[0]
        for i in range(cfg.surr_holdout)])
    path = out / "surrogate_comparison.csv"
    n = problem.dim
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"x0_{i + 1}" for i in range(n))
                 + (",u" if problem.control_dim else "") + ",e_certified,e_nn\n")
        for i in range(cfg.surr_holdout):
            row = [held.t[i], *held.x0[i], *held.u[i], e_cert[i], e_nn[i]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    frac = float(np.mean(e_nn >= e_cert))
    print(f"held-out overestimation fraction: {frac:.3f}")
    print(f"surrogate artifacts written to {out}")
    return 0


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise ConfigurationError(f"{path}: empty CSV")
        cols = header.split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        raise ConfigurationError(f"{path}: no data rows")
    return cols, data


def cmd_compare(args):
    cols, data = _read_csv(args.certificates)
    idx = {c: i for i, c in enumerate(cols)}
    if "total" not in idx or "t" not in idx:
        raise ConfigurationError("certificates CSV must have t and total columns")
    totals = data[:, idx["total"]]
    print(f"certificates: {len(totals)} rows, max total {totals.max():.6g}")
    if "actual_error" in idx:
        actual = data[:, idx["actual_error"]]
        violations = int(np.sum(totals < actual - 1e-12))
        mask = actual > 0
        factors = totals[mask] / actual[mask]
        print(f"rigor violations: {violations}")
        if mask.any():
            print(f"overestimation factor: max {factors.max():.6g} mean {factors.mean():.6g}")
        if violations:
            print("FAIL: certificate fell below the reference error")
            return 1
    if args.surrogate:
        scols, sdata = _read_csv(args.surrogate)
        sidx = {c: i for i, c in enumerate(scols)}
        if "e_certified" not in sidx or "e_nn" not in sidx:
            raise ConfigurationError("surrogate CSV must have e_certified and e_nn columns")
        st = sdata[:, sidx["t"]]
        ct = data[:, idx["t"]]
        if len(st) != len(ct) or not np.allclose(st, ct):
            raise ConfigurationError("certificate and surrogate query grids are misaligned")
        frac = float(np.mean(sdata[:, sidx["e_nn"]] >= sdata[:, sidx["e_certified"]]))
        print(f"surrogate overestimation fraction: {frac:.3f}")
    return 0


def cmd_schedule(args):
    rows = presets.make_pendulum_schedule()
    presets.export_schedule(rows, args.out_file)
    print(f"schedule with {len(rows)} control intervals written to {args.out_file}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pinncert")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config")
        p.add_argument("--preset", choices=["decay1d", "pendulum"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--desk-scale", dest="desk_scale", action="store_true", default=True)
        p.add_argument("--full-scale", dest="desk_scale", action="store_false")

    p = sub.add_parser("train", help="train a PINN preset")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("certify", help="emit certificates on a query grid or schedule")
    common(p)
    p.add_argument("--network")
    p.add_argument("--with-reference", action="store_true")
    p.add_argument("--schedule", help="pendulum control schedule CSV")
    p.add_argument("--intervals", type=int, default=presets.SCHEDULE_INTERVALS)
    p.add_argument("--times-per-interval", type=int, default=20)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("surrogate", help="train and evaluate the error indicator")
    common(p)
    p.add_argument("--network")
    p.add_argument("--data", help="reuse a saved surrogate dataset CSV")
    p.set_defaults(func=cmd_surrogate)

    p = sub.add_parser("compare", help="summarize certificates vs reference/surrogate")
    p.add_argument("certificates")
    p.add_argument("surrogate", nargs="?")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("schedule", help="write the default pendulum control schedule")
    p.add_argument("out_file")
    p.set_defaults(func=cmd_schedule)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, BlowUpError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
