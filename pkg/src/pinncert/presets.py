"""Assembly of the two benchmark experiments from a config.

This is where control-interval chaining for the pendulum lives: within
the library a network or certificate always sees a single constant u.
"""

from __future__ import annotations

import numpy as np

from .certify import CertifyConfig
from .config import ExperimentConfig
from .network import Network, init_network
from .ode import ConfigurationError, OdeProblem, decay_1d, inverted_pendulum, solve_reference
from .train import (DataSet, TrainingRun, anchor_dataset, merge_datasets,
                    sample_collocation, train)

SCHEDULE_INTERVALS = 50
SCHEDULE_T_TOTAL = 4.0


def build_problem(cfg: ExperimentConfig) -> OdeProblem:
    return decay_1d() if cfg.preset == "decay1d" else inverted_pendulum()


def build_network(cfg: ExperimentConfig, problem: OdeProblem) -> Network:
    if cfg.preset == "decay1d":
        layout = ["t"]          # fixed initial value: the net maps time only
        n_in = 1
    else:
        layout = ["t", "x0", "u"]
        n_in = 1 + problem.dim + problem.control_dim
    return init_network([n_in, *cfg.hidden, problem.dim], cfg.activation,
                        seed=cfg.seed, meta={"inputs": layout, "preset": cfg.preset})


def build_dataset(cfg: ExperimentConfig, problem: OdeProblem, seed=None) -> DataSet:
    """Supervised records: t=0 anchors plus (for the pendulum) RK4 samples."""
    seed = cfg.seed if seed is None else seed
    if cfg.preset == "decay1d":
        return anchor_dataset(problem, [[2.0]])
    rng_points = sample_collocation(problem, cfg.data_count, seed + 1)
    targets = np.empty_like(rng_points.x0)
    for i in range(cfg.data_count):
        t = rng_points.t[i]
        grid = np.linspace(0.0, t, 101) if t > 0 else np.array([0.0])
        traj = solve_reference(problem, rng_points.x0[i], rng_points.u[i], grid, "rk4")
        targets[i] = traj.states[-1]
    data = DataSet(t=rng_points.t, x0=rng_points.x0, x_target=targets, u=rng_points.u)
    anchors = anchor_dataset(problem, rng_points.x0, u=rng_points.u)
    return merge_datasets(data, anchors)


def build_training_run(cfg: ExperimentConfig) -> TrainingRun:
    return TrainingRun(
        gamma_data=cfg.gamma_data, gamma_phys=cfg.gamma_phys,
        optimizer=cfg.optimizer, epochs=cfg.epochs, seed=cfg.seed, lr=cfg.lr)


def train_preset(cfg: ExperimentConfig):
    """End-to-end training for a preset; returns (net, problem, history)."""
    problem = build_problem(cfg)
    net = build_network(cfg, problem)
    dataset = build_dataset(cfg, problem)
    colloc = sample_collocation(problem, cfg.colloc_count, cfg.seed)
    run = build_training_run(cfg)
    net, history = train(net, problem, dataset, colloc, run)
    return net, problem, history


def certify_config(cfg: ExperimentConfig) -> CertifyConfig:
    return CertifyConfig(
        mode=cfg.cert_mode, eps=cfg.eps, mu_policy=cfg.mu_policy, mu=cfg.mu,
        K_grid=cfg.K_grid, safety_factor=cfg.safety_factor,
        L=cfg.L_override, n=cfg.n_override,
        colloc_count=cfg.cert_colloc_count, colloc_seed=cfg.seed + 17)


# -- pendulum control schedule --------------------------------------------
#
# We ship a stabilizing state-feedback schedule computed here so the
# benchmark is reproducible end to end without external inputs.

# LQR gains for the linearized cart-pole (Q = diag(5,1,0.5,0.5), R = 0.5);
# the cart gains are negative because the system is non-minimum phase
_FEEDBACK_GAINS = (30.4348589, 7.93820539, -1.0, -2.28141715)


def make_pendulum_schedule(n_intervals=SCHEDULE_INTERVALS, t_total=SCHEDULE_T_TOTAL,
                           x0=(0.15, 0.0, 0.0, 0.0), h=1e-4):
    """Piecewise-constant controls and interval initial values.

    u is sampled from clamped LQR state feedback at each interval start;
    the next interval's x0 comes from an RK4 pass through the interval.
    Returns a list of (t_start, x0 (4,), u) tuples.
    """
    problem = inverted_pendulum()
    kp, kd, ks, ksd = _FEEDBACK_GAINS
    dt = t_total / n_intervals
    x = np.asarray(x0, dtype=float)
    rows = []
    for i in range(n_intervals):
        u = -(kp * x[0] + kd * x[1] + ks * x[2] + ksd * x[3])
        u = float(np.clip(u, -15.0, 15.0))
        rows.append((i * dt, x.copy(), u))
        grid = np.linspace(0.0, dt, int(round(dt / h)) + 1)
        traj = solve_reference(problem, x, [u], grid, "rk4")
        x = traj.states[-1]
    return rows


def export_schedule(rows, path):
    """CSV `interval,t_start,phi,phidot,s,sdot,u`."""
    with open(path, "w") as fh:
        fh.write("interval,t_start,phi,phidot,s,sdot,u\n")
        for i, (t_start, x0, u) in enumerate(rows):
            vals = [t_start, *x0, u]
            fh.write(str(i) + "," + ",".join(f"{v:.17g}" for v in vals) + "\n")


def load_schedule(path, expected_intervals=SCHEDULE_INTERVALS):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != expected_intervals or data.shape[1] != 7:
        raise ConfigurationError(
            f"schedule must have {expected_intervals} rows of "
            f"interval,t_start,phi,phidot,s,sdot,u; got shape {data.shape}")
    return [(float(r[1]), r[2:6].copy(), float(r[6])) for r in data]
