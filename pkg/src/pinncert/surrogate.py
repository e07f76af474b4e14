"""Learned error indicator: a cheap network wrapping the certified bound.

The indicator (E_NN) is not a certificate.  It is trained on certified
totals with an asymmetric loss so that underestimation costs more than
overestimation, which pushes the fit to a smooth upper wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .certify import CertifyConfig, bound
from .network import Network, _forward_any, bind_network, init_network, parameter_gradient
from .ode import ConfigurationError, OdeProblem
from .train import TrainingRun, _run_adam, _run_lbfgs, assemble_inputs, infer_layout, sample_collocation


@dataclass
class SurrogateDataset:
    """Generated (t, x0[, u]) points with certified bound totals as targets."""

    t: np.ndarray
    x0: np.ndarray
    u: np.ndarray
    targets: np.ndarray
    seed: int

    def __len__(self):
        return len(self.t)


def generate_surrogate_data(net: Network, problem: OdeProblem, count, seed,
                            config: CertifyConfig = None) -> SurrogateDataset:
    """Certify ``count`` seeded random domain points and record the totals."""
    config = config or CertifyConfig()
    colloc = sample_collocation(problem, count, seed)
    targets = np.empty(count)
    for i in range(count):
        try:
            cert = bound(net, problem, colloc.x0[i], colloc.u[i], colloc.t[i], config)
        except Exception as exc:
            raise RuntimeError(
                f"certificate failed at generated point {i} "
                f"(t={colloc.t[i]}, x0={colloc.x0[i]}, u={colloc.u[i]}): {exc}") from exc
        targets[i] = cert.total
    return SurrogateDataset(t=colloc.t, x0=colloc.x0, u=colloc.u,
                            targets=targets, seed=seed)


def asymmetric_loss(pred, target, under_weight):
    """Squared error, scaled by ``under_weight`` when pred < target."""
    if under_weight < 1:
        raise ConfigurationError("under_weight must be >= 1")
    err = (pred - target) ** 2
    return float(err * (under_weight if pred < target else 1.0))


def train_error_net(dataset: SurrogateDataset, arch, run: TrainingRun,
                    under_weight=1000.0, problem: OdeProblem = None) -> Network:
    """Fit a scalar network to the certified totals with asymmetric loss.

    ``arch`` is the hidden-layer spec, e.g. [4, 4]; the input layout matches
    the PINN (t[, x0][, u]) inferred from the dataset columns.
    """
    if len(dataset) == 0:
        raise ConfigurationError("empty surrogate dataset")
    if under_weight < 1:
        raise ConfigurationError("under_weight must be >= 1")
    run.validate()

    layout = ["t"]
    n_in = 1
    if dataset.x0.shape[1] and np.ptp(dataset.x0, axis=0).max() > 0:
        layout.append("x0")
        n_in += dataset.x0.shape[1]
    if dataset.u.shape[1]:
        layout.append("u")
        n_in += dataset.u.shape[1]
    net = init_network([n_in, *arch, 1], activation="tanh", seed=run.seed,
                       meta={"inputs": layout, "kind": "error_indicator"})

    X = assemble_inputs(layout, dataset.t, dataset.x0, dataset.u)
    y = dataset.targets
    history = []

    def evaluate():
        tape = Tape()
        wvars, bvars = bind_network(tape, net)
        pred = _forward_any(wvars, bvars, net.activation, X)[:, 0]
        diff = pred - y
        # weighting mask is piecewise constant: no gradient flows through it
        w = np.where(pred.value < y, under_weight, 1.0)
        loss = (w * diff * diff).mean()
        grad = parameter_gradient(net, loss)
        return float(loss.value), float(loss.value), 0.0, grad

    if run.optimizer == "adam":
        _run_adam(net, run, evaluate, history)
    else:
        _run_lbfgs(net, run, evaluate, history)
    run.loss_history = history
    return net


def evaluate_error_net(net: Network, t, x0, u):
    """E_NN at a batch of query points."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    B = len(t)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (B, len(x0)))
    u = np.asarray(u, dtype=float)
    if u.ndim <= 1:
        u = np.broadcast_to(u.reshape(-1), (B, u.size)) if u.size else np.zeros((B, 0))
    X = assemble_inputs(net.meta["inputs"], t, x0, u)
    return _forward_any(net.weights, net.biases, net.activation, X)[:, 0]


def export_surrogate_dataset(dataset: SurrogateDataset, path):
    """CSV `t,x0_1..x0_n[,u],e_target`."""
    n = dataset.x0.shape[1]
    k = dataset.u.shape[1]
    header = "t," + ",".join(f"x0_{i + 1}" for i in range(n))
    if k:
        header += "," + ",".join(f"u_{j + 1}" if k > 1 else "u" for j in range(k))
    header += ",e_target"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(dataset)):
            row = [dataset.t[i], *dataset.x0[i], *dataset.u[i], dataset.targets[i]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_surrogate_dataset(path, dim, control_dim=0, seed=None) -> SurrogateDataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    x0 = data[:, 1:1 + dim]
    u = data[:, 1 + dim:1 + dim + control_dim]
    targets = data[:, 1 + dim + control_dim]
    return SurrogateDataset(t=t, x0=x0, u=u, targets=targets, seed=seed)
