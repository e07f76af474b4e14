"""Physics-informed training: losses, collocation sampling, optimizers.

Training is full batch (sets are at most ~1e4 points) and strictly
deterministic per seed: no minibatching, fixed summation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .network import Network, bind_network, flatten_params, forward, parameter_gradient, set_params
from .ode import ConfigurationError, OdeProblem


class DivergenceError(RuntimeError):
    def __init__(self, epoch, what="loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class CollocationSet:
    """Sampled (t, x0[, u]) points, reproducible from the seed."""

    t: np.ndarray       # (N,)
    x0: np.ndarray      # (N, n)
    u: np.ndarray       # (N, k), k may be 0
    seed: int
    box: object

    def __len__(self):
        return len(self.t)

    @property
    def points(self):
        return [(self.t[i], self.x0[i], self.u[i]) for i in range(len(self.t))]


@dataclass
class DataSet:
    """Supervised records z = (t, x0, x_target), plus the constant control."""

    t: np.ndarray        # (N,)
    x0: np.ndarray       # (N, n)
    x_target: np.ndarray  # (N, n)
    u: np.ndarray = None  # (N, k); defaults to no controls

    def __post_init__(self):
        if self.u is None:
            self.u = np.zeros((len(self.t), 0))

    def __len__(self):
        return len(self.t)


@dataclass
class TrainingRun:
    gamma_data: float = 1.0
    gamma_phys: float = 1.0
    eta: object = None           # None = constant 1; [(t, w), ...] breakpoints; or callable
    optimizer: str = "adam"
    epochs: int = 1000
    seed: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    lbfgs_memory: int = 10
    loss_history: list = field(default_factory=list)

    def validate(self):
        if self.gamma_data < 0 or self.gamma_phys < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.gamma_data == 0 and self.gamma_phys == 0:
            raise ConfigurationError("at least one loss weight must be positive")
        if self.optimizer not in ("adam", "lbfgs"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


def eta_weights(eta, t):
    """Evaluate the physics-loss weighting at the given times."""
    t = np.asarray(t, dtype=float)
    if eta is None:
        return np.ones_like(t)
    if callable(eta):
        return np.asarray(eta(t), dtype=float) * np.ones_like(t)
    pts = np.asarray(eta, dtype=float)   # (m, 2) breakpoints, linear interpolation
    return np.interp(t, pts[:, 0], pts[:, 1])


def sample_collocation(problem: OdeProblem, count, seed) -> CollocationSet:
    """Uniform i.i.d. samples of (t, x0[, u]) over the problem's domain box."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    box = problem.box
    if box is None or not box.x0:
        raise ConfigurationError("problem has no sampling domain box")
    rng = np.random.default_rng(seed)
    t = rng.uniform(box.t[0], box.t[1], size=count)
    x0 = np.column_stack([rng.uniform(lo, hi, size=count) for lo, hi in box.x0])
    if box.u:
        u = np.column_stack([rng.uniform(lo, hi, size=count) for lo, hi in box.u])
    else:
        u = np.zeros((count, 0))
    return CollocationSet(t=t, x0=x0, u=u, seed=seed, box=box)


def anchor_dataset(problem: OdeProblem, x0s, u=None) -> DataSet:
    """t=0 records mapping each initial value to itself (pins E_init)."""
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    return DataSet(t=np.zeros(len(x0s)), x0=x0s, x_target=x0s.copy(),
                   u=None if u is None else np.atleast_2d(np.asarray(u, dtype=float)))


def merge_datasets(a: DataSet, b: DataSet) -> DataSet:
    return DataSet(t=np.concatenate([a.t, b.t]),
                   x0=np.vstack([a.x0, b.x0]),
                   x_target=np.vstack([a.x_target, b.x_target]),
                   u=np.vstack([a.u, b.u]))


# -- network input layout -------------------------------------------------

def infer_layout(net: Network, problem: OdeProblem):
    """Which of (t, x0, u) feed the network, from metadata or input width."""
    if "inputs" in net.meta:
        return list(net.meta["inputs"])
    n, k = problem.dim, problem.control_dim
    if net.n_in == 1:
        return ["t"]
    if net.n_in == 1 + n:
        return ["t", "x0"]
    if net.n_in == 1 + n + k:
        return ["t", "x0", "u"]
    raise ConfigurationError(
        f"cannot infer input layout for width {net.n_in} (dim={n}, controls={k})")


def assemble_inputs(layout, t, x0, u):
    """Stack (t, x0, u) batch columns into the network input matrix."""
    t = np.asarray(t, dtype=float)
    cols = []
    if "t" in layout:
        cols.append(t[:, None])
    if "x0" in layout:
        cols.append(np.asarray(x0, dtype=float))
    if "u" in layout:
        cols.append(np.asarray(u, dtype=float))
    return np.concatenate(cols, axis=1)


# -- losses ---------------------------------------------------------------

def loss_data(net: Network, dataset: DataSet, problem: OdeProblem = None):
    """Mean squared Euclidean deviation from the supervised targets."""
    if len(dataset) == 0:
        raise ConfigurationError("empty dataset")
    layout = infer_layout(net, problem) if problem is not None else net.meta.get("inputs", ["t"])
    X = assemble_inputs(layout, dataset.t, dataset.x0, dataset.u)
    pred = forward(net, X)
    return float(np.mean(np.sum((pred - dataset.x_target) ** 2, axis=1)))


def loss_physics(net: Network, problem: OdeProblem, colloc: CollocationSet, eta=None):
    """Mean eta-weighted squared residual norm over the collocation set."""
    from .certify import residual_batch_columns

    if len(colloc) == 0:
        raise ConfigurationError("empty collocation set")
    r_cols = residual_batch_columns(net.weights, net.biases, net.activation,
                                    infer_layout(net, problem), problem,
                                    colloc.t, colloc.x0, colloc.u)
    sq = sum(r * r for r in r_cols)
    return float(np.mean(eta_weights(eta, colloc.t) * sq))


def _loss_and_grad(net, problem, dataset, colloc, run, layout, eta_w):
    """One tape-recorded full-batch evaluation of the total loss."""
    from .certify import residual_batch_columns

    tape = Tape()
    wvars, bvars = bind_network(tape, net)
    parts = {"data": 0.0, "phys": 0.0}
    total = None
    if run.gamma_data > 0 and dataset is not None and len(dataset):
        from .network import _forward_any
        X = assemble_inputs(layout, dataset.t, dataset.x0, dataset.u)
        pred = _forward_any(wvars, bvars, net.activation, X)
        diff = pred - dataset.x_target
        l_data = (diff * diff).sum(axis=1).mean()
        parts["data"] = float(l_data.value)
        total = run.gamma_data * l_data
    if run.gamma_phys > 0 and colloc is not None and len(colloc):
        r_cols = residual_batch_columns(wvars, bvars, net.activation, layout,
                                        problem, colloc.t, colloc.x0, colloc.u)
        sq = r_cols[0] * r_cols[0]
        for r in r_cols[1:]:
            sq = sq + r * r
        l_phys = (eta_w * sq).mean()
        parts["phys"] = float(l_phys.value)
        term = run.gamma_phys * l_phys
        total = term if total is None else total + term
    if total is None:
        raise ConfigurationError("nothing to train on: both loss terms are empty")
    grad = parameter_gradient(net, total)
    return float(total.value), parts["data"], parts["phys"], grad


def train(net: Network, problem: OdeProblem, dataset: DataSet,
          colloc: CollocationSet, run: TrainingRun):
    """Minimize gamma_data * L_data + gamma_phys * L_phys in place.

    Returns (net, loss_history) with one (total, data, phys) triple per
    completed epoch.
    """
    run.validate()
    layout = infer_layout(net, problem)
    eta_w = eta_weights(run.eta, colloc.t) if colloc is not None and len(colloc) else None
    history = []

    def evaluate():
        return _loss_and_grad(net, problem, dataset, colloc, run, layout, eta_w)

    if run.optimizer == "adam":
        _run_adam(net, run, evaluate, history)
    else:
        _run_lbfgs(net, run, evaluate, history)
    run.loss_history = history
    return net, history


def _run_adam(net, run, evaluate, history):
    theta = flatten_params(net)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for epoch in range(run.epochs):
        total, ld, lp, grad = evaluate()
        if not np.isfinite(total):
            raise DivergenceError(epoch)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(epoch, "gradient")
        history.append((total, ld, lp))
        step = epoch + 1
        m = run.beta1 * m + (1.0 - run.beta1) * grad
        v = run.beta2 * v + (1.0 - run.beta2) * grad * grad
        m_hat = m / (1.0 - run.beta1 ** step)
        v_hat = v / (1.0 - run.beta2 ** step)
        theta = theta - run.lr * m_hat / (np.sqrt(v_hat) + run.eps_adam)
        set_params(net, theta)


def adam_step(theta, grad, m, v, step, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update (exposed for the hand-check test); returns (theta, m, v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def _run_lbfgs(net, run, evaluate, history):
    """Limited-memory BFGS with Armijo backtracking, full batch."""
    theta = flatten_params(net)
    total, ld, lp, grad = evaluate()
    if not np.isfinite(total):
        raise DivergenceError(0)
    s_hist, y_hist = [], []
    for epoch in range(run.epochs):
        history.append((total, ld, lp))
        q = grad.copy()
        alphas = []
        for s, y in zip(reversed(s_hist), reversed(y_hist)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        if y_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= (s @ y) / (y @ y)
        for a, rho, s, y in reversed(alphas):
            b = rho * (y @ q)
            q += (a - b) * s
        direction = -q
        slope = grad @ direction
        if slope >= 0:   # not a descent direction; restart from steepest descent
            direction = -grad
            slope = -(grad @ grad)
            s_hist, y_hist = [], []
        step = 1.0
        accepted = False
        for _ in range(30):
            set_params(net, theta + step * direction)
            new_total, new_ld, new_lp, new_grad = evaluate()
            if np.isfinite(new_total) and new_total <= total + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            set_params(net, theta)   # converged (or stuck): keep current iterate
            history.extend([(total, ld, lp)] * (run.epochs - len(history)))
            break
        s_vec = step * direction
        y_vec = new_grad - grad
        if s_vec @ y_vec > 1e-12:
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            if len(s_hist) > run.lbfgs_memory:
                s_hist.pop(0)
                y_hist.pop(0)
        theta = theta + s_vec
        total, ld, lp, grad = new_total, new_ld, new_lp, new_grad
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(epoch, "gradient")


def export_loss_history(history, path):
    """CSV `epoch,loss_total,loss_data,loss_phys`."""
    with open(path, "w") as fh:
        fh.write("epoch,loss_total,loss_data,loss_phys\n")
        for epoch, (total, ld, lp) in enumerate(history):
            fh.write(f"{epoch},{total:.17g},{ld:.17g},{lp:.17g}\n")
