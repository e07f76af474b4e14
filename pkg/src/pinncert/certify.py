"""A posteriori error certificates for trained ODE networks.

Everything here is computable from the trained network and the ODE alone:
the residual, a smooth majorant delta, estimated growth constants (L via
Jacobian singular values, or the spectral abscissa for linear systems), a
curvature bound K for the quadrature remainder, and the resulting certified
upper bound split into E_init + I_hat + E_Int.

Reference solutions appear only in :func:`actual_error`, which exists for
validation plots and is never consulted by the bound itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Dual
from .network import Network, _forward_any
from .ode import ConfigurationError, OdeProblem, solve_reference
from .train import CollocationSet, assemble_inputs, infer_layout, sample_collocation


class DomainError(ValueError):
    pass


class DegenerateSmoothingError(RuntimeError):
    """K estimation hit a non-finite second derivative; use mu > 0."""


# -- residual -------------------------------------------------------------

def residual_batch_columns(weights, biases, activation, layout, problem,
                           t, x0, u):
    """Residual components at a batch of (t, x0, u) rows.

    Works for plain arrays (evaluation) and tape variables (training):
    returns one column of length B per state dimension.
    """
    t = np.asarray(t, dtype=float)
    X = assemble_inputs(layout, t, x0, u)
    Xdot = np.zeros_like(X)
    Xdot[:, 0] = 1.0    # tangent along the time input
    out = _forward_any(weights, biases, activation, Dual(X, Xdot))
    y, ydot = out.value, out.derivative
    x_cols = [y[:, i] for i in range(problem.dim)]
    u = np.asarray(u, dtype=float)
    u_cols = [u[:, j] for j in range(u.shape[1])]
    f_cols = problem.rhs(t, x_cols, u_cols)
    return [ydot[:, i] - f_cols[i] for i in range(problem.dim)]


def _residual_rows(net, problem, layout, t_array, x0, u):
    """(B, n) residual values for one (x0, u) at many times.  No domain check."""
    t_array = np.asarray(t_array, dtype=float)
    B = len(t_array)
    X0 = np.broadcast_to(np.asarray(x0, dtype=float), (B, problem.dim))
    U = np.broadcast_to(np.asarray(u, dtype=float).reshape(-1), (B, problem.control_dim)) \
        if problem.control_dim else np.zeros((B, 0))
    cols = residual_batch_columns(net.weights, net.biases, net.activation,
                                  layout, problem, t_array, X0, U)
    return np.column_stack(cols)


def residual(net: Network, problem: OdeProblem, x0, u, t):
    """R(t) = d/dt phihat(t) - f(t, phihat(t)), via forward-mode autodiff."""
    if not (0.0 <= t <= problem.t_final):
        raise DomainError(f"t={t} outside the time horizon [0, {problem.t_final}]")
    layout = infer_layout(net, problem)
    return _residual_rows(net, problem, layout, np.array([t]), x0, u)[0]


@dataclass
class ResidualFn:
    """t -> R(t) for fixed (net, problem, x0, u); vectorized over t."""

    net: Network
    problem: OdeProblem
    x0: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self._layout = infer_layout(self.net, self.problem)

    def __call__(self, t):
        return _residual_rows(self.net, self.problem, self._layout,
                              np.atleast_1d(t), self.x0, self.u)

    def norms(self, t):
        return np.linalg.norm(self(t), axis=1)


def mean_residual_norm(net: Network, problem: OdeProblem, colloc: CollocationSet):
    """Average residual norm over the collocation set (each point's own x0, u)."""
    if len(colloc) == 0:
        raise ConfigurationError("empty collocation set")
    cols = residual_batch_columns(net.weights, net.biases, net.activation,
                                  infer_layout(net, problem), problem,
                                  colloc.t, colloc.x0, colloc.u)
    return float(np.mean(np.linalg.norm(np.column_stack(cols), axis=1)))


@dataclass
class SmoothDelta:
    """delta(t) = sqrt(||R(t)||^2 + mu^2): smooth majorant of the residual norm."""

    residual_fn: ResidualFn
    mu: float

    def __post_init__(self):
        if self.mu < 0:
            raise ConfigurationError("mu must be non-negative")

    def __call__(self, t):
        r = self.residual_fn.norms(np.atleast_1d(t))
        out = np.sqrt(r * r + self.mu * self.mu)
        return float(out[0]) if np.ndim(t) == 0 else out


def make_delta(residual_fn: ResidualFn, mu_policy="tenth_of_mean",
               colloc: CollocationSet = None, mu: float = None) -> SmoothDelta:
    """Build the smooth residual majorant with the chosen mu policy."""
    if mu_policy == "explicit":
        if mu is None or mu < 0:
            raise ConfigurationError("explicit mu policy needs mu >= 0")
        return SmoothDelta(residual_fn, float(mu))
    if mu_policy == "tenth_of_mean":
        if colloc is None:
            raise ConfigurationError("tenth_of_mean policy needs a collocation set")
        rbar = mean_residual_norm(residual_fn.net, residual_fn.problem, colloc)
        return SmoothDelta(residual_fn, 0.1 * rbar)
    raise ConfigurationError(f"unknown mu policy {mu_policy!r}")


# -- growth constants -----------------------------------------------------

def jacobi_eigenvalues(a, tol=1e-12, max_sweeps=50):
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if n == 1:
        return a.ravel().copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, np.sum(a ** 2) - np.sum(np.diag(a) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(a[p, q]) * 1e150 < abs(diff):   # tiny rotation, avoid overflow
                    t = a[p, q] / diff
                else:
                    theta = diff / (2.0 * a[p, q])
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.diag(a).copy()


def largest_singular_value(j):
    """sigma_max via the largest eigenvalue of J^T J (cyclic Jacobi)."""
    j = np.asarray(j, dtype=float)
    eigs = jacobi_eigenvalues(j.T @ j)
    return math.sqrt(max(float(np.max(eigs)), 0.0))


def rhs_jacobian(problem: OdeProblem, t, x, u):
    """d f / d x at one point: analytic if provided, else forward mode."""
    if problem.jacobian_x is not None:
        return np.asarray(problem.jacobian_x(t, x, u), dtype=float)
    n = problem.dim
    x = np.asarray(x, dtype=float)
    jac = np.empty((n, n))
    for j in range(n):
        x_dual = [Dual(x[i], 1.0 if i == j else 0.0) for i in range(n)]
        f = problem.rhs(t, x_dual, list(u))
        for i in range(n):
            jac[i, j] = f[i].derivative if isinstance(f[i], Dual) else 0.0
    return jac


def estimate_lipschitz(problem: OdeProblem, colloc: CollocationSet):
    """L = max over collocation points of sigma_max(df/dx)."""
    if len(colloc) == 0:
        raise ConfigurationError("empty collocation set")
    best = 0.0
    for i in range(len(colloc)):
        jac = rhs_jacobian(problem, colloc.t[i], colloc.x0[i], colloc.u[i])
        if not np.all(np.isfinite(jac)):
            raise DomainError(f"non-finite Jacobian at collocation point {i}")
        best = max(best, largest_singular_value(jac))
    return best


def spectral_abscissa(a):
    """Largest real part among the eigenvalues of A."""
    return float(np.max(np.real(np.linalg.eigvals(np.asarray(a, dtype=float)))))


DEFAULT_SAFETY_FACTOR = 1.5


def estimate_K(delta, L, t_end, grid_points=200, safety_factor=DEFAULT_SAFETY_FACTOR):
    """Bound on |d^2/ds^2 (e^{-Ls} delta(s))| over [0, t_end].

    Central second differences on a uniform grid, scaled by a safety
    factor.  The stencil reaches slightly outside [0, t_end] at the ends;
    the network extends smoothly so this is well defined.
    """
    if grid_points < 10:
        raise ConfigurationError("grid_points must be >= 10")
    if t_end == 0.0:
        return 0.0
    s = np.linspace(0.0, t_end, grid_points + 1)
    h = t_end / (10.0 * grid_points)

    def g(x):
        return np.exp(-L * x) * np.atleast_1d(delta(x))

    second = (g(s - h) - 2.0 * g(s) + g(s + h)) / (h * h)
    if not np.all(np.isfinite(second)):
        raise DegenerateSmoothingError(
            "second derivative of the damped residual majorant is not finite; "
            "use a smoothing parameter mu > 0")
    return safety_factor * float(np.max(np.abs(second)))


# -- certified quadrature -------------------------------------------------

def trapezoid_bound_integral(delta, L, t, n, K):
    """Composite trapezoid value of I(t, delta) and its certified remainder.

    Returns (i_hat, e_int) with |i_hat - I(t, delta)| <= e_int whenever K
    truly bounds the damped integrand's second derivative.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if t == 0.0:
        return 0.0, 0.0
    s = np.linspace(0.0, t, n + 1)
    vals = np.exp(-L * s) * np.atleast_1d(delta(s))
    i_hat = (t / (2.0 * n)) * math.exp(L * t) * float(vals[1:].sum() + vals[:-1].sum())
    e_int = math.exp(L * t) * K * t ** 3 / (12.0 * n * n)
    return i_hat, e_int


def trapezoid_bound_integral_damped(delta, alpha, t, n, K):
    """Linear-mode variant: exponent alpha may be negative.

    The remainder prefactor is the conservative max(1, e^{alpha t}) since
    the classical bound is stated for the nonlinear e^{Lt} form.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if t == 0.0:
        return 0.0, 0.0
    s = np.linspace(0.0, t, n + 1)
    vals = np.exp(-alpha * s) * np.atleast_1d(delta(s))
    i_hat = (t / (2.0 * n)) * math.exp(alpha * t) * float(vals[1:].sum() + vals[:-1].sum())
    e_int = max(1.0, math.exp(alpha * t)) * K * t ** 3 / (12.0 * n * n)
    return i_hat, e_int


def expected_ml_error(t, init_error, L, mean_residual):
    """A priori estimate e^{Lt}||e(0)|| + (e^{Lt} - 1) rbar / L."""
    return math.exp(L * t) * init_error + (math.exp(L * t) - 1.0) * mean_residual / L


def subinterval_count(t, init_error, L, K, mean_residual, eps):
    """Trapezoid subintervals needed so E_Int <= eps * expected ML error."""
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    if L <= 0:
        raise ConfigurationError("L must be positive")
    if K == 0.0 or t == 0.0:
        return 1
    e_exp = expected_ml_error(t, init_error, L, mean_residual)
    if e_exp == 0.0:
        raise ConfigurationError(
            "expected ML error is zero with K > 0: required subintervals are "
            "unbounded; use mu > 0 or another eps policy")
    return max(1, math.ceil(math.sqrt(math.exp(L * t) * K * t ** 3 / (12.0 * e_exp * eps))))


# -- certificates ---------------------------------------------------------

@dataclass
class Certificate:
    """One evaluated error bound: total = e_init + i_hat + e_int."""

    t: float
    e_init: float
    i_hat: float
    e_int: float
    total: float
    constants_used: dict = field(default_factory=dict)


@dataclass
class CertifyConfig:
    mode: str = "auto"              # auto | nonlinear | linear
    eps: float = 0.33               # E_Int budget as a fraction of E_ML^exp
    mu_policy: str = "tenth_of_mean"
    mu: float = None                # used when mu_policy == "explicit"
    K_grid: int = 200
    safety_factor: float = DEFAULT_SAFETY_FACTOR
    L: float = None                 # explicit override; skips estimation
    n: int = None                   # explicit trapezoid subintervals
    colloc_count: int = 400         # sampling density for L / mean residual
    colloc_seed: int = 1
    cond_limit: float = 1e12        # eigenvector conditioning limit for beta


def _certificate_constants(config, **extra):
    consts = {"eps": config.eps, "mu_policy": config.mu_policy,
              "K_grid": config.K_grid, "safety_factor": config.safety_factor}
    consts.update(extra)
    return consts


def _prepare(net, problem, x0, u, config):
    """Shared setup: residual, collocation, mu, initial error."""
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1) if np.size(u) else np.zeros(0)
    rfn = ResidualFn(net, problem, x0, u)
    # L / mu sampling is denser than typical training collocation to reduce
    # the risk of underestimating L
    colloc = sample_collocation(problem, config.colloc_count, config.colloc_seed)
    rbar = mean_residual_norm(net, problem, colloc)
    if config.mu_policy == "explicit":
        delta = make_delta(rfn, "explicit", mu=config.mu)
    else:
        delta = SmoothDelta(rfn, 0.1 * rbar)
    layout = infer_layout(net, problem)
    X = assemble_inputs(layout, np.array([0.0]), x0[None, :], u[None, :] if len(u) else np.zeros((1, 0)))
    xhat0 = _forward_any(net.weights, net.biases, net.activation, X)[0]
    init_error = float(np.linalg.norm(x0 - xhat0))
    return rfn, colloc, rbar, delta, init_error


def bound_nonlinear(net: Network, problem: OdeProblem, x0, u, t,
                    config: CertifyConfig = None) -> Certificate:
    """Certified bound e^{Lt}||e(0)|| + I_hat + E_Int (Lipschitz route)."""
    config = config or CertifyConfig()
    if not (0.0 <= t <= problem.t_final):
        raise DomainError(f"t={t} outside the time horizon")
    rfn, colloc, rbar, delta, init_error = _prepare(net, problem, x0, u, config)
    L = config.L if config.L is not None else estimate_lipschitz(problem, colloc)
    K = estimate_K(delta, L, problem.t_final, config.K_grid, config.safety_factor)
    if config.n is not None:
        n = config.n
    else:
        n = subinterval_count(t, init_error, L, K, rbar, config.eps) if t > 0 else 1
    e_init = math.exp(L * t) * init_error
    i_hat, e_int = trapezoid_bound_integral(delta, L, t, n, K)
    return Certificate(
        t=float(t), e_init=e_init, i_hat=i_hat, e_int=e_int,
        total=e_init + i_hat + e_int,
        constants_used=_certificate_constants(
            config, mode="nonlinear", L=L, K=K, n_subintervals=n,
            mu=delta.mu, mean_residual=rbar))


def bound_linear(net: Network, problem: OdeProblem, x0, u, t,
                 config: CertifyConfig = None) -> Certificate:
    """Sharper bound for linear systems using the spectral abscissa."""
    config = config or CertifyConfig()
    if problem.linear_part is None:
        raise ConfigurationError("bound_linear needs problem.linear_part")
    if not (0.0 <= t <= problem.t_final):
        raise DomainError(f"t={t} outside the time horizon")
    a = np.asarray(problem.linear_part, dtype=float)
    alpha = spectral_abscissa(a)
    eigvals, eigvecs = np.linalg.eig(a)
    cond = np.linalg.cond(eigvecs)
    if not np.isfinite(cond) or cond > config.cond_limit:
        cert = bound_nonlinear(net, problem, x0, u, t, config)
        cert.constants_used["linear_fallback"] = "eigenvector matrix ill-conditioned"
        return cert
    # normal A admits beta = 1; otherwise the eigenvector conditioning pays
    beta = 1.0 if np.allclose(a @ a.T, a.T @ a, atol=1e-12) else float(cond)

    rfn, colloc, rbar, delta, init_error = _prepare(net, problem, x0, u, config)
    K = estimate_K(delta, alpha, problem.t_final, config.K_grid, config.safety_factor)
    if config.n is not None:
        n = config.n
    elif t > 0:
        l_for_count = max(alpha, 1e-6)
        try:
            n = subinterval_count(t, init_error, l_for_count, K, rbar, config.eps)
        except ConfigurationError:
            n = 1
    else:
        n = 1
    e_init = beta * math.exp(alpha * t) * init_error
    i_hat, e_int = trapezoid_bound_integral_damped(delta, alpha, t, n, K)
    i_hat *= beta
    e_int *= beta
    return Certificate(
        t=float(t), e_init=e_init, i_hat=i_hat, e_int=e_int,
        total=e_init + i_hat + e_int,
        constants_used=_certificate_constants(
            config, mode="linear", alpha=alpha, beta=beta, K=K,
            n_subintervals=n, mu=delta.mu, mean_residual=rbar))


def bound(net, problem, x0, u, t, config: CertifyConfig = None) -> Certificate:
    """Dispatch on config.mode / problem linearity."""
    config = config or CertifyConfig()
    if config.mode == "linear" or (config.mode == "auto" and problem.linear_part is not None):
        return bound_linear(net, problem, x0, u, t, config)
    return bound_nonlinear(net, problem, x0, u, t, config)


# -- validation-only reference comparison ---------------------------------

def predict_states(net: Network, problem: OdeProblem, x0, u, t_grid):
    """phihat(t) on a grid of times for one (x0, u)."""
    t_grid = np.asarray(t_grid, dtype=float)
    B = len(t_grid)
    layout = infer_layout(net, problem)
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1) if np.size(u) else np.zeros(0)
    X = assemble_inputs(layout, t_grid,
                        np.broadcast_to(x0, (B, problem.dim)),
                        np.broadcast_to(u, (B, len(u))) if len(u) else np.zeros((B, 0)))
    return _forward_any(net.weights, net.biases, net.activation, X)


def actual_error(net: Network, problem: OdeProblem, x0, u, t_grid,
                 h=1e-4):
    """||x(t) - phihat(t)|| on a grid; closed form if available, else RK4."""
    t_grid = np.asarray(t_grid, dtype=float)
    pred = predict_states(net, problem, x0, u, t_grid)
    if problem.exact_solution is not None:
        ref = np.array([problem.exact_solution(t, np.asarray(x0, dtype=float))
                        for t in t_grid])
    else:
        ref = np.empty_like(pred)
        for i, t in enumerate(t_grid):
            if t == 0.0:
                ref[i] = np.asarray(x0, dtype=float)
                continue
            steps = max(2, int(math.ceil(t / h)) + 1)
            grid = np.linspace(0.0, t, steps)
            traj = solve_reference(problem, x0, u, grid, method="rk4")
            ref[i] = traj.states[-1]
    return np.linalg.norm(ref - pred, axis=1)


# -- export ---------------------------------------------------------------

def export_certificates(certs, path, actual=None):
    """CSV `t,e_init,i_hat,e_int,total[,actual_error]` + metadata sidecar."""
    with open(path, "w") as fh:
        header = "t,e_init,i_hat,e_int,total"
        if actual is not None:
            header += ",actual_error"
        fh.write(header + "\n")
        for i, c in enumerate(certs):
            row = [c.t, c.e_init, c.i_hat, c.e_int, c.total]
            if actual is not None:
                row.append(actual[i])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(str(path) + ".meta", "w") as fh:
        fh.write("[constants_used]\n")
        if certs:
            for key in sorted(certs[0].constants_used):
                values = {f"{c.constants_used.get(key)}" for c in certs}
                if len(values) == 1:
                    fh.write(f"{key} = {values.pop()}\n")
                else:
                    fh.write(f"{key} = per-row: "
                             + ";".join(f"{c.constants_used.get(key)}" for c in certs) + "\n")
