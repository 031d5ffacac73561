"""Open-loop trajectory optimization against a black-box plant.

The optimizer never sees plant equations: it only calls ``plant.step``. The
cost gradient is estimated one control coordinate at a time by forward
differences (central differences are available as a config switch), and the
control sequence is improved by gradient descent with an optional
backtracking line search. With backtracking enabled the recorded cost
sequence is monotone non-increasing.

Conventions: a control sequence is an ``(N, n_u)`` array, a state trajectory
an ``(N + 1, n_x)`` array, and costs are quadratic in the deviation from a
fixed target state.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidInputError

_BACKTRACK_FLOOR = 1e-15


@dataclass(frozen=True)
class CostSpec:
    """Quadratic tracking cost with per-step weights.

    ``state_weights`` is ``(N, n_x, n_x)`` PSD, ``control_weights`` is
    ``(N, n_u, n_u)`` PD (the Riccati recursion inverts through it), and
    ``terminal_weight`` is ``(n_x, n_x)`` PSD. The running and terminal state
    terms penalize ``x_k - target_state``.
    """

    state_weights: np.ndarray
    control_weights: np.ndarray
    terminal_weight: np.ndarray
    target_state: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.state_weights, dtype=float)
        r = np.asarray(self.control_weights, dtype=float)
        qn = np.asarray(self.terminal_weight, dtype=float)
        t = np.asarray(self.target_state, dtype=float)
        if q.ndim != 3 or r.ndim != 3 or qn.ndim != 2:
            raise InvalidInputError("weights must be stacked square matrices")
        if q.shape[0] != r.shape[0]:
            raise InvalidInputError("state and control weight horizons differ")
        if q.shape[1:] != qn.shape or q.shape[1] != t.shape[0]:
            raise InvalidInputError("state weight dimensions are inconsistent")
        for name, w in (("state_weights", q), ("control_weights", r)):
            if not np.allclose(w, np.swapaxes(w, 1, 2), atol=1e-12, rtol=0.0):
                raise InvalidInputError(f"{name} must be symmetric")
        if not np.allclose(qn, qn.T, atol=1e-12, rtol=0.0):
            raise InvalidInputError("terminal_weight must be symmetric")
        for k in range(r.shape[0]):
            if np.linalg.eigvalsh(r[k])[0] <= 0:
                raise InvalidInputError(f"control weight at step {k} is not positive definite")
        object.__setattr__(self, "state_weights", q)
        object.__setattr__(self, "control_weights", r)
        object.__setattr__(self, "terminal_weight", qn)
        object.__setattr__(self, "target_state", t)

    @property
    def horizon(self):
        return self.state_weights.shape[0]


def switched_diagonal_cost(horizon, dt, switch_time, early_weights, late_weights,
                           terminal_weights, control_weight, target_state):
    """Diagonal cost that switches from ``early_weights`` to ``late_weights``
    once ``k * dt >= switch_time``; used to encode reach-by-a-deadline goals.
    """
    early = np.diag(np.asarray(early_weights, dtype=float))
    late = np.diag(np.asarray(late_weights, dtype=float))
    q = np.array([late if k * dt >= switch_time - 1e-12 else early for k in range(horizon)])
    r_mat = np.atleast_2d(np.asarray(control_weight, dtype=float))
    if r_mat.shape[0] != r_mat.shape[1]:
        r_mat = np.diag(np.ravel(r_mat))
    r = np.repeat(r_mat[None, :, :], horizon, axis=0)
    return CostSpec(
        state_weights=q,
        control_weights=r,
        terminal_weight=np.diag(np.asarray(terminal_weights, dtype=float)),
        target_state=np.asarray(target_state, dtype=float),
    )


@dataclass(frozen=True)
class GdConfig:
    """Gradient-descent parameters.

    ``step_size`` is the line-search starting step; with ``backtracking`` it
    is shrunk by ``shrink`` until the step does not increase the cost.
    ``grad_tol`` is tested against the max-norm of the gradient.
    """

    step_size: float = 1e-2
    fd_step: float = 1e-4
    grad_tol: float = 1e-3
    max_iters: int = 5000
    backtracking: bool = True
    shrink: float = 0.5
    central_differences: bool = False

    def __post_init__(self):
        if min(self.step_size, self.fd_step, self.grad_tol) <= 0 or self.max_iters < 1:
            raise InvalidInputError("gradient-descent parameters must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise InvalidInputError("shrink factor must lie in (0, 1)")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    grad_norm: float
    step_size: float


@dataclass
class GdResult:
    """Final controls with their noiseless rollout and the iteration log."""

    controls: np.ndarray
    states: np.ndarray
    cost: float
    log: list = field(default_factory=list)
    converged: bool = False


def rollout(plant, x0, controls):
    """Noiseless forward simulation; raises :class:`DivergenceError` on blow-up."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2:
        raise InvalidInputError(f"controls must be (N, n_u), got shape {controls.shape}")
    n = controls.shape[0]
    states = np.empty((n + 1, plant.n_x))
    states[0] = np.asarray(x0, dtype=float)
    x = states[0]
    w0 = np.zeros(plant.n_x)
    for k in range(n):
        x = plant.step(x, controls[k], w0, k)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k + 1)
        states[k + 1] = x
    return states


def trajectory_cost(states, controls, cost):
    """Quadratic cost of a realized state/control pair under ``cost``."""
    dx = np.asarray(states, dtype=float) - cost.target_state
    controls = np.asarray(controls, dtype=float)
    running = np.einsum("ki,kij,kj->", dx[:-1], cost.state_weights, dx[:-1])
    effort = np.einsum("ki,kij,kj->", controls, cost.control_weights, controls)
    terminal = dx[-1] @ cost.terminal_weight @ dx[-1]
    return float(running + effort + terminal)


def evaluate_cost(plant, x0, controls, cost):
    """Cost of the noiseless rollout of ``controls`` from ``x0``."""
    return trajectory_cost(rollout(plant, x0, controls), controls, cost)


def fd_gradient(plant, x0, controls, cost, fd_step, central=False):
    """Finite-difference estimate of the cost gradient, flattened to length
    ``N * n_u``. Forward differences by default: ``(J(u_i + h) - J(u)) / h``.

    Each coordinate perturbation is independent, so the evaluation order has
    no effect on the result.
    """
    if fd_step <= 0:
        raise InvalidInputError("fd_step must be positive")
    work = np.array(controls, dtype=float)
    flat = work.reshape(-1)
    grad = np.empty(flat.size)
    base = None if central else evaluate_cost(plant, x0, work, cost)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + fd_step
        j_plus = evaluate_cost(plant, x0, work, cost)
        if central:
            flat[i] = orig - fd_step
            j_minus = evaluate_cost(plant, x0, work, cost)
            grad[i] = (j_plus - j_minus) / (2.0 * fd_step)
        else:
            grad[i] = (j_plus - base) / fd_step
        flat[i] = orig
    return grad


def gradient_descent(plant, x0, initial_controls, cost, cfg):
    """Minimize the rollout cost over the control sequence.

    Iterates ``U <- U - alpha * grad`` until the gradient max-norm drops
    below ``cfg.grad_tol`` or ``cfg.max_iters`` is reached; in the latter
    case the best iterate seen is returned with ``converged=False``. With
    backtracking, steps that fail to decrease the cost (including ones whose
    rollout diverges) are shrunk by ``cfg.shrink``; a fully stalled line
    search also ends the run.
    """
    u = np.array(initial_controls, dtype=float)
    if u.ndim != 2 or u.shape[0] != cost.horizon:
        raise InvalidInputError(
            f"initial controls must be ({cost.horizon}, n_u), got shape {u.shape}"
        )
    current = evaluate_cost(plant, x0, u, cost)
    best_cost, best_u = current, u.copy()
    log = []
    converged = False
    for it in range(cfg.max_iters):
        grad = fd_gradient(plant, x0, u, cost, cfg.fd_step, cfg.central_differences)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < cfg.grad_tol:
            log.append(IterationRecord(it, current, grad_norm, 0.0))
            converged = True
            break
        direction = grad.reshape(u.shape)
        alpha = cfg.step_size
        if cfg.backtracking:
            accepted = False
            while alpha > _BACKTRACK_FLOOR:
                candidate = u - alpha * direction
                try:
                    trial = evaluate_cost(plant, x0, candidate, cost)
                except DivergenceError:
                    trial = np.inf
                if trial <= current:
                    accepted = True
                    break
                alpha *= cfg.shrink
            if not accepted:
                log.append(IterationRecord(it, current, grad_norm, 0.0))
                break
            u, current = candidate, trial
        else:
            u = u - alpha * direction
            try:
                current = evaluate_cost(plant, x0, u, cost)
            except DivergenceError:
                log.append(IterationRecord(it, best_cost, grad_norm, alpha))
                u = best_u.copy()
                break
        log.append(IterationRecord(it, current, grad_norm, alpha))
        if current < best_cost:
            best_cost, best_u = current, u.copy()
    if not converged and best_cost < current:
        u, current = best_u, best_cost
    return GdResult(
        controls=u,
        states=rollout(plant, x0, u),
        cost=current,
        log=log,
        converged=converged,
    )


def log_to_rows(log):
    """Iteration log as plain rows ``(iteration, cost, grad_norm, step_size)``."""
    return [(rec.iteration, rec.cost, rec.grad_norm, rec.step_size) for rec in log]
