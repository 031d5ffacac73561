"""Finite-horizon LQG design on an identified time-varying realization.

Feedback gains come from a backward Riccati recursion, Kalman gains from the
forward covariance recursion, and both are combined by the separation
principle: the controller acts on the observer's deviation estimate. Every
cost-to-go and covariance matrix is re-symmetrized after each step to
suppress floating-point drift.

The realization is only defined over its valid step range; outside it (the
first ``q`` and last ``p`` steps of the horizon) the recursions use the
nearest in-range matrices, so gains are held at the boundary values of the
identified model.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    FilterBreakdownError,
    InvalidInputError,
    RiccatiBreakdownError,
    SingularMatrixError,
)
from .linalg import symmetric_solve, symmetrize


@dataclass(frozen=True)
class ReducedCostSpec:
    """Quadratic deviation cost expressed in realization coordinates."""

    state_weights: np.ndarray
    control_weights: np.ndarray
    terminal_weight: np.ndarray

    @property
    def horizon(self):
        return self.state_weights.shape[0]


@dataclass(frozen=True)
class LqgGains:
    """Per-step LQG design: feedback gains with their cost-to-go matrices and
    Kalman gains with their covariances.

    ``feedback[k]`` is applied at steps ``0..N-1``; ``cost_to_go``,
    ``kalman`` and ``covariance`` are indexed ``0..N``.
    """

    feedback: np.ndarray
    cost_to_go: np.ndarray
    kalman: np.ndarray
    covariance: np.ndarray

    def to_dict(self):
        return {
            "version": 1,
            "feedback": self.feedback.tolist(),
            "cost_to_go": self.cost_to_go.tolist(),
            "kalman": self.kalman.tolist(),
            "covariance": self.covariance.tolist(),
        }

    @staticmethod
    def from_dict(payload):
        if payload.get("version") != 1:
            raise InvalidInputError(f"unsupported gains version {payload.get('version')}")
        return LqgGains(
            feedback=np.asarray(payload["feedback"], dtype=float),
            cost_to_go=np.asarray(payload["cost_to_go"], dtype=float),
            kalman=np.asarray(payload["kalman"], dtype=float),
            covariance=np.asarray(payload["covariance"], dtype=float),
        )


def project_cost(cost, realization):
    """Express a state-space tracking cost in realization coordinates.

    The running and terminal state weights are pushed through the identified
    output map, ``Qr_k = C_k' Q_k C_k``, which is the basis-invariant reading
    when outputs equal states; control weights pass through unchanged.
    """
    n = cost.horizon
    reduced = []
    for k in range(n):
        _, _, c = realization.matrices_at(k, clamp=True)
        reduced.append(symmetrize(c.T @ cost.state_weights[k] @ c))
    _, _, c_last = realization.matrices_at(n, clamp=True)
    terminal = symmetrize(c_last.T @ cost.terminal_weight @ c_last)
    return ReducedCostSpec(
        state_weights=np.array(reduced),
        control_weights=np.asarray(cost.control_weights, dtype=float),
        terminal_weight=terminal,
    )


def riccati_backward(realization, cost):
    """Backward Riccati recursion for time-varying feedback gains.

    Returns ``(gains, cost_to_go)`` where ``gains[k]`` solves
    ``(B' S B + R) L = B' S A`` at step ``k`` and ``cost_to_go[k]`` is the
    quadratic value matrix, with terminal condition equal to the terminal
    weight.
    """
    n = cost.horizon
    n_r = realization.order
    n_u = realization.n_u
    s_seq = np.empty((n + 1, n_r, n_r))
    l_seq = np.empty((n, n_u, n_r))
    s_seq[n] = symmetrize(cost.terminal_weight)
    for k in range(n - 1, -1, -1):
        a, b, _ = realization.matrices_at(k, clamp=True)
        s_next = s_seq[k + 1]
        inner = b.T @ s_next @ b + cost.control_weights[k]
        try:
            l_k = symmetric_solve(inner, b.T @ s_next @ a)
        except SingularMatrixError as exc:
            raise RiccatiBreakdownError(f"singular inner matrix at step {k}: {exc}") from exc
        l_seq[k] = l_k
        s_seq[k] = symmetrize(a.T @ s_next @ (a - b @ l_k) + cost.state_weights[k])
    return l_seq, s_seq


def _process_noise_in_model(noise, n_r):
    """Process covariance seen by the reduced model (noise map assumed identity).

    With a reduced order different from the state dimension the plant
    covariance only transfers when it is isotropic; anything else has no
    defensible projection without an identified noise map.
    """
    w = np.asarray(noise.process_cov, dtype=float)
    if w.shape == (n_r, n_r):
        return w
    iso = w[0, 0] * np.eye(w.shape[0])
    if np.allclose(w, iso, atol=1e-12, rtol=0.0):
        return w[0, 0] * np.eye(n_r)
    raise InvalidInputError(
        f"process covariance of shape {w.shape} cannot be mapped onto a "
        f"realization of order {n_r}; use an isotropic covariance"
    )


def kalman_forward(realization, noise, initial_covariance, horizon):
    """Forward covariance recursion and Kalman gains for the deviation observer.

    ``gain[k]`` is built from ``covariance[k]`` through the innovation solve
    ``(C P C' + V) X = C P``; the covariance then propagates through the
    dynamics with the process noise added. A singular innovation covariance
    raises :class:`FilterBreakdownError` unless the filter has exactly zero
    uncertainty, in which case the gain is zero and the recursion continues.
    Gains and covariances are returned for steps ``0..horizon``.
    """
    n = int(horizon)
    if n < 1:
        raise InvalidInputError("horizon must be at least 1")
    n_r = realization.order
    n_y = realization.n_y
    p0 = np.asarray(initial_covariance, dtype=float)
    if p0.shape != (n_r, n_r):
        raise InvalidInputError(f"initial covariance must be ({n_r}, {n_r}), got {p0.shape}")
    w = _process_noise_in_model(noise, n_r)
    v = np.asarray(noise.measurement_cov, dtype=float)
    if v.shape != (n_y, n_y):
        raise InvalidInputError(f"measurement covariance must be ({n_y}, {n_y}), got {v.shape}")
    p_seq = np.empty((n + 1, n_r, n_r))
    k_seq = np.empty((n + 1, n_r, n_y))
    p_seq[0] = symmetrize(p0)
    for k in range(n + 1):
        _, _, c = realization.matrices_at(k, clamp=True)
        p_k = p_seq[k]
        innovation = symmetrize(c @ p_k @ c.T + v)
        cross = c @ p_k
        try:
            k_seq[k] = symmetric_solve(innovation, cross).T
        except SingularMatrixError as exc:
            scale = max(1.0, float(np.linalg.norm(p_k)), float(np.linalg.norm(v)))
            if np.linalg.norm(innovation) <= 1e-12 * scale and np.linalg.norm(cross) <= 1e-12 * scale:
                k_seq[k] = 0.0
            else:
                raise FilterBreakdownError(
                    f"singular innovation covariance at step {k}: {exc}"
                ) from exc
        if k < n:
            a, _, _ = realization.matrices_at(k, clamp=True)
            updated = p_k - k_seq[k] @ cross
            p_seq[k + 1] = symmetrize(a @ updated @ a.T + w)
    return k_seq, p_seq


def observer_step(realization, k, estimate, control_deviation, output_deviation_next, gain_next):
    """One Kalman observer update of the deviation estimate.

    Predicts through the identified dynamics at step ``k`` and corrects with
    the next output deviation: ``a+ = pred + K (dy_next - C_next pred)``.
    """
    a, b, _ = realization.matrices_at(k, clamp=True)
    _, _, c_next = realization.matrices_at(k + 1, clamp=True)
    predicted = a @ estimate + b @ np.atleast_1d(control_deviation)
    return predicted + gain_next @ (np.atleast_1d(output_deviation_next) - c_next @ predicted)


def feedback(gain, estimate, nominal_control):
    """Tracking control ``u = u_bar - L a_hat``."""
    return np.atleast_1d(nominal_control) - gain @ estimate
